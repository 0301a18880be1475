#include "mmf/gradcheck_suite.hpp"

#include <algorithm>
#include <array>

#include "mmf/gradcheck.hpp"
#include "mmf/model.hpp"
#include "mmf/rng.hpp"

namespace mmf {

namespace {

constexpr double kStep = 1e-6;

Tensor64 random_tensor(Shape shape, std::mt19937_64& engine, double scale = 1.0) {
  Tensor64 t(std::move(shape));
  for (auto& v : t.data()) v = scale * standard_normal(engine);
  return t;
}

/// Weighted sum so every output element gets a distinct upstream gradient.
Tensor64 project(const Tensor64& y, const Tensor64& w) { return sum(mul(y, w)); }

void merge(ComponentCheck& into, const GradcheckResult& r) {
  into.max_relative_error = std::max(into.max_relative_error, r.max_relative_error);
  into.elements += r.elements_checked;
}

std::vector<Tensor64> param_tensors(const std::vector<const Parameter<double>*>& params) {
  std::vector<Tensor64> out;
  for (const auto* p : params) out.push_back(p->tensor);
  return out;
}

ComponentCheck check_tensor_ops(std::uint64_t seed) {
  auto engine = keyed_engine({seed, 0x6cec0});
  ComponentCheck c{"tensor_ops"};

  {  // dense block: matmul, bias, gelu, layer norm, softmax
    auto x = random_tensor({3, 4}, engine), w = random_tensor({4, 5}, engine), b = random_tensor({5}, engine);
    auto g = random_tensor({5}, engine), beta = random_tensor({5}, engine), out_w = random_tensor({3, 5}, engine);
    merge(c, gradcheck(
                 [&] {
                   auto h = gelu(add_bias(matmul(x, w), b));
                   h = layer_norm(h, g, beta, 1e-5);
                   return project(softmax(h, 1), out_w);
                 },
                 {x, w, b, g, beta}, kStep));
  }
  {  // convolution, channel norm, relu, pooling
    auto img = random_tensor({2, 5, 5}, engine), k = random_tensor({3, 2, 3, 3}, engine);
    auto g = random_tensor({3}, engine), beta = random_tensor({3}, engine), out_w = random_tensor({3}, engine);
    merge(c, gradcheck(
                 [&] {
                   auto h = conv2d(img, k, 2, 1);
                   h = relu(channel_layer_norm(h, g, beta, 1e-5));
                   return project(global_avg_pool(h), out_w);
                 },
                 {img, k, g, beta}, kStep));
  }
  {  // embedding, shape ops, elementwise, cross-entropy
    auto table = random_tensor({6, 4}, engine), y = random_tensor({4, 3}, engine);
    const std::array<int, 3> ids{4, 1, 4};
    const std::array<int, 2> labels{2, 0};
    merge(c, gradcheck(
                 [&] {
                   auto e = embedding(table, std::span<const int>(ids));  // [3x4]
                   auto m = mul(e, scale(e, 0.5));
                   auto t = transpose(matmul(m, y));  // [3x3]
                   auto rows = concat(slice(t, 0, 0, 1), slice(t, 0, 2, 1), 0);  // [2x3]
                   auto flat = reshape(t, Shape{9});
                   auto logits = stack(std::vector<Tensor64>{reshape(rows, Shape{6}), slice(flat, 0, 3, 6)});
                   return add(cross_entropy(logits, std::span<const int>(labels)), mean(relu(e)));
                 },
                 {table, y}, kStep));
  }
  {  // attention with a padded key and keyed dropout
    auto q = random_tensor({3, 4}, engine), k = random_tensor({3, 4}, engine), v = random_tensor({3, 4}, engine);
    auto out_w = random_tensor({3, 4}, engine);
    const std::array<int, 3> mask{1, 1, 0};
    const DropoutKey key{seed, 7, 1, 0};
    merge(c, gradcheck(
                 [&] {
                   auto a = attention(q, k, v, std::span<const int>(mask));
                   return project(dropout(a, 0.25, true, key), out_w);
                 },
                 {q, k, v}, kStep));
  }
  return c;
}

TextEncoderConfig tiny_text() {
  TextEncoderConfig t;
  t.vocab_size = 12;
  t.d_model = 8;
  t.n_heads = 2;
  t.n_layers = 2;
  t.d_ff = 16;
  t.max_len = 8;
  return t;
}

VisionEncoderConfig tiny_vision() {
  VisionEncoderConfig v;
  v.widths = {2, 4};
  v.resolution = 8;
  return v;
}

TokenSequence tiny_sequence() {
  TokenSequence s;
  s.ids = {2, 5, 7, 9, 11, 0, 0, 0};
  s.attention_mask = {1, 1, 1, 1, 1, 0, 0, 0};
  return s;
}

ComponentCheck check_text_encoder(std::uint64_t seed) {
  auto engine = keyed_engine({seed, 0x7e77});
  const TextEncoder<double> enc(tiny_text(), seed);
  const auto seq = tiny_sequence();
  const auto w = random_tensor({8}, engine);
  const DropoutContext ctx{seed, 1, 0};
  std::vector<const Parameter<double>*> params;
  for (const auto& p : enc.parameters().items()) params.push_back(&p);
  ComponentCheck c{"text_encoder"};
  merge(c, gradcheck([&] { return project(enc.encode(seq, true, ctx), w); }, param_tensors(params), kStep));
  return c;
}

ComponentCheck check_vision_encoder(std::uint64_t seed) {
  auto engine = keyed_engine({seed, 0x715c});
  const VisionEncoder<double> enc(tiny_vision(), seed);
  auto image = random_tensor({3, 8, 8}, engine);
  const auto w = random_tensor({4}, engine);
  std::vector<const Parameter<double>*> params;
  for (const auto& p : enc.parameters().items()) params.push_back(&p);
  auto inputs = param_tensors(params);
  inputs.push_back(image);
  ComponentCheck c{"vision_encoder"};
  merge(c, gradcheck([&] { return project(enc.encode(image, true), w); }, inputs, kStep));
  return c;
}

ComponentCheck check_fused_model(std::uint64_t seed) {
  auto engine = keyed_engine({seed, 0xf0ced});
  ModelConfig cfg;
  cfg.modality = Modality::kMultimodal;
  cfg.text = tiny_text();
  cfg.vision = tiny_vision();
  cfg.fusion.d_text = 8;
  cfg.fusion.d_visual = 4;
  cfg.fusion.hidden = {6};
  cfg.fusion.n_classes = 3;
  const MultimodalModel<double> model(cfg, seed);
  const auto seq = tiny_sequence();
  const auto image = random_tensor({3, 8, 8}, engine);
  const std::array<int, 1> label{static_cast<int>(seed % 3)};
  const DropoutContext ctx{seed, 1, 0};
  ComponentCheck c{"fused_model"};
  merge(c, gradcheck(
               [&] {
                 auto f = model.features(&seq, &image, true, ctx);
                 return cross_entropy(model.head().logits(f, true, ctx), std::span<const int>(label));
               },
               param_tensors(model.parameters()), kStep));
  return c;
}

}  // namespace

std::vector<ComponentCheck> run_gradcheck_suite(std::uint64_t seed) {
  return {check_tensor_ops(seed), check_text_encoder(seed), check_vision_encoder(seed), check_fused_model(seed)};
}

}  // namespace mmf
