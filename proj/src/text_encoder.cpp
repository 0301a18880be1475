#include "mmf/text_encoder.hpp"

#include <cmath>
#include <string>

namespace mmf {

void TextEncoderConfig::validate() const {
  if (vocab_size < 5) throw ConfigError("text encoder: vocab_size must be at least 5");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("text encoder: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (d_model % 2 != 0) throw ConfigError("text encoder: d_model must be even for sinusoidal encodings");
  if (n_layers == 0 || d_ff == 0) throw ConfigError("text encoder: n_layers and d_ff must be positive");
  if (max_len < 2) throw ConfigError("text encoder: max_len must be at least 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("text encoder: dropout_rate outside [0, 1)");
}

template <typename T>
BasicTensor<T> positional_encoding(std::size_t max_len, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ConfigError("positional_encoding: d_model must be even, got " + std::to_string(d_model));
  }
  BasicTensor<T> pe(Shape{max_len, d_model});
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; 2 * i < d_model; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe[pos * d_model + 2 * i] = static_cast<T>(std::sin(angle));
      pe[pos * d_model + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
BasicTensor<T> mask_bias(std::span<const int> attention_mask) {
  BasicTensor<T> bias(Shape{attention_mask.size()});
  for (std::size_t i = 0; i < attention_mask.size(); ++i) bias[i] = attention_mask[i] ? T(0) : T(-1e9);
  return bias;
}

template <typename T>
BasicTensor<T> attention_weights(const BasicTensor<T>& q, const BasicTensor<T>& k, std::span<const int> mask) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1) || mask.size() != k.dim(0)) {
    throw DimensionError("attention: Q " + shape_str(q.shape()) + ", K " + shape_str(k.shape()) + ", mask length " +
                         std::to_string(mask.size()));
  }
  const T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.dim(1))));
  auto scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
  scores = add_bias(scores, mask_bias<T>(mask));
  return softmax(scores, 1);
}

template <typename T>
BasicTensor<T> attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                         std::span<const int> mask) {
  if (v.rank() != 2 || v.dim(0) != k.dim(0)) {
    throw DimensionError("attention: V " + shape_str(v.shape()) + " does not match K " + shape_str(k.shape()));
  }
  return matmul(attention_weights(q, k, mask), v);
}

namespace {

std::string layer_name(std::size_t layer, const char* leaf) {
  return "text.layer" + std::to_string(layer) + "." + leaf;
}

// Dropout site ids, unique within the text encoder.
constexpr std::uint64_t kSiteEmbedding = 1000;
std::uint64_t site_attention(std::size_t layer) { return 1001 + 2 * layer; }
std::uint64_t site_ffn(std::size_t layer) { return 1002 + 2 * layer; }

}  // namespace

template <typename T>
TextEncoder<T>::TextEncoder(TextEncoderConfig config, std::uint64_t seed)
    : config_(std::move(config)), pe_(positional_encoding<T>(config_.max_len, config_.d_model)) {
  config_.validate();
  auto engine = keyed_engine({seed, 0x7e47});
  const std::size_t d = config_.d_model, ff = config_.d_ff;
  const auto g = ParamGroup::kEncoder;
  params_.add("text.embedding", xavier_uniform<T>({config_.vocab_size, d}, config_.vocab_size, d, engine), g);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    params_.add(layer_name(l, "ln1.gamma"), BasicTensor<T>::filled({d}, T(1)), g);
    params_.add(layer_name(l, "ln1.beta"), BasicTensor<T>({d}), g);
    for (const char* m : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      params_.add(layer_name(l, m), xavier_uniform<T>({d, d}, d, d, engine), g);
    }
    for (const char* b : {"attn.bq", "attn.bv", "attn.bo"}) {
      params_.add(layer_name(l, b), BasicTensor<T>({d}), g);
    }
    params_.add(layer_name(l, "ln2.gamma"), BasicTensor<T>::filled({d}, T(1)), g);
    params_.add(layer_name(l, "ln2.beta"), BasicTensor<T>({d}), g);
    params_.add(layer_name(l, "ffn.w1"), xavier_uniform<T>({d, ff}, d, ff, engine), g);
    params_.add(layer_name(l, "ffn.b1"), BasicTensor<T>({ff}), g);
    params_.add(layer_name(l, "ffn.w2"), xavier_uniform<T>({ff, d}, ff, d, engine), g);
    params_.add(layer_name(l, "ffn.b2"), BasicTensor<T>({d}), g);
  }
  params_.add("text.final_ln.gamma", BasicTensor<T>::filled({d}, T(1)), g);
  params_.add("text.final_ln.beta", BasicTensor<T>({d}), g);
}

template <typename T>
TextEncoder<T>::TextEncoder(TextEncoderConfig config, ParameterSet<T> params)
    : config_(std::move(config)), params_(std::move(params)),
      pe_(positional_encoding<T>(config_.max_len, config_.d_model)) {
  config_.validate();
  check_shapes();
}

template <typename T>
void TextEncoder<T>::check_shapes() const {
  const std::size_t d = config_.d_model, ff = config_.d_ff;
  auto expect = [&](const std::string& name, const Shape& shape) {
    const auto& t = params_.get(name);
    if (t.shape() != shape) {
      throw DimensionError("parameter " + name + " has shape " + shape_str(t.shape()) + " but config implies " +
                           shape_str(shape));
    }
  };
  expect("text.embedding", {config_.vocab_size, d});
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    for (const char* m : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) expect(layer_name(l, m), {d, d});
    for (const char* b : {"attn.bq", "attn.bv", "attn.bo", "ln1.gamma", "ln1.beta", "ln2.gamma",
                          "ln2.beta", "ffn.b2"}) {
      expect(layer_name(l, b), {d});
    }
    expect(layer_name(l, "ffn.w1"), {d, ff});
    expect(layer_name(l, "ffn.b1"), {ff});
    expect(layer_name(l, "ffn.w2"), {ff, d});
  }
  expect("text.final_ln.gamma", {d});
  expect("text.final_ln.beta", {d});
}

template <typename T>
BasicTensor<T> TextEncoder<T>::encode(const TokenSequence& seq, bool training, const DropoutContext& ctx) const {
  const std::size_t len = seq.ids.size();
  if (len == 0 || len > config_.max_len || seq.attention_mask.size() != len) {
    throw DataError("text encoder: sequence of length " + std::to_string(len) + " (mask " +
                    std::to_string(seq.attention_mask.size()) + ") for max_len " + std::to_string(config_.max_len));
  }
  // Trailing padding is masked out of every key set, so dropping it leaves
  // the [CLS] output bit-for-bit unchanged and saves the work.
  std::size_t used = len;
  while (used > 1 && seq.attention_mask[used - 1] == 0) --used;
  const std::size_t d = config_.d_model, dk = config_.d_k();
  const double eps = config_.layer_norm_epsilon;
  const double rate = config_.dropout_rate;
  const std::span<const int> mask(seq.attention_mask.data(), used);
  auto p = [&](const std::string& name) -> const BasicTensor<T>& { return params_.get(name); };

  auto x = embedding(p("text.embedding"), std::span<const int>(seq.ids.data(), used));
  x = scale(x, static_cast<T>(std::sqrt(static_cast<double>(d))));
  x = add(x, slice(pe_, 0, 0, used));
  x = dropout(x, rate, training, ctx.key(kSiteEmbedding));

  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    // Only the [CLS] row leaves the last layer, so its queries suffice there.
    const bool last = l + 1 == config_.n_layers;
    const std::size_t rows = last ? 1 : used;

    auto h = layer_norm(x, p(layer_name(l, "ln1.gamma")), p(layer_name(l, "ln1.beta")), eps);
    auto h_q = last ? slice(h, 0, 0, 1) : h;
    auto q = add_bias(matmul(h_q, p(layer_name(l, "attn.wq"))), p(layer_name(l, "attn.bq")));
    // No key bias: it shifts every score in a row equally, which softmax ignores.
    auto k = matmul(h, p(layer_name(l, "attn.wk")));
    auto v = add_bias(matmul(h, p(layer_name(l, "attn.wv"))), p(layer_name(l, "attn.bv")));
    std::vector<BasicTensor<T>> heads;
    heads.reserve(config_.n_heads);
    for (std::size_t hd = 0; hd < config_.n_heads; ++hd) {
      heads.push_back(attention(slice(q, 1, hd * dk, dk), slice(k, 1, hd * dk, dk), slice(v, 1, hd * dk, dk), mask));
    }
    auto a = config_.n_heads == 1 ? heads.front() : concat(heads, 1);
    a = add_bias(matmul(a, p(layer_name(l, "attn.wo"))), p(layer_name(l, "attn.bo")));
    a = dropout(a, rate, training, ctx.key(site_attention(l)));
    auto resid = last ? slice(x, 0, 0, rows) : x;
    x = add(resid, a);

    auto h2 = layer_norm(x, p(layer_name(l, "ln2.gamma")), p(layer_name(l, "ln2.beta")), eps);
    auto f = gelu(add_bias(matmul(h2, p(layer_name(l, "ffn.w1"))), p(layer_name(l, "ffn.b1"))));
    f = add_bias(matmul(f, p(layer_name(l, "ffn.w2"))), p(layer_name(l, "ffn.b2")));
    f = dropout(f, rate, training, ctx.key(site_ffn(l)));
    x = add(x, f);
  }
  x = layer_norm(x, p("text.final_ln.gamma"), p("text.final_ln.beta"), eps);
  return reshape(slice(x, 0, 0, 1), Shape{d});
}

template BasicTensor<float> positional_encoding<float>(std::size_t, std::size_t);
template BasicTensor<double> positional_encoding<double>(std::size_t, std::size_t);
template BasicTensor<float> mask_bias<float>(std::span<const int>);
template BasicTensor<double> mask_bias<double>(std::span<const int>);
template BasicTensor<float> attention_weights(const BasicTensor<float>&, const BasicTensor<float>&,
                                             std::span<const int>);
template BasicTensor<double> attention_weights(const BasicTensor<double>&, const BasicTensor<double>&,
                                              std::span<const int>);
template BasicTensor<float> attention(const BasicTensor<float>&, const BasicTensor<float>&, const BasicTensor<float>&,
                                      std::span<const int>);
template BasicTensor<double> attention(const BasicTensor<double>&, const BasicTensor<double>&,
                                       const BasicTensor<double>&, std::span<const int>);
template class TextEncoder<float>;
template class TextEncoder<double>;

}  // namespace mmf
