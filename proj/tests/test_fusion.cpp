#include <gtest/gtest.h>

#include <cmath>

#include "mmf/errors.hpp"
#include "mmf/gradcheck.hpp"
#include "mmf/model.hpp"
#include "test_util.hpp"

using namespace mmf;
using mmf::testing::TempDir;
using mmf::testing::random_tensor;

namespace {

FusionConfig small_fusion(std::vector<std::size_t> hidden = {6}) {
  FusionConfig f;
  f.d_text = 4;
  f.d_visual = 3;
  f.hidden = std::move(hidden);
  return f;
}

void zero_all(ParameterSet<double>& params) {
  for (auto& p : params.items())
    for (auto& v : p.tensor.data()) v = 0.0;
}

ModelConfig tiny_model(Modality m) {
  ModelConfig c;
  c.modality = m;
  c.text.vocab_size = 12;
  c.text.d_model = 8;
  c.text.n_heads = 2;
  c.text.n_layers = 1;
  c.text.d_ff = 16;
  c.text.max_len = 6;
  c.vision.widths = {2, 4};
  c.vision.resolution = 8;
  c.fusion.d_text = 8;
  c.fusion.d_visual = 4;
  c.fusion.hidden = {5};
  c.fusion.n_classes = 3;
  return c;
}

TokenSequence tokens() {
  TokenSequence s;
  s.ids = {2, 5, 7, 9, 0, 0};
  s.attention_mask = {1, 1, 1, 1, 0, 0};
  return s;
}

}  // namespace

// ---- fuse

TEST(FuseTest, EarlyFusionWidth) {
  FusionConfig f;
  f.d_text = 768;
  f.d_visual = 2048;
  auto joint = fuse(Tensor(Shape{768}), Tensor(Shape{2048}), f);
  EXPECT_EQ(joint.shape(), (Shape{2816}));
}

TEST(FuseTest, ZerosGiveZeros) {
  auto joint = fuse(Tensor(Shape{4}), Tensor(Shape{3}), small_fusion());
  ASSERT_EQ(joint.numel(), 7u);
  for (float v : joint.data()) EXPECT_EQ(v, 0.0f);
}

TEST(FuseTest, TextFirstAndSliceRoundTrip) {
  std::mt19937_64 engine(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = random_tensor<float>({4}, engine), v = random_tensor<float>({3}, engine);
    auto joint = fuse(t, v, small_fusion());
    auto rt = slice(joint, 0, 0, 4), rv = slice(joint, 0, 4, 3);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(rt[i], t[i]);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(rv[i], v[i]);
  }
}

TEST(FuseTest, DimensionMismatchIsConfigError) {
  EXPECT_THROW(fuse(Tensor(Shape{5}), Tensor(Shape{3}), small_fusion()), ConfigError);
  EXPECT_THROW(fuse(Tensor(Shape{4}), Tensor(Shape{4}), small_fusion()), ConfigError);
}

// ---- classify

TEST(ClassifyTest, ZeroParametersGiveUniformAndClassZero) {
  FusionConfig f;
  f.d_text = 4;
  f.d_visual = 3;
  FusionHead<double> head(f, 7, 1);
  zero_all(head.parameters());
  std::mt19937_64 engine(2);
  auto pred = head.classify(random_tensor<double>({7}, engine), false, {});
  ASSERT_EQ(pred.probabilities.numel(), 9u);
  for (double p : pred.probabilities.data()) EXPECT_NEAR(p, 1.0 / 9.0, 1e-15);
  EXPECT_EQ(pred.predicted_class, 0);
}

TEST(ClassifyTest, OutputBiasTenOnClassZero) {
  FusionConfig f = small_fusion({});
  FusionHead<double> head(f, 7, 1);
  zero_all(head.parameters());
  head.parameters().get("fusion.output.bias")[0] = 10.0;
  auto pred = head.classify(Tensor64(Shape{7}), false, {});
  // Closed form: e^10 / (e^10 + 8).
  const double expect = 1.0 / (1.0 + 8.0 * std::exp(-10.0));
  EXPECT_EQ(pred.predicted_class, 0);
  EXPECT_NEAR(pred.probabilities[0], expect, 1e-12);
  EXPECT_NEAR(pred.probabilities[0], 0.99964, 1e-5);
}

TEST(ClassifyTest, DeterministicWithoutTraining) {
  FusionHead<float> head(small_fusion(), 7, 3);
  std::mt19937_64 engine(3);
  auto x = random_tensor<float>({7}, engine);
  auto a = head.classify(x, false, {1, 1, 0});
  auto b = head.classify(x, false, {2, 9, 4});
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(a.probabilities[i], b.probabilities[i]);
}

TEST(ClassifyTest, DropoutOnlyWhenTraining) {
  FusionConfig f = small_fusion({64});
  f.dropout_rate = 0.5;
  FusionHead<float> head(f, 7, 4);
  std::mt19937_64 engine(4);
  auto x = random_tensor<float>({7}, engine);
  auto a = head.logits(x, true, {1, 1, 0});
  auto b = head.logits(x, true, {1, 2, 0});
  auto e = head.logits(x, false, {1, 1, 0});
  bool differ = false;
  for (std::size_t i = 0; i < 9; ++i) differ |= a[i] != b[i] || a[i] != e[i];
  EXPECT_TRUE(differ);
}

TEST(ClassifyTest, BatchedLogitsMatchSingleRows) {
  FusionHead<float> head(small_fusion(), 7, 5);
  std::mt19937_64 engine(5);
  auto batch = random_tensor<float>({3, 7}, engine);
  auto all = head.logits(batch, false, {});
  for (std::size_t r = 0; r < 3; ++r) {
    auto row = head.logits(reshape(slice(batch, 0, r, 1), Shape{7}), false, {});
    for (std::size_t c = 0; c < 9; ++c) EXPECT_NEAR(all[r * 9 + c], row[c], 1e-6);
  }
}

TEST(ClassifyTest, TiesResolveToLowestIndex) {
  auto pred = predict_from_logits(Tensor64::vector({1, 3, 3, 0}));
  EXPECT_EQ(pred.predicted_class, 1);
}

TEST(ClassifyTest, ProbabilitiesSumToOne) {
  std::mt19937_64 engine(6);
  for (int trial = 0; trial < 100; ++trial) {
    auto pred = predict_from_logits(random_tensor<float>({9}, engine, -50, 50));
    double s = 0.0;
    for (float p : pred.probabilities.data()) s += p;
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

// ---- cross-entropy

TEST(CrossEntropyTest, ConfidentCorrectIsZero) {
  auto pred = predict_from_logits(Tensor64::vector({0, 800, 0}));
  EXPECT_EQ(cross_entropy(pred, 1).item(), 0.0);
}

TEST(CrossEntropyTest, UniformNineIsLnNine) {
  auto pred = predict_from_logits(Tensor64(Shape{9}));
  for (int label = 0; label < 9; ++label) EXPECT_NEAR(cross_entropy(pred, label).item(), std::log(9.0), 1e-12);
  auto predf = predict_from_logits(Tensor(Shape{9}));
  EXPECT_NEAR(cross_entropy(predf, 4).item(), std::log(9.0), 1e-6);
}

TEST(CrossEntropyTest, GradientIsSoftmaxMinusOneHot) {
  std::mt19937_64 engine(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = random_tensor<double>({9}, engine, -4, 4).set_requires_grad(true);
    const int label = static_cast<int>(uniform_index(engine, 9));
    Tape tape;
    {
      TapeScope scope(tape);
      backward(cross_entropy(predict_from_logits(logits), label), tape);
    }
    // Independent softmax.
    double m = logits[0], z = 0.0;
    for (double v : logits.data()) m = std::max(m, v);
    for (double v : logits.data()) z += std::exp(v - m);
    for (int c = 0; c < 9; ++c) {
      const double p = std::exp(logits[c] - m) / z;
      EXPECT_NEAR(logits.grad()[c], p - (c == label ? 1.0 : 0.0), 1e-5);
    }
    auto fd = gradcheck([&](const Tensor64& x) { return cross_entropy(predict_from_logits(x), label); },
                        logits, 1e-6);
    EXPECT_LT(fd, 1e-4);
  }
}

TEST(CrossEntropyTest, NonNegativeAndShiftInvariant) {
  std::mt19937_64 engine(8);
  for (int trial = 0; trial < 200; ++trial) {
    auto logits = random_tensor<double>({9}, engine, -20, 20);
    const int label = static_cast<int>(uniform_index(engine, 9));
    const double shift = uniform(engine, -100, 100);
    auto shifted = logits.clone();
    for (auto& v : shifted.data()) v += shift;
    auto a = predict_from_logits(logits), b = predict_from_logits(shifted);
    const double la = cross_entropy(a, label).item(), lb = cross_entropy(b, label).item();
    EXPECT_GE(la, 0.0);
    EXPECT_NEAR(la, lb, 1e-6);
    EXPECT_EQ(a.predicted_class, b.predicted_class);
    for (std::size_t c = 0; c < 9; ++c) EXPECT_NEAR(a.probabilities[c], b.probabilities[c], 1e-6);
  }
}

TEST(CrossEntropyTest, LabelOutOfRange) {
  auto pred = predict_from_logits(Tensor(Shape{9}));
  EXPECT_THROW(cross_entropy(pred, 9), DataError);
  EXPECT_THROW(cross_entropy(pred, -1), DataError);
}

// ---- model

TEST(ModelTest, ParseModality) {
  EXPECT_EQ(parse_modality("text"), Modality::kText);
  EXPECT_EQ(parse_modality("image"), Modality::kImage);
  EXPECT_EQ(parse_modality("multimodal"), Modality::kMultimodal);
  EXPECT_THROW(parse_modality("audio"), UsageError);
}

TEST(ModelTest, HeadInputFollowsModality) {
  EXPECT_EQ(tiny_model(Modality::kText).head_input_dim(), 8u);
  EXPECT_EQ(tiny_model(Modality::kImage).head_input_dim(), 4u);
  EXPECT_EQ(tiny_model(Modality::kMultimodal).head_input_dim(), 12u);
  auto bad = tiny_model(Modality::kMultimodal);
  bad.fusion.d_visual = 5;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ModelTest, UnimodalModelsOmitOtherEncoder) {
  MultimodalModel<float> text(tiny_model(Modality::kText), 1);
  MultimodalModel<float> image(tiny_model(Modality::kImage), 1);
  EXPECT_TRUE(text.text_encoder().has_value());
  EXPECT_FALSE(text.vision_encoder().has_value());
  EXPECT_FALSE(image.text_encoder().has_value());
  EXPECT_TRUE(image.vision_encoder().has_value());
  auto seq = tokens();
  EXPECT_EQ(text.predict(&seq, nullptr).probabilities.numel(), 3u);
  Tensor img(Shape{3, 8, 8});
  EXPECT_EQ(image.predict(nullptr, &img).probabilities.numel(), 3u);
}

TEST(ModelTest, ParameterGroups) {
  MultimodalModel<float> model(tiny_model(Modality::kMultimodal), 2);
  for (const auto* p : model.parameters()) {
    const bool head = p->name.starts_with("fusion.");
    EXPECT_EQ(p->group, head ? ParamGroup::kFusion : ParamGroup::kEncoder) << p->name;
  }
}

TEST(ModelTest, FusedModelGradcheck) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto model = MultimodalModel<float>(tiny_model(Modality::kMultimodal), seed).cast<double>();
    std::mt19937_64 engine(seed);
    auto image = random_tensor<double>({3, 8, 8}, engine);
    auto seq = tokens();
    std::vector<Tensor64> inputs;
    for (auto* p : model.parameters()) inputs.push_back(p->tensor);
    auto r = gradcheck(
        [&] {
          auto f = model.features(&seq, &image, true, {seed, 1, 0});
          return cross_entropy(predict_from_logits(model.head().logits(f, true, {seed, 1, 0})), 2);
        },
        inputs, 1e-6);
    EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(CheckpointTest, RoundTripReproducesPredictions) {
  TempDir dir("ckpt");
  for (auto m : {Modality::kText, Modality::kImage, Modality::kMultimodal}) {
    MultimodalModel<float> model(tiny_model(m), 7);
    save_checkpoint(dir.path(), model);
    auto back = load_checkpoint(dir / "checkpoint.bin");
    EXPECT_EQ(back.config().modality, m);
    auto seq = tokens();
    std::mt19937_64 engine(7);
    auto img = random_tensor<float>({3, 8, 8}, engine);
    auto a = model.predict(uses_text(m) ? &seq : nullptr, uses_image(m) ? &img : nullptr);
    auto b = back.predict(uses_text(m) ? &seq : nullptr, uses_image(m) ? &img : nullptr);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(a.logits[c], b.logits[c]);
  }
}

TEST(CheckpointTest, SavingTwiceIsByteIdentical) {
  TempDir a("ckpt_a"), b("ckpt_b");
  MultimodalModel<float> model(tiny_model(Modality::kMultimodal), 8);
  save_checkpoint(a.path(), model);
  save_checkpoint(b.path(), MultimodalModel<float>(tiny_model(Modality::kMultimodal), 8));
  for (const char* f : {"checkpoint.bin", "checkpoint.json"}) {
    EXPECT_EQ(mmf::testing::read_bytes(a / f), mmf::testing::read_bytes(b / f)) << f;
  }
}

TEST(CheckpointTest, MissingCheckpointIsUsageError) {
  TempDir dir("ckpt_missing");
  EXPECT_THROW(load_checkpoint(dir / "nope"), UsageError);
}
