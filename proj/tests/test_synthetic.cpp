#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mmf/dataset.hpp"
#include "mmf/errors.hpp"
#include "mmf/rng.hpp"
#include "mmf/synthetic.hpp"
#include "test_util.hpp"

using namespace mmf;
using mmf::testing::TempDir;
using mmf::testing::read_bytes;

namespace {

constexpr int kAD = 0, kID = 2, kLS = 3, kFR = 6, kEL = 7;

// Enumerates the four latent ambiguity events per class, accumulates the
// joint mass of each observation, then sums the per-observation maxima.
double enumeration_oracle(const GeneratorSpec& spec, Modality m) {
  std::map<std::pair<int, int>, std::map<int, double>> mass;
  for (std::size_t c = 0; c < spec.n_classes(); ++c) {
    for (int at = 0; at < 2; ++at) {
      for (int av = 0; av < 2; ++av) {
        const double p = spec.proportions[c] * (at ? spec.alpha_text : 1 - spec.alpha_text) *
                         (av ? spec.alpha_image : 1 - spec.alpha_image);
        int st = at ? spec.text_pairing[c] : static_cast<int>(c);
        int sv = av ? spec.image_pairing[c] : static_cast<int>(c);
        if (m == Modality::kText) sv = -1;
        if (m == Modality::kImage) st = -1;
        mass[{st, sv}][static_cast<int>(c)] += p;
      }
    }
  }
  double acc = 0.0;
  for (const auto& [obs, by_class] : mass) {
    double best = 0.0;
    for (const auto& [c, p] : by_class) best = std::max(best, p);
    acc += best;
  }
  return acc;
}

std::vector<int> random_involution(std::size_t n, std::size_t pairs, std::mt19937_64& engine,
                                   const std::set<std::pair<int, int>>& banned, std::set<std::pair<int, int>>& used) {
  std::vector<int> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
  std::vector<int> free(n);
  for (std::size_t i = 0; i < n; ++i) free[i] = static_cast<int>(i);
  seeded_shuffle(free, engine);
  std::size_t made = 0;
  for (std::size_t i = 0; i + 1 < free.size() && made < pairs; i += 2) {
    const auto key = std::minmax(free[i], free[i + 1]);
    if (banned.contains(key)) continue;
    perm[static_cast<std::size_t>(free[i])] = free[i + 1];
    perm[static_cast<std::size_t>(free[i + 1])] = free[i];
    used.insert(key);
    ++made;
  }
  return perm;
}

GeneratorSpec small_spec(std::size_t n_samples, std::uint64_t seed = 0) {
  auto spec = default_generator_spec();
  spec.n_samples = n_samples;
  spec.seed = seed;
  spec.resolution = 8;
  return spec;
}

}  // namespace

// ---- spec

TEST(GeneratorSpecTest, DefaultsFollowTableOne) {
  auto spec = default_generator_spec();
  EXPECT_EQ(spec.class_names, (std::vector<std::string>{"AD", "ND", "ID", "LS", "DNL", "FL", "FR", "EL", "OT"}));
  double total = 0.0;
  for (double p : spec.proportions) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(spec.text_pairing[kFR], kEL);
  EXPECT_EQ(spec.text_pairing[kID], kLS);
  EXPECT_EQ(spec.image_pairing[kFR], kLS);
  EXPECT_EQ(spec.image_pairing[kEL], kID);
  EXPECT_EQ(spec.ambiguous_classes(), (std::vector<int>{kID, kLS, kFR, kEL}));
  EXPECT_NO_THROW(spec.validate());
}

TEST(GeneratorSpecTest, PairingMustBePermutation) {
  auto spec = default_generator_spec();
  spec.text_pairing[kAD] = kFR;  // FR now has two preimages
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = default_generator_spec();
  spec.image_pairing.pop_back();
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(GeneratorSpecTest, RejectsBadValues) {
  auto spec = default_generator_spec();
  spec.alpha_text = 1.5;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = default_generator_spec();
  spec.proportions[0] += 0.1;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = default_generator_spec();
  spec.n_samples = 8;
  EXPECT_THROW(spec.validate(), ConfigError);
}

// ---- counts and ambiguity

TEST(GenerateTest, TableOneCounts) {
  auto counts = class_quotas(default_generator_spec());
  const std::vector<std::size_t> table{800, 650, 450, 400, 600, 500, 300, 400, 937};
  ASSERT_EQ(counts.size(), table.size());
  for (std::size_t c = 0; c < table.size(); ++c) {
    EXPECT_LE(std::max(counts[c], table[c]) - std::min(counts[c], table[c]), 1u);
  }
  auto corpus = generate(small_spec(5037));
  std::vector<std::size_t> realized(9);
  for (const auto& s : corpus.samples) ++realized[static_cast<std::size_t>(s.label)];
  EXPECT_EQ(realized, counts);
  EXPECT_EQ(corpus.class_counts, counts);
}

TEST(GenerateTest, NinetySamples) {
  auto corpus = generate(small_spec(90));
  ASSERT_EQ(corpus.samples.size(), 90u);
  std::size_t total = 0;
  for (auto c : corpus.class_counts) {
    EXPECT_GE(c, 5u);
    total += c;
  }
  EXPECT_EQ(total, 90u);
}

TEST(GenerateTest, AmbiguityRate) {
  auto spec = small_spec(5000);
  spec.alpha_text = 0.4;
  auto corpus = generate(spec);
  EXPECT_NEAR(corpus.text_ambiguous_rate, 0.4, 0.02);
  EXPECT_EQ(corpus.image_ambiguous_rate, 0.0);
  for (const auto& s : corpus.samples) {
    EXPECT_EQ(s.text_source, s.text_ambiguous ? spec.text_pairing[s.label] : s.label);
    EXPECT_EQ(s.image_source, s.label);
  }
}

TEST(GenerateTest, AmbiguityIndependentAcrossModalities) {
  auto spec = small_spec(5000, 3);
  spec.alpha_text = 0.4;
  spec.alpha_image = 0.4;
  auto corpus = generate(spec);
  double both = 0.0;
  for (const auto& s : corpus.samples) both += s.text_ambiguous && s.image_ambiguous;
  EXPECT_NEAR(both / 5000.0, 0.16, 0.02);
}

TEST(GenerateTest, TextRevealsItsSourceClass) {
  auto spec = small_spec(300, 4);
  spec.alpha_text = 0.5;
  auto corpus = generate(spec);
  auto inv = word_inventory(spec);
  std::map<std::string, int> owner;
  for (std::size_t c = 0; c < inv.private_words.size(); ++c)
    for (const auto& w : inv.private_words[c]) owner[w] = static_cast<int>(c);
  for (const auto& s : corpus.samples) {
    std::istringstream words(s.text);
    std::string w;
    std::size_t n = 0;
    bool has_private = false;
    while (words >> w) {
      ++n;
      auto it = owner.find(w);
      if (it != owner.end()) {
        EXPECT_EQ(it->second, s.text_source);
        has_private = true;
      }
    }
    EXPECT_EQ(n, spec.sentence_length);
    EXPECT_TRUE(has_private);
  }
}

TEST(GenerateTest, ImagesFollowSourcePattern) {
  auto spec = small_spec(200, 5);
  spec.alpha_image = 0.5;
  auto corpus = generate(spec);
  for (const auto& s : corpus.samples) {
    auto pattern = class_pattern(spec, s.image_source);
    double err = 0.0;
    for (std::size_t i = 0; i < pattern.numel(); ++i) err += std::abs(s.image.pixels[i] - pattern[i]);
    err /= static_cast<double>(pattern.numel());
    EXPECT_LT(err, 0.06);  // mean |N(0, 0.05)| is 0.04
    for (float v : s.image.pixels.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

// ---- oracle

TEST(OracleTest, NoAmbiguityIsPerfect) {
  auto spec = default_generator_spec();
  for (auto m : {Modality::kText, Modality::kImage, Modality::kMultimodal}) EXPECT_EQ(bayes_oracle(spec, m), 1.0);
}

TEST(OracleTest, DefaultPairsAtPointFour) {
  auto spec = default_generator_spec();
  spec.alpha_text = spec.alpha_image = 0.4;
  // Each confusable class loses its ambiguous 40%: 1 - 0.4 * (300+400+450+400)/5037.
  const double unimodal = 1.0 - 0.4 * 1550.0 / 5037.0;
  EXPECT_NEAR(bayes_oracle(spec, Modality::kText), unimodal, 1e-12);
  EXPECT_NEAR(bayes_oracle(spec, Modality::kImage), unimodal, 1e-12);
  EXPECT_NEAR(bayes_oracle(spec, Modality::kMultimodal), 1.0, 1e-12);
  EXPECT_NEAR(unimodal, 0.8769, 1e-4);
}

TEST(OracleTest, MatchesEnumerationOnRandomSpecs) {
  std::mt19937_64 engine(31);
  for (int trial = 0; trial < 300; ++trial) {
    auto spec = default_generator_spec();
    double total = 0.0;
    for (auto& p : spec.proportions) total += (p = uniform(engine, 0.01, 1.0));
    for (auto& p : spec.proportions) p /= total;
    for (auto* pairing : {&spec.text_pairing, &spec.image_pairing}) {
      std::iota(pairing->begin(), pairing->end(), 0);
      seeded_shuffle(*pairing, engine);
    }
    spec.alpha_text = uniform(engine, 0, 1);
    spec.alpha_image = uniform(engine, 0, 1);
    for (auto m : {Modality::kText, Modality::kImage, Modality::kMultimodal}) {
      ASSERT_NEAR(bayes_oracle(spec, m), enumeration_oracle(spec, m), 1e-12) << trial;
    }
  }
}

TEST(OracleTest, StrictComplementarityWithoutSharedPairs) {
  std::mt19937_64 engine(32);
  for (int trial = 0; trial < 300; ++trial) {
    auto spec = default_generator_spec();
    std::set<std::pair<int, int>> text_pairs, image_pairs;
    spec.text_pairing = random_involution(9, 1 + uniform_index(engine, 4), engine, {}, text_pairs);
    spec.image_pairing = random_involution(9, 1 + uniform_index(engine, 4), engine, text_pairs, image_pairs);
    if (image_pairs.empty()) continue;
    spec.alpha_text = uniform(engine, 0.01, 0.99);
    spec.alpha_image = uniform(engine, 0.01, 0.99);
    const double t = bayes_oracle(spec, Modality::kText), v = bayes_oracle(spec, Modality::kImage);
    const double mm = bayes_oracle(spec, Modality::kMultimodal);
    EXPECT_GT(mm, std::max(t, v) + 1e-9) << trial;
  }
}

TEST(OracleTest, EqualPriorsWorkedCase) {
  auto spec = default_generator_spec();
  std::fill(spec.proportions.begin(), spec.proportions.end(), 1.0 / 9.0);
  spec.alpha_text = spec.alpha_image = 0.4;
  const double mm = bayes_oracle(spec, Modality::kMultimodal);
  EXPECT_GT(mm, bayes_oracle(spec, Modality::kText));
  EXPECT_GT(mm, bayes_oracle(spec, Modality::kImage));
  // Four confusable classes each lose 0.4 of their 1/9 under text alone.
  EXPECT_NEAR(bayes_oracle(spec, Modality::kText), 1.0 - 4.0 * 0.4 / 9.0, 1e-12);
}

TEST(OracleTest, SharedConfusionPairCanTie) {
  // Both modalities confuse AD<->ND; images also confuse ID<->LS. Weak text
  // ambiguity means image evidence never overturns the text decision on the
  // shared pair, so the joint oracle only ties the text oracle.
  auto spec = default_generator_spec();
  std::iota(spec.text_pairing.begin(), spec.text_pairing.end(), 0);
  std::iota(spec.image_pairing.begin(), spec.image_pairing.end(), 0);
  std::fill(spec.proportions.begin(), spec.proportions.end(), 1.0 / 9.0);
  std::swap(spec.text_pairing[0], spec.text_pairing[1]);
  std::swap(spec.image_pairing[0], spec.image_pairing[1]);
  std::swap(spec.image_pairing[kID], spec.image_pairing[kLS]);
  spec.alpha_text = 0.1;
  spec.alpha_image = 0.4;
  EXPECT_NEAR(bayes_oracle(spec, Modality::kMultimodal), bayes_oracle(spec, Modality::kText), 1e-15);
  EXPECT_NEAR(bayes_oracle(spec, Modality::kMultimodal), enumeration_oracle(spec, Modality::kMultimodal), 1e-15);
}

TEST(OracleTest, FullAmbiguityOnSwapsIsRelabeling) {
  auto spec = default_generator_spec();
  spec.alpha_text = 1.0;
  // Every text from a paired class shows its partner: a deterministic relabeling.
  EXPECT_NEAR(bayes_oracle(spec, Modality::kText), enumeration_oracle(spec, Modality::kText), 1e-15);
  EXPECT_NEAR(bayes_oracle(spec, Modality::kText), 1.0, 1e-12);
}

TEST(OracleTest, BayesRuleOnGeneratedSourcesMatchesOracle) {
  auto spec = small_spec(5037, 9);
  spec.alpha_text = spec.alpha_image = 0.4;
  auto corpus = generate(spec);
  // Decision rule from the known mixture, applied to the latent sources.
  auto decide = [&](int st, int sv, Modality m) {
    int best = 0;
    double best_p = -1.0;
    for (int c = 0; c < 9; ++c) {
      auto lik = [](const std::vector<int>& pairing, double a, int cls, int s) {
        return (s == cls ? 1 - a : 0.0) + (pairing[cls] == s ? a : 0.0);
      };
      double p = spec.proportions[c];
      if (m != Modality::kImage) p *= lik(spec.text_pairing, spec.alpha_text, c, st);
      if (m != Modality::kText) p *= lik(spec.image_pairing, spec.alpha_image, c, sv);
      if (p > best_p) best_p = p, best = c;
    }
    return best;
  };
  for (auto m : {Modality::kText, Modality::kImage, Modality::kMultimodal}) {
    double hits = 0;
    for (const auto& s : corpus.samples) hits += decide(s.text_source, s.image_source, m) == s.label;
    EXPECT_NEAR(hits / 5037.0, bayes_oracle(spec, m), 0.02);
  }
}

// ---- files

TEST(WriteCorpusTest, ByteIdenticalRegeneration) {
  TempDir a("gen_a"), b("gen_b");
  auto spec = small_spec(60, 7);
  spec.alpha_text = spec.alpha_image = 0.4;
  write_corpus(generate(spec), a.path());
  write_corpus(generate(spec), b.path());
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    EXPECT_EQ(read_bytes(entry.path()), read_bytes(b.path() / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 60u + 4u);
}

TEST(WriteCorpusTest, SeedChangesCorpus) {
  auto a = generate(small_spec(60, 1)), b = generate(small_spec(60, 2));
  std::size_t same = 0;
  for (std::size_t i = 0; i < 60; ++i) same += a.samples[i].text == b.samples[i].text;
  EXPECT_LT(same, 60u);
}

TEST(WriteCorpusTest, ManifestCarriesNoLatentState) {
  TempDir dir("gen_manifest");
  auto spec = small_spec(30, 8);
  spec.alpha_text = 0.5;
  write_corpus(generate(spec), dir.path());
  std::ifstream is(dir / "manifest.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    auto j = nlohmann::json::parse(line);
    std::set<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
    EXPECT_EQ(keys, (std::set<std::string>{"id", "text", "image_path", "label"}));
    ++n;
  }
  EXPECT_EQ(n, 30u);
  EXPECT_TRUE(std::filesystem::exists(dir / "ground_truth.jsonl"));
}

TEST(WriteCorpusTest, ImagesDecodeToGeneratedPixels) {
  TempDir dir("gen_pixels");
  auto corpus = generate(small_spec(20, 9));
  write_corpus(corpus, dir.path());
  Preprocessing prep;
  prep.resolution = 8;
  auto samples = load_samples(dir.path(), prep);
  ASSERT_EQ(samples.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(samples[i].id, corpus.samples[i].id);
    EXPECT_EQ(samples[i].label, corpus.samples[i].label);
    for (std::size_t k = 0; k < corpus.samples[i].image.pixels.numel(); ++k)
      ASSERT_EQ(samples[i].image.pixels[k], corpus.samples[i].image.pixels[k]);
  }
}
