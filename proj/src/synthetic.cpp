#include "mmf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "mmf/config.hpp"
#include "mmf/dataset.hpp"
#include "mmf/errors.hpp"
#include "mmf/rng.hpp"
#include "mmf/training.hpp"

namespace mmf {

const std::vector<ClassInfo>& table_one_classes() {
  static const std::vector<ClassInfo> classes = {
      {"AD", "Agricultural Damage", 800},
      {"ND", "Non Damage", 650},
      {"ID", "Infrastructural Damage", 450},
      {"LS", "Landslides", 400},
      {"DNL", "Damage to Natural Landscape", 600},
      {"FL", "Floods", 500},
      {"FR", "Fires", 300},
      {"EL", "Economic Loss", 400},
      {"OT", "Others", 937},
  };
  return classes;
}

GeneratorSpec default_generator_spec() {
  GeneratorSpec spec;
  double total = 0.0;
  for (const auto& c : table_one_classes()) total += static_cast<double>(c.count);
  for (const auto& c : table_one_classes()) {
    spec.class_names.push_back(c.code);
    spec.proportions.push_back(static_cast<double>(c.count) / total);
  }
  constexpr int kID = 2, kLS = 3, kFR = 6, kEL = 7;
  spec.text_pairing = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  spec.image_pairing = spec.text_pairing;
  std::swap(spec.text_pairing[kFR], spec.text_pairing[kEL]);
  std::swap(spec.text_pairing[kID], spec.text_pairing[kLS]);
  std::swap(spec.image_pairing[kFR], spec.image_pairing[kLS]);
  std::swap(spec.image_pairing[kEL], spec.image_pairing[kID]);
  return spec;
}

std::vector<int> GeneratorSpec::ambiguous_classes() const {
  std::vector<int> out;
  for (std::size_t c = 0; c < n_classes(); ++c) {
    const int ci = static_cast<int>(c);
    if (text_pairing.at(c) != ci || image_pairing.at(c) != ci) out.push_back(ci);
  }
  return out;
}

namespace {

std::size_t shared_pool_size(const GeneratorSpec& spec) { return spec.vocab_size / 4; }

void check_pairing(const std::vector<int>& pairing, std::size_t n, const char* what) {
  if (pairing.size() != n) throw ConfigError(std::string(what) + " pairing must list every class");
  std::vector<bool> seen(n, false);
  for (int p : pairing) {
    if (p < 0 || static_cast<std::size_t>(p) >= n || seen[static_cast<std::size_t>(p)]) {
      throw ConfigError(std::string(what) + " pairing must be a permutation of the classes");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
}

}  // namespace

void GeneratorSpec::validate() const {
  const std::size_t n = n_classes();
  if (n < 2) throw ConfigError("generator: need at least 2 classes");
  if (proportions.size() != n) throw ConfigError("generator: one proportion per class required");
  double total = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0)) throw ConfigError("generator: proportions must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ConfigError("generator: proportions must sum to 1");
  if (n_samples < n) throw ConfigError("generator: need at least one sample per class");
  if (!(alpha_text >= 0.0 && alpha_text <= 1.0 && alpha_image >= 0.0 && alpha_image <= 1.0)) {
    throw ConfigError("generator: ambiguity rates must lie in [0, 1]");
  }
  check_pairing(text_pairing, n, "text");
  check_pairing(image_pairing, n, "image");
  if (vocab_size < shared_pool_size(*this) + n) throw ConfigError("generator: vocab_size too small for the classes");
  if (resolution < 4) throw ConfigError("generator: resolution must be at least 4");
  if (sentence_length == 0) throw ConfigError("generator: sentence_length must be positive");
  if (!(private_token_rate > 0.0 && private_token_rate <= 1.0)) {
    throw ConfigError("generator: private_token_rate must lie in (0, 1]");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("generator: noise_sigma must be non-negative");
}

std::vector<std::size_t> class_quotas(const GeneratorSpec& spec) {
  spec.validate();
  return largest_remainder(spec.n_samples, spec.proportions);
}

WordInventory word_inventory(const GeneratorSpec& spec) {
  static constexpr std::string_view kConsonants = "bdgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  auto engine = keyed_engine({spec.seed, 0x3057d});
  std::set<std::string> used;
  auto fresh_word = [&] {
    while (true) {
      std::string w;
      const std::size_t syllables = 2 + uniform_index(engine, 2);
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kConsonants[uniform_index(engine, kConsonants.size())];
        w += kVowels[uniform_index(engine, kVowels.size())];
      }
      if (used.insert(w).second) return w;
    }
  };
  WordInventory inv;
  const std::size_t shared = shared_pool_size(spec);
  const std::size_t per_class = (spec.vocab_size - shared) / spec.n_classes();
  inv.private_words.resize(spec.n_classes());
  for (auto& words : inv.private_words)
    for (std::size_t k = 0; k < per_class; ++k) words.push_back(fresh_word());
  for (std::size_t k = 0; k < shared; ++k) inv.shared_words.push_back(fresh_word());
  return inv;
}

namespace {

std::array<double, 3> class_color(const GeneratorSpec& spec, int c) {
  static constexpr std::array<std::array<double, 3>, 9> kPalette = {{
      {0.25, 0.65, 0.25},
      {0.80, 0.80, 0.80},
      {0.55, 0.45, 0.35},
      {0.60, 0.30, 0.10},
      {0.15, 0.45, 0.40},
      {0.20, 0.35, 0.80},
      {0.90, 0.25, 0.10},
      {0.85, 0.75, 0.20},
      {0.45, 0.20, 0.60},
  }};
  if (static_cast<std::size_t>(c) < kPalette.size()) return kPalette[static_cast<std::size_t>(c)];
  auto engine = keyed_engine({spec.seed, 0xc0104, static_cast<std::uint64_t>(c)});
  return {uniform(engine, 0.1, 0.9), uniform(engine, 0.1, 0.9), uniform(engine, 0.1, 0.9)};
}

std::string sentence(const WordInventory& inv, int source, const GeneratorSpec& spec, std::mt19937_64& engine) {
  const auto& own = inv.private_words[static_cast<std::size_t>(source)];
  while (true) {
    std::string out;
    bool has_private = false;
    for (std::size_t k = 0; k < spec.sentence_length; ++k) {
      const bool priv = unit_interval(engine()) < spec.private_token_rate || inv.shared_words.empty();
      const auto& pool = priv ? own : inv.shared_words;
      has_private |= priv;
      if (k > 0) out += ' ';
      out += pool[uniform_index(engine, pool.size())];
    }
    // A sentence without a private word would not reveal its source class.
    if (has_private) return out;
  }
}

std::string sample_id(std::size_t i, std::size_t n) {
  const int digits = std::max<int>(5, static_cast<int>(std::to_string(n).size()));
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%0*zu", digits, i);
  return buf;
}

}  // namespace

Tensor class_pattern(const GeneratorSpec& spec, int source) {
  const std::size_t r = spec.resolution;
  const auto color = class_color(spec, source);
  const double freq = 1.0 + static_cast<double>(source % 3);
  // Angles must stay distinct under a horizontal flip (theta -> pi - theta), or augmentation merges classes.
  static constexpr std::array<double, 3> kAngles = {0.0, std::numbers::pi / 6.0, std::numbers::pi / 2.0};
  const double theta = kAngles[static_cast<std::size_t>((source / 3) % 3)];
  const double ct = std::cos(theta), st = std::sin(theta);
  Tensor out(Shape{3, r, r});
  for (std::size_t y = 0; y < r; ++y) {
    for (std::size_t x = 0; x < r; ++x) {
      const double u = (static_cast<double>(x) * ct + static_cast<double>(y) * st) / static_cast<double>(r);
      const double stripe = 0.12 * std::sin(2.0 * std::numbers::pi * freq * u);
      for (std::size_t c = 0; c < 3; ++c) out[(c * r + y) * r + x] = static_cast<float>(color[c] + stripe);
    }
  }
  return out;
}

GeneratedCorpus generate(const GeneratorSpec& spec) {
  spec.validate();
  GeneratedCorpus corpus;
  corpus.spec = spec;
  corpus.class_counts = class_quotas(spec);

  std::vector<int> labels;
  for (std::size_t c = 0; c < corpus.class_counts.size(); ++c) labels.insert(labels.end(), corpus.class_counts[c], static_cast<int>(c));
  auto order_engine = keyed_engine({spec.seed, 0x0bde7});
  seeded_shuffle(labels, order_engine);

  const auto inv = word_inventory(spec);
  std::vector<Tensor> patterns;
  for (std::size_t c = 0; c < spec.n_classes(); ++c) patterns.push_back(class_pattern(spec, static_cast<int>(c)));

  const std::size_t r = spec.resolution;
  std::size_t text_amb = 0, image_amb = 0;
  corpus.samples.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto engine = keyed_engine({spec.seed, 0x5a3b1e, i});
    MultimodalSample& s = corpus.samples[i];
    s.id = sample_id(i, labels.size());
    s.label = labels[i];
    s.text_ambiguous = unit_interval(engine()) < spec.alpha_text;
    s.image_ambiguous = unit_interval(engine()) < spec.alpha_image;
    s.text_source = s.text_ambiguous ? spec.text_pairing[static_cast<std::size_t>(s.label)] : s.label;
    s.image_source = s.image_ambiguous ? spec.image_pairing[static_cast<std::size_t>(s.label)] : s.label;
    text_amb += s.text_ambiguous;
    image_amb += s.image_ambiguous;

    s.text = sentence(inv, s.text_source, spec, engine);

    Tensor px = patterns[static_cast<std::size_t>(s.image_source)].clone();
    for (auto& v : px.data()) {
      const double noisy = std::clamp(v + spec.noise_sigma * standard_normal(engine), 0.0, 1.0);
      v = static_cast<float>(std::lround(noisy * 255.0) / 255.0);  // what an 8-bit PPM holds
    }
    s.image = ImageRecord{px, "images/" + s.id + ".ppm", r, r};
  }
  corpus.text_ambiguous_rate = static_cast<double>(text_amb) / static_cast<double>(labels.size());
  corpus.image_ambiguous_rate = static_cast<double>(image_amb) / static_cast<double>(labels.size());
  return corpus;
}

void write_corpus(const GeneratedCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw DataError("cannot create " + (dir / "images").string() + ": " + ec.message());

  const auto& spec = corpus.spec;
  std::vector<ManifestRecord> manifest;
  std::ofstream truth(dir / "ground_truth.jsonl", std::ios::trunc);
  if (!truth) throw DataError("cannot write " + (dir / "ground_truth.jsonl").string());
  for (const auto& s : corpus.samples) {
    write_ppm(dir / s.image.source, s.image.pixels);
    manifest.push_back({s.id, s.text, s.image.source, s.label, std::nullopt});
    truth << nlohmann::json{{"id", s.id},
                            {"label", s.label},
                            {"text_ambiguous", s.text_ambiguous},
                            {"image_ambiguous", s.image_ambiguous},
                            {"text_source", s.text_source},
                            {"image_source", s.image_source}}
                 .dump()
          << '\n';
  }
  write_manifest(dir / "manifest.jsonl", manifest);

  nlohmann::json counts = nlohmann::json::object();
  for (std::size_t c = 0; c < spec.n_classes(); ++c) counts[spec.class_names[c]] = corpus.class_counts[c];
  nlohmann::json summary = {{"n_samples", corpus.samples.size()},
                            {"class_counts", counts},
                            {"class_order", spec.class_names},
                            {"text_ambiguous_rate", corpus.text_ambiguous_rate},
                            {"image_ambiguous_rate", corpus.image_ambiguous_rate},
                            {"bayes_oracle",
                             {{"text", bayes_oracle(spec, Modality::kText)},
                              {"image", bayes_oracle(spec, Modality::kImage)},
                              {"multimodal", bayes_oracle(spec, Modality::kMultimodal)}}}};
  for (const auto& [name, body] : {std::pair{"summary.json", summary}, {"generator_spec.json", generator_spec_to_json(spec)}}) {
    std::ofstream os(dir / name, std::ios::trunc);
    if (!os) throw DataError("cannot write " + (dir / name).string());
    os << body.dump(2) << '\n';
  }
}

double bayes_oracle(const GeneratorSpec& spec, Modality modality) {
  spec.validate();
  const std::size_t n = spec.n_classes();
  // P(observed source s | class c) for one modality.
  auto likelihood = [](const std::vector<int>& pairing, double alpha, std::size_t c, std::size_t s) {
    double p = 0.0;
    if (s == c) p += 1.0 - alpha;
    if (static_cast<std::size_t>(pairing[c]) == s) p += alpha;
    return p;
  };
  double correct = 0.0;
  for (std::size_t st = 0; st < n; ++st) {
    for (std::size_t sv = 0; sv < n; ++sv) {
      if (modality != Modality::kMultimodal && sv > 0) break;
      double best = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        double joint = spec.proportions[c];
        switch (modality) {
          case Modality::kText:
            joint *= likelihood(spec.text_pairing, spec.alpha_text, c, st);
            break;
          case Modality::kImage:
            joint *= likelihood(spec.image_pairing, spec.alpha_image, c, st);
            break;
          case Modality::kMultimodal:
            joint *= likelihood(spec.text_pairing, spec.alpha_text, c, st) *
                     likelihood(spec.image_pairing, spec.alpha_image, c, sv);
            break;
        }
        best = std::max(best, joint);
      }
      correct += best;
    }
  }
  double total = 0.0;
  for (double p : spec.proportions) total += p;
  return correct / total;
}

}  // namespace mmf
