#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmf/image.hpp"
#include "mmf/model.hpp"

namespace mmf {

struct ClassInfo {
  std::string code;
  std::string name;
  std::size_t count;
};

/// The nine disaster categories and their corpus counts (total 5,037).
const std::vector<ClassInfo>& table_one_classes();

struct GeneratorSpec {
  std::vector<std::string> class_names;
  std::vector<double> proportions;
  std::size_t n_samples = 5037;
  std::uint64_t seed = 0;
  double alpha_text = 0.0;
  double alpha_image = 0.0;
  /// Source class whose evidence an ambiguous sample shows; identity entries
  /// mark classes that are never confusable in that modality.
  std::vector<int> text_pairing;
  std::vector<int> image_pairing;
  std::size_t vocab_size = 180;  // distinct synthetic words
  std::size_t resolution = 32;
  std::size_t sentence_length = 20;
  double private_token_rate = 0.35;
  double noise_sigma = 0.05;

  std::size_t n_classes() const { return class_names.size(); }
  /// Classes moved by either pairing.
  std::vector<int> ambiguous_classes() const;
  void validate() const;
};

/// Table I classes and proportions; text confuses FR<->EL and ID<->LS, images
/// confuse FR<->LS and EL<->ID.
GeneratorSpec default_generator_spec();

struct MultimodalSample {
  std::string id;
  std::string text;
  ImageRecord image;
  int label = 0;
  // Latent generator state; never part of a model input.
  bool text_ambiguous = false;
  bool image_ambiguous = false;
  int text_source = 0;
  int image_source = 0;
};

struct GeneratedCorpus {
  GeneratorSpec spec;
  std::vector<MultimodalSample> samples;
  std::vector<std::size_t> class_counts;
  double text_ambiguous_rate = 0.0;
  double image_ambiguous_rate = 0.0;
};

/// Per-class sample counts: largest remainder of proportions over N.
std::vector<std::size_t> class_quotas(const GeneratorSpec& spec);

/// Synthetic word inventory: private words of class c, then the shared pool.
struct WordInventory {
  std::vector<std::vector<std::string>> private_words;
  std::vector<std::string> shared_words;
};
WordInventory word_inventory(const GeneratorSpec& spec);

/// Noise-free class pattern [3 x R x R] before quantization.
Tensor class_pattern(const GeneratorSpec& spec, int source_class);

GeneratedCorpus generate(const GeneratorSpec& spec);

/// Writes manifest.jsonl, images/*.ppm, ground_truth.jsonl, summary.json and
/// generator_spec.json under `dir`.
void write_corpus(const GeneratedCorpus& corpus, const std::filesystem::path& dir);

/// Exact Bayes-optimal accuracy by enumerating the latent ambiguity events
/// under the class priors. Text and image observations reveal their source
/// class; unimodal oracles marginalize the other modality.
double bayes_oracle(const GeneratorSpec& spec, Modality modality);

}  // namespace mmf
