#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmf/image.hpp"
#include "mmf/text_pipeline.hpp"

namespace mmf {

/// One manifest.jsonl line: {id, text, image_path, label, split?}.
struct ManifestRecord {
  std::string id;
  std::string text;
  std::string image_path;  // relative to the data directory
  int label = 0;
  std::optional<std::string> split;
};

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& data_dir);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

struct Preprocessing {
  NormalizerConfig normalizer;
  std::size_t resolution = 32;
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.5, 0.5, 0.5};
  bool load_images = true;
};

/// A preprocessed sample. `image` keeps the resized [0,1] pixels so training
/// can augment before standardizing; `standardized` is the inference input.
struct Sample {
  std::string id;
  std::string text;  // normalized
  TokenSequence tokens;
  ImageRecord image;
  Tensor standardized;
  int label = 0;
};

Sample make_sample(std::string id, std::string_view raw_text, ImageRecord image, int label, const Preprocessing& prep);

/// Reads the manifest and images under `data_dir`. Tokens stay empty until
/// tokenize_samples() runs with a vocabulary.
std::vector<Sample> load_samples(const std::filesystem::path& data_dir, const Preprocessing& prep);

void tokenize_samples(std::vector<Sample>& samples, const Vocabulary& vocab, std::size_t max_len);

std::vector<int> labels_of(const std::vector<Sample>& samples);

}  // namespace mmf
