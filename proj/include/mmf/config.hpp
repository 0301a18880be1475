#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "mmf/dataset.hpp"
#include "mmf/model.hpp"
#include "mmf/synthetic.hpp"
#include "mmf/training.hpp"

namespace mmf {

/// Everything one run depends on. JSON readers reject unknown keys and wrong
/// types with ConfigError; absent keys keep their defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  Modality modality = Modality::kMultimodal;
  std::string output_dir;
  NormalizerConfig normalizer;
  std::size_t vocab_target_size = 2000;
  TextEncoderConfig text;  // vocab_size 0 means "size of the trained vocabulary"
  VisionEncoderConfig vision;
  std::array<double, 3> image_mean{0.5, 0.5, 0.5};
  std::array<double, 3> image_std{0.5, 0.5, 0.5};
  AugmentConfig augment;
  FusionConfig fusion;
  OptimizerSpec optimizer;
  SplitSpec split;
  GeneratorSpec generator = default_generator_spec();

  ModelConfig model_config() const;
  Preprocessing preprocessing() const;
  TrainOptions train_options() const;
  /// Cross-module consistency: fusion dims against encoders, class count
  /// against the generator, plus each module's own checks.
  void validate() const;
};

/// Small encoders and rates that train the nine-class synthetic corpus on a
/// single CPU core in a couple of minutes per run.
RunConfig desk_run_config();

nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json generator_spec_to_json(const GeneratorSpec& spec);
GeneratorSpec generator_spec_from_json(const nlohmann::json& j);

}  // namespace mmf
