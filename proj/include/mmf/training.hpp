#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "mmf/dataset.hpp"
#include "mmf/model.hpp"

namespace mmf {

struct SplitSpec {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
  bool stratified = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Largest-remainder apportionment of n items over fractions; leftover units
/// go to the largest fractional parts, ties to the earlier entry.
std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> fractions);

/// Per class: counts by largest remainder, members by seeded shuffle. Every
/// class needs at least 3 samples. Indices within each split are ascending.
/// With stratified = false the whole set is apportioned as one class.
SplitIndices stratified_split(std::span<const int> labels, const SplitSpec& spec);

struct OptimizerSpec {
  double lr_encoder = 1e-5;
  double lr_fusion = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t patience = 5;
  std::size_t max_epochs = 100;
  double clip_norm = 5.0;  // global L2 norm; 0 disables

  double learning_rate(ParamGroup g) const { return g == ParamGroup::kEncoder ? lr_encoder : lr_fusion; }
  void validate() const;
};

/// One bias-corrected Adam update in place; t counts from 1.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<double> m, std::span<double> v,
               const OptimizerSpec& spec, ParamGroup group, std::uint64_t t);

/// Adam over a fixed parameter list; moments live here, keyed by position.
template <typename T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(OptimizerSpec spec) : spec_(spec) { spec_.validate(); }

  /// Missing gradients count as zero.
  void step(const std::vector<Parameter<T>*>& params);
  std::uint64_t steps() const { return t_; }

 private:
  OptimizerSpec spec_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Scales gradients so their global L2 norm is at most max_norm; returns the
/// norm before scaling.
template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm);

/// Stops after `patience` consecutive epochs without improving the best
/// validation loss by more than min_delta.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience, double min_delta = 0.0);

  /// Returns true when this epoch is the new best.
  bool update(double val_loss);
  bool should_stop() const { return bad_epochs_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based; 0 before any update

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t epochs_ = 0;
  std::size_t bad_epochs_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainOptions {
  OptimizerSpec optimizer;
  AugmentConfig augment;
  std::array<double, 3> image_mean{0.5, 0.5, 0.5};
  std::array<double, 3> image_std{0.5, 0.5, 0.5};
  std::uint64_t seed = 0;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::uint64_t steps = 0;
};

/// Mini-batch training with per-epoch validation and early stopping. On
/// return the model holds the parameters of the best validation epoch.
/// Throws NumericError naming the epoch and step if the loss goes non-finite.
TrainResult train(MultimodalModel<float>& model, const std::vector<Sample>& samples,
                  std::span<const std::size_t> train_indices, std::span<const std::size_t> val_indices,
                  const TrainOptions& options);

struct SplitPredictions {
  std::vector<int> truth;
  std::vector<int> predicted;
  double mean_loss = 0.0;
};

/// Deterministic inference over the given samples (no dropout, no augmentation).
SplitPredictions predict_samples(const MultimodalModel<float>& model, const std::vector<Sample>& samples,
                                 std::span<const std::size_t> indices);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace mmf
