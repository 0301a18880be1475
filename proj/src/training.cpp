#include "mmf/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "mmf/errors.hpp"
#include "mmf/rng.hpp"

namespace mmf {

void SplitSpec::validate() const {
  for (double f : {train, val, test}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> fractions) {
  if (fractions.empty()) throw ConfigError("largest_remainder: no fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("largest_remainder: negative fraction");
    total += f;
  }
  if (!(total > 0.0)) throw ConfigError("largest_remainder: fractions sum to zero");

  // Products like 5037 * (800/5037) land a hair below the integer; the slack
  // keeps those exact without affecting genuine fractional parts.
  constexpr double kSlack = 1e-9;
  std::vector<std::size_t> counts(fractions.size());
  // Remainders on a 1e-9 grid so exact ties (2 * 0.7 vs 2 * 0.2) stay ties.
  std::vector<long long> remainders(fractions.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double quota = static_cast<double>(n) * fractions[i] / total;
    const double whole = std::floor(quota + kSlack);
    counts[i] = static_cast<std::size_t>(whole);
    remainders[i] = std::llround((quota - whole) / kSlack);
    assigned += counts[i];
  }
  if (assigned > n) throw ConfigError("largest_remainder: fractions overshoot");

  std::vector<std::size_t> order(fractions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % order.size()]];
  return counts;
}

SplitIndices stratified_split(std::span<const int> labels, const SplitSpec& spec) {
  spec.validate();
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[spec.stratified ? labels[i] : 0].push_back(i);
  if (labels.empty()) throw DataError("cannot split an empty dataset");

  const std::array<double, 3> fractions{spec.train, spec.val, spec.test};
  SplitIndices out;
  for (auto& [label, members] : by_class) {
    if (members.size() < 3) {
      throw DataError("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                      " samples; a stratified split needs at least 3");
    }
    auto engine = keyed_engine({spec.seed, 0x5b1175, static_cast<std::uint64_t>(static_cast<std::int64_t>(label))});
    seeded_shuffle(members, engine);
    const auto counts = largest_remainder(members.size(), fractions);
    auto it = members.begin();
    for (auto [dst, count] : {std::pair{&out.train, counts[0]}, {&out.val, counts[1]}, {&out.test, counts[2]}}) {
      dst->insert(dst->end(), it, it + static_cast<std::ptrdiff_t>(count));
      it += static_cast<std::ptrdiff_t>(count);
    }
  }
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

void OptimizerSpec::validate() const {
  if (!(lr_encoder > 0.0 && lr_fusion > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<double> m, std::span<double> v,
               const OptimizerSpec& spec, ParamGroup group, std::uint64_t t) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment sizes differ");
  }
  if (t == 0) throw UsageError("adam_step: t counts from 1");
  const double lr = spec.learning_rate(group);
  const double c1 = 1.0 - std::pow(spec.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(spec.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = spec.beta1 * m[i] + (1.0 - spec.beta1) * g;
    v[i] = spec.beta2 * v[i] + (1.0 - spec.beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] = static_cast<T>(params[i] - lr * m_hat / (std::sqrt(v_hat) + spec.epsilon));
  }
}

template <typename T>
void AdamOptimizer<T>::step(const std::vector<Parameter<T>*>& params) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(p->tensor.numel(), 0.0);
      v_.emplace_back(p->tensor.numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw UsageError("optimizer was built for a different parameter list");
  ++t_;
  std::vector<T> zeros;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params[i]->tensor;
    std::span<const T> g = tensor.grad();
    if (!tensor.has_grad()) {
      zeros.assign(tensor.numel(), T(0));
      g = zeros;
    }
    adam_step<T>(tensor.data(), g, m_[i], v_[i], spec_, params[i]->group, t_);
  }
}

template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (T g : p->tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto* p : params) {
      if (!p->tensor.has_grad()) continue;
      for (T& g : p->tensor.grad_mut()) g = static_cast<T>(g * s);
    }
  }
  return norm;
}

template void adam_step<float>(std::span<float>, std::span<const float>, std::span<double>, std::span<double>,
                               const OptimizerSpec&, ParamGroup, std::uint64_t);
template void adam_step<double>(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                                const OptimizerSpec&, ParamGroup, std::uint64_t);
template class AdamOptimizer<float>;
template class AdamOptimizer<double>;
template double clip_grad_norm<float>(const std::vector<Parameter<float>*>&, double);
template double clip_grad_norm<double>(const std::vector<Parameter<double>*>&, double);

EarlyStopping::EarlyStopping(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {
  if (patience == 0) throw ConfigError("patience must be at least 1");
}

bool EarlyStopping::update(double val_loss) {
  ++epochs_;
  if (val_loss < best_ - min_delta_) {
    best_ = val_loss;
    best_epoch_ = epochs_;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

namespace {

std::vector<std::vector<float>> snapshot(const std::vector<Parameter<float>*>& params) {
  std::vector<std::vector<float>> out;
  out.reserve(params.size());
  for (const auto* p : params) out.emplace_back(p->tensor.data().begin(), p->tensor.data().end());
  return out;
}

void restore(const std::vector<Parameter<float>*>& params, const std::vector<std::vector<float>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(values[i].begin(), values[i].end(), params[i]->tensor.data().begin());
  }
}

}  // namespace

TrainResult train(MultimodalModel<float>& model, const std::vector<Sample>& samples,
                  std::span<const std::size_t> train_indices, std::span<const std::size_t> val_indices,
                  const TrainOptions& options) {
  const auto& opt = options.optimizer;
  opt.validate();
  if (train_indices.empty() || val_indices.empty()) throw UsageError("train: train and validation splits must be non-empty");
  const Modality modality = model.config().modality;
  const bool augment_images = uses_image(modality) && options.augment.enabled;
  if (augment_images) options.augment.validate();

  auto params = model.parameters();
  AdamOptimizer<float> adam(opt);
  EarlyStopping stopper(opt.patience);
  TrainResult result;
  auto best = snapshot(params);

  std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
  for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    auto shuffle_engine = keyed_engine({options.seed, 0xba7c4, epoch});
    seeded_shuffle(order, shuffle_engine);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      const std::uint64_t step = adam.steps() + 1;
      Tape tape;
      double batch_loss = 0.0;
      try {
        TapeScope scope(tape);
        std::vector<Tensor> feats;
        std::vector<int> labels;
        for (std::size_t j = start; j < end; ++j) {
          const std::size_t idx = order[j];
          const Sample& s = samples.at(idx);
          const DropoutContext ctx{options.seed, step, j - start};
          Tensor image;
          if (uses_image(modality)) {
            if (augment_images) {
              auto engine = keyed_engine({options.seed, 0xa46, idx, epoch});
              image = standardize(augment(s.image, options.augment, engine), options.image_mean, options.image_std);
            } else {
              image = s.standardized;
            }
          }
          feats.push_back(model.features(uses_text(modality) ? &s.tokens : nullptr,
                                         uses_image(modality) ? &image : nullptr, true, ctx));
          labels.push_back(s.label);
        }
        const DropoutContext head_ctx{options.seed, step, 0};
        const auto logits = model.head().logits(stack(feats), true, head_ctx);
        const auto loss = cross_entropy(logits, std::span<const int>(labels));
        batch_loss = loss.item();
        if (!std::isfinite(batch_loss)) {
          throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step));
        }
        backward(loss, tape);
      } catch (const NumericError& e) {
        const std::string what = e.what();
        if (what.starts_with("training loss")) throw;
        throw NumericError(what + " at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      clip_grad_norm(params, opt.clip_norm);
      adam.step(params);
      for (auto* p : params) p->tensor.zero_grad();
      loss_sum += batch_loss * static_cast<double>(end - start);
    }

    const auto val = predict_samples(model, samples, val_indices);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < val.truth.size(); ++i) correct += val.truth[i] == val.predicted[i];
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), val.mean_loss,
                    static_cast<double>(correct) / static_cast<double>(val.truth.size())};
    if (!std::isfinite(rec.val_loss)) {
      throw NumericError("validation loss became non-finite after epoch " + std::to_string(epoch) + ", step " +
                         std::to_string(adam.steps()));
    }
    result.history.push_back(rec);
    if (stopper.update(rec.val_loss)) best = snapshot(params);
    if (options.on_epoch) options.on_epoch(rec);
    if (stopper.should_stop()) break;
  }
  restore(params, best);
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best();
  result.steps = adam.steps();
  return result;
}

SplitPredictions predict_samples(const MultimodalModel<float>& model, const std::vector<Sample>& samples,
                                 std::span<const std::size_t> indices) {
  const Modality modality = model.config().modality;
  SplitPredictions out;
  double loss_sum = 0.0;
  for (std::size_t idx : indices) {
    const Sample& s = samples.at(idx);
    const auto pred = model.predict(uses_text(modality) ? &s.tokens : nullptr,
                                    uses_image(modality) ? &s.standardized : nullptr);
    NoGradScope no_grad;
    loss_sum += cross_entropy(pred, s.label).item();
    out.truth.push_back(s.label);
    out.predicted.push_back(pred.predicted_class);
  }
  out.mean_loss = indices.empty() ? 0.0 : loss_sum / static_cast<double>(indices.size());
  return out;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "epoch,train_loss,val_loss,val_acc\n";
  os.precision(9);
  for (const auto& r : history) {
    os << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_accuracy << '\n';
  }
}

}  // namespace mmf
