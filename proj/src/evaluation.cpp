#include "mmf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mmf/errors.hpp"

namespace mmf {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels)
    : n_(labels.size()), labels_(std::move(labels)), counts_(n_ * n_, 0) {}

ConfusionMatrix ConfusionMatrix::from_pairs(std::span<const int> truth, std::span<const int> predicted,
                                            std::vector<std::string> labels) {
  if (truth.size() != predicted.size()) {
    throw DimensionError("confusion: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix m(std::move(labels));
  for (std::size_t i = 0; i < truth.size(); ++i) m.add(truth[i], predicted[i]);
  return m;
}

void ConfusionMatrix::add(int truth, int predicted, std::uint64_t count) {
  const auto n = static_cast<int>(n_);
  if (truth < 0 || truth >= n || predicted < 0 || predicted >= n) {
    throw DataError("confusion: class pair (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                    ") outside [0, " + std::to_string(n_) + ")");
  }
  counts_[static_cast<std::size_t>(truth) * n_ + static_cast<std::size_t>(predicted)] += count;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < n_; ++j) s += at(c, j);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < n_; ++i) s += at(i, c);
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < n_; ++c) s += at(c, c);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto v : counts_) s += v;
  return s;
}

EvalReport make_report(const ConfusionMatrix& confusion, std::string name, std::uint64_t seed, std::string split,
                       std::string split_fingerprint) {
  EvalReport r;
  r.name = std::move(name);
  r.seed = seed;
  r.split = std::move(split);
  r.split_fingerprint = std::move(split_fingerprint);
  r.confusion = confusion;
  r.sample_count = confusion.total();
  r.accuracy = r.sample_count == 0 ? 0.0 : static_cast<double>(confusion.trace()) / static_cast<double>(r.sample_count);

  const std::size_t n = confusion.n_classes();
  double sp = 0.0, sr = 0.0, sf = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    ClassMetrics m;
    const auto tp = confusion.at(c, c);
    const auto predicted = confusion.col_sum(c);
    m.support = confusion.row_sum(c);
    m.precision_undefined = predicted == 0;
    m.recall_undefined = m.support == 0;
    m.precision = m.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    m.recall = m.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(m.support);
    // Harmonic mean of precision and recall as one division: 2tp / (predicted + support).
    m.f1 = tp == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(predicted + m.support);
    sp += m.precision;
    sr += m.recall;
    sf += m.f1;
    r.per_class.push_back(m);
  }
  if (n > 0) {
    r.macro_precision = sp / static_cast<double>(n);
    r.macro_recall = sr / static_cast<double>(n);
    r.macro_f1 = sf / static_cast<double>(n);
  }
  return r;
}

std::vector<std::optional<double>> class_error_rates(const EvalReport& report) {
  std::vector<std::optional<double>> out;
  for (const auto& m : report.per_class) {
    if (m.recall_undefined) {
      out.emplace_back(std::nullopt);
    } else {
      out.emplace_back(1.0 - m.recall);
    }
  }
  return out;
}

double cohens_kappa(const ConfusionMatrix& agreement) {
  const std::size_t k = agreement.n_classes();
  const auto n = static_cast<std::int64_t>(agreement.total());
  if (n == 0) throw DataError("cohens_kappa: no ratings");
  std::int64_t diag = 0, chance = 0;
  for (std::size_t c = 0; c < k; ++c) {
    diag += static_cast<std::int64_t>(agreement.at(c, c));
    chance += static_cast<std::int64_t>(agreement.row_sum(c)) * static_cast<std::int64_t>(agreement.col_sum(c));
  }
  // kappa = (n*diag - chance) / (n^2 - chance); both sums are exact integers.
  const std::int64_t denom = n * n - chance;
  if (denom == 0) return 1.0;
  return static_cast<double>(n * diag - chance) / static_cast<double>(denom);
}

double cohens_kappa(std::span<const int> labels_a, std::span<const int> labels_b) {
  if (labels_a.size() != labels_b.size()) throw DimensionError("cohens_kappa: label lists differ in length");
  if (labels_a.empty()) throw DataError("cohens_kappa: no ratings");
  std::set<int> values(labels_a.begin(), labels_a.end());
  values.insert(labels_b.begin(), labels_b.end());
  std::map<int, int> index;
  for (int v : values) index.emplace(v, static_cast<int>(index.size()));
  ConfusionMatrix table(std::vector<std::string>(values.size()));
  for (std::size_t i = 0; i < labels_a.size(); ++i) table.add(index[labels_a[i]], index[labels_b[i]]);
  return cohens_kappa(table);
}

namespace {

struct Stats {
  double mean = 0.0;
  double sd = 0.0;
};

Stats stats(const std::vector<double>& xs) {
  Stats s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

}  // namespace

Comparison compare_runs(std::span<const EvalReport> reports, const std::string& baseline) {
  if (reports.empty()) throw UsageError("compare: no reports");
  const auto& first = reports.front();
  for (const auto& r : reports) {
    if (r.split != first.split || r.split_fingerprint != first.split_fingerprint) {
      throw UsageError("compare: report '" + r.name + "' is on split " + r.split + "/" + r.split_fingerprint +
                       " but '" + first.name + "' is on " + first.split + "/" + first.split_fingerprint);
    }
    if (r.confusion.labels() != first.confusion.labels()) {
      throw UsageError("compare: report '" + r.name + "' uses different class labels");
    }
  }

  std::vector<std::string> names;
  std::map<std::string, std::vector<const EvalReport*>> groups;
  for (const auto& r : reports) {
    if (!groups.contains(r.name)) names.push_back(r.name);
    groups[r.name].push_back(&r);
  }
  if (!groups.contains(baseline)) throw UsageError("compare: baseline '" + baseline + "' is not among the reports");

  Comparison out;
  out.baseline = baseline;
  out.class_labels = first.confusion.labels();
  const std::size_t n_classes = out.class_labels.size();
  for (const auto& name : names) {
    const auto& group = groups[name];
    ComparisonRow row;
    row.name = name;
    row.runs = group.size();
    std::vector<double> acc, f1;
    for (const auto* r : group) {
      acc.push_back(r->accuracy);
      f1.push_back(r->macro_f1);
    }
    const auto a = stats(acc), f = stats(f1);
    row.accuracy_mean = a.mean;
    row.accuracy_std = a.sd;
    row.macro_f1_mean = f.mean;
    row.macro_f1_std = f.sd;
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::vector<double> errs;
      for (const auto* r : group) {
        const auto e = class_error_rates(*r)[c];
        if (e) errs.push_back(*e);
      }
      row.class_error_mean.push_back(errs.empty() ? std::nullopt : std::optional<double>(stats(errs).mean));
    }
    out.rows.push_back(std::move(row));
  }
  const auto base = std::find_if(out.rows.begin(), out.rows.end(), [&](const auto& r) { return r.name == baseline; });
  const double base_acc = base->accuracy_mean, base_f1 = base->macro_f1_mean;
  for (auto& row : out.rows) {
    row.accuracy_delta = row.accuracy_mean - base_acc;
    row.macro_f1_delta = row.macro_f1_mean - base_f1;
  }
  return out;
}

}  // namespace mmf
