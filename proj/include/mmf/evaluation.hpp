#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mmf {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> labels);
  static ConfusionMatrix from_pairs(std::span<const int> truth, std::span<const int> predicted,
                                    std::vector<std::string> labels);

  void add(int truth, int predicted, std::uint64_t count = 1);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }
  std::size_t n_classes() const { return n_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::uint64_t row_sum(std::size_t c) const;
  std::uint64_t col_sum(std::size_t c) const;
  std::uint64_t trace() const;
  std::uint64_t total() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t n_;
  std::vector<std::string> labels_;
  std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;  // true-class count
  bool precision_undefined = false;  // no predicted positives
  bool recall_undefined = false;  // class absent from the split

  bool operator==(const ClassMetrics&) const = default;
};

struct EvalReport {
  std::string name;
  std::uint64_t seed = 0;
  std::string split;
  std::string split_fingerprint;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  ConfusionMatrix confusion{std::vector<std::string>{}};
  std::uint64_t sample_count = 0;

  bool operator==(const EvalReport&) const = default;
};

/// Metrics from the confusion matrix. Vanishing denominators give 0 and set
/// the matching undefined flag; F1 is 0 when precision + recall is 0.
EvalReport make_report(const ConfusionMatrix& confusion, std::string name = {}, std::uint64_t seed = 0,
                       std::string split = {}, std::string split_fingerprint = {});

/// 1 - recall per class; nullopt for classes with no samples in the split.
std::vector<std::optional<double>> class_error_rates(const EvalReport& report);

/// (p_o - p_e) / (1 - p_e) from two label lists, evaluated as one division of
/// integer sums. Returns 1 when p_e = 1.
double cohens_kappa(std::span<const int> labels_a, std::span<const int> labels_b);
/// Same statistic from an agreement table (rows annotator A, columns B).
double cohens_kappa(const ConfusionMatrix& agreement);

struct ComparisonRow {
  std::string name;
  std::size_t runs = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // sample standard deviation; 0 for one run
  double macro_f1_mean = 0.0;
  double macro_f1_std = 0.0;
  double accuracy_delta = 0.0;  // against the baseline mean
  double macro_f1_delta = 0.0;
  std::vector<std::optional<double>> class_error_mean;
};

struct Comparison {
  std::string baseline;
  std::vector<std::string> class_labels;
  std::vector<ComparisonRow> rows;  // first-appearance order of names
};

/// Groups reports by name (several seeds per name), then takes deltas against
/// the baseline group. All reports must share split name and fingerprint.
Comparison compare_runs(std::span<const EvalReport> reports, const std::string& baseline);

// Serialization
nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
void save_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport load_report(const std::filesystem::path& path);

/// Table-style summary in percent: "Acc. 83.76  Prec. 83.54  Recall 83.98  F1 83.76".
std::string metrics_row(const EvalReport& report);

std::string confusion_csv(const ConfusionMatrix& confusion);
/// Monospace grid with class labels on both axes.
std::string confusion_grid(const ConfusionMatrix& confusion);

std::string comparison_csv(const Comparison& comparison);
/// One row per class, one column per compared name.
std::string class_error_csv(const Comparison& comparison);
/// Grouped bar chart of class-wise error rates.
std::string class_error_svg(const Comparison& comparison);

}  // namespace mmf
