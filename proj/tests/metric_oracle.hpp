#pragma once

#include <cstddef>
#include <vector>

namespace mmf::testing {

// Metrics recomputed from raw (truth, predicted) pairs by counting.
struct Brute {
  double accuracy;
  std::vector<double> precision, recall, f1;
  double macro_p, macro_r, macro_f1;
  double kappa;
};

inline Brute brute_force(const std::vector<int>& t, const std::vector<int>& p, std::size_t n_classes) {
  Brute b;
  const auto n = static_cast<long long>(t.size());
  long long hits = 0;
  for (std::size_t i = 0; i < t.size(); ++i) hits += t[i] == p[i];
  b.accuracy = static_cast<double>(hits) / static_cast<double>(n);
  long long chance = 0;
  double sp = 0, sr = 0, sf = 0;
  for (int c = 0; c < static_cast<int>(n_classes); ++c) {
    long long tp = 0, fp = 0, fn = 0, in_t = 0, in_p = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      tp += t[i] == c && p[i] == c;
      fp += t[i] != c && p[i] == c;
      fn += t[i] == c && p[i] != c;
      in_t += t[i] == c;
      in_p += p[i] == c;
    }
    chance += in_t * in_p;
    b.precision.push_back(tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp));
    b.recall.push_back(tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn));
    // F1 = 2PR/(P+R) = 2tp/(2tp+fp+fn), evaluated exactly.
    b.f1.push_back(tp == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn));
    sp += b.precision.back();
    sr += b.recall.back();
    sf += b.f1.back();
  }
  const double k = static_cast<double>(n_classes);
  b.macro_p = sp / k;
  b.macro_r = sr / k;
  b.macro_f1 = sf / k;
  // kappa = (p_o - p_e)/(1 - p_e) = (n*hits - chance)/(n^2 - chance).
  b.kappa = n * n == chance ? 1.0 : static_cast<double>(n * hits - chance) / static_cast<double>(n * n - chance);
  return b;
}

}  // namespace mmf::testing
