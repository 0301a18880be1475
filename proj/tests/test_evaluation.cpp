#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "mmf/errors.hpp"
#include "mmf/evaluation.hpp"
#include "mmf/rng.hpp"
#include "metric_oracle.hpp"
#include "test_util.hpp"

using namespace mmf;
using mmf::testing::TempDir;

namespace {

std::vector<std::string> names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

EvalReport fixture(const std::string& name, double acc, double f1, std::uint64_t seed = 0) {
  EvalReport r;
  r.name = name;
  r.seed = seed;
  r.split = "test";
  r.split_fingerprint = "abc";
  r.accuracy = acc;
  r.macro_f1 = f1;
  r.confusion = ConfusionMatrix({"FR", "EL"});
  r.per_class.resize(2);
  return r;
}

}  // namespace

// ---- confusion matrix

TEST(ConfusionTest, RowsAreTruth) {
  const std::vector<int> t{0, 0, 1, 2}, p{0, 1, 1, 0};
  auto m = ConfusionMatrix::from_pairs(t, p, names(3));
  EXPECT_EQ(m.at(0, 1), 1u);
  EXPECT_EQ(m.at(2, 0), 1u);
  EXPECT_EQ(m.row_sum(0), 2u);
  EXPECT_EQ(m.col_sum(0), 2u);
  EXPECT_EQ(m.trace(), 2u);
  EXPECT_EQ(m.total(), 4u);
}

TEST(ConfusionTest, LabelOutOfRange) {
  ConfusionMatrix m(names(2));
  EXPECT_THROW(m.add(2, 0), DataError);
  EXPECT_THROW(m.add(0, -1), DataError);
}

// ---- metrics

TEST(MetricsTest, PerfectPredictions) {
  const std::vector<int> t{0, 1, 2, 2, 1, 0};
  auto r = make_report(ConfusionMatrix::from_pairs(t, t, names(3)));
  EXPECT_EQ(r.accuracy, 1.0);
  for (const auto& m : r.per_class) EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) EXPECT_EQ(r.confusion.at(i, j), 0u);
}

TEST(MetricsTest, AllClassZeroOnBalancedPair) {
  const std::vector<int> t{0, 0, 1, 1}, p{0, 0, 0, 0};
  auto r = make_report(ConfusionMatrix::from_pairs(t, p, names(2)));
  EXPECT_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class[0].f1, 2.0 / 3.0);
  EXPECT_EQ(r.per_class[1].f1, 0.0);
  EXPECT_TRUE(r.per_class[1].precision_undefined);
  EXPECT_EQ(r.per_class[1].precision, 0.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 1.0 / 3.0);
}

TEST(MetricsTest, MatchesBruteForceOnRandomConfigurations) {
  std::mt19937_64 engine(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + uniform_index(engine, 8);
    const std::size_t n = 1 + uniform_index(engine, 400);
    // Skewed label draws so some classes go missing or are never predicted.
    const std::size_t t_span = 1 + uniform_index(engine, k), p_span = 1 + uniform_index(engine, k);
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(uniform_index(engine, t_span));
      p[i] = uniform(engine, 0, 1) < 0.5 ? t[i] : static_cast<int>(uniform_index(engine, p_span));
    }
    auto r = make_report(ConfusionMatrix::from_pairs(t, p, names(k)));
    auto b = mmf::testing::brute_force(t, p, k);
    ASSERT_EQ(r.accuracy, b.accuracy) << trial;
    ASSERT_EQ(r.macro_precision, b.macro_p) << trial;
    ASSERT_EQ(r.macro_recall, b.macro_r) << trial;
    ASSERT_EQ(r.macro_f1, b.macro_f1) << trial;
    for (std::size_t c = 0; c < k; ++c) {
      ASSERT_EQ(r.per_class[c].precision, b.precision[c]) << trial;
      ASSERT_EQ(r.per_class[c].recall, b.recall[c]) << trial;
      ASSERT_EQ(r.per_class[c].f1, b.f1[c]) << trial;
    }
    ASSERT_EQ(cohens_kappa(t, p), b.kappa) << trial;
    ASSERT_EQ(r.sample_count, n);
  }
}

TEST(MetricsTest, RatesInUnitInterval) {
  std::mt19937_64 engine(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> t(50), p(50);
    for (auto& v : t) v = static_cast<int>(uniform_index(engine, 4));
    for (auto& v : p) v = static_cast<int>(uniform_index(engine, 4));
    auto r = make_report(ConfusionMatrix::from_pairs(t, p, names(4)));
    for (double v : {r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(MetricsTest, MacroF1PermutationInvariant) {
  std::mt19937_64 engine(6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> t(60), p(60);
    for (auto& v : t) v = static_cast<int>(uniform_index(engine, 5));
    for (auto& v : p) v = static_cast<int>(uniform_index(engine, 5));
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    seeded_shuffle(perm, engine);
    std::vector<int> tp(60), pp(60);
    for (std::size_t i = 0; i < 60; ++i) {
      tp[i] = perm[t[i]];
      pp[i] = perm[p[i]];
    }
    auto a = make_report(ConfusionMatrix::from_pairs(t, p, names(5)));
    auto b = make_report(ConfusionMatrix::from_pairs(tp, pp, names(5)));
    EXPECT_NEAR(a.macro_f1, b.macro_f1, 1e-15);
    EXPECT_EQ(a.accuracy, b.accuracy);
  }
}

// ---- error rates

TEST(ErrorRateTest, OneMinusRecallAndMissing) {
  // Class 0: 3 of 4 right; class 1: all right; class 2 absent.
  const std::vector<int> t{0, 0, 0, 0, 1, 1}, p{0, 0, 0, 1, 1, 1};
  auto r = make_report(ConfusionMatrix::from_pairs(t, p, names(3)));
  auto e = class_error_rates(r);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_DOUBLE_EQ(*e[0], 0.25);
  EXPECT_EQ(*e[1], 0.0);
  EXPECT_FALSE(e[2].has_value());
  EXPECT_TRUE(r.per_class[2].recall_undefined);
}

// ---- kappa

TEST(KappaTest, HandTableIsExactlyPointFour) {
  ConfusionMatrix m(names(2));
  m.add(0, 0, 20);
  m.add(0, 1, 5);
  m.add(1, 0, 10);
  m.add(1, 1, 15);
  EXPECT_EQ(cohens_kappa(m), 0.4);
  std::vector<int> a, b;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::uint64_t k = 0; k < m.at(i, j); ++k) {
        a.push_back(static_cast<int>(i));
        b.push_back(static_cast<int>(j));
      }
  EXPECT_EQ(cohens_kappa(a, b), 0.4);
}

TEST(KappaTest, IdenticalListsGiveOne) {
  const std::vector<int> a{0, 1, 2, 1, 0, 3};
  EXPECT_EQ(cohens_kappa(a, a), 1.0);
}

TEST(KappaTest, ConstantAnnotators) {
  const std::vector<int> same{2, 2, 2}, other{1, 1, 1};
  EXPECT_EQ(cohens_kappa(same, same), 1.0);
  // p_o = 0, p_e = 0 gives kappa 0.
  EXPECT_EQ(cohens_kappa(same, other), 0.0);
}

TEST(KappaTest, BoundedAndNearZeroForIndependentLabels) {
  std::mt19937_64 engine(9);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + uniform_index(engine, 30);
    std::vector<int> a(n), b(n);
    for (auto& v : a) v = static_cast<int>(uniform_index(engine, 3));
    for (auto& v : b) v = static_cast<int>(uniform_index(engine, 3));
    const double k = cohens_kappa(a, b);
    EXPECT_GE(k, -1.0);
    EXPECT_LE(k, 1.0);
  }
  std::vector<int> a(20000), b(20000);
  for (auto& v : a) v = static_cast<int>(uniform_index(engine, 4));
  for (auto& v : b) v = static_cast<int>(uniform_index(engine, 4));
  EXPECT_NEAR(cohens_kappa(a, b), 0.0, 0.03);
}

TEST(KappaTest, LengthMismatch) {
  const std::vector<int> a{0, 1}, b{0};
  EXPECT_THROW(cohens_kappa(a, b), DimensionError);
}

// ---- compare

TEST(CompareTest, SeedMeanAndSampleStd) {
  std::vector<EvalReport> rs{fixture("mm", 0.80, 0.7, 0), fixture("mm", 0.82, 0.7, 1), fixture("mm", 0.84, 0.7, 2)};
  auto c = compare_runs(rs, "mm");
  ASSERT_EQ(c.rows.size(), 1u);
  EXPECT_EQ(c.rows[0].runs, 3u);
  EXPECT_NEAR(c.rows[0].accuracy_mean, 0.82, 1e-15);
  EXPECT_NEAR(c.rows[0].accuracy_std, 0.02, 1e-15);
}

TEST(CompareTest, HeadlineDeltas) {
  std::vector<EvalReport> rs{fixture("text", 0.7992, 0.79), fixture("image", 0.6685, 0.66),
                             fixture("multimodal", 0.8376, 0.8376)};
  auto vs_text = compare_runs(rs, "text");
  EXPECT_NEAR(vs_text.rows[2].accuracy_delta, 0.0384, 1e-12);
  auto vs_image = compare_runs(rs, "image");
  EXPECT_NEAR(vs_image.rows[2].accuracy_delta, 0.1691, 1e-12);
  EXPECT_NE(comparison_csv(vs_text).find("multimodal,1,0.837600,0.000000,0.837600,0.000000,0.038400,"),
            std::string::npos)
      << comparison_csv(vs_text);
}

TEST(CompareTest, ClassErrorRow) {
  std::vector<EvalReport> rs{fixture("image", 0.6, 0.6), fixture("text", 0.7, 0.7), fixture("multimodal", 0.8, 0.8)};
  const double fr_recall[] = {1 - 0.453, 1 - 0.284, 1 - 0.227};
  for (int i = 0; i < 3; ++i) {
    rs[i].per_class[0].recall = fr_recall[i];
    rs[i].per_class[1].recall_undefined = true;
  }
  auto c = compare_runs(rs, "image");
  const auto csv = class_error_csv(c);
  EXPECT_NE(csv.find("class,image,text,multimodal\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("FR,0.453000,0.284000,0.227000\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("EL,,,\n"), std::string::npos) << csv;
  const auto svg = class_error_svg(c);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(CompareTest, SelfComparisonHasZeroDeltas) {
  std::vector<int> t{0, 1, 1, 0}, p{0, 1, 0, 0};
  auto r = make_report(ConfusionMatrix::from_pairs(t, p, names(2)), "a", 0, "test", "fp");
  std::vector<EvalReport> rs{r, r};
  auto c = compare_runs(rs, "a");
  for (const auto& row : c.rows) {
    EXPECT_EQ(row.accuracy_delta, 0.0);
    EXPECT_EQ(row.macro_f1_delta, 0.0);
  }
}

TEST(CompareTest, MismatchedSplitIsUsageError) {
  std::vector<EvalReport> rs{fixture("a", 0.5, 0.5), fixture("b", 0.5, 0.5)};
  rs[1].split_fingerprint = "other";
  EXPECT_THROW(compare_runs(rs, "a"), UsageError);
  rs[1].split_fingerprint = rs[0].split_fingerprint;
  EXPECT_THROW(compare_runs(rs, "missing"), UsageError);
}

// ---- report I/O

TEST(ReportIoTest, JsonRoundTrip) {
  std::mt19937_64 engine(12);
  std::vector<int> t(77), p(77);
  for (auto& v : t) v = static_cast<int>(uniform_index(engine, 5));
  for (auto& v : p) v = static_cast<int>(uniform_index(engine, 6));
  auto r = make_report(ConfusionMatrix::from_pairs(t, p, names(6)), "mm", 4, "test", "0123abcd");
  EXPECT_EQ(report_from_json(report_to_json(r)), r);
  TempDir dir("report");
  save_report(dir / "r.json", r);
  EXPECT_EQ(load_report(dir / "r.json"), r);
}

TEST(ReportIoTest, MalformedReport) {
  EXPECT_THROW(report_from_json(nlohmann::json{{"name", "x"}}), DataError);
  TempDir dir("report_missing");
  EXPECT_THROW(load_report(dir / "none.json"), UsageError);
}

TEST(ReportIoTest, MetricsRowFormatting) {
  EvalReport r;
  r.accuracy = 0.8376;
  r.macro_precision = 0.8354;
  r.macro_recall = 0.8398;
  r.macro_f1 = 0.8376;
  EXPECT_EQ(metrics_row(r), "Acc. 83.76  Prec. 83.54  Recall 83.98  F1 83.76");
}

TEST(ReportIoTest, ConfusionCsvAndGrid) {
  const std::vector<int> t{0, 1, 1}, p{1, 1, 0};
  auto m = ConfusionMatrix::from_pairs(t, p, {"FR", "EL"});
  EXPECT_EQ(confusion_csv(m), "true\\predicted,FR,EL\nFR,0,1\nEL,1,1\n");
  const auto grid = confusion_grid(m);
  EXPECT_NE(grid.find("FR"), std::string::npos);
  EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 3);
}
