#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmf/cli.hpp"
#include "mmf/config.hpp"
#include "mmf/evaluation.hpp"
#include "mmf/synthetic.hpp"
#include "mmf/training.hpp"
#include "test_util.hpp"

using namespace mmf;
using mmf::testing::TempDir;
using mmf::testing::read_bytes;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string s(const std::filesystem::path& p) { return p.string(); }

// Small corpus plus a desk config; enough for text-only runs in seconds.
struct Workspace {
  TempDir dir;
  std::filesystem::path data, config;

  explicit Workspace(const std::string& tag, std::size_t n = 270) : dir(tag), data(dir / "data"), config(dir / "desk.json") {
    auto g = run_cli({"generate", "--out", s(data), "--samples", std::to_string(n), "--seed", "4", "--resolution", "16"});
    EXPECT_EQ(g.code, 0) << g.err;
    auto c = run_cli({"config", "--preset", "desk", "--out", s(config)});
    EXPECT_EQ(c.code, 0) << c.err;
  }

  Result train(const std::string& out, const std::string& modality = "text", const std::string& seed = "0") {
    return run_cli({"train", "--config", s(config), "--modality", modality, "--data", s(data), "--out", out, "--seed",
                    seed});
  }
};

}  // namespace

// ---- exit codes

TEST(CliExitTest, HelpIsZero) {
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(run_cli({"train", "--help"}).code, cli::kExitOk);
}

TEST(CliExitTest, MissingRequiredFlagIsUsage) {
  auto r = run_cli({"generate", "--samples", "90"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("--out"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
}

TEST(CliExitTest, InvalidModalityIsUsage) {
  Workspace ws("cli_modality", 90);
  auto r = ws.train(s(ws.dir / "run"), "audio");
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("audio"), std::string::npos) << r.err;
}

TEST(CliExitTest, MissingCheckpointIsUsage) {
  TempDir dir("cli_nockpt");
  auto r = run_cli({"eval", "--checkpoint", s(dir / "nothing"), "--data", s(dir.path()), "--report", s(dir / "r.json")});
  EXPECT_EQ(r.code, cli::kExitUsage);
}

TEST(CliExitTest, BadConfigIsUsage) {
  TempDir dir("cli_badcfg");
  std::ofstream(dir / "c.json") << R"({"seed": 1, "learning_rate_typo": 3})";
  auto r = run_cli({"train", "--config", s(dir / "c.json"), "--data", s(dir.path()), "--out", s(dir / "o")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("learning_rate_typo"), std::string::npos) << r.err;
}

TEST(CliExitTest, MissingDataIsFailure) {
  TempDir dir("cli_nodata");
  auto r = run_cli({"train", "--data", s(dir / "absent"), "--out", s(dir / "o")});
  EXPECT_EQ(r.code, cli::kExitFailure);
}

TEST(CliExitTest, GradcheckPasses) {
  auto r = run_cli({"gradcheck", "--seed", "0", "--seeds", "2"});
  EXPECT_EQ(r.code, cli::kExitOk) << r.out;
  for (const char* component : {"tensor_ops", "text_encoder", "vision_encoder", "fused_model"}) {
    EXPECT_NE(r.out.find(component), std::string::npos) << r.out;
  }
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
}

// ---- generate

TEST(CliGenerateTest, NinetySamples) {
  TempDir dir("cli_gen90");
  auto r = run_cli({"generate", "--out", s(dir / "d"), "--samples", "90", "--resolution", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream is(dir / "d" / "manifest.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(is, line);) ++lines;
  EXPECT_EQ(lines, 90u);
  auto summary = nlohmann::json::parse(std::ifstream(dir / "d" / "summary.json"));
  EXPECT_EQ(summary["n_samples"], 90);
  EXPECT_EQ(summary["bayes_oracle"]["multimodal"], 1.0);
}

TEST(CliGenerateTest, ProportionsFlag) {
  TempDir dir("cli_props");
  auto ok = run_cli({"generate", "--out", s(dir / "d"), "--samples", "90", "--resolution", "8", "--proportions",
                     "1,1,1,1,1,1,1,1,1"});
  ASSERT_EQ(ok.code, 0) << ok.err;
  auto summary = nlohmann::json::parse(std::ifstream(dir / "d" / "summary.json"));
  EXPECT_EQ(summary["class_counts"]["FR"], 10);
  auto bad = run_cli({"generate", "--out", s(dir / "e"), "--proportions", "1,2"});
  EXPECT_EQ(bad.code, cli::kExitUsage);
}

// ---- determinism

TEST(CliDeterminismTest, GenerateIsByteIdentical) {
  TempDir a("cli_det_a"), b("cli_det_b");
  for (auto* d : {&a, &b}) {
    ASSERT_EQ(run_cli({"generate", "--out", s(d->path()), "--samples", "90", "--alpha-text", "0.4", "--alpha-image",
                       "0.4", "--seed", "3", "--resolution", "8"})
                  .code,
              0);
  }
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    EXPECT_EQ(read_bytes(entry.path()), read_bytes(b.path() / rel)) << rel;
  }
}

TEST(CliDeterminismTest, TrainAndEvalAreByteIdentical) {
  Workspace ws("cli_det_train", 180);
  const std::vector<std::string> files{"checkpoint.bin", "checkpoint.json", "config.json", "vocab.txt",
                                       "history.csv", "report.json", "report.confusion.csv", "report.confusion.txt"};
  std::vector<std::vector<std::string>> runs;
  for (int k = 0; k < 2; ++k) {
    auto t = ws.train(s(ws.dir / "run"), "multimodal", "2");
    ASSERT_EQ(t.code, 0) << t.err;
    auto e = run_cli({"eval", "--checkpoint", s(ws.dir / "run"), "--data", s(ws.data), "--report",
                      s(ws.dir / "run" / "report.json")});
    ASSERT_EQ(e.code, 0) << e.err;
    runs.emplace_back();
    for (const auto& f : files) runs.back().push_back(read_bytes(ws.dir / "run" / f));
  }
  for (std::size_t i = 0; i < files.size(); ++i) EXPECT_EQ(runs[0][i], runs[1][i]) << files[i];
}

// ---- train / eval / compare

TEST(CliPipelineTest, SeparableCorpusScoresPerfectlyOnTrain) {
  Workspace ws("cli_toy", 270);  // alpha 0: text alone identifies the class
  ASSERT_EQ(ws.train(s(ws.dir / "run")).code, 0);
  auto e = run_cli({"eval", "--checkpoint", s(ws.dir / "run"), "--data", s(ws.data), "--split", "train", "--report",
                    s(ws.dir / "train.json")});
  ASSERT_EQ(e.code, 0) << e.err;
  auto report = load_report(ws.dir / "train.json");
  EXPECT_EQ(report.accuracy, 1.0) << e.out;
  EXPECT_EQ(report.split, "train");
  EXPECT_NE(e.out.find("Acc. 100.00"), std::string::npos) << e.out;
}

TEST(CliPipelineTest, ReportReloadsLosslessly) {
  Workspace ws("cli_report", 90);
  ASSERT_EQ(ws.train(s(ws.dir / "run")).code, 0);
  ASSERT_EQ(run_cli({"eval", "--checkpoint", s(ws.dir / "run" / "checkpoint.bin"), "--data", s(ws.data), "--report",
                     s(ws.dir / "r.json")})
                .code,
            0);
  auto report = load_report(ws.dir / "r.json");
  save_report(ws.dir / "again.json", report);
  EXPECT_EQ(read_bytes(ws.dir / "r.json"), read_bytes(ws.dir / "again.json"));
  // Per-class 70/10/20 over the 90-sample quotas.
  auto spec = default_generator_spec();
  spec.n_samples = 90;
  std::uint64_t expect = 0;
  const std::vector<double> f{0.7, 0.1, 0.2};
  for (auto n : class_quotas(spec)) expect += largest_remainder(n, f)[2];
  EXPECT_EQ(report.sample_count, expect);
  EXPECT_EQ(report.name, "text");
}

TEST(CliPipelineTest, DimensionMismatchNamesBothDims) {
  Workspace ws("cli_dims", 90);
  ASSERT_EQ(ws.train(s(ws.dir / "run")).code, 0);
  auto cfg = load_run_config(ws.dir / "run" / "config.json");
  cfg.text.d_model = 48;
  cfg.fusion.d_text = 48;
  save_run_config(ws.dir / "run" / "config.json", cfg);
  auto r = run_cli({"eval", "--checkpoint", s(ws.dir / "run"), "--data", s(ws.data), "--report", s(ws.dir / "r.json")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("d_text=32"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("d_text=48"), std::string::npos) << r.err;
}

TEST(CliPipelineTest, CompareWithSelfHasZeroDeltas) {
  Workspace ws("cli_cmp", 90);
  ASSERT_EQ(ws.train(s(ws.dir / "run")).code, 0);
  ASSERT_EQ(run_cli({"eval", "--checkpoint", s(ws.dir / "run"), "--data", s(ws.data), "--report", s(ws.dir / "r.json")})
                .code,
            0);
  auto r = run_cli({"compare", "--reports", s(ws.dir / "r.json"), "--baseline", "text", "--out", s(ws.dir / "cmp")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("delta +0.00 pts"), std::string::npos) << r.out;
  std::ifstream is(ws.dir / "cmp" / "comparison.csv");
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(row.substr(row.size() - 17), "0.000000,0.000000") << row;
  EXPECT_TRUE(std::filesystem::exists(ws.dir / "cmp" / "class_error_rates.svg"));
  EXPECT_TRUE(std::filesystem::exists(ws.dir / "cmp" / "class_error_rates.csv"));
}

TEST(CliPipelineTest, CompareRendersHeadlineDeltas) {
  TempDir dir("cli_fixture");
  auto make = [&](const std::string& name, double acc) {
    EvalReport r;
    r.name = name;
    r.split = "test";
    r.split_fingerprint = "f";
    r.accuracy = acc;
    r.confusion = ConfusionMatrix({"FR"});
    r.per_class.resize(1);
    save_report(dir / (name + ".json"), r);
    return s(dir / (name + ".json"));
  };
  auto r = run_cli({"compare", "--reports", make("text", 0.7992), make("image", 0.6685), make("multimodal", 0.8376),
                    "--baseline", "text", "--out", s(dir / "a")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("multimodal: accuracy 0.8376 +- 0.0000 over 1 run(s), delta +3.84 pts"), std::string::npos)
      << r.out;
  r = run_cli({"compare", "--reports", dir.path().string() + "/text.json", s(dir / "image.json"),
               s(dir / "multimodal.json"), "--baseline", "image", "--out", s(dir / "b")});
  EXPECT_NE(r.out.find("delta +16.91 pts"), std::string::npos) << r.out;
}

TEST(CliPipelineTest, CompareMismatchedSplitsIsUsage) {
  TempDir dir("cli_mismatch");
  EvalReport a;
  a.name = "a";
  a.split = "test";
  a.confusion = ConfusionMatrix({"FR"});
  a.per_class.resize(1);
  EvalReport b = a;
  b.name = "b";
  b.split = "val";
  save_report(dir / "a.json", a);
  save_report(dir / "b.json", b);
  auto r = run_cli({"compare", "--reports", s(dir / "a.json"), s(dir / "b.json"), "--out", s(dir / "o")});
  EXPECT_EQ(r.code, cli::kExitUsage);
}

TEST(CliConfigTest, PresetsRoundTrip) {
  TempDir dir("cli_config");
  ASSERT_EQ(run_cli({"config", "--preset", "desk", "--out", s(dir / "d.json")}).code, 0);
  auto cfg = load_run_config(dir / "d.json");
  EXPECT_EQ(run_config_to_json(cfg), run_config_to_json(desk_run_config()));
  EXPECT_EQ(run_cli({"config", "--preset", "huge", "--out", s(dir / "h.json")}).code, cli::kExitUsage);
}

TEST(CliFingerprintTest, OrderSensitiveAndStable) {
  const auto a = cli::split_fingerprint({"s1", "s2"});
  EXPECT_EQ(a, cli::split_fingerprint({"s1", "s2"}));
  EXPECT_NE(a, cli::split_fingerprint({"s2", "s1"}));
  EXPECT_NE(a, cli::split_fingerprint({"s1s2"}));
}
