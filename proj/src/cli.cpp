#include "mmf/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "mmf/config.hpp"
#include "mmf/errors.hpp"
#include "mmf/evaluation.hpp"
#include "mmf/gradcheck_suite.hpp"

namespace mmf::cli {

namespace fs = std::filesystem;

std::string split_fingerprint(const std::vector<std::string>& ids) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const auto& id : ids) {
    for (unsigned char ch : id) h = (h ^ ch) * 0x100000001b3ULL;
    h = (h ^ 0x0a) * 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string points(double delta) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.2f", delta * 100.0);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("write failed for " + path.string());
}

std::vector<std::string> class_labels(const RunConfig& cfg) { return cfg.generator.class_names; }

std::vector<std::size_t> pick_split(const SplitIndices& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  throw UsageError("unknown split '" + name + "' (expected train, val or test)");
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string out;
  std::size_t samples = 5037;
  std::uint64_t seed = 0;
  double alpha_text = 0.0;
  double alpha_image = 0.0;
  std::string proportions = "table1";
  std::size_t resolution = 32;
  std::size_t vocab_words = 180;
};

GeneratorSpec generator_from_args(const GenerateArgs& a) {
  GeneratorSpec spec = default_generator_spec();
  spec.n_samples = a.samples;
  spec.seed = a.seed;
  spec.alpha_text = a.alpha_text;
  spec.alpha_image = a.alpha_image;
  spec.resolution = a.resolution;
  spec.vocab_size = a.vocab_words;
  if (a.proportions != "table1") {
    std::vector<double> weights;
    std::stringstream ss(a.proportions);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        weights.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("--proportions: '" + item + "' is not a number");
      }
    }
    if (weights.size() != spec.n_classes()) {
      throw ConfigError("--proportions needs " + std::to_string(spec.n_classes()) + " values, got " +
                        std::to_string(weights.size()));
    }
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw ConfigError("--proportions must be non-negative");
      total += w;
    }
    if (!(total > 0.0)) throw ConfigError("--proportions must not all be zero");
    for (auto& w : weights) w /= total;
    spec.proportions = weights;
  }
  spec.validate();
  return spec;
}

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const auto spec = generator_from_args(a);
  const auto corpus = generate(spec);
  write_corpus(corpus, a.out);
  out << "wrote " << corpus.samples.size() << " samples to " << a.out << '\n';
  for (std::size_t c = 0; c < spec.n_classes(); ++c) {
    out << "  " << spec.class_names[c] << ' ' << corpus.class_counts[c] << '\n';
  }
  out << "text ambiguous rate " << fixed(corpus.text_ambiguous_rate) << ", image ambiguous rate "
      << fixed(corpus.image_ambiguous_rate) << '\n';
  out << "bayes oracle: text " << fixed(bayes_oracle(spec, Modality::kText)) << ", image "
      << fixed(bayes_oracle(spec, Modality::kImage)) << ", multimodal "
      << fixed(bayes_oracle(spec, Modality::kMultimodal)) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string modality;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (!a.modality.empty()) cfg.modality = parse_modality(a.modality);
  if (a.seed) cfg.seed = *a.seed;  // model and training seed only; the split keeps split.seed
  cfg.output_dir = a.out;
  cfg.validate();

  auto samples = load_samples(a.data, cfg.preprocessing());
  const auto labels = labels_of(samples);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= cfg.fusion.n_classes) {
      throw DataError("label " + std::to_string(l) + " outside the configured " + std::to_string(cfg.fusion.n_classes) +
                      " classes");
    }
  }
  const auto split = stratified_split(labels, cfg.split);

  fs::create_directories(a.out);
  if (uses_text(cfg.modality)) {
    std::vector<std::string> corpus;
    for (auto i : split.train) corpus.push_back(samples[i].text);
    const auto vocab = train_vocabulary(corpus, cfg.vocab_target_size);
    if (cfg.text.vocab_size != 0 && cfg.text.vocab_size != vocab.size()) {
      throw ConfigError("text.vocab_size=" + std::to_string(cfg.text.vocab_size) + " but the trained vocabulary has " +
                        std::to_string(vocab.size()) + " tokens");
    }
    cfg.text.vocab_size = vocab.size();
    vocab.save(fs::path(a.out) / "vocab.txt");
    tokenize_samples(samples, vocab, cfg.text.max_len);
  }
  save_run_config(fs::path(a.out) / "config.json", cfg);

  MultimodalModel<float> model(cfg.model_config(), cfg.seed);
  auto options = cfg.train_options();
  options.on_epoch = [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " train_loss " << fixed(r.train_loss) << " val_loss " << fixed(r.val_loss)
        << " val_acc " << fixed(r.val_accuracy) << std::endl;
  };
  const auto result = train(model, samples, split.train, split.val, options);
  save_checkpoint(a.out, model);
  write_history_csv(fs::path(a.out) / "history.csv", result.history);
  out << "best epoch " << result.best_epoch << " (val_loss " << fixed(result.best_val_loss) << "), checkpoint in "
      << a.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string report;
  std::string name;
};

void check_dims(const ModelConfig& ckpt, const ModelConfig& cfg) {
  auto same = [](const char* what, std::size_t a, std::size_t b) {
    if (a != b) {
      throw ConfigError(std::string("checkpoint ") + what + "=" + std::to_string(a) + " but config " + what + "=" +
                        std::to_string(b));
    }
  };
  same("n_classes", ckpt.fusion.n_classes, cfg.fusion.n_classes);
  if (uses_text(ckpt.modality)) {
    same("d_text", ckpt.text.d_model, cfg.text.d_model);
    same("vocab_size", ckpt.text.vocab_size, cfg.text.vocab_size);
    same("max_len", ckpt.text.max_len, cfg.text.max_len);
  }
  if (uses_image(ckpt.modality)) {
    same("d_visual", ckpt.vision.d_visual(), cfg.vision.d_visual());
    same("resolution", ckpt.vision.resolution, cfg.vision.resolution);
  }
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!fs::exists(a.checkpoint)) throw UsageError("checkpoint not found: " + a.checkpoint);
  const auto dir = checkpoint_dir(a.checkpoint);
  const auto model = load_checkpoint(dir);
  RunConfig cfg = load_run_config(dir / "config.json");
  cfg.modality = model.config().modality;
  check_dims(model.config(), cfg.model_config());

  auto samples = load_samples(a.data, cfg.preprocessing());
  if (uses_text(cfg.modality)) tokenize_samples(samples, Vocabulary::load(dir / "vocab.txt"), cfg.text.max_len);
  const auto split = stratified_split(labels_of(samples), cfg.split);
  const auto indices = pick_split(split, a.split);

  const auto preds = predict_samples(model, samples, indices);
  std::vector<std::string> ids;
  for (auto i : indices) ids.push_back(samples[i].id);
  const auto confusion = ConfusionMatrix::from_pairs(preds.truth, preds.predicted, class_labels(cfg));
  const auto report = make_report(confusion, a.name.empty() ? to_string(cfg.modality) : a.name, cfg.seed, a.split,
                                  split_fingerprint(ids));

  const fs::path report_path(a.report);
  if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
  save_report(report_path, report);
  auto sibling = [&](const char* suffix) {
    return report_path.parent_path() / (report_path.stem().string() + suffix);
  };
  write_text(sibling(".confusion.csv"), confusion_csv(confusion));
  write_text(sibling(".confusion.txt"), confusion_grid(confusion));

  out << report.name << " on " << a.split << " (" << report.sample_count << " samples): " << metrics_row(report)
      << '\n'
      << confusion_grid(confusion);
  return kExitOk;
}

// ---------------------------------------------------------------- compare

struct CompareArgs {
  std::vector<std::string> reports;
  std::string baseline;
  std::string out;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  std::vector<EvalReport> reports;
  for (const auto& p : a.reports) reports.push_back(load_report(p));
  const std::string baseline = a.baseline.empty() ? reports.front().name : a.baseline;
  const auto cmp = compare_runs(reports, baseline);

  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "comparison.csv", comparison_csv(cmp));
  write_text(fs::path(a.out) / "class_error_rates.csv", class_error_csv(cmp));
  write_text(fs::path(a.out) / "class_error_rates.svg", class_error_svg(cmp));

  out << "baseline " << baseline << '\n';
  for (const auto& r : cmp.rows) {
    out << "  " << r.name << ": accuracy " << fixed(r.accuracy_mean) << " +- " << fixed(r.accuracy_std) << " over "
        << r.runs << " run(s), delta " << points(r.accuracy_delta) << " pts; macro F1 " << fixed(r.macro_f1_mean)
        << ", delta " << points(r.macro_f1_delta) << " pts\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- config

int cmd_config(const std::string& preset, const std::string& path, std::ostream& out) {
  RunConfig cfg;
  if (preset == "desk") {
    cfg = desk_run_config();
  } else if (preset != "default") {
    throw UsageError("unknown preset '" + preset + "' (expected default or desk)");
  }
  cfg.validate();
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  save_run_config(p, cfg);
  out << "wrote " << preset << " config to " << path << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(std::uint64_t seed, std::size_t seeds, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<ComponentCheck> worst;
  for (std::size_t k = 0; k < seeds; ++k) {
    const auto checks = run_gradcheck_suite(seed + k);
    if (worst.empty()) worst = checks;
    for (std::size_t i = 0; i < checks.size(); ++i) {
      worst[i].max_relative_error = std::max(worst[i].max_relative_error, checks[i].max_relative_error);
      if (k > 0) worst[i].elements += checks[i].elements;
    }
  }
  bool ok = true;
  for (const auto& c : worst) {
    const bool pass = c.max_relative_error < kGradcheckTolerance;
    ok &= pass;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s max relative error %.3e over %zu elements  %s\n", c.component.c_str(),
                  c.max_relative_error, c.elements, pass ? "ok" : "FAIL");
    out << buf;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "seeds " << seed << ".." << seed + seeds - 1 << ", " << fixed(secs, 2) << " s\n";
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal disaster-post classifier: data generation, training, evaluation"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic multimodal corpus");
  generate_cmd->add_option("--out", gen.out, "Output directory")->required();
  generate_cmd->add_option("--samples", gen.samples, "Number of samples")->capture_default_str();
  generate_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  generate_cmd->add_option("--alpha-text", gen.alpha_text, "Text ambiguity rate")->capture_default_str();
  generate_cmd->add_option("--alpha-image", gen.alpha_image, "Image ambiguity rate")->capture_default_str();
  generate_cmd->add_option("--proportions", gen.proportions, "'table1' or nine comma-separated weights")
      ->capture_default_str();
  generate_cmd->add_option("--resolution", gen.resolution, "Image side length")->capture_default_str();
  generate_cmd->add_option("--vocab-words", gen.vocab_words, "Distinct synthetic words")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  train_cmd->add_option("--config", tr.config, "Run config JSON (defaults when omitted)");
  train_cmd->add_option("--modality", tr.modality, "text | image | multimodal (overrides the config)");
  train_cmd->add_option("--data", tr.data, "Corpus directory with manifest.jsonl")->required();
  train_cmd->add_option("--out", tr.out, "Run output directory")->required();
  train_cmd->add_option("--seed", tr.seed, "Model and training seed (overrides the config)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory or checkpoint.bin")->required();
  eval_cmd->add_option("--data", ev.data, "Corpus directory")->required();
  eval_cmd->add_option("--split", ev.split, "train | val | test")->capture_default_str();
  eval_cmd->add_option("--report", ev.report, "Report JSON path")->required();
  eval_cmd->add_option("--name", ev.name, "Report name (defaults to the modality)");

  CompareArgs cmp;
  auto* compare_cmd = app.add_subcommand("compare", "Compare evaluation reports");
  compare_cmd->add_option("--reports", cmp.reports, "Report JSON files")->required()->expected(1, -1);
  compare_cmd->add_option("--baseline", cmp.baseline, "Baseline report name (defaults to the first)");
  compare_cmd->add_option("--out", cmp.out, "Output directory")->required();

  std::string preset = "default", config_out;
  auto* config_cmd = app.add_subcommand("config", "Write a preset run config");
  config_cmd->add_option("--preset", preset, "default | desk")->capture_default_str();
  config_cmd->add_option("--out", config_out, "Config JSON path")->required();

  std::uint64_t gc_seed = 0;
  std::size_t gc_seeds = 10;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck_cmd->add_option("--seed", gc_seed, "First seed")->capture_default_str();
  gradcheck_cmd->add_option("--seeds", gc_seeds, "Number of consecutive seeds")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*generate_cmd) return cmd_generate(gen, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*compare_cmd) return cmd_compare(cmp, out);
    if (*config_cmd) return cmd_config(preset, config_out, out);
    if (*gradcheck_cmd) return cmd_gradcheck(gc_seed, gc_seeds, out);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace mmf::cli
