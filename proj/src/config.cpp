#include "mmf/config.hpp"

#include <fstream>
#include <set>

#include "mmf/errors.hpp"

namespace mmf {

using nlohmann::json;

namespace {

/// Reads an object field by field and complains about leftovers.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  Fields& get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return *this;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path(key) + ": wrong type " + std::string(j_.at(key).type_name()));
    }
    return *this;
  }

  template <typename F>
  Fields& with(const char* key, F&& read) {
    seen_.insert(key);
    if (j_.contains(key)) read(j_.at(key), path(key));
    return *this;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(path(key) + ": unknown key");
    }
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json text_to_json(const TextEncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},     {"n_heads", c.n_heads},
          {"n_layers", c.n_layers},     {"d_ff", c.d_ff},           {"max_len", c.max_len},
          {"dropout_rate", c.dropout_rate}, {"layer_norm_epsilon", c.layer_norm_epsilon}};
}

void text_from_json(const json& j, const std::string& where, TextEncoderConfig& c) {
  Fields(j, where)
      .get("vocab_size", c.vocab_size)
      .get("d_model", c.d_model)
      .get("n_heads", c.n_heads)
      .get("n_layers", c.n_layers)
      .get("d_ff", c.d_ff)
      .get("max_len", c.max_len)
      .get("dropout_rate", c.dropout_rate)
      .get("layer_norm_epsilon", c.layer_norm_epsilon)
      .finish();
}

json vision_to_json(const VisionEncoderConfig& c) {
  return {{"backbone", c.backbone},
          {"widths", c.widths},
          {"blocks_per_stage", c.blocks_per_stage},
          {"resolution", c.resolution},
          {"norm_epsilon", c.norm_epsilon}};
}

void vision_from_json(const json& j, const std::string& where, VisionEncoderConfig& c) {
  Fields(j, where)
      .get("backbone", c.backbone)
      .get("widths", c.widths)
      .get("blocks_per_stage", c.blocks_per_stage)
      .get("resolution", c.resolution)
      .get("norm_epsilon", c.norm_epsilon)
      .finish();
}

json fusion_to_json(const FusionConfig& c) {
  return {{"d_text", c.d_text},
          {"d_visual", c.d_visual},
          {"hidden", c.hidden},
          {"dropout_rate", c.dropout_rate},
          {"n_classes", c.n_classes}};
}

void fusion_from_json(const json& j, const std::string& where, FusionConfig& c) {
  Fields(j, where)
      .get("d_text", c.d_text)
      .get("d_visual", c.d_visual)
      .get("hidden", c.hidden)
      .get("dropout_rate", c.dropout_rate)
      .get("n_classes", c.n_classes)
      .finish();
}

std::string emoji_policy_name(EmojiPolicy p) { return p == EmojiPolicy::kStrip ? "strip" : "map"; }

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return {{"modality", to_string(c.modality)},
          {"text", text_to_json(c.text)},
          {"vision", vision_to_json(c.vision)},
          {"fusion", fusion_to_json(c.fusion)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  std::string modality = to_string(c.modality);
  Fields(j, "model")
      .get("modality", modality)
      .with("text", [&](const json& v, const std::string& w) { text_from_json(v, w, c.text); })
      .with("vision", [&](const json& v, const std::string& w) { vision_from_json(v, w, c.vision); })
      .with("fusion", [&](const json& v, const std::string& w) { fusion_from_json(v, w, c.fusion); })
      .finish();
  try {
    c.modality = parse_modality(modality);
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json generator_spec_to_json(const GeneratorSpec& s) {
  return {{"class_names", s.class_names},
          {"proportions", s.proportions},
          {"n_samples", s.n_samples},
          {"seed", s.seed},
          {"alpha_text", s.alpha_text},
          {"alpha_image", s.alpha_image},
          {"text_pairing", s.text_pairing},
          {"image_pairing", s.image_pairing},
          {"vocab_size", s.vocab_size},
          {"resolution", s.resolution},
          {"sentence_length", s.sentence_length},
          {"private_token_rate", s.private_token_rate},
          {"noise_sigma", s.noise_sigma}};
}

GeneratorSpec generator_spec_from_json(const json& j) {
  GeneratorSpec s = default_generator_spec();
  Fields(j, "generator")
      .get("class_names", s.class_names)
      .get("proportions", s.proportions)
      .get("n_samples", s.n_samples)
      .get("seed", s.seed)
      .get("alpha_text", s.alpha_text)
      .get("alpha_image", s.alpha_image)
      .get("text_pairing", s.text_pairing)
      .get("image_pairing", s.image_pairing)
      .get("vocab_size", s.vocab_size)
      .get("resolution", s.resolution)
      .get("sentence_length", s.sentence_length)
      .get("private_token_rate", s.private_token_rate)
      .get("noise_sigma", s.noise_sigma)
      .finish();
  return s;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.modality = modality;
  m.text = text;
  m.vision = vision;
  m.fusion = fusion;
  return m;
}

Preprocessing RunConfig::preprocessing() const {
  Preprocessing p;
  p.normalizer = normalizer;
  p.resolution = vision.resolution;
  p.mean = image_mean;
  p.std = image_std;
  p.load_images = uses_image(modality);
  return p;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions t;
  t.optimizer = optimizer;
  t.augment = augment;
  t.image_mean = image_mean;
  t.image_std = image_std;
  t.seed = seed;
  return t;
}

void RunConfig::validate() const {
  // Both encoders are checked even for unimodal runs so one config file
  // serves all three modalities.
  ModelConfig m = model_config();
  if (m.text.vocab_size == 0) m.text.vocab_size = 5;  // placeholder until the vocabulary exists
  m.modality = Modality::kMultimodal;
  m.validate();
  optimizer.validate();
  split.validate();
  augment.validate();
  generator.validate();
  for (double s : image_std) {
    if (!(s > 0.0)) throw ConfigError("image.std components must be positive");
  }
  if (vocab_target_size < 5) throw ConfigError("vocab.target_size must be at least 5");
  if (fusion.n_classes != generator.n_classes()) {
    throw ConfigError("fusion.n_classes=" + std::to_string(fusion.n_classes) + " but generator has " +
                      std::to_string(generator.n_classes()) + " classes");
  }
}

RunConfig desk_run_config() {
  RunConfig c;
  c.vocab_target_size = 1000;
  c.text.d_model = 32;
  c.text.n_heads = 2;
  c.text.n_layers = 1;
  c.text.d_ff = 64;
  c.text.max_len = 32;
  c.vision.widths = {8, 16};
  c.vision.resolution = 16;
  c.augment.rotation_degrees = 10.0;
  c.fusion.d_text = 32;
  c.fusion.d_visual = 16;
  c.fusion.hidden = {64};
  c.optimizer.lr_encoder = 2e-3;
  c.optimizer.lr_fusion = 3e-3;
  c.optimizer.max_epochs = 12;
  c.optimizer.patience = 5;
  c.generator.resolution = 16;
  return c;
}

json run_config_to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"modality", to_string(c.modality)},
          {"output_dir", c.output_dir},
          {"normalizer",
           {{"punctuation", c.normalizer.punctuation ? json(*c.normalizer.punctuation) : json(nullptr)},
            {"emoji_policy", emoji_policy_name(c.normalizer.emoji_policy)},
            {"emoji_table", c.normalizer.emoji_table},
            {"emoji_token", c.normalizer.emoji_token},
            {"corrections", c.normalizer.corrections}}},
          {"vocab", {{"target_size", c.vocab_target_size}}},
          {"text", text_to_json(c.text)},
          {"vision", vision_to_json(c.vision)},
          {"image", {{"mean", c.image_mean}, {"std", c.image_std}}},
          {"augment",
           {{"enabled", c.augment.enabled},
            {"horizontal_flip_prob", c.augment.horizontal_flip_prob},
            {"rotation_degrees", c.augment.rotation_degrees},
            {"zoom_min", c.augment.zoom_min},
            {"zoom_max", c.augment.zoom_max}}},
          {"fusion", fusion_to_json(c.fusion)},
          {"optimizer",
           {{"algorithm", "adam"},
            {"lr_encoder", c.optimizer.lr_encoder},
            {"lr_fusion", c.optimizer.lr_fusion},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"epsilon", c.optimizer.epsilon},
            {"batch_size", c.optimizer.batch_size},
            {"patience", c.optimizer.patience},
            {"max_epochs", c.optimizer.max_epochs},
            {"clip_norm", c.optimizer.clip_norm}}},
          {"split",
           {{"train", c.split.train},
            {"val", c.split.val},
            {"test", c.split.test},
            {"stratified", c.split.stratified},
            {"seed", c.split.seed}}},
          {"generator", generator_spec_to_json(c.generator)}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  std::string modality = to_string(c.modality);
  Fields(j, "")
      .get("seed", c.seed)
      .get("modality", modality)
      .get("output_dir", c.output_dir)
      .with("normalizer",
            [&](const json& v, const std::string& w) {
              auto& n = c.normalizer;
              std::string policy = emoji_policy_name(n.emoji_policy);
              Fields f(v, w);
              f.with("punctuation", [&](const json& p, const std::string& pw) {
                 if (p.is_null()) {
                   n.punctuation.reset();
                 } else if (p.is_string()) {
                   n.punctuation = p.get<std::string>();
                 } else {
                   throw ConfigError(pw + ": expected a string or null");
                 }
               })
                  .get("emoji_policy", policy)
                  .get("emoji_table", n.emoji_table)
                  .get("emoji_token", n.emoji_token)
                  .get("corrections", n.corrections)
                  .finish();
              if (policy == "strip") {
                n.emoji_policy = EmojiPolicy::kStrip;
              } else if (policy == "map") {
                n.emoji_policy = EmojiPolicy::kMapToToken;
              } else {
                throw ConfigError(f.path("emoji_policy") + ": expected \"strip\" or \"map\"");
              }
            })
      .with("vocab",
            [&](const json& v, const std::string& w) { Fields(v, w).get("target_size", c.vocab_target_size).finish(); })
      .with("text", [&](const json& v, const std::string& w) { text_from_json(v, w, c.text); })
      .with("vision", [&](const json& v, const std::string& w) { vision_from_json(v, w, c.vision); })
      .with("image",
            [&](const json& v, const std::string& w) {
              Fields(v, w).get("mean", c.image_mean).get("std", c.image_std).finish();
            })
      .with("augment",
            [&](const json& v, const std::string& w) {
              Fields(v, w)
                  .get("enabled", c.augment.enabled)
                  .get("horizontal_flip_prob", c.augment.horizontal_flip_prob)
                  .get("rotation_degrees", c.augment.rotation_degrees)
                  .get("zoom_min", c.augment.zoom_min)
                  .get("zoom_max", c.augment.zoom_max)
                  .finish();
            })
      .with("fusion", [&](const json& v, const std::string& w) { fusion_from_json(v, w, c.fusion); })
      .with("optimizer",
            [&](const json& v, const std::string& w) {
              std::string algorithm = "adam";
              auto& o = c.optimizer;
              Fields(v, w)
                  .get("algorithm", algorithm)
                  .get("lr_encoder", o.lr_encoder)
                  .get("lr_fusion", o.lr_fusion)
                  .get("beta1", o.beta1)
                  .get("beta2", o.beta2)
                  .get("epsilon", o.epsilon)
                  .get("batch_size", o.batch_size)
                  .get("patience", o.patience)
                  .get("max_epochs", o.max_epochs)
                  .get("clip_norm", o.clip_norm)
                  .finish();
              if (algorithm != "adam") throw ConfigError(w + ".algorithm: only \"adam\" is supported");
            })
      .with("split",
            [&](const json& v, const std::string& w) {
              Fields(v, w)
                  .get("train", c.split.train)
                  .get("val", c.split.val)
                  .get("test", c.split.test)
                  .get("stratified", c.split.stratified)
                  .get("seed", c.split.seed)
                  .finish();
            })
      .with("generator", [&](const json& v, const std::string&) { c.generator = generator_spec_from_json(v); })
      .finish();
  try {
    c.modality = parse_modality(modality);
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << run_config_to_json(config).dump(2) << '\n';
}

}  // namespace mmf
