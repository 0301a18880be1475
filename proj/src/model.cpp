#include "mmf/model.hpp"

#include <fstream>

#include <json.hpp>

#include "mmf/config.hpp"
#include "mmf/serialize.hpp"

namespace mmf {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kText:
      return "text";
    case Modality::kImage:
      return "image";
    case Modality::kMultimodal:
      return "multimodal";
  }
  return "multimodal";
}

Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::kText;
  if (s == "image") return Modality::kImage;
  if (s == "multimodal") return Modality::kMultimodal;
  throw UsageError("unknown modality '" + std::string(s) + "' (expected text, image or multimodal)");
}

std::size_t ModelConfig::head_input_dim() const {
  switch (modality) {
    case Modality::kText:
      return fusion.d_text;
    case Modality::kImage:
      return fusion.d_visual;
    case Modality::kMultimodal:
      return fusion.d_text + fusion.d_visual;
  }
  return 0;
}

void ModelConfig::validate() const {
  fusion.validate();
  if (uses_text(modality)) {
    text.validate();
    if (fusion.d_text != text.d_model) {
      throw ConfigError("fusion d_text=" + std::to_string(fusion.d_text) + " but text encoder d_model=" +
                        std::to_string(text.d_model));
    }
  }
  if (uses_image(modality)) {
    vision.validate();
    if (fusion.d_visual != vision.d_visual()) {
      throw ConfigError("fusion d_visual=" + std::to_string(fusion.d_visual) + " but vision encoder d_visual=" +
                        std::to_string(vision.d_visual()));
    }
  }
}

namespace {
ModelConfig checked(ModelConfig c) {
  c.validate();
  return c;
}
}  // namespace

template <typename T>
MultimodalModel<T>::MultimodalModel(ModelConfig config, std::uint64_t seed)
    : config_(checked(std::move(config))),
      head_(config_.fusion, config_.head_input_dim(), hash_key({seed, 3})) {
  if (uses_text(config_.modality)) text_.emplace(config_.text, hash_key({seed, 1}));
  if (uses_image(config_.modality)) vision_.emplace(config_.vision, hash_key({seed, 2}));
}

template <typename T>
MultimodalModel<T>::MultimodalModel(ModelConfig config, std::optional<TextEncoder<T>> text,
                                    std::optional<VisionEncoder<T>> vision, FusionHead<T> head)
    : config_(checked(std::move(config))), text_(std::move(text)), vision_(std::move(vision)), head_(std::move(head)) {
  if (text_.has_value() != uses_text(config_.modality) || vision_.has_value() != uses_image(config_.modality)) {
    throw ConfigError("encoders do not match modality " + to_string(config_.modality));
  }
  if (head_.input_dim() != config_.head_input_dim()) {
    throw DimensionError("head input dim " + std::to_string(head_.input_dim()) + " but modality " +
                         to_string(config_.modality) + " needs " + std::to_string(config_.head_input_dim()));
  }
}

template <typename T>
BasicTensor<T> MultimodalModel<T>::features(const TokenSequence* tokens, const BasicTensor<T>* image, bool training,
                                            const DropoutContext& ctx) const {
  std::optional<BasicTensor<T>> ft, fv;
  if (text_) {
    if (tokens == nullptr) throw UsageError("modality " + to_string(config_.modality) + " needs tokens");
    ft = text_->encode(*tokens, training, ctx);
  }
  if (vision_) {
    if (image == nullptr) throw UsageError("modality " + to_string(config_.modality) + " needs an image");
    fv = vision_->encode(*image, training);
  }
  if (ft && fv) return fuse(*ft, *fv, config_.fusion);
  return ft ? *ft : *fv;
}

template <typename T>
Prediction<T> MultimodalModel<T>::predict(const TokenSequence* tokens, const BasicTensor<T>* image) const {
  NoGradScope no_grad;
  return head_.classify(features(tokens, image, false, {}), false, {});
}

template <typename T>
std::vector<Parameter<T>*> MultimodalModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  auto take = [&](ParameterSet<T>& set) {
    for (auto& p : set.items()) out.push_back(&p);
  };
  if (text_) take(text_->parameters());
  if (vision_) take(vision_->parameters());
  take(head_.parameters());
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> MultimodalModel<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (auto* p : const_cast<MultimodalModel*>(this)->parameters()) out.push_back(p);
  return out;
}

template <typename T>
void MultimodalModel<T>::load_values(const MultimodalModel& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size()) throw DimensionError("parameter count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->name != src[i]->name || dst[i]->tensor.shape() != src[i]->tensor.shape()) {
      throw DimensionError("parameter " + dst[i]->name + " does not match " + src[i]->name);
    }
    std::copy(src[i]->tensor.data().begin(), src[i]->tensor.data().end(), dst[i]->tensor.data().begin());
  }
}

template class MultimodalModel<float>;
template class MultimodalModel<double>;

std::filesystem::path checkpoint_dir(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return path;
  const auto name = path.filename().string();
  if (name == "checkpoint.bin" || name == "checkpoint.json") return path.parent_path();
  throw UsageError("not a checkpoint: " + path.string());
}

void save_checkpoint(const std::filesystem::path& dir, const MultimodalModel<float>& model) {
  std::filesystem::create_directories(dir);
  std::vector<NamedTensor> tensors;
  nlohmann::json listing = nlohmann::json::array();
  for (const auto* p : model.parameters()) {
    tensors.push_back({p->name, p->tensor});
    listing.push_back({{"name", p->name}, {"shape", p->tensor.shape()}});
  }
  write_tensor_file(dir / "checkpoint.bin", tensors);

  nlohmann::json sidecar;
  sidecar["format"] = "MMT1";
  sidecar["model"] = model_config_to_json(model.config());
  sidecar["tensors"] = listing;
  std::ofstream os(dir / "checkpoint.json", std::ios::trunc);
  if (!os) throw DataError("cannot write " + (dir / "checkpoint.json").string());
  os << sidecar.dump(2) << '\n';
}

MultimodalModel<float> load_checkpoint(const std::filesystem::path& path) {
  const auto dir = checkpoint_dir(path);
  const auto json_path = dir / "checkpoint.json";
  const auto bin_path = dir / "checkpoint.bin";
  if (!std::filesystem::exists(json_path) || !std::filesystem::exists(bin_path)) {
    throw UsageError("missing checkpoint in " + dir.string());
  }
  std::ifstream is(json_path);
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed " + json_path.string() + ": " + e.what());
  }
  const ModelConfig config = model_config_from_json(sidecar.at("model"));
  const auto& listing = sidecar.at("tensors");
  const auto tensors = read_tensor_file(bin_path);
  if (listing.size() != tensors.size()) {
    throw DataError("checkpoint lists " + std::to_string(listing.size()) + " tensors but file holds " +
                    std::to_string(tensors.size()));
  }

  ParameterSet<float> text_params, vision_params, head_params;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto name = listing[i].at("name").get<std::string>();
    const auto shape = listing[i].at("shape").get<Shape>();
    if (shape != tensors[i].shape()) {
      throw DataError("tensor " + name + " listed as " + shape_str(shape) + " but stored as " +
                      shape_str(tensors[i].shape()));
    }
    if (name.starts_with("text.")) {
      text_params.add(name, tensors[i], ParamGroup::kEncoder);
    } else if (name.starts_with("vision.")) {
      vision_params.add(name, tensors[i], ParamGroup::kEncoder);
    } else if (name.starts_with("fusion.")) {
      head_params.add(name, tensors[i], ParamGroup::kFusion);
    } else {
      throw DataError("unexpected tensor " + name + " in checkpoint");
    }
  }

  config.validate();
  std::optional<TextEncoder<float>> text;
  std::optional<VisionEncoder<float>> vision;
  if (uses_text(config.modality)) text.emplace(config.text, std::move(text_params));
  if (uses_image(config.modality)) vision.emplace(config.vision, std::move(vision_params));
  MultimodalModel<float> model(config, std::move(text), std::move(vision),
                               FusionHead<float>(config.fusion, config.head_input_dim(), std::move(head_params)));
  if (model.parameters().size() != tensors.size()) {
    throw DataError("checkpoint holds " + std::to_string(tensors.size()) + " tensors but the model uses " +
                    std::to_string(model.parameters().size()));
  }
  return model;
}

}  // namespace mmf
