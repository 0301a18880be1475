#include "mmf/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "mmf/errors.hpp"

namespace mmf {

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& data_dir) {
  const auto path = data_dir / "manifest.jsonl";
  std::ifstream is(path);
  if (!is) throw DataError("cannot read manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.image_path = j.at("image_path").get<std::string>();
      r.label = j.at("label").get<int>();
      if (j.contains("split")) r.split = j.at("split").get<std::string>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) throw DataError("empty manifest " + path.string());
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::json j = {{"id", r.id}, {"text", r.text}, {"image_path", r.image_path}, {"label", r.label}};
    if (r.split) j["split"] = *r.split;
    os << j.dump() << '\n';
  }
  if (!os) throw DataError("write failed for " + path.string());
}

Sample make_sample(std::string id, std::string_view raw_text, ImageRecord image, int label, const Preprocessing& prep) {
  Sample s;
  s.id = std::move(id);
  s.text = normalize_text(raw_text, prep.normalizer);
  s.label = label;
  if (prep.load_images) {
    if (image.height() != prep.resolution || image.width() != prep.resolution) {
      image.pixels = resize_bilinear(image.pixels, prep.resolution, prep.resolution);
    }
    s.standardized = standardize(image, prep.mean, prep.std);
    s.image = std::move(image);
  }
  return s;
}

std::vector<Sample> load_samples(const std::filesystem::path& data_dir, const Preprocessing& prep) {
  const auto records = read_manifest(data_dir);
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    ImageRecord img;
    if (prep.load_images) img = load_and_resize(data_dir / r.image_path, prep.resolution);
    out.push_back(make_sample(r.id, r.text, std::move(img), r.label, prep));
  }
  return out;
}

void tokenize_samples(std::vector<Sample>& samples, const Vocabulary& vocab, std::size_t max_len) {
  for (auto& s : samples) s.tokens = tokenize(s.text, vocab, max_len);
}

std::vector<int> labels_of(const std::vector<Sample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

}  // namespace mmf
