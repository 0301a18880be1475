#include "mmf/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <vector>

#include "mmf/errors.hpp"
#include "mmf/rng.hpp"

namespace mmf {

void AugmentConfig::validate() const {
  if (!(horizontal_flip_prob >= 0.0 && horizontal_flip_prob <= 1.0)) {
    throw ConfigError("augment: horizontal_flip_prob must lie in [0, 1]");
  }
  if (!(rotation_degrees >= 0.0)) throw ConfigError("augment: rotation_degrees must be non-negative");
  if (!(zoom_min > 0.0 && zoom_min <= zoom_max)) throw ConfigError("augment: zoom range must satisfy 0 < min <= max");
}

namespace {

void skip_space_and_comments(std::istream& is) {
  while (true) {
    const int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      is.get();
    } else {
      return;
    }
  }
}

std::size_t read_header_int(std::istream& is, const std::filesystem::path& path) {
  skip_space_and_comments(is);
  long long v = -1;
  if (!(is >> v) || v <= 0) throw DataError("malformed image header in " + path.string());
  return static_cast<std::size_t>(v);
}

}  // namespace

ImageRecord read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read image " + path.string());
  std::string magic(2, '\0');
  if (!is.read(magic.data(), 2) || (magic != "P6" && magic != "P5")) {
    throw DataError("unsupported image format in " + path.string() + " (expected binary PPM/PGM)");
  }
  const std::size_t width = read_header_int(is, path);
  const std::size_t height = read_header_int(is, path);
  const std::size_t maxval = read_header_int(is, path);
  if (maxval > 65535) throw DataError("image maxval too large in " + path.string());
  is.get();  // single whitespace before the raster

  const std::size_t channels = magic == "P6" ? 3 : 1;
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raster(width * height * channels * bytes_per);
  if (!is.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()))) {
    throw DataError("truncated image data in " + path.string());
  }

  Tensor pixels(Shape{3, height, width});
  const std::size_t plane = height * width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = (i * channels + (channels == 3 ? c : 0)) * bytes_per;
      const unsigned v = bytes_per == 2 ? (raster[src] << 8 | raster[src + 1]) : raster[src];
      pixels[c * plane + i] = static_cast<float>(std::min(1.0, v / static_cast<double>(maxval)));
    }
  }
  return {pixels, path.string(), height, width};
}

void write_ppm(const std::filesystem::path& path, const Tensor& pixels) {
  if (pixels.rank() != 3 || pixels.dim(0) != 3) throw DimensionError("write_ppm expects [3 x H x W]");
  const std::size_t h = pixels.dim(1), w = pixels.dim(2), plane = h * w;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write image " + path.string());
  os << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> raster(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(pixels[c * plane + i]), 0.0, 1.0);
      raster[i * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  os.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!os) throw DataError("write failed for " + path.string());
}

Tensor resize_bilinear(const Tensor& pixels, std::size_t out_height, std::size_t out_width) {
  if (pixels.rank() != 3 || out_height == 0 || out_width == 0) {
    throw DimensionError("resize_bilinear: bad input " + shape_str(pixels.shape()));
  }
  const std::size_t channels = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
  Tensor out(Shape{channels, out_height, out_width});
  const double sy = static_cast<double>(h) / static_cast<double>(out_height);
  const double sx = static_cast<double>(w) / static_cast<double>(out_width);
  for (std::size_t y = 0; y < out_height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < channels; ++c) {
        const float* p = pixels.ptr() + c * h * w;
        const double top = p[y0 * w + x0] * (1 - wx) + p[y0 * w + x1] * wx;
        const double bottom = p[y1 * w + x0] * (1 - wx) + p[y1 * w + x1] * wx;
        out[(c * out_height + y) * out_width + x] = static_cast<float>(top * (1 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

ImageRecord load_and_resize(const std::filesystem::path& path, std::size_t target) {
  if (target == 0) throw ConfigError("load_and_resize: target must be positive");
  ImageRecord raw = read_pnm(path);
  if (raw.height() == target && raw.width() == target) return raw;
  raw.pixels = resize_bilinear(raw.pixels, target, target);
  return raw;
}

Tensor standardize(const ImageRecord& img, const std::array<double, 3>& mean, const std::array<double, 3>& std) {
  for (double s : std) {
    if (!(s > 0.0)) throw ConfigError("standardize: std components must be positive");
  }
  const Tensor& px = img.pixels;
  if (px.rank() != 3 || px.dim(0) != 3) throw DimensionError("standardize expects [3 x H x W]");
  const std::size_t plane = px.dim(1) * px.dim(2);
  Tensor out(px.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      out[c * plane + i] = static_cast<float>((px[c * plane + i] - mean[c]) / std[c]);
    }
  }
  return out;
}

AugmentDraw draw_augmentation(const AugmentConfig& cfg, std::mt19937_64& engine) {
  cfg.validate();
  AugmentDraw d;
  d.flip = unit_interval(engine()) < cfg.horizontal_flip_prob;
  d.angle_degrees = uniform(engine, -cfg.rotation_degrees, cfg.rotation_degrees);
  d.zoom = uniform(engine, cfg.zoom_min, cfg.zoom_max);
  return d;
}

ImageRecord flip_horizontal(const ImageRecord& img) {
  ImageRecord out = img;
  out.pixels = img.pixels.clone();
  const std::size_t channels = img.pixels.dim(0), h = img.height(), w = img.width();
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.pixels[(c * h + y) * w + x] = img.pixels[(c * h + y) * w + (w - 1 - x)];
  return out;
}

ImageRecord apply_augmentation(const ImageRecord& img, const AugmentDraw& draw) {
  const ImageRecord src = draw.flip ? flip_horizontal(img) : img;
  if (draw.angle_degrees == 0.0 && draw.zoom == 1.0) {
    ImageRecord out = src;
    out.pixels = src.pixels.clone();
    return out;
  }
  const std::size_t channels = src.pixels.dim(0), h = src.height(), w = src.width();
  const double theta = draw.angle_degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = static_cast<double>(h) / 2.0, cx = static_cast<double>(w) / 2.0;

  ImageRecord out = src;
  out.pixels = Tensor(src.pixels.shape());
  auto sample = [&](std::size_t c, long y, long x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
    return src.pixels[(c * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)];
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      // Inverse map: output pixel center -> source coordinates.
      const double u = (static_cast<double>(x) + 0.5 - cx) / draw.zoom;
      const double v = (static_cast<double>(y) + 0.5 - cy) / draw.zoom;
      const double su = cs * u + sn * v;
      const double sv = -sn * u + cs * v;
      const double fx = su + cx - 0.5, fy = sv + cy - 0.5;
      const double x0f = std::floor(fx), y0f = std::floor(fy);
      const double wx = fx - x0f, wy = fy - y0f;
      const long x0 = static_cast<long>(x0f), y0 = static_cast<long>(y0f);
      for (std::size_t c = 0; c < channels; ++c) {
        const double top = sample(c, y0, x0) * (1 - wx) + sample(c, y0, x0 + 1) * wx;
        const double bottom = sample(c, y0 + 1, x0) * (1 - wx) + sample(c, y0 + 1, x0 + 1) * wx;
        out.pixels[(c * h + y) * w + x] = static_cast<float>(std::clamp(top * (1 - wy) + bottom * wy, 0.0, 1.0));
      }
    }
  }
  return out;
}

ImageRecord augment(const ImageRecord& img, const AugmentConfig& cfg, std::mt19937_64& engine) {
  if (!cfg.enabled) return img;
  return apply_augmentation(img, draw_augmentation(cfg, engine));
}

}  // namespace mmf
