#pragma once

#include <array>
#include <filesystem>
#include <random>
#include <string>

#include "mmf/tensor.hpp"

namespace mmf {

/// RGB image, pixels [3 x H x W] in [0, 1].
struct ImageRecord {
  Tensor pixels;
  std::string source;
  std::size_t original_height = 0;
  std::size_t original_width = 0;

  std::size_t height() const { return pixels.dim(1); }
  std::size_t width() const { return pixels.dim(2); }
};

struct AugmentConfig {
  bool enabled = true;
  double horizontal_flip_prob = 0.5;
  double rotation_degrees = 15.0;
  double zoom_min = 0.8;
  double zoom_max = 1.2;

  void validate() const;
};

/// One realized set of augmentation parameters.
struct AugmentDraw {
  bool flip = false;
  double angle_degrees = 0.0;
  double zoom = 1.0;
};

/// Reads binary PPM (P6) or PGM (P5, replicated to RGB), maxval up to 65535.
ImageRecord read_pnm(const std::filesystem::path& path);
/// Writes an 8-bit P6 file; values are clamped to [0, 1] and rounded.
void write_ppm(const std::filesystem::path& path, const Tensor& pixels);

/// Bilinear resampling with half-pixel centers and edge clamping.
Tensor resize_bilinear(const Tensor& pixels, std::size_t out_height, std::size_t out_width);

ImageRecord load_and_resize(const std::filesystem::path& path, std::size_t target);

/// (pixels[c] - mean[c]) / std[c].
Tensor standardize(const ImageRecord& img, const std::array<double, 3>& mean, const std::array<double, 3>& std);

AugmentDraw draw_augmentation(const AugmentConfig& cfg, std::mt19937_64& engine);
/// Flip, then rotate (bilinear, zero fill) and center zoom in one warp; the
/// result is clamped to [0, 1].
ImageRecord apply_augmentation(const ImageRecord& img, const AugmentDraw& draw);
ImageRecord augment(const ImageRecord& img, const AugmentConfig& cfg, std::mt19937_64& engine);

ImageRecord flip_horizontal(const ImageRecord& img);

}  // namespace mmf
