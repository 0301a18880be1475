#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mmf/tensor.hpp"

namespace mmf {

/// Binary tensor record: "MMT1", u32 rank, u32 dims[rank], f32 payload,
/// all little-endian.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Writes tensors back to back to `path`. The caller writes the JSON sidecar
/// that names them (see model checkpoints).
void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
/// Reads every tensor record in the file, in order.
std::vector<Tensor> read_tensor_file(const std::filesystem::path& path);

}  // namespace mmf
