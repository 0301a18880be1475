#include "mmf/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mmf {
namespace {

constexpr std::array<char, 4> kMagic{'M', 'M', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw DataError("truncated tensor record");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kMagic.data(), 4);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  for (float v : t.data()) put_u32(os, std::bit_cast<std::uint32_t>(v));
}

Tensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4)) throw DataError("truncated tensor record");
  if (magic != kMagic) throw DataError("bad tensor magic, expected MMT1");
  const std::uint32_t rank = get_u32(is);
  if (rank > 8) throw DataError("tensor rank " + std::to_string(rank) + " exceeds limit");
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(is);
  const std::size_t n = shape_numel(shape);
  std::vector<float> values(n);
  for (auto& v : values) v = std::bit_cast<float>(get_u32(is));
  return Tensor(std::move(shape), std::move(values));
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& nt : tensors) write_tensor(os, nt.tensor);
  if (!os) throw DataError("write failed for " + path.string());
}

std::vector<Tensor> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  std::vector<Tensor> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor(is));
  return out;
}

}  // namespace mmf
