#include "hrnet/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace hrnet {
namespace {

constexpr std::array<char, 4> kMagic{'T', '4', 'v', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw FormatError("T4v1: truncated stream");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor4& t) {
  os.write(kMagic.data(), kMagic.size());
  const Shape4& s = t.shape();
  for (int d : {s.n, s.c, s.h, s.w}) put_u64(os, static_cast<std::uint64_t>(d));
  for (double v : t.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw FormatError("T4v1: write failed");
}

Tensor4 read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("T4v1: bad magic bytes");
  }
  std::array<int, 4> dims{};
  for (int& d : dims) {
    const std::uint64_t v = get_u64(is);
    if (v == 0 || v > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
      throw FormatError("T4v1: dimension out of range: " + std::to_string(v));
    }
    d = static_cast<int>(v);
  }
  const Shape4 shape{dims[0], dims[1], dims[2], dims[3]};
  std::vector<double> data(shape.numel());
  for (double& v : data) v = std::bit_cast<double>(get_u64(is));
  return Tensor4(shape, std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor4& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor4 load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace hrnet
