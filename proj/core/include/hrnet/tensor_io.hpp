#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "hrnet/tensor.hpp"

namespace hrnet {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// T4v1 container: the four ASCII bytes "T4v1", then N, C, H, W as 64-bit
// little-endian unsigned integers, then N*C*H*W IEEE-754 doubles, little-endian,
// in row-major (N, C, H, W) order. No padding, no trailer.

void write_tensor(std::ostream& os, const Tensor4& t);
Tensor4 read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor4& t);
Tensor4 load_tensor(const std::filesystem::path& path);

}  // namespace hrnet
