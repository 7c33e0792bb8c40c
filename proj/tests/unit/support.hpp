#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "hrnet/tensor.hpp"
#include "hrnet/tensor_io.hpp"

namespace hrnet::test {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(HRNET_TEST_DATA_DIR) / name;
}

inline Tensor4 golden(const std::string& name) { return load_tensor(data_path(name)); }

inline Tensor4 random_tensor(Shape4 shape, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor4 t(shape);
  for (double& v : t.data()) v = dist(gen);
  return t;
}

}  // namespace hrnet::test
