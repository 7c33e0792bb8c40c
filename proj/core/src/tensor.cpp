#include "hrnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace hrnet {

std::string to_string(const Shape4& s) {
  std::ostringstream os;
  os << s;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Shape4& s) {
  return os << '(' << s.n << ", " << s.c << ", " << s.h << ", " << s.w << ')';
}

Tensor4::Tensor4(Shape4 shape, double fill) : shape_(shape) {
  if (!shape.valid()) {
    throw ShapeError("Tensor4: all dims must be >= 1, got " + to_string(shape));
  }
  data_.assign(shape.numel(), fill);
}

Tensor4::Tensor4(Shape4 shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (!shape.valid()) {
    throw ShapeError("Tensor4: all dims must be >= 1, got " + to_string(shape));
  }
  if (data_.size() != shape.numel()) {
    throw ShapeError("Tensor4: data length " + std::to_string(data_.size()) +
                     " does not match " + to_string(shape));
  }
}

Tensor4 Tensor4::vector(std::span<const double> values) {
  return Tensor4(Shape4{static_cast<int>(values.size()), 1, 1, 1},
                 std::vector<double>(values.begin(), values.end()));
}

void Tensor4::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor4 Tensor4::reshaped(Shape4 shape) const {
  if (shape.numel() != numel()) {
    throw ShapeError("reshape: " + to_string(shape_) + " -> " +
                     to_string(shape) + " changes the element count");
  }
  return Tensor4(shape, data_);
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace hrnet
