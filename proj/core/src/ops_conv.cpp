#include <algorithm>
#include <Eigen/Core>

#include "hrnet/ops.hpp"

namespace hrnet::ops {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

bool is_pointwise(const ConvSpec& spec) {
  return spec.kernel == 1 && spec.stride == 1 && spec.padding == 0;
}

// Unfolds batch element n into columns [n*Ho*Wo, (n+1)*Ho*Wo) of a
// (Cin*k*k) x (N*Ho*Wo) matrix.
void im2col(const Tensor4& input, int n, const ConvSpec& spec, int out_h,
            int out_w, RowMatrix& col) {
  const Shape4& s = input.shape();
  const int k = spec.kernel;
  const std::size_t offset = static_cast<std::size_t>(n) * out_h * out_w;
  Eigen::Index row = 0;
  for (int c = 0; c < s.c; ++c) {
    const auto plane = input.plane(n, c);
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw, ++row) {
        double* dst = col.row(row).data() + offset;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * spec.stride + kh - spec.padding;
          double* line = dst + static_cast<std::size_t>(oh) * out_w;
          if (ih < 0 || ih >= s.h) {
            std::fill(line, line + out_w, 0.0);
            continue;
          }
          const double* src = plane.data() + static_cast<std::size_t>(ih) * s.w;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * spec.stride + kw - spec.padding;
            line[ow] = (iw >= 0 && iw < s.w) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-adds the columns of batch element n back onto `grad`.
void col2im(const RowMatrix& col, int n, const ConvSpec& spec, int out_h,
            int out_w, Tensor4& grad) {
  const Shape4& s = grad.shape();
  const int k = spec.kernel;
  const std::size_t offset = static_cast<std::size_t>(n) * out_h * out_w;
  Eigen::Index row = 0;
  for (int c = 0; c < s.c; ++c) {
    auto plane = grad.plane(n, c);
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw, ++row) {
        const double* src = col.row(row).data() + offset;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * spec.stride + kh - spec.padding;
          if (ih < 0 || ih >= s.h) continue;
          double* dst = plane.data() + static_cast<std::size_t>(ih) * s.w;
          const double* line = src + static_cast<std::size_t>(oh) * out_w;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * spec.stride + kw - spec.padding;
            if (iw >= 0 && iw < s.w) dst[iw] += line[ow];
          }
        }
      }
    }
  }
}

// (C, N*H*W) channel-major view of an NCHW tensor, and back.
RowMatrix gather_channels(const Tensor4& t) {
  const Shape4& s = t.shape();
  const std::size_t hw = s.plane();
  RowMatrix m(s.c, static_cast<Eigen::Index>(s.n * hw));
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const auto plane = t.plane(n, c);
      std::copy(plane.begin(), plane.end(), m.row(c).data() + n * hw);
    }
  }
  return m;
}

void scatter_channels(const RowMatrix& m, Tensor4& t) {
  const Shape4& s = t.shape();
  const std::size_t hw = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = m.row(c).data() + n * hw;
      std::copy(src, src + hw, t.plane(n, c).begin());
    }
  }
}

RowMatrix unfold(const Tensor4& input, const ConvSpec& spec, const Shape4& out) {
  if (is_pointwise(spec)) return gather_channels(input);
  RowMatrix col(static_cast<Eigen::Index>(spec.in_channels) * spec.kernel * spec.kernel,
                static_cast<Eigen::Index>(out.n * out.plane()));
  for (int n = 0; n < out.n; ++n) im2col(input, n, spec, out.h, out.w, col);
  return col;
}

void check_conv_args(const Tensor4& input, const ConvSpec& spec,
                     const Tensor4& weights) {
  spec.validate();
  if (input.shape().c != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(input.shape().c) +
                     " channels but spec expects in_channels=" +
                     std::to_string(spec.in_channels));
  }
  if (weights.shape() != spec.weight_shape()) {
    throw ShapeError("conv2d: weights " + to_string(weights.shape()) +
                     " do not match expected " + to_string(spec.weight_shape()));
  }
}

}  // namespace

Shape4 ConvSpec::output_shape(const Shape4& in) const {
  if (in.c != in_channels) {
    throw ShapeError("conv: input channels " + std::to_string(in.c) +
                     " != in_channels " + std::to_string(in_channels));
  }
  const int oh = out_size(in.h);
  const int ow = out_size(in.w);
  if (oh < 1 || ow < 1) {
    throw ShapeError("conv: input " + to_string(in) + " too small for kernel " +
                     std::to_string(kernel));
  }
  return {in.n, out_channels, oh, ow};
}

void ConvSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) {
    throw ShapeError("ConvSpec: channel counts must be positive (in=" +
                     std::to_string(in_channels) +
                     ", out=" + std::to_string(out_channels) + ")");
  }
  if (kernel != 1 && kernel != 3) {
    throw ShapeError("ConvSpec: kernel must be 1 or 3, got " + std::to_string(kernel));
  }
  if (stride != 1 && stride != 2) {
    throw ShapeError("ConvSpec: stride must be 1 or 2, got " + std::to_string(stride));
  }
  if (padding != kernel / 2) {
    throw ShapeError("ConvSpec: padding must be kernel/2");
  }
}

Tensor4 conv2d(const Tensor4& input, const ConvSpec& spec, const Tensor4& weights,
               std::span<const double> bias) {
  check_conv_args(input, spec, weights);
  if (!bias.empty() && static_cast<int>(bias.size()) != spec.out_channels) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) +
                     " != out_channels " + std::to_string(spec.out_channels));
  }
  const Shape4 out_shape = spec.output_shape(input.shape());
  const Eigen::Index k_rows =
      static_cast<Eigen::Index>(spec.in_channels) * spec.kernel * spec.kernel;
  ConstMatrixMap w(weights.data().data(), spec.out_channels, k_rows);
  const RowMatrix col = unfold(input, spec, out_shape);
  RowMatrix y = w * col;
  if (!bias.empty()) {
    for (int c = 0; c < spec.out_channels; ++c) y.row(c).array() += bias[c];
  }
  Tensor4 out(out_shape);
  scatter_channels(y, out);
  return out;
}

ConvGrads conv2d_backward(const Tensor4& input, const ConvSpec& spec,
                          const Tensor4& weights, const Tensor4& grad_out,
                          bool need_input_grad) {
  check_conv_args(input, spec, weights);
  const Shape4 out_shape = spec.output_shape(input.shape());
  if (grad_out.shape() != out_shape) {
    throw ShapeError("conv2d_backward: grad " + to_string(grad_out.shape()) +
                     " != output " + to_string(out_shape));
  }
  ConvGrads g{need_input_grad ? Tensor4(input.shape()) : Tensor4(),
              Tensor4(weights.shape()),
              std::vector<double>(spec.has_bias ? spec.out_channels : 0, 0.0)};
  const Eigen::Index k_rows =
      static_cast<Eigen::Index>(spec.in_channels) * spec.kernel * spec.kernel;
  ConstMatrixMap w(weights.data().data(), spec.out_channels, k_rows);
  MatrixMap dw(g.weights.data().data(), spec.out_channels, k_rows);
  const RowMatrix dy = gather_channels(grad_out);
  const RowMatrix col = unfold(input, spec, out_shape);
  dw.noalias() = dy * col.transpose();
  if (spec.has_bias) {
    for (int c = 0; c < spec.out_channels; ++c) g.bias[c] = dy.row(c).sum();
  }
  if (need_input_grad) {
    const RowMatrix dcol = w.transpose() * dy;
    if (is_pointwise(spec)) {
      scatter_channels(dcol, g.input);
    } else {
      for (int n = 0; n < out_shape.n; ++n) {
        col2im(dcol, n, spec, out_shape.h, out_shape.w, g.input);
      }
    }
  }
  return g;
}

}  // namespace hrnet::ops
