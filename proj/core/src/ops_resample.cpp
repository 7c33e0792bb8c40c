#include <algorithm>
#include <cmath>

#include "hrnet/ops.hpp"

namespace hrnet::ops {
namespace {

struct Tap {
  int lo;
  int hi;
  double frac;
};

// Source taps for one axis under the half-pixel-center convention.
std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(std::floor(src));
    if (lo >= in - 1) {
      taps[d] = {in - 1, in - 1, 0.0};
    } else {
      taps[d] = {lo, lo + 1, src - lo};
    }
  }
  return taps;
}

struct Window {
  int begin;
  int end;
};

Window pool_window(const PoolSpec& spec, int out_index, int in) {
  const int begin = out_index * spec.stride;
  return {begin, std::min(begin + spec.kernel, in)};
}

void check_pool(const Shape4& in, const PoolSpec& spec) {
  if (spec.kernel < 1 || spec.stride < 1) {
    throw ShapeError("pool: kernel and stride must be positive");
  }
  if (spec.out_size(in.h) < 1 || spec.out_size(in.w) < 1) {
    throw ShapeError("pool: input " + to_string(in) + " smaller than kernel " +
                     std::to_string(spec.kernel));
  }
}

}  // namespace

Tensor4 bilinear_resize(const Tensor4& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("bilinear_resize: output size must be positive");
  }
  const Shape4& s = input.shape();
  const auto ty = bilinear_taps(s.h, out_h);
  const auto tx = bilinear_taps(s.w, out_w);
  Tensor4 out(Shape4{s.n, s.c, out_h, out_w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const auto src = input.plane(n, c);
      auto dst = out.plane(n, c);
      for (int y = 0; y < out_h; ++y) {
        const double* r0 = src.data() + static_cast<std::size_t>(ty[y].lo) * s.w;
        const double* r1 = src.data() + static_cast<std::size_t>(ty[y].hi) * s.w;
        for (int x = 0; x < out_w; ++x) {
          // Lerp form keeps constant and same-size resizes exact.
          const Tap& t = tx[x];
          const double top = r0[t.lo] + t.frac * (r0[t.hi] - r0[t.lo]);
          const double bottom = r1[t.lo] + t.frac * (r1[t.hi] - r1[t.lo]);
          dst[static_cast<std::size_t>(y) * out_w + x] =
              top + ty[y].frac * (bottom - top);
        }
      }
    }
  }
  return out;
}

Tensor4 bilinear_resize_backward(const Tensor4& grad_out, int in_h, int in_w) {
  const Shape4& s = grad_out.shape();
  const auto ty = bilinear_taps(in_h, s.h);
  const auto tx = bilinear_taps(in_w, s.w);
  Tensor4 grad(Shape4{s.n, s.c, in_h, in_w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const auto dy = grad_out.plane(n, c);
      auto dx = grad.plane(n, c);
      for (int y = 0; y < s.h; ++y) {
        const double wy1 = ty[y].frac;
        const double wy0 = 1.0 - wy1;
        double* r0 = dx.data() + static_cast<std::size_t>(ty[y].lo) * in_w;
        double* r1 = dx.data() + static_cast<std::size_t>(ty[y].hi) * in_w;
        for (int x = 0; x < s.w; ++x) {
          const Tap& t = tx[x];
          const double g = dy[static_cast<std::size_t>(y) * s.w + x];
          r0[t.lo] += g * wy0 * (1.0 - t.frac);
          r0[t.hi] += g * wy0 * t.frac;
          r1[t.lo] += g * wy1 * (1.0 - t.frac);
          r1[t.hi] += g * wy1 * t.frac;
        }
      }
    }
  }
  return grad;
}

int PoolSpec::out_size(int in) const {
  if (in < kernel) return ceil_mode && in >= 1 ? 1 : 0;
  const int span = in - kernel;
  const int steps = ceil_mode ? (span + stride - 1) / stride : span / stride;
  return steps + 1;
}

Tensor4 avg_pool(const Tensor4& input, const PoolSpec& spec) {
  const Shape4& s = input.shape();
  check_pool(s, spec);
  const int oh = spec.out_size(s.h);
  const int ow = spec.out_size(s.w);
  Tensor4 out(Shape4{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < oh; ++y) {
        const Window wy = pool_window(spec, y, s.h);
        for (int x = 0; x < ow; ++x) {
          const Window wx = pool_window(spec, x, s.w);
          double acc = 0.0;
          for (int i = wy.begin; i < wy.end; ++i) {
            for (int j = wx.begin; j < wx.end; ++j) acc += input.at(n, c, i, j);
          }
          out.at(n, c, y, x) = acc / ((wy.end - wy.begin) * (wx.end - wx.begin));
        }
      }
    }
  }
  return out;
}

Tensor4 avg_pool_backward(const Tensor4& grad_out, const Shape4& input_shape,
                          const PoolSpec& spec) {
  Tensor4 grad(input_shape);
  const Shape4& s = grad_out.shape();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        const Window wy = pool_window(spec, y, input_shape.h);
        for (int x = 0; x < s.w; ++x) {
          const Window wx = pool_window(spec, x, input_shape.w);
          const double g = grad_out.at(n, c, y, x) /
                           ((wy.end - wy.begin) * (wx.end - wx.begin));
          for (int i = wy.begin; i < wy.end; ++i) {
            for (int j = wx.begin; j < wx.end; ++j) grad.at(n, c, i, j) += g;
          }
        }
      }
    }
  }
  return grad;
}

Tensor4 max_pool(const Tensor4& input, const PoolSpec& spec) {
  const Shape4& s = input.shape();
  check_pool(s, spec);
  const int oh = spec.out_size(s.h);
  const int ow = spec.out_size(s.w);
  Tensor4 out(Shape4{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < oh; ++y) {
        const Window wy = pool_window(spec, y, s.h);
        for (int x = 0; x < ow; ++x) {
          const Window wx = pool_window(spec, x, s.w);
          double best = -INFINITY;
          for (int i = wy.begin; i < wy.end; ++i) {
            for (int j = wx.begin; j < wx.end; ++j) best = std::max(best, input.at(n, c, i, j));
          }
          out.at(n, c, y, x) = best;
        }
      }
    }
  }
  return out;
}

Tensor4 max_pool_backward(const Tensor4& input, const Tensor4& grad_out,
                          const PoolSpec& spec) {
  const Shape4& in = input.shape();
  Tensor4 grad(in);
  const Shape4& s = grad_out.shape();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        const Window wy = pool_window(spec, y, in.h);
        for (int x = 0; x < s.w; ++x) {
          const Window wx = pool_window(spec, x, in.w);
          // First maximum in scan order receives the gradient.
          int bi = wy.begin;
          int bj = wx.begin;
          for (int i = wy.begin; i < wy.end; ++i) {
            for (int j = wx.begin; j < wx.end; ++j) {
              if (input.at(n, c, i, j) > input.at(n, c, bi, bj)) {
                bi = i;
                bj = j;
              }
            }
          }
          grad.at(n, c, bi, bj) += grad_out.at(n, c, y, x);
        }
      }
    }
  }
  return grad;
}

Tensor4 global_avg_pool(const Tensor4& input) {
  const Shape4& s = input.shape();
  Tensor4 out(Shape4{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (double v : input.plane(n, c)) acc += v;
      out.at(n, c, 0, 0) = acc / static_cast<double>(s.plane());
    }
  }
  return out;
}

Tensor4 global_avg_pool_backward(const Tensor4& grad_out, const Shape4& input_shape) {
  Tensor4 grad(input_shape);
  const double scale = 1.0 / static_cast<double>(input_shape.plane());
  for (int n = 0; n < input_shape.n; ++n) {
    for (int c = 0; c < input_shape.c; ++c) {
      const double g = grad_out.at(n, c, 0, 0) * scale;
      for (double& v : grad.plane(n, c)) v = g;
    }
  }
  return grad;
}

namespace {

void check_linear(const Tensor4& input, const Tensor4& weights) {
  const Shape4& s = input.shape();
  const std::size_t features = static_cast<std::size_t>(s.c) * s.plane();
  const Shape4& ws = weights.shape();
  if (ws.h != 1 || ws.w != 1 || static_cast<std::size_t>(ws.c) != features) {
    throw ShapeError("linear: weights " + to_string(ws) + " incompatible with " +
                     std::to_string(features) + " input features of " + to_string(s));
  }
}

}  // namespace

Tensor4 linear(const Tensor4& input, const Tensor4& weights,
               std::span<const double> bias) {
  check_linear(input, weights);
  const int batch = input.shape().n;
  const int out_features = weights.shape().n;
  const int in_features = weights.shape().c;
  if (!bias.empty() && static_cast<int>(bias.size()) != out_features) {
    throw ShapeError("linear: bias length " + std::to_string(bias.size()) +
                     " != out features " + std::to_string(out_features));
  }
  Tensor4 out(Shape4{batch, out_features, 1, 1});
  const auto x = input.data();
  const auto w = weights.data();
  for (int n = 0; n < batch; ++n) {
    const double* row = x.data() + static_cast<std::size_t>(n) * in_features;
    for (int o = 0; o < out_features; ++o) {
      const double* wr = w.data() + static_cast<std::size_t>(o) * in_features;
      double acc = bias.empty() ? 0.0 : bias[o];
      for (int i = 0; i < in_features; ++i) acc += wr[i] * row[i];
      out.at(n, o, 0, 0) = acc;
    }
  }
  return out;
}

LinearGrads linear_backward(const Tensor4& input, const Tensor4& weights,
                            const Tensor4& grad_out) {
  check_linear(input, weights);
  const int batch = input.shape().n;
  const int out_features = weights.shape().n;
  const int in_features = weights.shape().c;
  LinearGrads g{Tensor4(input.shape()), Tensor4(weights.shape()),
                std::vector<double>(out_features, 0.0)};
  const auto x = input.data();
  const auto w = weights.data();
  auto dx = g.input.data();
  auto dw = g.weights.data();
  for (int n = 0; n < batch; ++n) {
    const double* row = x.data() + static_cast<std::size_t>(n) * in_features;
    double* drow = dx.data() + static_cast<std::size_t>(n) * in_features;
    for (int o = 0; o < out_features; ++o) {
      const double dy = grad_out.at(n, o, 0, 0);
      g.bias[o] += dy;
      const double* wr = w.data() + static_cast<std::size_t>(o) * in_features;
      double* dwr = dw.data() + static_cast<std::size_t>(o) * in_features;
      for (int i = 0; i < in_features; ++i) {
        dwr[i] += dy * row[i];
        drow[i] += dy * wr[i];
      }
    }
  }
  return g;
}

}  // namespace hrnet::ops
