#include <algorithm>
#include <cmath>

#include "hrnet/ops.hpp"

namespace hrnet::ops {
namespace {

std::vector<const Tensor4*> as_refs(std::span<const Tensor4> inputs) {
  std::vector<const Tensor4*> refs;
  refs.reserve(inputs.size());
  for (const auto& t : inputs) refs.push_back(&t);
  return refs;
}

void check_same_shape(TensorRefs inputs, const char* op) {
  if (inputs.empty()) throw ShapeError(std::string(op) + ": empty input list");
  const Shape4& first = inputs.front()->shape();
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    if (inputs[i]->shape() != first) {
      throw ShapeError(std::string(op) + ": input " + std::to_string(i) + " " +
                       to_string(inputs[i]->shape()) + " != input 0 " +
                       to_string(first));
    }
  }
}

}  // namespace

Tensor4 relu(const Tensor4& input) {
  Tensor4 out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor4 relu_backward(const Tensor4& input, const Tensor4& grad_out) {
  if (input.shape() != grad_out.shape()) {
    throw ShapeError("relu_backward: shape mismatch");
  }
  Tensor4 out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) {
    out[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  }
  return out;
}

Tensor4 sum_n(TensorRefs inputs) {
  check_same_shape(inputs, "sum_n");
  Tensor4 out = *inputs.front();
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    const auto src = inputs[k]->data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return out;
}

Tensor4 sum_n(std::span<const Tensor4> inputs) { return sum_n(as_refs(inputs)); }

Tensor4 mul_n(TensorRefs inputs) {
  check_same_shape(inputs, "mul_n");
  Tensor4 out = *inputs.front();
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    const auto src = inputs[k]->data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= src[i];
  }
  return out;
}

Tensor4 mul_n(std::span<const Tensor4> inputs) { return mul_n(as_refs(inputs)); }

Tensor4 mul_n_backward(TensorRefs inputs, std::size_t which, const Tensor4& grad_out) {
  check_same_shape(inputs, "mul_n_backward");
  Tensor4 out = grad_out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (k == which) continue;
    const auto src = inputs[k]->data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= src[i];
  }
  return out;
}

Tensor4 concat_channels(TensorRefs inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: empty input list");
  const Shape4& first = inputs.front()->shape();
  int channels = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Shape4& s = inputs[i]->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: input " + std::to_string(i) + " " +
                       to_string(s) + " disagrees with " + to_string(first) +
                       " on N/H/W");
    }
    channels += s.c;
  }
  Tensor4 out(Shape4{first.n, channels, first.h, first.w});
  for (int n = 0; n < first.n; ++n) {
    int base = 0;
    for (const Tensor4* t : inputs) {
      for (int c = 0; c < t->shape().c; ++c) {
        const auto src = t->plane(n, c);
        std::copy(src.begin(), src.end(), out.plane(n, base + c).begin());
      }
      base += t->shape().c;
    }
  }
  return out;
}

Tensor4 concat_channels(std::span<const Tensor4> inputs) {
  return concat_channels(as_refs(inputs));
}

Tensor4 slice_channels(const Tensor4& input, int begin, int count) {
  const Shape4& s = input.shape();
  if (begin < 0 || count < 1 || begin + count > s.c) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " +
                     to_string(s));
  }
  Tensor4 out(Shape4{s.n, count, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < count; ++c) {
      const auto src = input.plane(n, begin + c);
      std::copy(src.begin(), src.end(), out.plane(n, c).begin());
    }
  }
  return out;
}

Tensor4 zero_pad(const Tensor4& input, int out_h, int out_w) {
  const Shape4& s = input.shape();
  if (out_h < s.h || out_w < s.w) {
    throw ShapeError("zero_pad: target " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " smaller than " + to_string(s));
  }
  Tensor4 out(Shape4{s.n, s.c, out_h, out_w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int h = 0; h < s.h; ++h) {
        for (int w = 0; w < s.w; ++w) out.at(n, c, h, w) = input.at(n, c, h, w);
      }
    }
  }
  return out;
}

Tensor4 crop(const Tensor4& input, int out_h, int out_w) {
  const Shape4& s = input.shape();
  if (out_h > s.h || out_w > s.w || out_h < 1 || out_w < 1) {
    throw ShapeError("crop: target " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " outside " + to_string(s));
  }
  Tensor4 out(Shape4{s.n, s.c, out_h, out_w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int h = 0; h < out_h; ++h) {
        for (int w = 0; w < out_w; ++w) out.at(n, c, h, w) = input.at(n, c, h, w);
      }
    }
  }
  return out;
}

double mse(const Tensor4& pred, const Tensor4& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse: pred " + to_string(pred.shape()) + " != target " +
                     to_string(target.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.numel());
}

Tensor4 mse_backward(const Tensor4& pred, const Tensor4& target) {
  if (pred.shape() != target.shape()) throw ShapeError("mse_backward: shape mismatch");
  Tensor4 g(pred.shape());
  const double scale = 2.0 / static_cast<double>(pred.numel());
  for (std::size_t i = 0; i < pred.numel(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

namespace {

void check_labels(const Tensor4& logits, std::span<const int> labels, int ignore) {
  const Shape4& s = logits.shape();
  if (labels.size() != static_cast<std::size_t>(s.n) * s.plane()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + to_string(s));
  }
  for (int label : labels) {
    if (label != ignore && (label < 0 || label >= s.c)) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) +
                       " outside [0, " + std::to_string(s.c) + ")");
    }
  }
}

// Calls fn(n, pixel, label, probabilities) for each non-ignored pixel.
template <typename Fn>
std::size_t for_each_pixel_softmax(const Tensor4& logits, std::span<const int> labels,
                                   int ignore, Fn&& fn) {
  const Shape4& s = logits.shape();
  std::vector<double> prob(s.c);
  std::size_t counted = 0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < s.plane(); ++p) {
      const int label = labels[static_cast<std::size_t>(n) * s.plane() + p];
      if (label == ignore) continue;
      double mx = -INFINITY;
      for (int c = 0; c < s.c; ++c) mx = std::max(mx, logits.plane(n, c)[p]);
      double z = 0.0;
      for (int c = 0; c < s.c; ++c) {
        prob[c] = std::exp(logits.plane(n, c)[p] - mx);
        z += prob[c];
      }
      for (int c = 0; c < s.c; ++c) prob[c] /= z;
      fn(n, p, label, prob, mx, z);
      ++counted;
    }
  }
  return counted;
}

}  // namespace

double softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels,
                             int ignore_label) {
  check_labels(logits, labels, ignore_label);
  double total = 0.0;
  const std::size_t counted = for_each_pixel_softmax(
      logits, labels, ignore_label,
      [&](int n, std::size_t p, int label, const std::vector<double>&, double mx,
          double z) { total += std::log(z) + mx - logits.plane(n, label)[p]; });
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

Tensor4 softmax_cross_entropy_backward(const Tensor4& logits,
                                       std::span<const int> labels,
                                       int ignore_label) {
  check_labels(logits, labels, ignore_label);
  std::size_t counted = 0;
  for (int label : labels) counted += label != ignore_label;
  Tensor4 g(logits.shape());
  if (counted == 0) return g;
  const double scale = 1.0 / static_cast<double>(counted);
  for_each_pixel_softmax(logits, labels, ignore_label,
                         [&](int n, std::size_t p, int label,
                             const std::vector<double>& prob, double, double) {
                           for (int c = 0; c < g.shape().c; ++c) {
                             g.plane(n, c)[p] = scale * (prob[c] - (c == label));
                           }
                         });
  return g;
}

}  // namespace hrnet::ops
