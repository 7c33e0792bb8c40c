#include <cmath>

#include "hrnet/ops.hpp"

namespace hrnet::ops {
namespace {

void check_channels(const Tensor4& input, std::size_t expected, const char* what) {
  if (static_cast<std::size_t>(input.shape().c) != expected) {
    throw ShapeError(std::string("batch_norm: input has ") +
                     std::to_string(input.shape().c) + " channels but " + what +
                     " has length " + std::to_string(expected));
  }
}

}  // namespace

BatchNormState BatchNormState::identity(int channels) {
  BatchNormState s;
  s.gamma.assign(channels, 1.0);
  s.beta.assign(channels, 0.0);
  s.running_mean.assign(channels, 0.0);
  s.running_var.assign(channels, 1.0);
  return s;
}

void BatchNormState::validate() const {
  const std::size_t c = gamma.size();
  if (beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    throw ShapeError("BatchNormState: gamma/beta/running vectors differ in length");
  }
  for (double v : running_var) {
    if (v < 0.0) throw ShapeError("BatchNormState: negative running variance");
  }
  if (!(epsilon > 0.0)) throw ShapeError("BatchNormState: epsilon must be positive");
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw ShapeError("BatchNormState: momentum must lie in (0, 1)");
  }
}

void channel_moments(const Tensor4& input, std::vector<double>& mean,
                     std::vector<double>& var) {
  const Shape4& s = input.shape();
  const double count = static_cast<double>(s.n) * s.plane();
  mean.assign(s.c, 0.0);
  var.assign(s.c, 0.0);
  for (int c = 0; c < s.c; ++c) {
    double acc = 0.0;
    for (int n = 0; n < s.n; ++n) {
      for (double v : input.plane(n, c)) acc += v;
    }
    const double m = acc / count;
    double sq = 0.0;
    for (int n = 0; n < s.n; ++n) {
      for (double v : input.plane(n, c)) sq += (v - m) * (v - m);
    }
    mean[c] = m;
    var[c] = sq / count;
  }
}

Tensor4 channel_affine(const Tensor4& input, std::span<const double> mean,
                       std::span<const double> inv_std,
                       std::span<const double> gamma,
                       std::span<const double> beta) {
  const Shape4& s = input.shape();
  Tensor4 out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double scale = gamma[c] * inv_std[c];
      const auto src = input.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = (src[i] - mean[c]) * scale + beta[c];
      }
    }
  }
  return out;
}

Tensor4 batch_norm(const Tensor4& input, BatchNormState& state) {
  state.validate();
  check_channels(input, state.gamma.size(), "gamma");
  const int channels = input.shape().c;
  std::vector<double> mean;
  std::vector<double> var;
  if (state.mode == BatchNormMode::kTraining) {
    channel_moments(input, mean, var);
    const double count = static_cast<double>(input.shape().n) * input.shape().plane();
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    for (int c = 0; c < channels; ++c) {
      state.running_mean[c] =
          (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] +
                             state.momentum * var[c] * unbias;
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  std::vector<double> inv_std(channels);
  for (int c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.epsilon);
  return channel_affine(input, mean, inv_std, state.gamma, state.beta);
}

BatchNormGrads batch_norm_backward(const Tensor4& input, const Tensor4& grad_out,
                                   std::span<const double> mean,
                                   std::span<const double> inv_std,
                                   std::span<const double> gamma,
                                   bool batch_stats) {
  const Shape4& s = input.shape();
  if (grad_out.shape() != s) {
    throw ShapeError("batch_norm_backward: grad " + to_string(grad_out.shape()) +
                     " != input " + to_string(s));
  }
  check_channels(input, gamma.size(), "gamma");
  BatchNormGrads g{Tensor4(s), std::vector<double>(s.c, 0.0),
                   std::vector<double>(s.c, 0.0)};
  const double count = static_cast<double>(s.n) * s.plane();
  for (int c = 0; c < s.c; ++c) {
    double dbeta = 0.0;
    double dgamma = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const auto x = input.plane(n, c);
      const auto dy = grad_out.plane(n, c);
      for (std::size_t i = 0; i < x.size(); ++i) {
        dbeta += dy[i];
        dgamma += dy[i] * (x[i] - mean[c]) * inv_std[c];
      }
    }
    g.beta[c] = dbeta;
    g.gamma[c] = dgamma;
    const double scale = gamma[c] * inv_std[c];
    for (int n = 0; n < s.n; ++n) {
      const auto x = input.plane(n, c);
      const auto dy = grad_out.plane(n, c);
      auto dx = g.input.plane(n, c);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (batch_stats) {
          const double x_hat = (x[i] - mean[c]) * inv_std[c];
          dx[i] = scale * (dy[i] - dbeta / count - x_hat * dgamma / count);
        } else {
          dx[i] = scale * dy[i];
        }
      }
    }
  }
  return g;
}

}  // namespace hrnet::ops
