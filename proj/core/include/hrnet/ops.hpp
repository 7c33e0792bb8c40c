#pragma once

// Forward and backward kernels for the primitive layers. Everything here is a
// pure function of its arguments except batch_norm(), which updates running
// statistics in training mode.

#include <cstdint>
#include <span>
#include <vector>

#include "hrnet/tensor.hpp"

namespace hrnet::ops {

using TensorRefs = std::span<const Tensor4* const>;

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  bool has_bias = false;

  /// Padding is always floor(kernel / 2).
  static ConvSpec make(int in, int out, int kernel, int stride = 1,
                       bool bias = false) {
    return ConvSpec{in, out, kernel, stride, kernel / 2, bias};
  }

  int out_size(int in) const { return (in + 2 * padding - kernel) / stride + 1; }
  Shape4 weight_shape() const { return {out_channels, in_channels, kernel, kernel}; }
  std::int64_t param_count() const {
    return static_cast<std::int64_t>(kernel) * kernel * in_channels *
               out_channels +
           (has_bias ? out_channels : 0);
  }
  /// Output shape for `in`; throws ShapeError naming the bad dims.
  Shape4 output_shape(const Shape4& in) const;
  void validate() const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

Tensor4 conv2d(const Tensor4& input, const ConvSpec& spec, const Tensor4& weights,
               std::span<const double> bias = {});

struct ConvGrads {
  Tensor4 input;
  Tensor4 weights;
  std::vector<double> bias;
};
ConvGrads conv2d_backward(const Tensor4& input, const ConvSpec& spec,
                          const Tensor4& weights, const Tensor4& grad_out,
                          bool need_input_grad = true);

// -- batch normalization -----------------------------------------------------

enum class BatchNormMode { kTraining, kInference };

struct BatchNormState {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;
  BatchNormMode mode = BatchNormMode::kTraining;

  /// gamma = 1, beta = 0, running stats (0, 1).
  static BatchNormState identity(int channels);
  int channels() const { return static_cast<int>(gamma.size()); }
  void validate() const;
};

/// Normalizes `input`; in training mode also folds the batch statistics into
/// the running estimates (unbiased variance, PyTorch convention).
Tensor4 batch_norm(const Tensor4& input, BatchNormState& state);

/// Per-channel mean and biased variance over (N, H, W).
void channel_moments(const Tensor4& input, std::vector<double>& mean,
                     std::vector<double>& var);

/// y = gamma * (x - mean) * inv_std + beta.
Tensor4 channel_affine(const Tensor4& input, std::span<const double> mean,
                       std::span<const double> inv_std,
                       std::span<const double> gamma,
                       std::span<const double> beta);

struct BatchNormGrads {
  Tensor4 input;
  std::vector<double> gamma;
  std::vector<double> beta;
};
/// `batch_stats` selects the training-mode gradient (mean and variance depend
/// on the input) versus the frozen-statistics one.
BatchNormGrads batch_norm_backward(const Tensor4& input, const Tensor4& grad_out,
                                   std::span<const double> mean,
                                   std::span<const double> inv_std,
                                   std::span<const double> gamma,
                                   bool batch_stats);

// -- elementwise and structural ----------------------------------------------

Tensor4 relu(const Tensor4& input);
Tensor4 relu_backward(const Tensor4& input, const Tensor4& grad_out);

Tensor4 sum_n(TensorRefs inputs);
Tensor4 sum_n(std::span<const Tensor4> inputs);
Tensor4 mul_n(TensorRefs inputs);
Tensor4 mul_n(std::span<const Tensor4> inputs);
/// Gradient of mul_n with respect to input `which`.
Tensor4 mul_n_backward(TensorRefs inputs, std::size_t which, const Tensor4& grad_out);

Tensor4 concat_channels(TensorRefs inputs);
Tensor4 concat_channels(std::span<const Tensor4> inputs);
Tensor4 slice_channels(const Tensor4& input, int begin, int count);

/// Bottom/right zero padding up to (out_h, out_w).
Tensor4 zero_pad(const Tensor4& input, int out_h, int out_w);
Tensor4 crop(const Tensor4& input, int out_h, int out_w);

// -- resampling and pooling ----------------------------------------------------

/// Half-pixel-center bilinear interpolation with edge clamping:
/// src = (dst + 0.5) * in / out - 0.5.
Tensor4 bilinear_resize(const Tensor4& input, int out_h, int out_w);
Tensor4 bilinear_resize_backward(const Tensor4& grad_out, int in_h, int in_w);

struct PoolSpec {
  int kernel = 2;
  int stride = 2;
  /// Ceil-mode output size; partial windows average over their valid cells.
  bool ceil_mode = false;

  int out_size(int in) const;
};

Tensor4 avg_pool(const Tensor4& input, const PoolSpec& spec);
Tensor4 avg_pool_backward(const Tensor4& grad_out, const Shape4& input_shape,
                          const PoolSpec& spec);
Tensor4 max_pool(const Tensor4& input, const PoolSpec& spec);
Tensor4 max_pool_backward(const Tensor4& input, const Tensor4& grad_out,
                          const PoolSpec& spec);
Tensor4 global_avg_pool(const Tensor4& input);
Tensor4 global_avg_pool_backward(const Tensor4& grad_out, const Shape4& input_shape);

/// Affine map over the flattened (C*H*W) features of each batch element.
/// `weights` is (out, in, 1, 1); the result is (N, out, 1, 1).
Tensor4 linear(const Tensor4& input, const Tensor4& weights,
               std::span<const double> bias = {});
struct LinearGrads {
  Tensor4 input;
  Tensor4 weights;
  std::vector<double> bias;
};
LinearGrads linear_backward(const Tensor4& input, const Tensor4& weights,
                            const Tensor4& grad_out);

// -- losses ------------------------------------------------------------------

/// Mean of squared differences over every element.
double mse(const Tensor4& pred, const Tensor4& target);
Tensor4 mse_backward(const Tensor4& pred, const Tensor4& target);

/// Per-pixel softmax cross-entropy over channels, averaged over pixels whose
/// label differs from `ignore_label`. Labels are laid out (N, 1, H, W).
double softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels,
                             int ignore_label = -1);
Tensor4 softmax_cross_entropy_backward(const Tensor4& logits,
                                       std::span<const int> labels,
                                       int ignore_label = -1);

}  // namespace hrnet::ops
