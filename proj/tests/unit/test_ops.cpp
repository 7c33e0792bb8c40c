#include <cmath>
#include <numeric>

#include "doctest.h"
#include "hrnet/ops.hpp"
#include "support.hpp"

using namespace hrnet;

namespace {

/// Direct definition of a zero-padded cross-correlation.
Tensor4 naive_conv(const Tensor4& x, const Tensor4& w, std::span<const double> bias, int stride,
                   int pad) {
  const Shape4 xs = x.shape();
  const Shape4 ws = w.shape();
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1;
  const int ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor4 y(Shape4{xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (int c = 0; c < xs.c; ++c)
            for (int ki = 0; ki < ws.h; ++ki)
              for (int kj = 0; kj < ws.w; ++kj) {
                const int r = i * stride + ki - pad;
                const int s = j * stride + kj - pad;
                if (r < 0 || s < 0 || r >= xs.h || s >= xs.w) continue;
                acc += x.at(n, c, r, s) * w.at(o, c, ki, kj);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

}  // namespace

TEST_SUITE("ops") {
  TEST_CASE("conv2d: all-ones 3x3 gives 9 at the centre") {
    const Tensor4 x(Shape4{1, 1, 3, 3}, 1.0);
    const Tensor4 w(Shape4{1, 1, 3, 3}, 1.0);
    const Tensor4 y = ops::conv2d(x, ops::ConvSpec::make(1, 1, 3), w);
    CHECK(y.at(0, 0, 1, 1) == 9.0);
    CHECK(y.at(0, 0, 0, 0) == 4.0);
  }

  TEST_CASE("conv2d: unit 1x1 kernel is the identity") {
    const Tensor4 x = test::random_tensor(Shape4{2, 1, 5, 4}, 1);
    const Tensor4 y = ops::conv2d(x, ops::ConvSpec::make(1, 1, 1), Tensor4(Shape4{1, 1, 1, 1}, 1.0));
    CHECK(y == x);
  }

  TEST_CASE("conv2d: stride-2 3x3 matches the nested-loop oracle") {
    const Tensor4 x = test::random_tensor(Shape4{2, 4, 8, 8}, 2);
    const Tensor4 w = test::random_tensor(Shape4{6, 4, 3, 3}, 3);
    const Tensor4 y = ops::conv2d(x, ops::ConvSpec::make(4, 6, 3, 2), w);
    CHECK(y.shape() == Shape4{2, 6, 4, 4});
    CHECK(max_abs_diff(y, naive_conv(x, w, {}, 2, 1)) < 1e-12);
  }

  TEST_CASE("conv2d: odd sizes with bias match the oracle and PyTorch") {
    const Tensor4 x = test::golden("conv_input.t4");
    const Tensor4 w = test::golden("conv_weight.t4");
    const Tensor4 b = test::golden("conv_bias.t4");
    const Tensor4 y = ops::conv2d(x, ops::ConvSpec::make(4, 6, 3, 2, true), w, b.data());
    CHECK(max_abs_diff(y, naive_conv(x, w, b.data(), 2, 1)) < 1e-12);
    CHECK(max_abs_diff(y, test::golden("conv_s2_output.t4")) < 1e-12);
  }

  TEST_CASE("conv2d: bad weight or input shapes throw") {
    const Tensor4 x(Shape4{1, 3, 4, 4});
    CHECK_THROWS_AS(ops::conv2d(x, ops::ConvSpec::make(4, 2, 3), Tensor4(Shape4{2, 4, 3, 3})),
                    ShapeError);
    CHECK_THROWS_AS(ops::conv2d(x, ops::ConvSpec::make(3, 2, 3), Tensor4(Shape4{2, 3, 1, 1})),
                    ShapeError);
  }

  TEST_CASE("batch_norm: standardized input is a fixed point") {
    Tensor4 x = test::random_tensor(Shape4{64, 2, 8, 8}, 4);
    std::vector<double> mean;
    std::vector<double> var;
    ops::channel_moments(x, mean, var);
    for (int n = 0; n < 64; ++n)
      for (int c = 0; c < 2; ++c)
        for (double& v : x.plane(n, c)) v = (v - mean[c]) / std::sqrt(var[c]);
    auto state = ops::BatchNormState::identity(2);
    CHECK(max_abs_diff(ops::batch_norm(x, state), x) < 1e-3);
  }

  TEST_CASE("batch_norm: inference with unit stats is affine") {
    const Tensor4 x = test::random_tensor(Shape4{2, 3, 4, 4}, 5);
    auto state = ops::BatchNormState::identity(3);
    state.gamma.assign(3, 2.0);
    state.beta.assign(3, 5.0);
    state.mode = ops::BatchNormMode::kInference;
    const Tensor4 y = ops::batch_norm(x, state);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(y[i] - (2.0 * x[i] + 5.0)) < 1e-4);
  }

  TEST_CASE("batch_norm: constant channel collapses to beta") {
    Tensor4 x(Shape4{3, 2, 2, 2}, 4.25);
    for (int n = 0; n < 3; ++n) x.at(n, 1, 0, 0) = n;  // channel 1 varies
    auto state = ops::BatchNormState::identity(2);
    state.beta = {-1.5, 0.0};
    const Tensor4 y = ops::batch_norm(x, state);
    for (int n = 0; n < 3; ++n)
      for (double v : y.plane(n, 0)) CHECK(std::abs(v - -1.5) < 1e-6);
  }

  TEST_CASE("batch_norm: training output matches PyTorch; running stats update") {
    const Tensor4 x = test::golden("bn_input.t4");
    const Tensor4 affine = test::golden("bn_affine.t4");
    auto state = ops::BatchNormState::identity(4);
    for (int c = 0; c < 4; ++c) {
      state.gamma[c] = affine.at(0, c, 0, 0);
      state.beta[c] = affine.at(1, c, 0, 0);
    }
    CHECK(max_abs_diff(ops::batch_norm(x, state), test::golden("bn_train_output.t4")) < 1e-12);

    std::vector<double> mean;
    std::vector<double> var;
    ops::channel_moments(x, mean, var);
    const double count = 3.0 * 25.0;
    for (int c = 0; c < 4; ++c) {
      CHECK(state.running_mean[c] == doctest::Approx(0.1 * mean[c]).epsilon(1e-12));
      CHECK(state.running_var[c] ==
            doctest::Approx(0.9 + 0.1 * var[c] * count / (count - 1.0)).epsilon(1e-12));
    }
  }

  TEST_CASE("relu, sum, mul, concat") {
    const Tensor4 x = Tensor4::vector(std::vector<double>{-1.0, 2.0});
    const Tensor4 r = ops::relu(x);
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 2.0);

    const Tensor4 a = test::random_tensor(Shape4{1, 2, 3, 3}, 6);
    const Tensor4 zero(a.shape());
    const Tensor4 pair[] = {a, zero};
    CHECK(ops::sum_n(pair) == a);
    CHECK(ops::mul_n(pair) == zero);

    std::vector<Tensor4> parts;
    for (int c : {32, 64, 128, 256}) parts.emplace_back(Shape4{1, c, 2, 2});
    CHECK(ops::concat_channels(parts).shape().c == 480);

    const Tensor4 mismatch[] = {a, Tensor4(Shape4{1, 2, 3, 4})};
    CHECK_THROWS_AS(ops::sum_n(mismatch), ShapeError);
  }

  TEST_CASE("bilinear: constants and single pixels are preserved") {
    const Tensor4 c(Shape4{1, 1, 2, 2}, 3.7);
    const Tensor4 up = ops::bilinear_resize(c, 4, 4);
    for (double v : up.data()) CHECK(v == doctest::Approx(3.7).epsilon(1e-15));
    const Tensor4 one(Shape4{1, 1, 1, 1}, -2.5);
    const Tensor4 spread = ops::bilinear_resize(one, 5, 5);
    for (double v : spread.data()) CHECK(v == -2.5);
  }

  TEST_CASE("bilinear: 2x2 to 4x4 hand-evaluated half-pixel oracle") {
    const Tensor4 x(Shape4{1, 1, 2, 2}, std::vector<double>{0, 1, 2, 3});
    // Source coordinates (d + 0.5) / 2 - 0.5 clamp to {0, 0.25, 0.75, 1}; the
    // input is the plane v = x + 2y, so the output is that plane sampled there.
    const double expected[4][4] = {{0.0, 0.25, 0.75, 1.0},
                                   {0.5, 0.75, 1.25, 1.5},
                                   {1.5, 1.75, 2.25, 2.5},
                                   {2.0, 2.25, 2.75, 3.0}};
    const Tensor4 y = ops::bilinear_resize(x, 4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(std::abs(y.at(0, 0, i, j) - expected[i][j]) < 1e-12);
  }

  TEST_CASE("bilinear: fractional up and down match PyTorch align_corners=False") {
    const Tensor4 x = test::golden("resize_input.t4");
    CHECK(max_abs_diff(ops::bilinear_resize(x, 10, 14), test::golden("resize_up_10x14.t4")) < 1e-12);
    CHECK(max_abs_diff(ops::bilinear_resize(x, 3, 4), test::golden("resize_down_3x4.t4")) < 1e-12);
  }

  TEST_CASE("pooling and linear") {
    const Tensor4 five(Shape4{2, 3, 4, 4}, 5.0);
    const Tensor4 pooled = ops::global_avg_pool(five);
    CHECK(pooled.shape() == Shape4{2, 3, 1, 1});
    for (double v : pooled.data()) CHECK(v == 5.0);

    const Tensor4 x(Shape4{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    CHECK(ops::avg_pool(x, ops::PoolSpec{2, 2, false})[0] == 2.5);
    CHECK(ops::max_pool(x, ops::PoolSpec{2, 2, false})[0] == 4.0);

    // Ceil mode: 3 -> 2, the partial window averages only its valid cells.
    const Tensor4 odd(Shape4{1, 1, 1, 3}, std::vector<double>{1, 2, 6});
    const Tensor4 p = ops::avg_pool(odd, ops::PoolSpec{2, 2, true});
    CHECK(p.shape() == Shape4{1, 1, 1, 2});
    CHECK(p[0] == 1.5);
    CHECK(p[1] == 6.0);

    const Tensor4 v = test::random_tensor(Shape4{2, 3, 1, 1}, 7);
    Tensor4 eye(Shape4{3, 3, 1, 1});
    for (int i = 0; i < 3; ++i) eye.at(i, i, 0, 0) = 1.0;
    CHECK(ops::linear(v, eye, std::vector<double>(3, 0.0)) == v);
  }

  TEST_CASE("losses") {
    const Tensor4 t = test::random_tensor(Shape4{2, 2, 3, 3}, 8);
    CHECK(ops::mse(t, t) == 0.0);
    Tensor4 shifted = t;
    for (double& v : shifted.data()) v += 1.0;
    CHECK(ops::mse(shifted, t) == doctest::Approx(1.0).epsilon(1e-14));

    const Tensor4 u = test::random_tensor(Shape4{2, 2, 3, 3}, 9);
    double acc = 0.0;
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 18; ++i) {
        const double d = u[n * 18 + i] - t[n * 18 + i];
        acc += d * d;
      }
    CHECK(std::abs(ops::mse(u, t) - acc / 36.0) < 1e-12);

    const Tensor4 uniform(Shape4{1, 5, 2, 2}, 0.3);
    const std::vector<int> labels{0, 4, 2, 1};
    CHECK(ops::softmax_cross_entropy(uniform, labels) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
    const std::vector<int> ignored{0, -1, -1, -1};
    CHECK(ops::softmax_cross_entropy(uniform, ignored, -1) ==
          doctest::Approx(std::log(5.0)).epsilon(1e-14));
  }
}
