#include <cmath>

#include "doctest.h"
#include "hrnet/analysis.hpp"
#include "hrnet/blocks.hpp"
#include "support.hpp"

using namespace hrnet;

namespace {

void set_param(const Graph& g, ParamStore& ps, const std::string& name, double value) {
  ps.get(g, name).fill(value);
}

/// Eval-mode BN with fresh running stats divides by sqrt(1 + eps).
Tensor4 fresh_bn(const Tensor4& x) {
  auto s = ops::BatchNormState::identity(x.shape().c);
  s.mode = ops::BatchNormMode::kInference;
  return ops::batch_norm(x, s);
}

}  // namespace

TEST_SUITE("blocks") {
  TEST_CASE("basic residual unit parameter count is 2*9*C^2 + 2*2C") {
    CHECK(BasicResidualUnit{32}.param_count() == 18560);
    CHECK(residual_graph(BasicResidualUnit{32}).parameter_count() == 18560);
  }

  TEST_CASE("bottleneck of width 64 emits 256 channels with a projection") {
    const BottleneckUnit u = BottleneckUnit::make(64, 64);
    CHECK(u.out_channels == 256);
    CHECK(u.has_projection());
    // 1x1 64->64, 3x3 64->64, 1x1 64->256, projection 64->256, BN on each.
    const std::int64_t expected = 64 * 64 + 9 * 64 * 64 + 64 * 256 + 64 * 256 +
                                  2 * (64 + 64 + 256 + 256);
    CHECK(u.param_count() == expected);
    CHECK(residual_graph(u).parameter_count() == expected);
    CHECK_FALSE(BottleneckUnit::make(256, 64).has_projection());
  }

  TEST_CASE("three inputs with a new lower branch: 4 outputs, 12 paths") {
    const FusionUnit u = build_fusion({32, 64, 128}, true);
    CHECK(u.outputs == std::vector<int>{0, 1, 2, 3});
    CHECK(u.out_widths == std::vector<int>{32, 64, 128, 256});
    CHECK(u.paths.size() == 12);
    CHECK(u.terms(3).size() == 3);
    CHECK(u.path(0, 3)->strided_convs() == 3);
    CHECK(u.path(2, 0)->kind == TransformKind::kUpsample);
    CHECK(u.path(2, 0)->resize_log2 == 2);
  }

  TEST_CASE("single input without a new branch is one parameter-free identity") {
    const FusionUnit u = build_fusion({32}, false);
    CHECK(u.paths.size() == 1);
    CHECK(u.paths[0].kind == TransformKind::kIdentity);
    CHECK(u.param_count() == 0);
  }

  TEST_CASE("downsample paths use r - x strided convs") {
    const FusionUnit two = build_fusion({32, 64}, true);
    CHECK(two.path(1, 2)->strided_convs() == 1);
    CHECK(two.path(0, 2)->strided_convs() == 2);
    const FusionUnit three = build_fusion({32, 64, 128}, true);
    CHECK(three.path(1, 3)->strided_convs() == 2);
    // Intermediate convs keep the source width and carry a relu; the last
    // changes width and does not.
    const auto& convs = three.path(1, 3)->convs;
    CHECK(convs[0].out_channels == 64);
    CHECK(convs[0].relu);
    CHECK(convs[1].out_channels == 256);
    CHECK_FALSE(convs[1].relu);
  }

  TEST_CASE("fusion parameter count matches a hand sum") {
    const FusionUnit u = build_fusion({32, 64}, false);
    // 1->0: 1x1 64->32 + BN; 0->1: 3x3 s2 32->64 + BN.
    CHECK(u.param_count() == (64 * 32 + 64) + (9 * 32 * 64 + 128));
    CHECK(fusion_graph(u).parameter_count() == u.param_count());
  }

  TEST_CASE("bilinear downsample tiles channels without parameters") {
    FusionOptions o;
    o.downsample = DownsampleKind::kBilinear;
    const FusionUnit u = build_fusion({32, 64, 128}, false, o);
    const TransformPath* p = u.path(0, 2);
    CHECK(p->convs.empty());
    CHECK(p->resize_log2 == -2);
    CHECK(p->channel_tiles == 4);
    CHECK(p->param_count() == 0);
  }

  TEST_CASE("empty fusion input is rejected") {
    CHECK_THROWS_AS(build_fusion({}, false), std::invalid_argument);
  }

  TEST_CASE("single-resolution fusion forward is relu(input)") {
    const FusionUnit u = build_fusion({3}, false);
    const Graph g = fusion_graph(u);
    const ParamStore ps = ParamStore::init(g, 0);
    const Tensor4 x = test::random_tensor(Shape4{1, 3, 4, 4}, 21);
    const Tensor4 in[] = {x};
    const auto out = fusion_forward(u, g, ps, in);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == ops::relu(x));
  }

  TEST_CASE("two-resolution fusion equals hand-composed primitives") {
    const FusionUnit u = build_fusion({2, 2}, false);
    const Graph g = fusion_graph(u);
    ParamStore ps = ParamStore::init(g, 0);
    // Identity-like 1x1 upsample conv; the downsample conv sums its window.
    Tensor4& up = ps.get(g, "fusion.p1to0.conv0.weight");
    up.fill(0.0);
    up.at(0, 0, 0, 0) = 1.0;
    up.at(1, 1, 0, 0) = 1.0;
    set_param(g, ps, "fusion.p0to1.conv0.weight", 0.25);

    const Tensor4 x0 = test::random_tensor(Shape4{1, 2, 8, 8}, 22);
    const Tensor4 x1 = test::random_tensor(Shape4{1, 2, 4, 4}, 23);
    const Tensor4 in[] = {x0, x1};
    const auto out = fusion_forward(u, g, ps, in);

    const Tensor4 t10 = ops::bilinear_resize(
        fresh_bn(ops::conv2d(x1, ops::ConvSpec::make(2, 2, 1), ps.get(g, "fusion.p1to0.conv0.weight"))),
        8, 8);
    const Tensor4 terms0[] = {x0, t10};
    const Tensor4 want0 = ops::relu(ops::sum_n(terms0));
    const Tensor4 t01 = fresh_bn(
        ops::conv2d(x0, ops::ConvSpec::make(2, 2, 3, 2), ps.get(g, "fusion.p0to1.conv0.weight")));
    const Tensor4 terms1[] = {t01, x1};
    const Tensor4 want1 = ops::relu(ops::sum_n(terms1));
    CHECK(max_abs_diff(out[0], want0) < 1e-12);
    CHECK(max_abs_diff(out[1], want1) < 1e-12);
  }

  TEST_CASE("multiply fusion with a zero input zeroes every output it feeds") {
    FusionOptions o;
    o.combine = Combine::kMultiply;
    const FusionUnit u = build_fusion({2, 4}, true, o);
    const Graph g = fusion_graph(u);
    const ParamStore ps = ParamStore::init(g, 3);
    const Tensor4 in[] = {Tensor4(Shape4{2, 2, 8, 8}), test::random_tensor(Shape4{2, 4, 4, 4}, 24)};
    for (const Tensor4& y : fusion_forward(u, g, ps, in)) {
      for (double v : y.data()) CHECK(v == 0.0);
    }
  }

  TEST_CASE("fusion inputs off the 2x ladder raise LadderError") {
    const FusionUnit u = build_fusion({2, 2}, false);
    const Graph g = fusion_graph(u);
    const ParamStore ps = ParamStore::init(g, 0);
    const Tensor4 in[] = {Tensor4(Shape4{1, 2, 8, 8}), Tensor4(Shape4{1, 2, 3, 3})};
    CHECK_THROWS_AS(fusion_forward(u, g, ps, in), LadderError);
  }

  TEST_CASE("zero residual branch reduces a basic unit to relu(input)") {
    const Graph g = residual_graph(BasicResidualUnit{3});
    ParamStore ps = ParamStore::init(g, 0);
    set_param(g, ps, "unit.conv1.weight", 0.0);
    set_param(g, ps, "unit.conv2.weight", 0.0);
    const Tensor4 x = test::random_tensor(Shape4{2, 3, 5, 5}, 25);
    CHECK(residual_forward(g, ps, x) == ops::relu(x));
  }
}
