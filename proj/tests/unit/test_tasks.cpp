#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hrnet/builder.hpp"
#include "hrnet/heatmaps.hpp"
#include "hrnet/segmentation.hpp"
#include "hrnet/trainer.hpp"
#include "support.hpp"

using namespace hrnet;

namespace {

KeypointSet single(double x, double y, int v = 2, double scale = 32.0, double k = 0.1) {
  KeypointSet s;
  s.points.push_back(Keypoint{x, y, v});
  s.scale = scale;
  s.falloff = {k};
  return s;
}

}  // namespace

TEST_SUITE("tasks") {
  TEST_CASE("Gaussian target: 1 at a grid-aligned centre, exp(-1/8) one cell away") {
    // Input (12, 20) maps to heatmap cell (3, 5).
    const Tensor4 t = make_gaussian_targets(single(12.0, 20.0), 32, 32);
    CHECK(t.shape() == Shape4{1, 1, 8, 8});
    CHECK(t.at(0, 0, 5, 3) == 1.0);
    CHECK(t.at(0, 0, 5, 4) == doctest::Approx(std::exp(-1.0 / 8.0)).epsilon(1e-14));
    CHECK(t.at(0, 0, 4, 3) == doctest::Approx(std::exp(-1.0 / 8.0)).epsilon(1e-14));
    CHECK(t.at(0, 0, 6, 4) == doctest::Approx(std::exp(-2.0 / 8.0)).epsilon(1e-14));
  }

  TEST_CASE("Gaussian target: invisible keypoints give zero channels; order permutes channels") {
    KeypointSet two;
    two.points = {Keypoint{4.0, 8.0, 2}, Keypoint{20.0, 12.0, 0}};
    const Tensor4 t = make_gaussian_targets(two, 32, 32);
    for (double v : t.plane(0, 1)) CHECK(v == 0.0);

    KeypointSet a;
    a.points = {Keypoint{4.0, 8.0, 2}, Keypoint{20.0, 12.0, 1}};
    KeypointSet b;
    b.points = {a.points[1], a.points[0]};
    const Tensor4 ta = make_gaussian_targets(a, 32, 32);
    const Tensor4 tb = make_gaussian_targets(b, 32, 32);
    CHECK(std::equal(ta.plane(0, 0).begin(), ta.plane(0, 0).end(), tb.plane(0, 1).begin()));
    CHECK(std::equal(ta.plane(0, 1).begin(), ta.plane(0, 1).end(), tb.plane(0, 0).begin()));
    CHECK_THROWS_AS(make_gaussian_targets(a, 30, 32), ShapeError);
  }

  TEST_CASE("decode: quarter offset toward the larger neighbour") {
    Tensor4 h(Shape4{1, 1, 4, 5}, 0.0);
    h.at(0, 0, 1, 2) = 1.0;  // peak at heatmap (x=2, y=1)
    h.at(0, 0, 1, 3) = 0.5;  // right neighbour
    h.at(0, 0, 0, 2) = 0.2;
    h.at(0, 0, 1, 1) = 0.1;
    const KeypointSet k = decode_keypoints(h);
    REQUIRE(k.size() == 1);
    CHECK(k.points[0].x == 9.0);  // (2 + 0.25) * 4
    CHECK(k.points[0].y == 4.0);
    CHECK(k.points[0].v == 2);
  }

  TEST_CASE("decode: ties take the first neighbour in scan order; a lone pixel does not move") {
    Tensor4 h(Shape4{1, 2, 5, 5}, 0.0);
    h.at(0, 0, 2, 2) = 1.0;
    for (auto [y, x] : {std::pair{1, 2}, {2, 1}, {2, 3}, {3, 2}}) h.at(0, 0, y, x) = 0.5;
    h.at(0, 1, 2, 2) = 1.0;
    const KeypointSet k = decode_keypoints(h);
    CHECK(k.points[0].x == 8.0);
    CHECK(k.points[0].y == 7.0);  // (2 - 0.25) * 4: "up" is scanned first
    CHECK(k.points[1].x == 8.0);
    CHECK(k.points[1].y == 8.0);
  }

  TEST_CASE("decode(targets) round trip within 2 input pixels over 200 random interior keypoints") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> pos(32.0, 96.0);  // >= 8 heatmap px from the border
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      KeypointSet kp;
      kp.points = {Keypoint{pos(gen), pos(gen), 2}, Keypoint{pos(gen), pos(gen), 2}};
      const KeypointSet back = decode_keypoints(make_gaussian_targets(kp, 128, 128));
      for (int i = 0; i < 2; ++i) {
        worst = std::max({worst, std::abs(back.points[i].x - kp.points[i].x),
                          std::abs(back.points[i].y - kp.points[i].y)});
      }
    }
    CHECK(worst <= 2.0);
  }

  TEST_CASE("OKS: identical sets score exactly 1") {
    KeypointSet truth;
    truth.scale = 50.0;
    for (int i = 0; i < 17; ++i) truth.points.push_back(Keypoint{i * 3.0, i * 2.0, 2});
    CHECK(oks(truth, truth) == 1.0);
  }

  TEST_CASE("OKS: distance s*k*sqrt(2) gives exp(-1)") {
    const double s = 32.0;
    const double k = 0.1;
    const double d = s * k * std::sqrt(2.0);
    CHECK(oks(single(10.0 + d, 5.0), single(10.0, 5.0, 2, s, k)) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  }

  TEST_CASE("OKS: invisible truth is ignored; no visible truth is an error") {
    KeypointSet truth;
    truth.scale = 32.0;
    truth.falloff = {0.1, 0.1};
    truth.points = {Keypoint{5.0, 5.0, 2}, Keypoint{9.0, 9.0, 0}};
    KeypointSet pred = truth;
    pred.points[1] = Keypoint{900.0, -400.0, 2};
    CHECK(oks(pred, truth) == 1.0);

    truth.points[0].v = 0;
    CHECK_THROWS_AS(oks(pred, truth), std::domain_error);
  }

  TEST_CASE("OKS: translation invariant and decreasing in distance") {
    const KeypointSet t = single(10.0, 10.0);
    const double near = oks(single(11.0, 10.0), t);
    const double far = oks(single(12.0, 10.0), t);
    CHECK(far < near);
    CHECK(oks(single(111.0, 110.0), single(110.0, 110.0)) == near);
  }

  TEST_CASE("heatmap MSE") {
    const Tensor4 a = test::random_tensor(Shape4{2, 3, 4, 4}, 31);
    Tensor4 b = a;
    CHECK(mse_heatmap_loss(a, b) == 0.0);
    for (double& v : b.data()) v += 1.0;
    CHECK(mse_heatmap_loss(b, a) == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("mIoU: perfect, hand confusion and ignore handling") {
    const std::vector<int> target{0, 1, 1, 1};
    CHECK(miou(target, target, 2).mean == 1.0);

    // Class 0: TP 1, FP 1, FN 0 -> 1/2. Class 1: TP 2, FP 0, FN 1 -> 2/3.
    const std::vector<int> pred{0, 0, 1, 1};
    const MiouResult r = miou(pred, target, 2);
    CHECK(*r.per_class[0] == 0.5);
    CHECK(*r.per_class[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(r.mean == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-15));

    const std::vector<int> with_ignore{0, 255, 1, 1};
    const MiouResult ri = miou(pred, with_ignore, 3);
    CHECK(*ri.per_class[0] == 1.0);
    CHECK_FALSE(ri.per_class[2].has_value());
    CHECK(ri.mean == 1.0);
  }

  TEST_CASE("mIoU is equivariant under relabeling") {
    std::mt19937_64 gen(3);
    std::vector<int> pred(200);
    std::vector<int> target(200);
    for (int& v : pred) v = static_cast<int>(gen() % 4);
    for (int& v : target) v = static_cast<int>(gen() % 4);
    const std::vector<int> perm{2, 0, 3, 1};
    std::vector<int> pp(200);
    std::vector<int> tp(200);
    for (int i = 0; i < 200; ++i) {
      pp[i] = perm[pred[i]];
      tp[i] = perm[target[i]];
    }
    const MiouResult a = miou(pred, target, 4);
    const MiouResult b = miou(pp, tp, 4);
    CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-15));
    for (int c = 0; c < 4; ++c) CHECK(*a.per_class[c] == *b.per_class[perm[c]]);
  }

  TEST_CASE("segmentation loss: uniform logits give ln(K)") {
    const Tensor4 logits(Shape4{1, 19, 2, 2}, 0.7);
    SegTarget t{1, 8, 8, std::vector<int>(64, 3)};
    t.labels[5] = 255;
    CHECK(softmax_ce_seg_loss(logits, t) == doctest::Approx(std::log(19.0)).epsilon(1e-13));
    t.labels[6] = 19;
    CHECK_THROWS(t.validate(19));
  }

  TEST_CASE("segmentation loss on the tape matches the value path") {
    const Tensor4 logits = test::random_tensor(Shape4{1, 3, 2, 2}, 33);
    SegTarget t{1, 8, 8, std::vector<int>(64)};
    for (int i = 0; i < 64; ++i) t.labels[i] = i % 3;
    Tape tape;
    const Var l = seg_loss(tape, tape.parameter(logits), t);
    CHECK(tape.value(l)[0] == doctest::Approx(softmax_ce_seg_loss(logits, t)).epsilon(1e-14));
    CHECK(argmax_labels(Tensor4(Shape4{1, 2, 1, 1}, std::vector<double>{0.1, 0.9})) ==
          std::vector<int>{1});
  }

  TEST_CASE("synthetic set: blob centre matches the target peak") {
    const SyntheticSet s = make_synthetic(SyntheticSpec{4, 32, 2.0, 4.0, 9});
    CHECK(s.images.shape() == Shape4{4, 3, 32, 32});
    CHECK(s.targets.shape() == Shape4{4, 1, 8, 8});
    for (int n = 0; n < 4; ++n) {
      const Keypoint& k = s.truth[n].points[0];
      CHECK(k.x >= 4.0);
      CHECK(k.x <= 27.0);
      CHECK(s.truth[n].scale == 32.0);
    }
    CHECK(synthetic_oks_falloff() == doctest::Approx(0.1339).epsilon(1e-3));
    CHECK_THROWS_AS(make_synthetic(SyntheticSpec{4, 30, 2.0, 4.0, 9}), std::invalid_argument);
  }

  TEST_CASE("trainer: zero learning rate keeps the loss constant") {
    const Graph g = build(toy_config());
    ParamStore ps = ParamStore::init(g, 0);
    const SyntheticSet data = make_synthetic(SyntheticSpec{4, 32, 2.0, 4.0, 1});
    TrainOptions o;
    o.lr = 0.0;
    o.steps = 3;
    const TrainResult r = train_toy(g, ps, data, o);
    REQUIRE(r.trace.size() == 4);
    // Running statistics still move, but training-mode BN ignores them.
    for (double v : r.trace) CHECK(v == r.trace.front());
  }

  TEST_CASE("trainer: same seed, bit-identical trace; zero steps gives one value") {
    ToyExperiment ex;
    ex.train.count = 4;
    ex.test.count = 4;
    ex.options.steps = 4;
    const ToyOutcome a = run_toy_experiment(ex);
    const ToyOutcome b = run_toy_experiment(ex);
    CHECK(a.trace == b.trace);
    CHECK(a.held_out.mean_oks == b.held_out.mean_oks);
    CHECK(a.trace.back() < a.trace.front());
    ex.options.steps = 0;
    CHECK(run_toy_experiment(ex).trace.size() == 1);
  }

  TEST_CASE("trainer: divergence reports the step") {
    const Graph g = build(toy_config());
    ParamStore ps = ParamStore::init(g, 0);
    const SyntheticSet data = make_synthetic(SyntheticSpec{2, 32, 2.0, 4.0, 1});
    TrainOptions o;
    o.optimizer = Optimizer::kSgd;
    o.lr = 1e12;
    o.steps = 50;
    try {
      train_toy(g, ps, data, o);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.step() > 0);
      CHECK(e.step() <= 50);
    }
  }
}
