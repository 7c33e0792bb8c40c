#include "doctest.h"
#include "hrnet/autodiff.hpp"
#include "hrnet/gradcheck.hpp"
#include "support.hpp"

using namespace hrnet;

TEST_SUITE("autodiff") {
  TEST_CASE("relu slope is 1 above zero and 0 below") {
    Tape tape;
    const Var x = tape.parameter(Tensor4::vector(std::vector<double>{2.0, -2.0}));
    const Var w = tape.constant(Tensor4::vector(std::vector<double>{1.0, 1.0}));
    const Var y = tape.relu(x);
    const Var pair[] = {y, w};
    tape.backward(tape.mean(tape.mul(pair)));
    CHECK(tape.grad(x)[0] == 0.5);
    CHECK(tape.grad(x)[1] == 0.0);
  }

  TEST_CASE("fan-out accumulates gradients") {
    Tape tape;
    const Var x = tape.parameter(Tensor4(Shape4{1, 1, 2, 2}, 3.0));
    const Var twice[] = {x, x};
    tape.backward(tape.mean(tape.sum(twice)));
    for (double g : tape.grad(x).data()) CHECK(g == 0.5);
  }

  TEST_CASE("tape misuse is reported") {
    Tape tape;
    const Var x = tape.parameter(Tensor4(Shape4{1, 1, 2, 2}, 1.0));
    CHECK_THROWS_AS(tape.grad(x), TapeError);
    CHECK_THROWS_AS(tape.backward(x), TapeError);  // not a scalar
    const Var loss = tape.mean(x);
    tape.backward(loss);
    CHECK(tape.visited() == tape.size());
    CHECK_THROWS_AS(tape.backward(loss), TapeError);
    CHECK_THROWS_AS(tape.relu(x), TapeError);
    tape.reset();
    CHECK(tape.size() == 0);
  }

  TEST_CASE("mean(conv2d(x, w)) weight gradient matches central differences") {
    const Tensor4 x = test::random_tensor(Shape4{1, 2, 5, 5}, 11);
    const Tensor4 w = test::random_tensor(Shape4{3, 2, 3, 3}, 12);
    const auto spec = ops::ConvSpec::make(2, 3, 3);
    const GradcheckResult r = gradcheck(
        "mean_conv_weights", {w}, [&](Tape& t, std::span<const Var> v) {
          return t.mean(t.conv2d(t.constant(x), v[0], std::nullopt, spec));
        });
    CHECK(r.checked == 54);
    CHECK(r.passed());
  }

  TEST_CASE("bilinear resize input gradient matches central differences") {
    const Tensor4 x = test::random_tensor(Shape4{1, 1, 3, 3}, 13);
    const Tensor4 probe = test::random_tensor(Shape4{1, 1, 7, 5}, 14);
    const GradcheckResult r = gradcheck(
        "bilinear", {x}, [&](Tape& t, std::span<const Var> v) {
          return t.dot(t.bilinear_resize(v[0], 7, 5), probe);
        });
    CHECK(r.checked == 9);
    CHECK(r.passed());
  }

  TEST_CASE("relative error definition") {
    CHECK(relative_error(1.0, 1.0, 1e-6) == 0.0);
    CHECK(relative_error(2.0, 1.0, 1e-6) == 0.5);
    CHECK(relative_error(0.0, 1e-9, 1e-6) == doctest::Approx(1e-3));
  }

  TEST_CASE("every primitive passes at 1e-4 for seeds 0 and 1") {
    for (std::uint64_t seed : {0ULL, 1ULL}) {
      const auto results = check_primitives(seed);
      CHECK(results.size() == primitive_checks().size());
      for (const GradcheckResult& r : results) {
        INFO(r.name << " seed " << seed << " max_rel " << r.max_rel_error);
        CHECK(r.checked > 0);
        CHECK(r.passed());
      }
    }
  }

  TEST_CASE("primitive filter selects by prefix") {
    const auto conv = check_primitives(0, "conv2d");
    CHECK(conv.size() == 4);
    for (const auto& r : conv) CHECK(r.name.rfind("conv2d", 0) == 0);
    CHECK(check_primitives(0, "no_such_op").empty());
  }

  TEST_CASE("deep toy network gradients within 1e-3") {
    for (std::uint64_t seed : {0ULL, 1ULL}) {
      const GradcheckResult r = check_deep(seed);
      INFO("seed " << seed << " max_rel " << r.max_rel_error << " skipped " << r.skipped);
      CHECK(r.checked == 25);
      CHECK(r.passed());
    }
  }
}
