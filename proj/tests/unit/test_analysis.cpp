#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hrnet/analysis.hpp"
#include "hrnet/builder.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace hrnet;

namespace {

struct Expected {
  const char* name;
  int width;
  HeadKind head;
  FusionDesign design;
  int h;
  int w;
  std::int64_t params;
  std::int64_t macs;
};

// Frozen output of tests/oracles/hrnet_counts.py (closed-form counts written
// independently of the builder).
const Expected kOracle[] = {
    {"v1_w32_256x192", 32, HeadKind::kV1, FusionDesign::kC, 256, 192, 28860273, 7685701632},
    {"v1_w32_384x288", 32, HeadKind::kV1, FusionDesign::kC, 384, 288, 28860273, 17292828672},
    {"v1_w48_256x192", 48, HeadKind::kV1, FusionDesign::kC, 256, 192, 64323905, 15783395328},
    {"v1h_w32_256x192", 32, HeadKind::kV1h, FusionDesign::kC, 256, 192, 28884209, 7756283904},
    {"v1_w32_design_b", 32, HeadKind::kV1, FusionDesign::kB, 256, 192, 26830641, 7366803456},
    {"v1_w32_design_a", 32, HeadKind::kV1, FusionDesign::kA, 256, 192, 26332273, 7263977472},
    {"v2_w48_1024x2048", 48, HeadKind::kV2, FusionDesign::kC, 1024, 2048, 66586819,
     751420047360},
    {"cls_w18_224", 18, HeadKind::kClsDefault, FusionDesign::kC, 224, 224, 21401964, 4296682400},
    {"cls_w30_224", 30, HeadKind::kClsDefault, FusionDesign::kC, 224, 224, 37997220, 8142296480},
    {"cls_w40_224", 40, HeadKind::kClsDefault, FusionDesign::kC, 224, 224, 58063160, 12756912640},
};

ArchConfig config_for(const Expected& e) {
  ArchConfig c;
  c.width_c = e.width;
  c.head = e.head;
  c.fusion_design = e.design;
  return c;
}

/// Hand enumeration of every strided downsample conv (+BN) in the default
/// design: for each fusion, each (source x, target r > x) pair costs
/// (r - x - 1) width-preserving convs and one width-changing conv.
std::int64_t strided_total_by_hand(int c) {
  auto w = [c](int r) { return static_cast<std::int64_t>(c) << r; };
  auto pair = [&](int x, int r) {
    return (r - x - 1) * (9 * w(x) * w(x) + 2 * w(x)) + 9 * w(x) * w(r) + 2 * w(r);
  };
  auto all_pairs = [&](int outputs, int inputs) {
    std::int64_t t = 0;
    for (int r = 0; r < outputs; ++r)
      for (int x = 0; x < std::min(r, inputs); ++x) t += pair(x, r);
    return t;
  };
  std::int64_t total = all_pairs(3, 2);      // stage 2, adds branch 2
  total += 3 * all_pairs(3, 3);              // stage 3 within-stage
  total += all_pairs(4, 3);                  // stage 3, adds branch 3
  total += 2 * all_pairs(4, 4);              // stage 4 within-stage
  return total;                              // final fusion keeps output 0 only
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("params and MACs match the closed-form oracle exactly") {
    for (const Expected& e : kOracle) {
      INFO(e.name);
      const ArchConfig c = config_for(e);
      const Graph g = build(c);
      const ComplexityReport r = count_flops(g, Shape4{1, 3, e.h, e.w});
      CHECK(r.total.params == e.params);
      CHECK(r.total.macs == e.macs);
      CHECK(count_params(g).total.params == e.params);
      CHECK(audit_structure(g, c).ok());
    }
  }

  TEST_CASE("GFLOPs are MACs over 2^30 and scale by exactly 2.25 from 256x192 to 384x288") {
    CHECK(gflops(1LL << 30) == 1.0);
    const Graph g = build(ArchConfig{});
    const double lo = count_flops(g, Shape4{1, 3, 256, 192}).gflops();
    const double hi = count_flops(g, Shape4{1, 3, 384, 288}).gflops();
    CHECK(std::abs(hi / lo - 2.25) < 1e-6);
  }

  TEST_CASE("single 3x3 conv 16->32 at 8x8 output costs 294,912 MACs") {
    GraphBuilder b(InputSpec{16, 1, InputPolicy::kAny});
    const NodeId x = b.input(16);
    const NodeId y = b.conv("conv", x, 32, 3);
    const Graph g = std::move(b).finish({y});
    const ComplexityReport r = count_flops(g, Shape4{1, 16, 8, 8});
    CHECK(r.total.macs == 294912);
    CHECK(r.total.params == 9 * 16 * 32);
  }

  TEST_CASE("groups and rows sum to the totals") {
    const ComplexityReport r = count_flops(build(ArchConfig{}), Shape4{1, 3, 256, 192});
    Totals from_groups;
    for (const auto& [name, t] : r.groups) from_groups += t;
    CHECK(from_groups == r.total);
    CHECK(sum_rows(r.rows) == r.total);
    CHECK(r.group("fusion") != nullptr);
    CHECK(r.group("task")->params == 32 * 17 + 17);
  }

  TEST_CASE("sum vs multiply: zero parameter, MAC and shape deltas") {
    ArchConfig mul;
    mul.combine = Combine::kMultiply;
    const Shape4 in{1, 3, 256, 192};
    const ReportDiff d = compare_reports(count_flops(build(ArchConfig{}), in), count_flops(build(mul), in));
    CHECK(d.param_delta() == 0);
    CHECK(d.mac_delta() == 0);
    CHECK(d.shapes_equal());
    CHECK(d.only_in_a.empty());
    CHECK(d.only_in_b.empty());
  }

  TEST_CASE("strided vs bilinear downsample: delta is minus the strided conv total") {
    const ArchConfig base;
    ArchConfig bil;
    bil.downsample_kind = DownsampleKind::kBilinear;
    const Shape4 in{1, 3, 256, 192};
    const Graph gb = build(base);
    const ReportDiff d = compare_reports(count_flops(gb, in), count_flops(build(bil), in));
    const std::int64_t hand = strided_total_by_hand(32);
    CHECK(hand == 2692160);
    CHECK(d.param_delta() == -hand);
    CHECK(strided_downsample_params(gb, base) == hand);
    CHECK(d.shapes_equal());
    for (const GroupDelta& g : d.groups) {
      if (g.group != "fusion") CHECK(g.param_delta() == 0);
    }
  }

  TEST_CASE("V1 vs V1h delta is one 1x1 conv + BN plus the wider task layer") {
    ArchConfig h;
    h.head = HeadKind::kV1h;
    const ReportDiff d = compare_reports(count_params(build(ArchConfig{})), count_params(build(h)));
    CHECK(d.param_delta() == (32 * 480 + 2 * 480) + (480 - 32) * 17);
  }

  TEST_CASE("JSON report schema and golden file") {
    ArchConfig c;
    c.width_c = 4;
    c.stage_blocks = {1, 1, 1, 1};
    c.num_outputs = 1;
    ComplexityReport r = count_flops(build(c), Shape4{1, 3, 32, 32});
    r.config_hash = config_hash(c);
    const std::string text = report_json(r);
    const auto j = nlohmann::ordered_json::parse(text);

    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    CHECK(keys == std::vector<std::string>{"schema", "model", "config_hash", "input", "totals",
                                           "groups", "rows"});
    CHECK(j["schema"] == "hrnet-complexity/1");
    CHECK(j["input"] == nlohmann::ordered_json::array({1, 3, 32, 32}));
    CHECK(j["totals"]["params"].get<std::int64_t>() == r.total.params);
    CHECK(j["rows"].size() == r.rows.size());

    std::ifstream golden(test::data_path("report_toy_32x32.json"));
    REQUIRE(golden.good());
    std::stringstream ss;
    ss << golden.rdbuf();
    CHECK(nlohmann::ordered_json::parse(ss.str()) == j);
  }
}
