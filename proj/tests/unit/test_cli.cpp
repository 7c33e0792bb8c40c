#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hrnet/config.hpp"
#include "hrnet_cli/cli.hpp"
#include "json.hpp"

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = hrnet::cli::run(args, out, err);
  return Run{code, out.str(), err.str()};
}

bool contains(const std::string& s, const std::string& needle) {
  return s.find(needle) != std::string::npos;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hrnet_cli_test_" + name);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("presets lists the width presets") {
    const Run r = run({"presets"});
    CHECK(r.code == 0);
    for (const char* name : {"w18", "w30", "w32", "w40", "w48"}) CHECK(contains(r.out, name));
  }

  TEST_CASE("report: default input, expectations within tolerance pass") {
    const Run r = run({"report", "--preset", "w32", "--expect-params", "28.5e6",
                       "--expect-gflops", "7.10"});
    CHECK(r.code == 0);
    CHECK(contains(r.out, "28860273"));
    CHECK(contains(r.out, "256x192"));
  }

  TEST_CASE("report: expectation outside tolerance exits 1") {
    const Run r = run({"report", "--preset", "w32", "--params-only", "--expect-params", "20e6"});
    CHECK(r.code == 1);
    CHECK(contains(r.out, "FAIL"));
  }

  TEST_CASE("report: input is height first and must sit on the 32 ladder") {
    const Run tall = run({"report", "--preset", "w32", "--input", "384x288", "--json"});
    REQUIRE(tall.code == 0);
    const auto j = nlohmann::json::parse(tall.out);
    CHECK(j["input"] == nlohmann::json::array({1, 3, 384, 288}));
    CHECK(j["totals"]["macs"].get<std::int64_t>() == 17292828672);

    CHECK(run({"report", "--preset", "w32", "--input", "250x192"}).code == 1);
    CHECK(run({"report", "--preset", "w32", "--input", "256"}).code == 2);
    CHECK(run({"report", "--preset", "w32", "--params-only", "--expect-gflops", "7"}).code == 2);
  }

  TEST_CASE("usage errors exit 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"report", "--preset", "w99"}).code == 2);
    CHECK(run({"report", "--width", "-4"}).code == 2);
    CHECK(run({"report", "--preset", "w32", "--config", "x.json"}).code == 2);
    CHECK(run({"report", "--config", "/nonexistent/x.json"}).code == 2);
    CHECK(run({"gradcheck", "--primitive", "no_such_op"}).code == 2);
    CHECK(run({"train-toy", "--size", "30", "--steps", "0"}).code == 2);
  }

  TEST_CASE("build writes a config that report reads back") {
    const auto path = temp_file("config.json");
    const Run b = run({"build", "--width", "18", "--head", "v2", "--design", "b", "--save-config",
                       path.string()});
    REQUIRE(b.code == 0);
    CHECK(contains(b.out, "audit        ok"));
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    const hrnet::ArchConfig c = hrnet::config_from_json(ss.str());
    CHECK(c.width_c == 18);
    CHECK(c.head == hrnet::HeadKind::kV2);
    CHECK(c.fusion_design == hrnet::FusionDesign::kB);

    const Run r = run({"report", "--config", path.string(), "--json"});
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["config_hash"] == hrnet::config_hash(c));
    std::filesystem::remove(path);
  }

  TEST_CASE("gradcheck with a primitive filter") {
    const Run r = run({"gradcheck", "--primitive", "relu"});
    CHECK(r.code == 0);
    CHECK(contains(r.out, "PASS"));
    CHECK_FALSE(contains(r.out, "FAIL"));
  }

  TEST_CASE("ablate reports the closed-form bilinear delta") {
    const Run r = run({"ablate", "--variants", "multiply,bilinear"});
    CHECK(r.code == 0);
    CHECK(contains(r.out, "2692160"));
  }

  TEST_CASE("train-toy with zero steps writes a one-row trace") {
    const Run r = run({"train-toy", "--steps", "0", "--train-count", "2", "--test-count", "2",
                       "--trace", "-"});
    CHECK(r.code == 0);
    CHECK(contains(r.out, "step,value\n0,"));
  }
}
