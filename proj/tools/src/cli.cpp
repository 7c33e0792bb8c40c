#include "hrnet_cli/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "hrnet/analysis.hpp"
#include "hrnet/builder.hpp"
#include "hrnet/gradcheck.hpp"
#include "hrnet/trainer.hpp"

namespace hrnet::cli {
namespace {

/// Thrown for bad flag values that CLI11 cannot catch itself.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Signals a failed --expect-* style check after output has been written.
struct VerificationFailed {};

struct ModelFlags {
  std::string preset;
  std::string config_path;
  std::optional<int> width;
  std::string head;
  std::string design;
  std::string combine;
  std::string downsample;
  std::string upsample_order;
  bool maintain = false;
  bool light_transition = false;
  std::optional<int> num_outputs;
};

void add_model_flags(CLI::App* app, ModelFlags& f) {
  auto* preset = app->add_option("--preset", f.preset, "width preset (see `hrnet presets`)");
  auto* config = app->add_option("--config", f.config_path, "architecture config JSON file");
  preset->excludes(config);
  app->add_option("--width", f.width, "override base width C");
  app->add_option("--head", f.head, "v1 | v1h | v2 | v2p | cls | cls-ci | cls-cii");
  app->add_option("--design", f.design, "fusion design a | b | c");
  app->add_option("--combine", f.combine, "sum | multiply");
  app->add_option("--downsample", f.downsample, "strided-conv | bilinear");
  app->add_option("--upsample-order", f.upsample_order, "conv-first | resize-first");
  app->add_flag("--maintain", f.maintain, "keep four resolutions from the first stage");
  app->add_flag("--light-transition", f.light_transition,
                "new branch from the lowest resolution only");
  app->add_option("--num-outputs", f.num_outputs, "keypoints, classes or seg labels");
}

ArchConfig resolve_config(const ModelFlags& f) {
  ArchConfig c;
  if (!f.config_path.empty()) {
    c = load_config(f.config_path);
  } else if (!f.preset.empty()) {
    c = preset(f.preset);
  }
  if (f.width) c.width_c = *f.width;
  if (!f.head.empty()) c.head = parse_head(f.head);
  if (!f.design.empty()) c.fusion_design = parse_fusion_design(f.design);
  if (!f.combine.empty()) c.combine = parse_combine(f.combine);
  if (!f.downsample.empty()) c.downsample_kind = parse_downsample(f.downsample);
  if (!f.upsample_order.empty()) c.upsample_order = parse_upsample_order(f.upsample_order);
  if (f.maintain) c.maintain_from_start = true;
  if (f.light_transition) c.light_transition = true;
  if (f.num_outputs) c.num_outputs = *f.num_outputs;
  c.validate();
  return c;
}

/// "HxW", height first: 256x192 is 256 rows by 192 columns.
Shape4 parse_input(const std::string& text) {
  int h = 0;
  int w = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%dx%d%c", &h, &w, &tail) != 2 || h < 1 || w < 1) {
    throw UsageError("--input expects HxW with positive integers, got '" + text + "'");
  }
  return Shape4{1, 3, h, w};
}

std::string default_input(HeadKind head) {
  switch (head) {
    case HeadKind::kV1:
    case HeadKind::kV1h: return "256x192";
    case HeadKind::kV2: return "1024x2048";
    case HeadKind::kV2p: return "800x1333";
    default: return "224x224";
  }
}

std::string millions(std::int64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3fM", static_cast<double>(n) / 1e6);
  return buf;
}

bool within(double got, double want, double tolerance, const std::string& what,
            std::ostream& out) {
  const double rel = (got - want) / want;
  const bool ok = std::abs(rel) <= tolerance;
  char line[160];
  std::snprintf(line, sizeof line, "check %-7s got %.6g expected %.6g (%+.2f%%, tolerance %.2f%%): %s\n",
                what.c_str(), got, want, 100.0 * rel, 100.0 * tolerance, ok ? "ok" : "FAIL");
  out << line;
  return ok;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write " + path);
  f << text;
  if (text.empty() || text.back() != '\n') f << '\n';
}

// -- presets ---------------------------------------------------------------

void cmd_presets(std::ostream& out) {
  for (const Preset& p : presets()) {
    const ArchConfig c = preset(p.name);
    const Graph g = build(c);
    out << p.name << "  C=" << p.width_c << "  v1 params " << millions(g.parameter_count())
        << '\n';
  }
}

// -- build -----------------------------------------------------------------

struct BuildFlags {
  ModelFlags model;
  std::string save_config;
  bool modules = false;
};

void cmd_build(const BuildFlags& f, std::ostream& out) {
  const ArchConfig c = resolve_config(f.model);
  const Graph g = build(c);
  const StructureAudit audit = audit_structure(g, c);
  out << "model        " << g.label() << '\n'
      << "config_hash  " << config_hash(c) << '\n'
      << "nodes        " << g.nodes().size() << '\n'
      << "params       " << g.parameter_count() << " (" << millions(g.parameter_count())
      << ")\n"
      << "stage1 units " << audit.stage1_units << '\n'
      << "blocks       " << audit.blocks_per_stage[0] << ' ' << audit.blocks_per_stage[1]
      << ' ' << audit.blocks_per_stage[2] << '\n'
      << "fusions      " << audit.fusion_units << '\n';
  if (f.modules) {
    for (const ModuleRecord& m : g.modules()) {
      out << "  " << module_kind_name(m.kind) << ' ' << m.name << '\n';
    }
  }
  if (!f.save_config.empty()) write_file(f.save_config, config_to_json(c));
  for (const std::string& p : audit.problems) out << "audit: " << p << '\n';
  out << "audit        " << (audit.ok() ? "ok" : "FAIL") << '\n';
  if (!audit.ok()) throw VerificationFailed{};
}

// -- report ----------------------------------------------------------------

struct ReportFlags {
  ModelFlags model;
  std::string input;
  bool params_only = false;
  bool rows = false;
  bool json = false;
  std::string out_path;
  std::optional<double> expect_params;
  std::optional<double> expect_gflops;
  double params_tolerance = 0.02;
  double gflops_tolerance = 0.05;
};

void cmd_report(const ReportFlags& f, std::ostream& out, std::ostream& err) {
  const ArchConfig c = resolve_config(f.model);
  const Graph g = build(c);
  ComplexityReport report;
  if (f.params_only) {
    if (f.expect_gflops) throw UsageError("--expect-gflops needs an input size");
    report = count_params(g);
  } else {
    report = count_flops(g, parse_input(f.input.empty() ? default_input(c.head) : f.input));
  }
  report.config_hash = config_hash(c);

  const std::string json = report_json(report);
  if (f.json) {
    out << json << '\n';
  } else {
    out << report_text(report, f.rows);
  }
  if (!f.out_path.empty()) write_file(f.out_path, json);

  std::ostream& log = f.json ? err : out;
  bool ok = true;
  if (f.expect_params) {
    ok &= within(static_cast<double>(report.total.params), *f.expect_params, f.params_tolerance,
                 "params", log);
  }
  if (f.expect_gflops) {
    ok &= within(report.gflops(), *f.expect_gflops, f.gflops_tolerance, "gflops", log);
  }
  if (!ok) throw VerificationFailed{};
}

// -- gradcheck -------------------------------------------------------------

struct GradcheckFlags {
  std::uint64_t seed = 0;
  std::string primitive;
  int deep_samples = 25;
  bool no_deep = false;
  double tolerance = 1e-4;
  double deep_tolerance = 1e-3;
};

void print_check(const GradcheckResult& r, std::ostream& out) {
  char line[200];
  std::snprintf(line, sizeof line, "%-28s max_rel %.3e  tol %.0e  checked %5d", r.name.c_str(),
                r.max_rel_error, r.tolerance, r.checked);
  out << line;
  if (r.skipped > 0) out << "  skipped " << r.skipped;
  out << "  " << (r.passed() ? "PASS" : "FAIL") << '\n';
}

void cmd_gradcheck(const GradcheckFlags& f, std::ostream& out) {
  GradcheckOptions opts;
  opts.tolerance = f.tolerance;
  const std::vector<GradcheckResult> prims = check_primitives(f.seed, f.primitive, opts);
  if (prims.empty()) throw UsageError("no primitive check matches '" + f.primitive + "'");
  int failed = 0;
  for (const GradcheckResult& r : prims) {
    print_check(r, out);
    failed += r.passed() ? 0 : 1;
  }
  if (f.primitive.empty() && !f.no_deep) {
    const GradcheckResult deep = check_deep(f.seed, f.deep_samples, f.deep_tolerance);
    print_check(deep, out);
    failed += deep.passed() ? 0 : 1;
  }
  out << (failed == 0 ? "all checks passed" : std::to_string(failed) + " check(s) failed")
      << " (seed " << f.seed << ")\n";
  if (failed > 0) throw VerificationFailed{};
}

// -- ablate ----------------------------------------------------------------

struct AblateFlags {
  ModelFlags model;
  std::string input;
  std::vector<std::string> variants{"a", "b", "c", "multiply", "bilinear"};
};

ArchConfig apply_variant(ArchConfig c, const std::string& v) {
  if (v == "a" || v == "b" || v == "c") {
    c.fusion_design = parse_fusion_design(v);
  } else if (v == "sum" || v == "multiply") {
    c.combine = parse_combine(v);
  } else if (v == "strided-conv" || v == "bilinear") {
    c.downsample_kind = parse_downsample(v);
  } else if (v == "conv-first" || v == "resize-first") {
    c.upsample_order = parse_upsample_order(v);
  } else if (v == "maintain") {
    c.maintain_from_start = true;
  } else if (v == "light") {
    c.light_transition = true;
  } else if (v == "v1h") {
    c.head = HeadKind::kV1h;
  } else {
    throw UsageError("unknown variant '" + v +
                     "' (a, b, c, sum, multiply, strided-conv, bilinear, conv-first, "
                     "resize-first, maintain, light, v1h)");
  }
  c.validate();
  return c;
}

/// "same" when both graphs have identical node names and shapes, otherwise
/// "+added/-removed/~reshaped" node counts.
std::string shape_summary(const ReportDiff& d) {
  if (d.shapes_equal() && d.only_in_a.empty() && d.only_in_b.empty()) return "same";
  return "+" + std::to_string(d.only_in_b.size()) + "/-" + std::to_string(d.only_in_a.size()) +
         "/~" + std::to_string(d.shape_changes.size());
}

void cmd_ablate(const AblateFlags& f, std::ostream& out) {
  const ArchConfig base = resolve_config(f.model);
  const Shape4 input = parse_input(f.input.empty() ? default_input(base.head) : f.input);
  const Graph base_graph = build(base);
  const ComplexityReport base_report = count_flops(base_graph, input);

  char line[200];
  std::snprintf(line, sizeof line, "%-13s %7s %12s %9s %12s %10s %14s\n", "variant", "fusions",
                "params", "gflops", "d_params", "d_gflops", "shapes");
  out << "base " << base_graph.label() << " at " << to_string(input) << '\n' << line;
  bool ok = true;
  for (const std::string& v : f.variants) {
    const ArchConfig c = apply_variant(base, v);
    const Graph g = build(c);
    const StructureAudit audit = audit_structure(g, c);
    const ComplexityReport report = count_flops(g, input);
    const ReportDiff diff = compare_reports(base_report, report);
    std::snprintf(line, sizeof line, "%-13s %7d %12lld %9.3f %+12lld %+10.3f %14s\n", v.c_str(),
                  audit.fusion_units, static_cast<long long>(report.total.params),
                  report.gflops(), static_cast<long long>(diff.param_delta()),
                  gflops(diff.mac_delta()), shape_summary(diff).c_str());
    out << line;
    for (const std::string& p : audit.problems) out << "  audit: " << p << '\n';
    ok &= audit.ok();
    if (c.downsample_kind == DownsampleKind::kBilinear &&
        base.downsample_kind == DownsampleKind::kStridedConv) {
      const std::int64_t closed = strided_downsample_params(base_graph, base);
      const bool match = diff.param_delta() == -closed;
      out << "  strided-conv downsample params (closed form) " << closed << ", delta "
          << diff.param_delta() << ": " << (match ? "match" : "MISMATCH") << '\n';
      ok &= match;
    }
  }
  if (!ok) throw VerificationFailed{};
}

// -- train-toy -------------------------------------------------------------

struct TrainFlags {
  std::string config_path;
  ToyExperiment experiment;
  std::string optimizer = "adam";
  std::string trace_path;
  std::optional<double> min_ratio;
  std::optional<double> min_oks;
};

void cmd_train_toy(TrainFlags f, std::ostream& out) {
  if (!f.config_path.empty()) f.experiment.config = load_config(f.config_path);
  if (f.optimizer == "adam") {
    f.experiment.options.optimizer = Optimizer::kAdam;
  } else if (f.optimizer == "sgd") {
    f.experiment.options.optimizer = Optimizer::kSgd;
  } else {
    throw UsageError("--optimizer must be adam or sgd");
  }
  f.experiment.test.size = f.experiment.train.size;
  f.experiment.test.blob_sigma = f.experiment.train.blob_sigma;
  f.experiment.test.margin = f.experiment.train.margin;

  ToyOutcome r;
  try {
    r = run_toy_experiment(f.experiment);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::ostringstream trace;
  trace.precision(17);
  trace << "step,value\n";
  for (std::size_t i = 0; i < r.trace.size(); ++i) trace << i << ',' << r.trace[i] << '\n';
  if (f.trace_path == "-") {
    out << trace.str();
  } else if (!f.trace_path.empty()) {
    write_file(f.trace_path, trace.str());
  }

  char line[200];
  std::snprintf(line, sizeof line,
                "steps %d  initial %.6g  final %.6g  ratio %.3g\n"
                "held-out (%d samples)  mean_oks %.4f  mse %.6g\n",
                f.experiment.options.steps, r.trace.front(), r.trace.back(), r.loss_ratio(),
                f.experiment.test.count, r.held_out.mean_oks, r.held_out.mse);
  out << line;
  bool ok = true;
  if (f.min_ratio) {
    const bool pass = r.loss_ratio() >= *f.min_ratio;
    out << "check ratio >= " << *f.min_ratio << ": " << (pass ? "ok" : "FAIL") << '\n';
    ok &= pass;
  }
  if (f.min_oks) {
    const bool pass = r.held_out.mean_oks >= *f.min_oks;
    out << "check oks >= " << *f.min_oks << ": " << (pass ? "ok" : "FAIL") << '\n';
    ok &= pass;
  }
  if (!ok) throw VerificationFailed{};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"HRNet family builder, verifier and toy trainer", "hrnet"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  auto* presets_cmd = app.add_subcommand("presets", "list width presets");

  BuildFlags build_flags;
  auto* build_cmd = app.add_subcommand("build", "build a network and audit its structure");
  add_model_flags(build_cmd, build_flags.model);
  build_cmd->add_option("--save-config", build_flags.save_config, "write the resolved config");
  build_cmd->add_flag("--modules", build_flags.modules, "list module records");

  ReportFlags report_flags;
  auto* report_cmd = app.add_subcommand("report", "parameter and FLOPs report");
  add_model_flags(report_cmd, report_flags.model);
  report_cmd->add_option("--input", report_flags.input, "input size HxW (height first)");
  report_cmd->add_flag("--params-only", report_flags.params_only, "skip shapes and FLOPs");
  report_cmd->add_flag("--rows", report_flags.rows, "print one row per node");
  report_cmd->add_flag("--json", report_flags.json, "print the JSON report instead of text");
  report_cmd->add_option("--out", report_flags.out_path, "write the JSON report to a file");
  report_cmd->add_option("--expect-params", report_flags.expect_params,
                         "exit 1 unless params are within tolerance");
  report_cmd->add_option("--expect-gflops", report_flags.expect_gflops,
                         "exit 1 unless GFLOPs are within tolerance");
  report_cmd->add_option("--params-tolerance", report_flags.params_tolerance,
                         "relative tolerance for --expect-params")
      ->capture_default_str();
  report_cmd->add_option("--gflops-tolerance", report_flags.gflops_tolerance,
                         "relative tolerance for --expect-gflops")
      ->capture_default_str();

  GradcheckFlags grad_flags;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad_cmd->add_option("--seed", grad_flags.seed, "RNG seed")->capture_default_str();
  grad_cmd->add_option("--primitive", grad_flags.primitive,
                       "only checks whose name starts with this (skips the deep check)");
  grad_cmd->add_option("--deep-samples", grad_flags.deep_samples,
                       "parameters sampled in the deep check")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  grad_cmd->add_flag("--no-deep", grad_flags.no_deep, "skip the deep toy-network check");
  grad_cmd->add_option("--tolerance", grad_flags.tolerance, "primitive tolerance")
      ->capture_default_str();
  grad_cmd->add_option("--deep-tolerance", grad_flags.deep_tolerance, "deep-check tolerance")
      ->capture_default_str();

  AblateFlags ablate_flags;
  auto* ablate_cmd = app.add_subcommand("ablate", "compare structural variants");
  add_model_flags(ablate_cmd, ablate_flags.model);
  ablate_cmd->add_option("--input", ablate_flags.input, "input size HxW (height first)");
  ablate_cmd->add_option("--variants", ablate_flags.variants, "variants to compare")
      ->delimiter(',')
      ->capture_default_str();

  TrainFlags train_flags;
  ToyExperiment& ex = train_flags.experiment;
  auto* train_cmd = app.add_subcommand("train-toy", "train the toy network on synthetic data");
  train_cmd->add_option("--config", train_flags.config_path, "config JSON (default: toy net)");
  train_cmd->add_option("--steps", ex.options.steps, "optimizer steps")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--lr", ex.options.lr, "learning rate")->capture_default_str();
  train_cmd->add_option("--optimizer", train_flags.optimizer, "adam | sgd")
      ->capture_default_str();
  train_cmd->add_option("--seed", ex.init_seed, "parameter init seed")->capture_default_str();
  train_cmd->add_option("--data-seed", ex.train.seed, "training set seed")
      ->capture_default_str();
  train_cmd->add_option("--test-seed", ex.test.seed, "held-out set seed")
      ->capture_default_str();
  train_cmd->add_option("--train-count", ex.train.count, "training samples")
      ->capture_default_str();
  train_cmd->add_option("--test-count", ex.test.count, "held-out samples")
      ->capture_default_str();
  train_cmd->add_option("--size", ex.train.size, "image side, multiple of 32")
      ->capture_default_str();
  train_cmd->add_option("--blob-sigma", ex.train.blob_sigma, "blob sigma in pixels")
      ->capture_default_str();
  train_cmd->add_option("--margin", ex.train.margin, "border kept free of keypoints")
      ->capture_default_str();
  train_cmd->add_option("--trace", train_flags.trace_path, "write step,value rows ('-' = stdout)");
  train_cmd->add_option("--min-ratio", train_flags.min_ratio,
                        "exit 1 unless initial/final loss reaches this");
  train_cmd->add_option("--min-oks", train_flags.min_oks,
                        "exit 1 unless held-out mean OKS reaches this");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (*presets_cmd) cmd_presets(out);
    if (*build_cmd) cmd_build(build_flags, out);
    if (*report_cmd) cmd_report(report_flags, out, err);
    if (*grad_cmd) cmd_gradcheck(grad_flags, out);
    if (*ablate_cmd) cmd_ablate(ablate_flags, out);
    if (*train_cmd) cmd_train_toy(train_flags, out);
  } catch (const VerificationFailed&) {
    return kVerificationFailed;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const LadderError& e) {
    err << "ladder error: " << e.what() << '\n';
    return kVerificationFailed;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << '\n';
    return kVerificationFailed;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kVerificationFailed;
  }
  return kOk;
}

}  // namespace hrnet::cli
