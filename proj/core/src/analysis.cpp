#include "hrnet/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hrnet {
namespace {

std::int64_t elementwise_cost(const LayerNode& node, const Shape4& out,
                              std::span<const Shape4> in) {
  const auto numel = static_cast<std::int64_t>(out.numel());
  if (node.as<BatchNormLayer>() || node.as<ReluLayer>() || node.as<ResizeLayer>()) return numel;
  if (node.as<SumLayer>() || node.as<MulLayer>()) {
    return numel * static_cast<std::int64_t>(node.inputs.size() - 1);
  }
  if (node.as<AvgPoolLayer>() || node.as<GlobalAvgPoolLayer>()) {
    return static_cast<std::int64_t>(in[0].numel());
  }
  return 0;
}

std::int64_t mac_cost(const LayerNode& node, const Shape4& out) {
  if (const auto* l = node.as<ConvLayer>()) {
    return static_cast<std::int64_t>(l->spec.kernel) * l->spec.kernel * l->spec.in_channels *
           static_cast<std::int64_t>(out.numel());
  }
  if (const auto* l = node.as<LinearLayer>()) {
    return static_cast<std::int64_t>(l->in_features) * l->out_features * out.n;
  }
  return 0;
}

std::int64_t node_params(const Graph& graph, const LayerNode& node) {
  std::int64_t total = 0;
  for (std::size_t p : node.params) {
    total += static_cast<std::int64_t>(graph.params()[p].shape.numel());
  }
  return total;
}

void finalize(ComplexityReport& r) {
  r.total = sum_rows(r.rows);
  r.groups.clear();
  for (const ReportRow& row : r.rows) {
    auto it = std::find_if(r.groups.begin(), r.groups.end(),
                           [&](const auto& g) { return g.first == row.group; });
    if (it == r.groups.end()) {
      r.groups.emplace_back(row.group, row.cost);
    } else {
      it->second += row.cost;
    }
  }
}

std::string dims(const std::optional<Shape4>& s) {
  if (!s) return "-";
  return std::to_string(s->n) + "x" + std::to_string(s->c) + "x" + std::to_string(s->h) + "x" +
         std::to_string(s->w);
}

nlohmann::json totals_json(const Totals& t) {
  return {{"params", t.params},
          {"macs", t.macs},
          {"gflops", gflops(t.macs)},
          {"elementwise", t.elementwise}};
}

nlohmann::json shape_json(const std::optional<Shape4>& s) {
  if (!s) return nullptr;
  return nlohmann::json::array({s->n, s->c, s->h, s->w});
}

}  // namespace

std::vector<Shape4> infer_shapes(const Graph& graph, std::span<const Shape4> inputs) {
  if (inputs.size() != graph.inputs().size()) {
    throw ShapeError("graph takes " + std::to_string(graph.inputs().size()) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
  std::vector<Shape4> shapes(graph.nodes().size());
  std::vector<Shape4> in;
  for (NodeId id = 0; id < graph.nodes().size(); ++id) {
    const LayerNode& node = graph.node(id);
    if (const auto* l = node.as<InputLayer>()) {
      const Shape4& s = inputs[static_cast<std::size_t>(l->index)];
      if (!s.valid()) throw ShapeError("input dims must be positive, got " + to_string(s));
      if (s.c != node.channels) {
        throw ShapeError("input " + std::to_string(l->index) + " has " + std::to_string(s.c) +
                         " channels, expected " + std::to_string(node.channels));
      }
      shapes[id] = graph.input_spec().policy == InputPolicy::kAny
                       ? s
                       : admit_input(graph.input_spec(), s);
      continue;
    }
    in.clear();
    for (NodeId x : node.inputs) in.push_back(shapes[x]);
    shapes[id] = infer_node_shape(node, in);
  }
  return shapes;
}

std::vector<Shape4> infer_shapes(const Graph& graph, const Shape4& input) {
  return infer_shapes(graph, std::span<const Shape4>(&input, 1));
}

Totals sum_rows(std::span<const ReportRow> rows) {
  Totals t;
  for (const ReportRow& r : rows) t += r.cost;
  return t;
}

double gflops(std::int64_t macs) { return static_cast<double>(macs) / 1073741824.0; }

const Totals* ComplexityReport::group(std::string_view name) const {
  for (const auto& [g, t] : groups) {
    if (g == name) return &t;
  }
  return nullptr;
}

ComplexityReport count_params(const Graph& graph) {
  ComplexityReport r;
  r.label = graph.label();
  for (const LayerNode& node : graph.nodes()) {
    r.rows.push_back({node.name, std::string(node.kind()), node.group, std::nullopt,
                      Totals{node_params(graph, node), 0, 0}});
  }
  finalize(r);
  return r;
}

ComplexityReport count_flops(const Graph& graph, const Shape4& input) {
  const std::vector<Shape4> shapes = infer_shapes(graph, input);
  ComplexityReport r;
  r.label = graph.label();
  r.input = input;
  std::vector<Shape4> in;
  for (NodeId id = 0; id < graph.nodes().size(); ++id) {
    const LayerNode& node = graph.node(id);
    in.clear();
    for (NodeId x : node.inputs) in.push_back(shapes[x]);
    r.rows.push_back({node.name, std::string(node.kind()), node.group, shapes[id],
                      Totals{node_params(graph, node), mac_cost(node, shapes[id]),
                             elementwise_cost(node, shapes[id], in)}});
  }
  finalize(r);
  return r;
}

ReportDiff compare_reports(const ComplexityReport& a, const ComplexityReport& b) {
  ReportDiff d;
  d.a = a.total;
  d.b = b.total;
  std::vector<std::string> order;
  std::map<std::string, GroupDelta> groups;
  for (const auto& [g, t] : a.groups) {
    order.push_back(g);
    groups[g] = GroupDelta{g, t, {}};
  }
  for (const auto& [g, t] : b.groups) {
    if (!groups.contains(g)) {
      order.push_back(g);
      groups[g] = GroupDelta{g, {}, {}};
    }
    groups[g].b = t;
  }
  for (const std::string& g : order) d.groups.push_back(groups[g]);

  std::map<std::string, const ReportRow*> rows_b;
  for (const ReportRow& row : b.rows) rows_b[row.name] = &row;
  std::set<std::string> seen;
  for (const ReportRow& row : a.rows) {
    seen.insert(row.name);
    auto it = rows_b.find(row.name);
    if (it == rows_b.end()) {
      d.only_in_a.push_back(row.name);
    } else if (row.shape != it->second->shape) {
      d.shape_changes.push_back(row.name + ": " + dims(row.shape) + " -> " +
                                dims(it->second->shape));
    }
  }
  for (const ReportRow& row : b.rows) {
    if (!seen.contains(row.name)) d.only_in_b.push_back(row.name);
  }
  return d;
}

int expected_fusions(const ArchConfig& config) {
  switch (config.fusion_design) {
    case FusionDesign::kA: return 1;
    case FusionDesign::kB: return 3;
    case FusionDesign::kC:
      return config.stage_blocks[1] + config.stage_blocks[2] + config.stage_blocks[3];
  }
  return 0;
}

std::int64_t strided_downsample_params(const Graph& graph, const ArchConfig& config) {
  auto conv_bn = [](std::int64_t in, std::int64_t out) { return 9 * in * out + 2 * out; };
  std::int64_t total = 0;
  for (const ModuleRecord& m : graph.modules()) {
    if (m.kind != ModuleKind::kFusion) continue;
    const int n = m.fusion_inputs;
    for (int r : m.fusion_outputs) {
      const int first = (r == n && config.light_transition) ? n - 1 : 0;
      for (int x = first; x < std::min(r, n); ++x) {
        const std::int64_t wx = config.branch_width(x);
        total += (r - x - 1) * conv_bn(wx, wx) + conv_bn(wx, config.branch_width(r));
      }
    }
  }
  return total;
}

StructureAudit audit_structure(const Graph& graph, const ArchConfig& config) {
  StructureAudit audit;
  audit.blocks_per_stage.assign(3, 0);
  std::map<std::tuple<int, int, int>, int> units;
  auto problem = [&](std::string what) { audit.problems.push_back(std::move(what)); };

  for (const ModuleRecord& m : graph.modules()) {
    switch (m.kind) {
      case ModuleKind::kBottleneck:
        if (m.stage == 1) ++audit.stage1_units;
        break;
      case ModuleKind::kModularizedBlock: {
        if (m.stage >= 2 && m.stage <= 4) ++audit.blocks_per_stage[m.stage - 2];
        const int want = config.maintain_from_start ? 4 : m.stage;
        if (m.branches != want) {
          problem(m.name + ": " + std::to_string(m.branches) + " branches, expected " +
                  std::to_string(want));
        }
        break;
      }
      case ModuleKind::kBasicUnit:
        ++units[{m.stage, m.block, m.branch}];
        break;
      case ModuleKind::kFusion: {
        ++audit.fusion_units;
        for (std::size_t i = 0; i < m.combine_nodes.size(); ++i) {
          const LayerNode& node = graph.node(m.combine_nodes[i]);
          const int r = m.fusion_outputs.at(i);
          const bool light_extra = config.light_transition && r == m.fusion_inputs;
          const int want = light_extra ? 1 : m.fusion_inputs;
          ++audit.fusion_terms_checked;
          if (static_cast<int>(node.inputs.size()) != want) {
            problem(m.name + ": output " + std::to_string(r) + " combines " +
                    std::to_string(node.inputs.size()) + " terms, expected " +
                    std::to_string(want));
          }
        }
        break;
      }
      default:
        break;
    }
  }

  if (audit.stage1_units != config.stage_blocks[0] * config.branch_units) {
    problem("stage 1 has " + std::to_string(audit.stage1_units) + " bottleneck units, expected " +
            std::to_string(config.stage_blocks[0] * config.branch_units));
  }
  for (int s = 2; s <= 4; ++s) {
    const int got = audit.blocks_per_stage[s - 2];
    const int want = config.stage_blocks[static_cast<std::size_t>(s - 1)];
    if (got != want) {
      problem("stage " + std::to_string(s) + " has " + std::to_string(got) +
              " modularized blocks, expected " + std::to_string(want));
    }
  }
  for (const auto& [key, count] : units) {
    if (count != config.branch_units) {
      const auto& [s, blk, r] = key;
      problem("stage " + std::to_string(s) + " block " + std::to_string(blk) + " branch " +
              std::to_string(r) + " has " + std::to_string(count) + " residual units");
    }
  }
  if (audit.fusion_units != expected_fusions(config)) {
    problem(std::to_string(audit.fusion_units) + " fusion units, expected " +
            std::to_string(expected_fusions(config)));
  }
  return audit;
}

std::string report_text(const ComplexityReport& report, bool with_rows) {
  std::ostringstream os;
  char line[256];
  os << "model   " << report.label << "\n";
  os << "config  " << (report.config_hash.empty() ? "-" : report.config_hash) << "\n";
  os << "input   " << dims(report.input) << "\n\n";
  if (with_rows) {
    std::snprintf(line, sizeof line, "%-56s %-16s %-18s %12s %16s\n", "node", "kind", "shape",
                  "params", "macs");
    os << line;
    for (const ReportRow& row : report.rows) {
      std::snprintf(line, sizeof line, "%-56s %-16s %-18s %12lld %16lld\n", row.name.c_str(),
                    row.kind.c_str(), dims(row.shape).c_str(),
                    static_cast<long long>(row.cost.params),
                    static_cast<long long>(row.cost.macs));
      os << line;
    }
    os << "\n";
  }
  std::snprintf(line, sizeof line, "%-12s %14s %18s %10s %18s\n", "group", "params", "macs",
                "gflops", "elementwise");
  os << line;
  auto emit = [&](const std::string& name, const Totals& t) {
    std::snprintf(line, sizeof line, "%-12s %14lld %18lld %10.3f %18lld\n", name.c_str(),
                  static_cast<long long>(t.params), static_cast<long long>(t.macs),
                  gflops(t.macs), static_cast<long long>(t.elementwise));
    os << line;
  };
  for (const auto& [g, t] : report.groups) emit(g, t);
  emit("total", report.total);
  std::snprintf(line, sizeof line, "\n#params %.3fM   GFLOPs %.3f\n",
                static_cast<double>(report.total.params) / 1e6, report.gflops());
  os << line;
  return os.str();
}

std::string report_json(const ComplexityReport& report, int indent) {
  nlohmann::ordered_json j;
  j["schema"] = "hrnet-complexity/1";
  j["model"] = report.label;
  j["config_hash"] = report.config_hash.empty() ? nlohmann::ordered_json(nullptr)
                                                 : nlohmann::ordered_json(report.config_hash);
  j["input"] = shape_json(report.input);
  j["totals"] = totals_json(report.total);
  auto groups = nlohmann::ordered_json::array();
  for (const auto& [g, t] : report.groups) {
    nlohmann::ordered_json row = totals_json(t);
    row["group"] = g;
    groups.push_back(std::move(row));
  }
  j["groups"] = std::move(groups);
  auto rows = nlohmann::ordered_json::array();
  for (const ReportRow& r : report.rows) {
    nlohmann::ordered_json row;
    row["name"] = r.name;
    row["kind"] = r.kind;
    row["group"] = r.group;
    row["shape"] = shape_json(r.shape);
    row["params"] = r.cost.params;
    row["macs"] = r.cost.macs;
    row["elementwise"] = r.cost.elementwise;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump(indent);
}

std::string diff_text(const ReportDiff& diff, const std::string& a_name,
                      const std::string& b_name) {
  std::ostringstream os;
  char line[256];
  os << "a = " << a_name << "\nb = " << b_name << "\n\n";
  std::snprintf(line, sizeof line, "%-12s %14s %14s %16s\n", "group", "params b-a", "macs b-a",
                "gflops b-a");
  os << line;
  auto emit = [&](const std::string& name, std::int64_t dp, std::int64_t dm) {
    std::snprintf(line, sizeof line, "%-12s %+14lld %+14lld %+16.4f\n", name.c_str(),
                  static_cast<long long>(dp), static_cast<long long>(dm), gflops(dm));
    os << line;
  };
  for (const GroupDelta& g : diff.groups) emit(g.group, g.param_delta(), g.mac_delta());
  emit("total", diff.param_delta(), diff.mac_delta());
  os << "\nshape changes: " << diff.shape_changes.size() << "\n";
  for (const std::string& s : diff.shape_changes) os << "  " << s << "\n";
  os << "nodes only in a: " << diff.only_in_a.size() << ", only in b: " << diff.only_in_b.size()
     << "\n";
  return os.str();
}

}  // namespace hrnet
