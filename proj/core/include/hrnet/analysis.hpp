#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hrnet/config.hpp"
#include "hrnet/graph.hpp"

namespace hrnet {

/// Output shape of every node, indexed by NodeId. Throws ShapeError or
/// LadderError naming the first inconsistent node.
std::vector<Shape4> infer_shapes(const Graph& graph, std::span<const Shape4> inputs);
std::vector<Shape4> infer_shapes(const Graph& graph, const Shape4& input);

struct Totals {
  std::int64_t params = 0;
  /// Conv and linear multiply-accumulates; the headline FLOPs figure.
  std::int64_t macs = 0;
  /// BN, ReLU, sum/mul, resize and pooling work, reported separately.
  std::int64_t elementwise = 0;

  Totals& operator+=(const Totals& o) {
    params += o.params;
    macs += o.macs;
    elementwise += o.elementwise;
    return *this;
  }
  friend bool operator==(const Totals&, const Totals&) = default;
};

struct ReportRow {
  std::string name;
  std::string kind;
  std::string group;
  std::optional<Shape4> shape;
  Totals cost;
};

Totals sum_rows(std::span<const ReportRow> rows);

/// GFLOPs as the published tables count them: MACs / 2^30.
double gflops(std::int64_t macs);

struct ComplexityReport {
  std::string label;
  std::string config_hash;
  std::optional<Shape4> input;
  std::vector<ReportRow> rows;  // one per graph node, graph order
  std::vector<std::pair<std::string, Totals>> groups;  // first-seen order
  Totals total;

  double gflops() const { return hrnet::gflops(total.macs); }
  const Totals* group(std::string_view name) const;
};

/// Parameter-only report: shapes and MACs are left empty.
ComplexityReport count_params(const Graph& graph);
/// Parameters, MACs and elementwise counts at the given input dims.
ComplexityReport count_flops(const Graph& graph, const Shape4& input);

struct GroupDelta {
  std::string group;
  Totals a;
  Totals b;
  std::int64_t param_delta() const { return b.params - a.params; }
  std::int64_t mac_delta() const { return b.macs - a.macs; }
};

struct ReportDiff {
  std::vector<GroupDelta> groups;
  Totals a;
  Totals b;
  /// Nodes present in both reports whose output shapes differ.
  std::vector<std::string> shape_changes;
  std::vector<std::string> only_in_a;
  std::vector<std::string> only_in_b;

  std::int64_t param_delta() const { return b.params - a.params; }
  std::int64_t mac_delta() const { return b.macs - a.macs; }
  bool shapes_equal() const { return shape_changes.empty(); }
};

/// Rows are matched by node name; deltas are b - a.
ReportDiff compare_reports(const ComplexityReport& a, const ComplexityReport& b);

struct StructureAudit {
  std::vector<int> blocks_per_stage;  // stages 2..4
  int stage1_units = 0;
  int fusion_units = 0;
  int fusion_terms_checked = 0;
  std::vector<std::string> problems;

  bool ok() const { return problems.empty(); }
};

/// Cross-checks the module records against the config: block and unit
/// counts, branch counts, fusion-unit count for the design, and that every
/// fusion output combines exactly one term per input.
StructureAudit audit_structure(const Graph& graph, const ArchConfig& config);

/// Expected number of fusion units for a config.
int expected_fusions(const ArchConfig& config);

/// Closed-form parameter total of every strided-conv downsample path in the
/// fusion units of `graph`, i.e. what the bilinear-downsample variant drops.
std::int64_t strided_downsample_params(const Graph& graph, const ArchConfig& config);

std::string report_text(const ComplexityReport& report, bool with_rows = false);
std::string report_json(const ComplexityReport& report, int indent = 2);
std::string diff_text(const ReportDiff& diff, const std::string& a_name,
                      const std::string& b_name);

}  // namespace hrnet
