#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "hrnet/ops.hpp"
#include "hrnet/tensor.hpp"

namespace hrnet {

/// Input sizes that break the 2x resolution ladder.
class LadderError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

using NodeId = std::size_t;

struct InputLayer {
  int index = 0;
};
struct ConvLayer {
  ops::ConvSpec spec;
};
struct BatchNormLayer {
  double epsilon = 1e-5;
  double momentum = 0.1;
  std::size_t buffer = 0;  // index into Graph::buffers()
};
struct ReluLayer {};
struct SumLayer {};
struct MulLayer {};
struct ConcatLayer {};
/// Bilinear resize by 2^scale_log2 (negative = downsample).
struct ResizeLayer {
  int scale_log2 = 0;
};
struct AvgPoolLayer {
  ops::PoolSpec pool;
};
struct GlobalAvgPoolLayer {};
struct LinearLayer {
  int in_features = 1;
  int out_features = 1;
  bool has_bias = true;
};
/// Bottom/right zero padding of H and W up to the next multiple.
struct PadLayer {
  int multiple = 32;
};

using LayerAttrs =
    std::variant<InputLayer, ConvLayer, BatchNormLayer, ReluLayer, SumLayer, MulLayer,
                 ConcatLayer, ResizeLayer, AvgPoolLayer, GlobalAvgPoolLayer,
                 LinearLayer, PadLayer>;

std::string_view kind_name(const LayerAttrs& attrs);

struct LayerNode {
  std::string name;
  /// Reporting group: stem, stage1..4, transition, fusion, head, task.
  std::string group;
  LayerAttrs attrs;
  std::vector<NodeId> inputs;
  std::vector<std::size_t> params;  // indices into Graph::params()
  int channels = 0;                 // output channel count

  std::string_view kind() const { return kind_name(attrs); }
  template <typename T>
  const T* as() const {
    return std::get_if<T>(&attrs);
  }
};

/// kSmallUniform draws from U(-1e-3, 1e-3); used for prediction layers so the
/// untrained network starts near zero output.
enum class ParamInit { kHeUniform, kSmallUniform, kOnes, kZeros };

struct ParamDecl {
  std::string name;
  Shape4 shape;
  ParamInit init = ParamInit::kZeros;
  int fan_in = 1;
  NodeId node = 0;
};

enum class InputPolicy { kRequireMultiple, kPadToMultiple, kAny };

struct InputSpec {
  int channels = 3;
  int multiple = 32;
  InputPolicy policy = InputPolicy::kRequireMultiple;
};

enum class ModuleKind {
  kStem,
  kBottleneck,
  kBasicUnit,
  kModularizedBlock,
  kTransition,
  kBranchSpawn,
  kFusion,
  kHead,
  kTask,
};

std::string_view module_kind_name(ModuleKind kind);

enum class FusionRole { kNone, kWithin, kAcross, kFinal };

/// Structural metadata emitted next to the primitive nodes; audits read it.
struct ModuleRecord {
  ModuleKind kind = ModuleKind::kStem;
  std::string name;
  int stage = 0;
  int block = -1;
  int branch = -1;
  int branches = 0;  // blocks: branch count
  int units = 0;     // blocks: residual units per branch
  FusionRole role = FusionRole::kNone;
  int fusion_inputs = 0;
  std::vector<int> fusion_outputs;       // resolution indices, 0-based
  std::vector<NodeId> combine_nodes;     // one per fusion output
};

/// Immutable network: topologically ordered primitive nodes plus a named
/// parameter registry.
class Graph {
 public:
  const std::vector<LayerNode>& nodes() const { return nodes_; }
  const LayerNode& node(NodeId id) const { return nodes_.at(id); }
  std::optional<NodeId> find(std::string_view name) const;

  const std::vector<ParamDecl>& params() const { return params_; }
  std::optional<std::size_t> find_param(std::string_view name) const;
  /// Running-statistics buffers, one per batch-norm node (not parameters).
  const std::vector<std::string>& buffers() const { return buffers_; }

  const std::vector<NodeId>& inputs() const { return inputs_; }
  const std::vector<NodeId>& outputs() const { return outputs_; }
  const InputSpec& input_spec() const { return input_spec_; }
  const std::vector<ModuleRecord>& modules() const { return modules_; }

  std::int64_t parameter_count() const;
  const std::string& label() const { return label_; }

 private:
  friend class GraphBuilder;

  std::vector<LayerNode> nodes_;
  std::vector<ParamDecl> params_;
  std::vector<std::string> buffers_;
  std::vector<NodeId> inputs_;
  std::vector<NodeId> outputs_;
  std::vector<ModuleRecord> modules_;
  InputSpec input_spec_;
  std::string label_;
  std::unordered_map<std::string, NodeId> node_index_;
  std::unordered_map<std::string, std::size_t> param_index_;
};

/// Appends nodes in topological order; channel counts are tracked so layer
/// wiring errors surface at build time.
class GraphBuilder {
 public:
  explicit GraphBuilder(InputSpec spec = {});

  NodeId input(int channels);
  NodeId conv(const std::string& name, NodeId x, int out_channels, int kernel,
              int stride = 1, bool bias = false,
              ParamInit weight_init = ParamInit::kHeUniform);
  NodeId batch_norm(const std::string& name, NodeId x);
  NodeId relu(const std::string& name, NodeId x);
  NodeId sum(const std::string& name, std::vector<NodeId> xs);
  NodeId mul(const std::string& name, std::vector<NodeId> xs);
  NodeId concat(const std::string& name, std::vector<NodeId> xs);
  NodeId resize(const std::string& name, NodeId x, int scale_log2);
  NodeId avg_pool(const std::string& name, NodeId x, ops::PoolSpec pool);
  NodeId global_avg_pool(const std::string& name, NodeId x);
  NodeId linear(const std::string& name, NodeId x, int out_features, bool bias = true);
  NodeId pad(const std::string& name, NodeId x, int multiple);

  int channels(NodeId x) const { return nodes_.at(x).channels; }
  void set_group(std::string group) { group_ = std::move(group); }
  void add_module(ModuleRecord record) { modules_.push_back(std::move(record)); }
  void set_label(std::string label) { label_ = std::move(label); }

  Graph finish(std::vector<NodeId> outputs) &&;

 private:
  NodeId add(const std::string& name, LayerAttrs attrs, std::vector<NodeId> inputs,
             int channels);
  std::size_t add_param(NodeId node, const std::string& name, Shape4 shape,
                        ParamInit init, int fan_in);

  InputSpec spec_;
  std::string group_ = "input";
  std::string label_;
  std::vector<LayerNode> nodes_;
  std::vector<ParamDecl> params_;
  std::vector<std::string> buffers_;
  std::vector<NodeId> inputs_;
  std::vector<ModuleRecord> modules_;
  std::unordered_map<std::string, NodeId> names_;
};

/// Output shape of `node` given its input shapes; throws ShapeError (or
/// LadderError) naming the node on any inconsistency.
Shape4 infer_node_shape(const LayerNode& node, std::span<const Shape4> inputs);

/// Applies the graph's input policy; returns the shape entering the network.
Shape4 admit_input(const InputSpec& spec, const Shape4& input);

}  // namespace hrnet
