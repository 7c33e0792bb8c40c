#include "hrnet/graph.hpp"

#include <type_traits>

namespace hrnet {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

int round_up(int v, int multiple) { return (v + multiple - 1) / multiple * multiple; }

[[noreturn]] void fail(const LayerNode& node, const std::string& what) {
  throw ShapeError("node '" + node.name + "' (" + std::string(node.kind()) + "): " + what);
}

[[noreturn]] void fail_ladder(const LayerNode& node, const std::string& what) {
  throw LadderError("ladder violation at node '" + node.name + "': " + what);
}

}  // namespace

std::string_view kind_name(const LayerAttrs& attrs) {
  return std::visit(Overloaded{
                        [](const InputLayer&) { return std::string_view("input"); },
                        [](const ConvLayer&) { return std::string_view("conv"); },
                        [](const BatchNormLayer&) { return std::string_view("batch_norm"); },
                        [](const ReluLayer&) { return std::string_view("relu"); },
                        [](const SumLayer&) { return std::string_view("sum"); },
                        [](const MulLayer&) { return std::string_view("mul"); },
                        [](const ConcatLayer&) { return std::string_view("concat"); },
                        [](const ResizeLayer&) { return std::string_view("resize"); },
                        [](const AvgPoolLayer&) { return std::string_view("avg_pool"); },
                        [](const GlobalAvgPoolLayer&) {
                          return std::string_view("global_avg_pool");
                        },
                        [](const LinearLayer&) { return std::string_view("linear"); },
                        [](const PadLayer&) { return std::string_view("pad"); },
                    },
                    attrs);
}

std::string_view module_kind_name(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::kStem: return "stem";
    case ModuleKind::kBottleneck: return "bottleneck";
    case ModuleKind::kBasicUnit: return "basic_unit";
    case ModuleKind::kModularizedBlock: return "modularized_block";
    case ModuleKind::kTransition: return "transition";
    case ModuleKind::kBranchSpawn: return "branch_spawn";
    case ModuleKind::kFusion: return "fusion";
    case ModuleKind::kHead: return "head";
    case ModuleKind::kTask: return "task";
  }
  return "unknown";
}

std::optional<NodeId> Graph::find(std::string_view name) const {
  auto it = node_index_.find(std::string(name));
  if (it == node_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Graph::find_param(std::string_view name) const {
  auto it = param_index_.find(std::string(name));
  if (it == param_index_.end()) return std::nullopt;
  return it->second;
}

std::int64_t Graph::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& p : params_) total += static_cast<std::int64_t>(p.shape.numel());
  return total;
}

GraphBuilder::GraphBuilder(InputSpec spec) : spec_(spec) {}

NodeId GraphBuilder::add(const std::string& name, LayerAttrs attrs,
                         std::vector<NodeId> inputs, int channels) {
  if (name.empty()) throw ShapeError("GraphBuilder: empty node name");
  if (names_.contains(name)) throw ShapeError("GraphBuilder: duplicate node name '" + name + "'");
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) throw ShapeError("GraphBuilder: '" + name + "' has a dangling input");
  }
  LayerNode node;
  node.name = name;
  node.group = group_;
  node.attrs = std::move(attrs);
  node.inputs = std::move(inputs);
  node.channels = channels;
  nodes_.push_back(std::move(node));
  names_.emplace(name, nodes_.size() - 1);
  return nodes_.size() - 1;
}

std::size_t GraphBuilder::add_param(NodeId node, const std::string& name, Shape4 shape,
                                    ParamInit init, int fan_in) {
  params_.push_back(ParamDecl{name, shape, init, fan_in, node});
  nodes_[node].params.push_back(params_.size() - 1);
  return params_.size() - 1;
}

NodeId GraphBuilder::input(int channels) {
  const int index = static_cast<int>(inputs_.size());
  const NodeId id = add("input" + (index == 0 ? std::string() : std::to_string(index)),
                        InputLayer{index}, {}, channels);
  inputs_.push_back(id);
  return id;
}

NodeId GraphBuilder::conv(const std::string& name, NodeId x, int out_channels, int kernel,
                          int stride, bool bias, ParamInit weight_init) {
  const ops::ConvSpec spec = ops::ConvSpec::make(channels(x), out_channels, kernel, stride, bias);
  spec.validate();
  const NodeId id = add(name, ConvLayer{spec}, {x}, out_channels);
  add_param(id, name + ".weight", spec.weight_shape(), weight_init,
            spec.in_channels * kernel * kernel);
  if (bias) add_param(id, name + ".bias", Shape4{out_channels, 1, 1, 1}, ParamInit::kZeros, 1);
  return id;
}

NodeId GraphBuilder::batch_norm(const std::string& name, NodeId x) {
  const int c = channels(x);
  const NodeId id = add(name, BatchNormLayer{1e-5, 0.1, buffers_.size()}, {x}, c);
  buffers_.push_back(name);
  add_param(id, name + ".gamma", Shape4{c, 1, 1, 1}, ParamInit::kOnes, 1);
  add_param(id, name + ".beta", Shape4{c, 1, 1, 1}, ParamInit::kZeros, 1);
  return id;
}

NodeId GraphBuilder::relu(const std::string& name, NodeId x) {
  return add(name, ReluLayer{}, {x}, channels(x));
}

NodeId GraphBuilder::sum(const std::string& name, std::vector<NodeId> xs) {
  if (xs.empty()) throw ShapeError("GraphBuilder: sum '" + name + "' without inputs");
  for (NodeId x : xs) {
    if (channels(x) != channels(xs.front())) {
      throw ShapeError("GraphBuilder: sum '" + name + "' mixes channel counts");
    }
  }
  const int c = channels(xs.front());
  return add(name, SumLayer{}, std::move(xs), c);
}

NodeId GraphBuilder::mul(const std::string& name, std::vector<NodeId> xs) {
  if (xs.empty()) throw ShapeError("GraphBuilder: mul '" + name + "' without inputs");
  for (NodeId x : xs) {
    if (channels(x) != channels(xs.front())) {
      throw ShapeError("GraphBuilder: mul '" + name + "' mixes channel counts");
    }
  }
  const int c = channels(xs.front());
  return add(name, MulLayer{}, std::move(xs), c);
}

NodeId GraphBuilder::concat(const std::string& name, std::vector<NodeId> xs) {
  if (xs.empty()) throw ShapeError("GraphBuilder: concat '" + name + "' without inputs");
  int c = 0;
  for (NodeId x : xs) c += channels(x);
  return add(name, ConcatLayer{}, std::move(xs), c);
}

NodeId GraphBuilder::resize(const std::string& name, NodeId x, int scale_log2) {
  return add(name, ResizeLayer{scale_log2}, {x}, channels(x));
}

NodeId GraphBuilder::avg_pool(const std::string& name, NodeId x, ops::PoolSpec pool) {
  return add(name, AvgPoolLayer{pool}, {x}, channels(x));
}

NodeId GraphBuilder::global_avg_pool(const std::string& name, NodeId x) {
  return add(name, GlobalAvgPoolLayer{}, {x}, channels(x));
}

NodeId GraphBuilder::linear(const std::string& name, NodeId x, int out_features, bool bias) {
  const int in = channels(x);
  const NodeId id = add(name, LinearLayer{in, out_features, bias}, {x}, out_features);
  add_param(id, name + ".weight", Shape4{out_features, in, 1, 1}, ParamInit::kHeUniform, in);
  if (bias) add_param(id, name + ".bias", Shape4{out_features, 1, 1, 1}, ParamInit::kZeros, 1);
  return id;
}

NodeId GraphBuilder::pad(const std::string& name, NodeId x, int multiple) {
  return add(name, PadLayer{multiple}, {x}, channels(x));
}

Graph GraphBuilder::finish(std::vector<NodeId> outputs) && {
  if (outputs.empty()) throw ShapeError("GraphBuilder: graph has no outputs");
  for (NodeId o : outputs) {
    if (o >= nodes_.size()) throw ShapeError("GraphBuilder: unknown output node");
  }
  Graph g;
  g.nodes_ = std::move(nodes_);
  g.params_ = std::move(params_);
  g.buffers_ = std::move(buffers_);
  g.inputs_ = std::move(inputs_);
  g.outputs_ = std::move(outputs);
  g.modules_ = std::move(modules_);
  g.input_spec_ = spec_;
  g.label_ = std::move(label_);
  g.node_index_ = std::move(names_);
  for (std::size_t i = 0; i < g.params_.size(); ++i) {
    if (!g.param_index_.emplace(g.params_[i].name, i).second) {
      throw ShapeError("GraphBuilder: duplicate parameter '" + g.params_[i].name + "'");
    }
  }
  return g;
}

Shape4 admit_input(const InputSpec& spec, const Shape4& input) {
  if (!input.valid()) throw ShapeError("input dims must be positive, got " + to_string(input));
  if (input.c != spec.channels) {
    throw ShapeError("input has " + std::to_string(input.c) + " channels, network expects " +
                     std::to_string(spec.channels));
  }
  if (spec.policy == InputPolicy::kRequireMultiple &&
      (input.h % spec.multiple != 0 || input.w % spec.multiple != 0)) {
    throw LadderError("ladder violation: input " + std::to_string(input.h) + "x" +
                      std::to_string(input.w) + " is not a multiple of " +
                      std::to_string(spec.multiple) + " in both dims");
  }
  return input;
}

Shape4 infer_node_shape(const LayerNode& node, std::span<const Shape4> in) {
  if (in.size() != node.inputs.size()) fail(node, "wrong number of input shapes");
  auto same_shapes = [&](bool ladder) {
    for (std::size_t i = 1; i < in.size(); ++i) {
      if (in[i] != in[0]) {
        const std::string what = "input " + std::to_string(i) + " " + to_string(in[i]) +
                                 " != input 0 " + to_string(in[0]);
        if (ladder) fail_ladder(node, what);
        fail(node, what);
      }
    }
    return in.empty() ? Shape4{} : in[0];
  };
  return std::visit(
      Overloaded{
          [&](const InputLayer&) -> Shape4 { fail(node, "input nodes have no inferred shape"); },
          [&](const ConvLayer& l) -> Shape4 {
            if (in[0].c != l.spec.in_channels) {
              fail(node, "expects " + std::to_string(l.spec.in_channels) +
                             " input channels, got " + std::to_string(in[0].c));
            }
            return l.spec.output_shape(in[0]);
          },
          [&](const BatchNormLayer&) -> Shape4 {
            if (in[0].c != node.channels) fail(node, "channel mismatch");
            return in[0];
          },
          [&](const ReluLayer&) { return in[0]; },
          [&](const SumLayer&) { return same_shapes(true); },
          [&](const MulLayer&) { return same_shapes(true); },
          [&](const ConcatLayer&) -> Shape4 {
            Shape4 out = in[0];
            out.c = 0;
            for (std::size_t i = 0; i < in.size(); ++i) {
              if (in[i].n != in[0].n || in[i].h != in[0].h || in[i].w != in[0].w) {
                fail_ladder(node, "input " + std::to_string(i) + " " + to_string(in[i]) +
                                      " disagrees with " + to_string(in[0]) + " on N/H/W");
              }
              out.c += in[i].c;
            }
            return out;
          },
          [&](const ResizeLayer& l) -> Shape4 {
            Shape4 out = in[0];
            if (l.scale_log2 >= 0) {
              out.h <<= l.scale_log2;
              out.w <<= l.scale_log2;
            } else {
              const int f = 1 << -l.scale_log2;
              if (in[0].h % f != 0 || in[0].w % f != 0) {
                fail_ladder(node, to_string(in[0]) + " not divisible by " + std::to_string(f));
              }
              out.h /= f;
              out.w /= f;
            }
            return out;
          },
          [&](const AvgPoolLayer& l) -> Shape4 {
            Shape4 out = in[0];
            out.h = l.pool.out_size(in[0].h);
            out.w = l.pool.out_size(in[0].w);
            if (out.h < 1 || out.w < 1) fail(node, "input " + to_string(in[0]) + " too small");
            return out;
          },
          [&](const GlobalAvgPoolLayer&) { return Shape4{in[0].n, in[0].c, 1, 1}; },
          [&](const LinearLayer& l) -> Shape4 {
            const std::size_t features = static_cast<std::size_t>(in[0].c) * in[0].plane();
            if (features != static_cast<std::size_t>(l.in_features)) {
              fail(node, "expects " + std::to_string(l.in_features) + " features, got " +
                             std::to_string(features));
            }
            return Shape4{in[0].n, l.out_features, 1, 1};
          },
          [&](const PadLayer& l) -> Shape4 {
            Shape4 out = in[0];
            out.h = round_up(in[0].h, l.multiple);
            out.w = round_up(in[0].w, l.multiple);
            return out;
          },
      },
      node.attrs);
}

}  // namespace hrnet
