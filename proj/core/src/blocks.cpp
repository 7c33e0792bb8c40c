#include "hrnet/blocks.hpp"

#include <algorithm>
#include <stdexcept>

namespace hrnet {

std::int64_t BottleneckUnit::param_count() const {
  std::int64_t total = ConvStep{in_channels, width, 1, 1, true}.param_count() +
                       ConvStep{width, width, 3, stride, true}.param_count() +
                       ConvStep{width, out_channels, 1, 1, false}.param_count();
  if (has_projection()) total += ConvStep{in_channels, out_channels, 1, stride}.param_count();
  return total;
}

int TransformPath::strided_convs() const {
  return static_cast<int>(
      std::count_if(convs.begin(), convs.end(), [](const ConvStep& s) { return s.stride == 2; }));
}

std::int64_t TransformPath::param_count() const {
  std::int64_t total = 0;
  for (const ConvStep& s : convs) total += s.param_count();
  return total;
}

const TransformPath* FusionUnit::path(int from, int to) const {
  for (const TransformPath& p : paths) {
    if (p.from == from && p.to == to) return &p;
  }
  return nullptr;
}

std::vector<const TransformPath*> FusionUnit::terms(int to) const {
  std::vector<const TransformPath*> out;
  for (const TransformPath& p : paths) {
    if (p.to == to) out.push_back(&p);
  }
  return out;
}

std::int64_t FusionUnit::param_count() const {
  std::int64_t total = 0;
  for (const TransformPath& p : paths) total += p.param_count();
  return total;
}

FusionUnit build_fusion(std::vector<int> in_widths, bool add_lower, FusionOptions options,
                        std::optional<std::vector<int>> outputs) {
  if (in_widths.empty()) throw std::invalid_argument("build_fusion: empty input list");
  for (int w : in_widths) {
    if (w < 1) throw std::invalid_argument("build_fusion: widths must be positive");
  }
  const int n = static_cast<int>(in_widths.size());
  std::vector<int> widths = in_widths;
  if (add_lower) widths.push_back(2 * in_widths.back());
  const int total = static_cast<int>(widths.size());

  FusionUnit unit;
  unit.in_widths = std::move(in_widths);
  unit.add_lower = add_lower;
  unit.options = options;
  if (outputs) {
    unit.outputs = *outputs;
  } else {
    for (int r = 0; r < total; ++r) unit.outputs.push_back(r);
  }
  if (unit.outputs.empty()) throw std::invalid_argument("build_fusion: no outputs requested");

  for (int r : unit.outputs) {
    if (r < 0 || r >= total) {
      throw std::invalid_argument("build_fusion: output resolution " + std::to_string(r) +
                                  " out of range");
    }
    unit.out_widths.push_back(widths[r]);
    const int first = (r == n && options.light_transition) ? n - 1 : 0;
    for (int x = first; x < n; ++x) {
      TransformPath p;
      p.from = x;
      p.to = r;
      if (x == r) {
        p.kind = TransformKind::kIdentity;
      } else if (x < r) {
        p.kind = TransformKind::kDownsample;
        const int gap = r - x;
        if (options.downsample == DownsampleKind::kStridedConv) {
          for (int g = 0; g < gap; ++g) {
            const bool last = g == gap - 1;
            p.convs.push_back({widths[x], last ? widths[r] : widths[x], 3, 2, !last});
          }
        } else {
          if (widths[r] % widths[x] != 0) {
            throw std::invalid_argument("build_fusion: bilinear downsample needs the target width "
                                        "to be a multiple of the source width");
          }
          p.resize_log2 = -gap;
          p.channel_tiles = widths[r] / widths[x];
        }
      } else {
        p.kind = TransformKind::kUpsample;
        p.convs.push_back({widths[x], widths[r], 1, 1, false});
        p.resize_log2 = x - r;
      }
      unit.paths.push_back(std::move(p));
    }
  }
  return unit;
}

NodeId emit_conv_bn(GraphBuilder& b, const std::string& name, NodeId x, int out, int kernel,
                    int stride, bool relu, bool bias) {
  NodeId y = b.conv(name, x, out, kernel, stride, bias);
  y = b.batch_norm(name + ".bn", y);
  if (relu) y = b.relu(name + ".relu", y);
  return y;
}

NodeId emit_basic_unit(GraphBuilder& b, const std::string& name, NodeId x,
                       const BasicResidualUnit& unit) {
  if (b.channels(x) != unit.width) {
    throw ShapeError(name + ": basic unit of width " + std::to_string(unit.width) + " got " +
                     std::to_string(b.channels(x)) + " channels");
  }
  NodeId y = emit_conv_bn(b, name + ".conv1", x, unit.width, 3, 1, true);
  y = emit_conv_bn(b, name + ".conv2", y, unit.width, 3, 1, false);
  y = b.sum(name + ".add", {y, x});
  return b.relu(name + ".relu", y);
}

NodeId emit_bottleneck(GraphBuilder& b, const std::string& name, NodeId x,
                       const BottleneckUnit& unit) {
  if (b.channels(x) != unit.in_channels) {
    throw ShapeError(name + ": bottleneck expects " + std::to_string(unit.in_channels) +
                     " channels, got " + std::to_string(b.channels(x)));
  }
  NodeId y = emit_conv_bn(b, name + ".conv1", x, unit.width, 1, 1, true);
  y = emit_conv_bn(b, name + ".conv2", y, unit.width, 3, unit.stride, true);
  y = emit_conv_bn(b, name + ".conv3", y, unit.out_channels, 1, 1, false);
  NodeId shortcut = x;
  if (unit.has_projection()) {
    shortcut = emit_conv_bn(b, name + ".proj", x, unit.out_channels, 1, unit.stride, false);
  }
  y = b.sum(name + ".add", {y, shortcut});
  return b.relu(name + ".relu", y);
}

namespace {

NodeId emit_path(GraphBuilder& b, const std::string& name, NodeId x, const TransformPath& p,
                 UpsampleOrder order) {
  const std::string base = name + ".p" + std::to_string(p.from) + "to" + std::to_string(p.to);
  auto convs = [&](NodeId y) {
    for (std::size_t g = 0; g < p.convs.size(); ++g) {
      const ConvStep& s = p.convs[g];
      y = emit_conv_bn(b, base + ".conv" + std::to_string(g), y, s.out_channels, s.kernel,
                       s.stride, s.relu);
    }
    return y;
  };
  switch (p.kind) {
    case TransformKind::kIdentity:
      return x;
    case TransformKind::kDownsample: {
      if (!p.convs.empty()) return convs(x);
      NodeId y = b.resize(base + ".resize", x, p.resize_log2);
      if (p.channel_tiles > 1) {
        y = b.concat(base + ".tile", std::vector<NodeId>(static_cast<std::size_t>(p.channel_tiles), y));
      }
      return y;
    }
    case TransformKind::kUpsample:
      if (order == UpsampleOrder::kConvFirst) {
        return b.resize(base + ".resize", convs(x), p.resize_log2);
      }
      return convs(b.resize(base + ".resize", x, p.resize_log2));
  }
  return x;
}

}  // namespace

FusionNodes emit_fusion(GraphBuilder& b, const std::string& name,
                        std::span<const NodeId> inputs, const FusionUnit& unit) {
  if (inputs.size() != unit.in_widths.size()) {
    throw ShapeError(name + ": fusion expects " + std::to_string(unit.in_widths.size()) +
                     " inputs, got " + std::to_string(inputs.size()));
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (b.channels(inputs[i]) != unit.in_widths[i]) {
      throw ShapeError(name + ": input " + std::to_string(i) + " has " +
                       std::to_string(b.channels(inputs[i])) + " channels, expected " +
                       std::to_string(unit.in_widths[i]));
    }
  }
  FusionNodes out;
  for (int r : unit.outputs) {
    const std::string oname = name + ".out" + std::to_string(r);
    std::vector<NodeId> terms;
    for (const TransformPath* p : unit.terms(r)) {
      terms.push_back(emit_path(b, name, inputs[static_cast<std::size_t>(p->from)], *p,
                                unit.options.upsample_order));
    }
    NodeId combined;
    if (terms.size() == 1) {
      combined = b.relu(oname + ".relu", terms.front());
      out.combine.push_back(combined);
    } else {
      const NodeId c = unit.options.combine == Combine::kSum ? b.sum(oname + ".combine", terms)
                                                             : b.mul(oname + ".combine", terms);
      out.combine.push_back(c);
      combined = b.relu(oname + ".relu", c);
    }
    out.outputs.push_back(combined);
  }
  return out;
}

Graph fusion_graph(const FusionUnit& unit) {
  GraphBuilder b(InputSpec{unit.in_widths.front(), 1, InputPolicy::kAny});
  std::vector<NodeId> inputs;
  for (int w : unit.in_widths) inputs.push_back(b.input(w));
  b.set_group("fusion");
  FusionNodes nodes = emit_fusion(b, "fusion", inputs, unit);
  b.set_label("fusion");
  return std::move(b).finish(nodes.outputs);
}

std::vector<Tensor4> fusion_forward(const FusionUnit& unit, const Graph& graph,
                                    const ParamStore& params, std::span<const Tensor4> inputs,
                                    Mode mode) {
  if (inputs.size() != unit.in_widths.size()) {
    throw ShapeError("fusion_forward: expected " + std::to_string(unit.in_widths.size()) +
                     " inputs, got " + std::to_string(inputs.size()));
  }
  return run(graph, params, inputs, mode);
}

Graph residual_graph(const BasicResidualUnit& unit) {
  GraphBuilder b(InputSpec{unit.width, 1, InputPolicy::kAny});
  const NodeId x = b.input(unit.width);
  b.set_group("unit");
  const NodeId y = emit_basic_unit(b, "unit", x, unit);
  b.set_label("basic_unit");
  return std::move(b).finish({y});
}

Graph residual_graph(const BottleneckUnit& unit) {
  GraphBuilder b(InputSpec{unit.in_channels, 1, InputPolicy::kAny});
  const NodeId x = b.input(unit.in_channels);
  b.set_group("unit");
  const NodeId y = emit_bottleneck(b, "unit", x, unit);
  b.set_label("bottleneck");
  return std::move(b).finish({y});
}

Tensor4 residual_forward(const Graph& graph, const ParamStore& params, const Tensor4& input,
                         Mode mode) {
  const Tensor4 ins[] = {input};
  return run(graph, params, ins, mode).front();
}

}  // namespace hrnet
