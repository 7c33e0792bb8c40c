#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hrnet/executor.hpp"
#include "hrnet/graph.hpp"

namespace hrnet {

enum class Combine { kSum, kMultiply };
enum class DownsampleKind { kStridedConv, kBilinear };
enum class UpsampleOrder { kConvFirst, kResizeFirst };
enum class TransformKind { kIdentity, kDownsample, kUpsample };

/// Two 3x3 conv + BN layers with an identity shortcut.
struct BasicResidualUnit {
  int width = 1;

  std::int64_t param_count() const {
    return 2 * (9LL * width * width) + 2 * (2LL * width);
  }
};

/// 1x1 reduce, 3x3 (carrying the stride), 1x1 expand, BN after each; a 1x1
/// conv + BN projection shortcut whenever the shape changes.
struct BottleneckUnit {
  int in_channels = 1;
  int width = 1;
  int out_channels = 4;
  int stride = 1;

  static BottleneckUnit make(int in_channels, int width, int stride = 1) {
    return {in_channels, width, 4 * width, stride};
  }
  bool has_projection() const { return in_channels != out_channels || stride != 1; }
  std::int64_t param_count() const;
};

/// One conv + BN step of a transform path, optionally followed by ReLU.
struct ConvStep {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  bool relu = false;

  std::int64_t param_count() const {
    return static_cast<std::int64_t>(kernel) * kernel * in_channels * out_channels +
           2LL * out_channels;
  }
};

/// The transform f_xr taking resolution `from` to resolution `to`.
struct TransformPath {
  int from = 0;
  int to = 0;
  TransformKind kind = TransformKind::kIdentity;
  std::vector<ConvStep> convs;
  /// Bilinear resize exponent (positive = upsample); 0 means no resize.
  int resize_log2 = 0;
  /// Parameter-free channel replication used by bilinear downsampling.
  int channel_tiles = 1;

  int strided_convs() const;
  std::int64_t param_count() const;
};

struct FusionOptions {
  Combine combine = Combine::kSum;
  DownsampleKind downsample = DownsampleKind::kStridedConv;
  UpsampleOrder upsample_order = UpsampleOrder::kConvFirst;
  /// New-branch output fed by the lowest input only.
  bool light_transition = false;
};

struct FusionUnit {
  std::vector<int> in_widths;
  std::vector<int> outputs;      // resolution indices produced
  std::vector<int> out_widths;   // parallel to outputs
  bool add_lower = false;
  FusionOptions options;
  /// Grouped by output in `outputs` order, inputs ascending inside a group.
  std::vector<TransformPath> paths;

  const TransformPath* path(int from, int to) const;
  std::vector<const TransformPath*> terms(int to) const;
  std::int64_t param_count() const;
};

/// Builds the transform matrix. `outputs` defaults to every input resolution
/// (plus the new lower one when `add_lower`); the final block of a network
/// may keep only a subset.
FusionUnit build_fusion(std::vector<int> in_widths, bool add_lower,
                        FusionOptions options = {},
                        std::optional<std::vector<int>> outputs = std::nullopt);

// -- graph emission -----------------------------------------------------------

NodeId emit_conv_bn(GraphBuilder& b, const std::string& name, NodeId x, int out,
                    int kernel, int stride, bool relu, bool bias = false);
NodeId emit_basic_unit(GraphBuilder& b, const std::string& name, NodeId x,
                       const BasicResidualUnit& unit);
NodeId emit_bottleneck(GraphBuilder& b, const std::string& name, NodeId x,
                       const BottleneckUnit& unit);

struct FusionNodes {
  std::vector<NodeId> outputs;   // parallel to FusionUnit::outputs
  std::vector<NodeId> combine;   // node whose inputs are the combined terms
};
FusionNodes emit_fusion(GraphBuilder& b, const std::string& name,
                        std::span<const NodeId> inputs, const FusionUnit& unit);

// -- standalone execution -------------------------------------------------------

/// One input per resolution; parameters are named "fusion.*".
Graph fusion_graph(const FusionUnit& unit);
/// Runs the unit on `inputs`; throws LadderError when the inputs are not an
/// exact 2x resolution ladder.
std::vector<Tensor4> fusion_forward(const FusionUnit& unit, const Graph& graph,
                                    const ParamStore& params,
                                    std::span<const Tensor4> inputs,
                                    Mode mode = Mode::kEval);

/// Parameters are named "unit.*".
Graph residual_graph(const BasicResidualUnit& unit);
Graph residual_graph(const BottleneckUnit& unit);
Tensor4 residual_forward(const Graph& graph, const ParamStore& params,
                         const Tensor4& input, Mode mode = Mode::kEval);

}  // namespace hrnet
