#pragma once

#include <span>
#include <vector>

#include "hrnet/config.hpp"
#include "hrnet/graph.hpp"

namespace hrnet {

/// Builds the full network: stem, stage 1, transitions, stages 2-4, the head
/// and (when the config asks for outputs) the task layer.
Graph build(const ArchConfig& config);

/// Highest-resolution branch; with `align`, a 1x1 conv + BN + ReLU to 15C.
NodeId build_head_v1(GraphBuilder& b, std::span<const NodeId> branches, bool align);
/// Upsample every branch to the highest resolution, concatenate, mix with a
/// 1x1 conv + BN + ReLU of the same width.
NodeId build_head_v2(GraphBuilder& b, std::span<const NodeId> branches);
/// Levels from 2x2 stride-2 ceil-mode average pooling of `v2`, each mapped by a
/// 1x1 conv (with bias) to `width` channels.
std::vector<NodeId> build_head_v2p(GraphBuilder& b, NodeId v2, int levels, int width);
/// Pre-classifier feature vector (N, F, 1, 1) for the classification variants.
NodeId build_head_classification(GraphBuilder& b, std::span<const NodeId> branches,
                                 HeadKind variant);

}  // namespace hrnet
