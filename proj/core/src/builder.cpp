#include "hrnet/builder.hpp"

#include "hrnet/blocks.hpp"

namespace hrnet {
namespace {

constexpr int kStemWidth = 64;
constexpr int kStage1Width = 64;

std::string stage_name(int s) { return "stage" + std::to_string(s); }

ModuleRecord record(ModuleKind kind, std::string name, int stage = 0, int block = -1,
                    int branch = -1) {
  ModuleRecord r;
  r.kind = kind;
  r.name = std::move(name);
  r.stage = stage;
  r.block = block;
  r.branch = branch;
  return r;
}

void record_fusion(GraphBuilder& b, const std::string& name, int stage, int block,
                   FusionRole role, const FusionUnit& unit, const FusionNodes& nodes) {
  ModuleRecord rec;
  rec.kind = ModuleKind::kFusion;
  rec.name = name;
  rec.stage = stage;
  rec.block = block;
  rec.role = role;
  rec.fusion_inputs = static_cast<int>(unit.in_widths.size());
  rec.fusion_outputs = unit.outputs;
  rec.combine_nodes = nodes.combine;
  b.add_module(std::move(rec));
}

/// Conv chain from the stage-1 output to the branch at resolution r.
NodeId transition_branch(GraphBuilder& b, const std::string& name, NodeId x, int r, int width) {
  if (r == 0) return emit_conv_bn(b, name, x, width, 3, 1, true);
  NodeId y = x;
  for (int g = 0; g < r; ++g) {
    y = emit_conv_bn(b, name + ".conv" + std::to_string(g), y, width, 3, 2, true);
  }
  return y;
}

}  // namespace

NodeId build_head_v1(GraphBuilder& b, std::span<const NodeId> branches, bool align) {
  const NodeId x = branches.front();
  if (!align) return x;
  return emit_conv_bn(b, "head.align", x, 15 * b.channels(x), 1, 1, true);
}

NodeId build_head_v2(GraphBuilder& b, std::span<const NodeId> branches) {
  std::vector<NodeId> parts{branches.front()};
  for (std::size_t r = 1; r < branches.size(); ++r) {
    parts.push_back(b.resize("head.up" + std::to_string(r), branches[r], static_cast<int>(r)));
  }
  const NodeId cat = b.concat("head.concat", parts);
  return emit_conv_bn(b, "head.mix", cat, b.channels(cat), 1, 1, true);
}

std::vector<NodeId> build_head_v2p(GraphBuilder& b, NodeId v2, int levels, int width) {
  std::vector<NodeId> out;
  NodeId level = v2;
  for (int i = 0; i < levels; ++i) {
    const std::string name = "head.level" + std::to_string(i);
    if (i > 0) level = b.avg_pool(name + ".pool", level, ops::PoolSpec{2, 2, true});
    out.push_back(b.conv(name + ".conv", level, width, 1, 1, true));
  }
  return out;
}

NodeId build_head_classification(GraphBuilder& b, std::span<const NodeId> branches,
                                 HeadKind variant) {
  switch (variant) {
    case HeadKind::kClsCi: {
      std::vector<NodeId> pooled;
      for (std::size_t r = 0; r < branches.size(); ++r) {
        pooled.push_back(b.global_avg_pool("head.pool" + std::to_string(r), branches[r]));
      }
      return b.concat("head.concat", pooled);
    }
    case HeadKind::kClsCii: {
      const int n = static_cast<int>(branches.size());
      std::vector<NodeId> ends;
      for (int r = 0; r < n; ++r) {
        NodeId y = branches[static_cast<std::size_t>(r)];
        const int steps = n - r;
        for (int i = 0; i < steps; ++i) {
          const int out = 512 >> (steps - 1 - i);
          const BottleneckUnit unit{b.channels(y), out / 4, out, 2};
          y = emit_bottleneck(b, "head.branch" + std::to_string(r) + ".down" + std::to_string(i),
                              y, unit);
        }
        ends.push_back(y);
      }
      const NodeId cat = b.concat("head.concat", ends);
      return b.global_avg_pool("head.pool", cat);
    }
    default: {
      std::vector<NodeId> incre;
      for (std::size_t r = 0; r < branches.size(); ++r) {
        const int width = 32 << r;
        incre.push_back(emit_bottleneck(b, "head.incre" + std::to_string(r), branches[r],
                                        BottleneckUnit::make(b.channels(branches[r]), width)));
      }
      NodeId y = incre.front();
      for (std::size_t r = 1; r < incre.size(); ++r) {
        const std::string name = "head.down" + std::to_string(r);
        y = emit_conv_bn(b, name, y, b.channels(incre[r]), 3, 2, true, true);
        y = b.sum("head.merge" + std::to_string(r), {incre[r], y});
      }
      y = emit_conv_bn(b, "head.final", y, 2048, 1, 1, true, true);
      return b.global_avg_pool("head.pool", y);
    }
  }
}

Graph build(const ArchConfig& config) {
  config.validate();
  const bool pad = config.head == HeadKind::kV2p;
  GraphBuilder b(InputSpec{3, 32, pad ? InputPolicy::kPadToMultiple : InputPolicy::kRequireMultiple});
  b.set_label("hrnet-" + std::string(to_string(config.head)) + "-w" +
              std::to_string(config.width_c));
  const FusionOptions fopts = config.fusion_options();

  NodeId x = b.input(3);
  b.set_group("stem");
  if (pad) x = b.pad("pad", x, 32);
  x = emit_conv_bn(b, "stem.conv1", x, kStemWidth, 3, 2, true);
  x = emit_conv_bn(b, "stem.conv2", x, kStemWidth, 3, 2, true);
  b.add_module(record(ModuleKind::kStem, "stem"));

  b.set_group("stage1");
  const int stage1_units = config.stage_blocks[0] * config.branch_units;
  for (int u = 0; u < stage1_units; ++u) {
    const std::string name = "stage1.unit" + std::to_string(u);
    x = emit_bottleneck(b, name, x, BottleneckUnit::make(b.channels(x), kStage1Width));
    b.add_module(record(ModuleKind::kBottleneck, name, 1, u / config.branch_units, 0));
  }

  b.set_group("transition");
  const int initial = config.maintain_from_start ? 4 : 2;
  std::vector<NodeId> branches;
  for (int r = 0; r < initial; ++r) {
    const std::string name = "transition1.branch" + std::to_string(r);
    branches.push_back(transition_branch(b, name, x, r, config.branch_width(r)));
    b.add_module(record(ModuleKind::kTransition, name, 1, -1, r));
  }

  const bool v1_like = config.head == HeadKind::kV1 || config.head == HeadKind::kV1h;
  for (int s = 2; s <= 4; ++s) {
    const int blocks = config.stage_blocks[static_cast<std::size_t>(s - 1)];
    for (int blk = 0; blk < blocks; ++blk) {
      const std::string bname = stage_name(s) + ".block" + std::to_string(blk);
      const int nb = static_cast<int>(branches.size());
      b.set_group(stage_name(s));
      for (int r = 0; r < nb; ++r) {
        for (int u = 0; u < config.branch_units; ++u) {
          const std::string uname =
              bname + ".branch" + std::to_string(r) + ".unit" + std::to_string(u);
          auto& br = branches[static_cast<std::size_t>(r)];
          br = emit_basic_unit(b, uname, br, BasicResidualUnit{config.branch_width(r)});
          b.add_module(record(ModuleKind::kBasicUnit, uname, s, blk, r));
        }
      }
      ModuleRecord block = record(ModuleKind::kModularizedBlock, bname, s, blk);
      block.branches = nb;
      block.units = config.branch_units;
      b.add_module(std::move(block));

      const bool last = blk == blocks - 1;
      FusionRole role = FusionRole::kWithin;
      if (last) role = s == 4 ? FusionRole::kFinal : FusionRole::kAcross;
      const bool grows = last && s < 4 && !config.maintain_from_start;
      bool fuse = false;
      switch (config.fusion_design) {
        case FusionDesign::kC: fuse = true; break;
        case FusionDesign::kB: fuse = role != FusionRole::kWithin; break;
        case FusionDesign::kA: fuse = role == FusionRole::kFinal; break;
      }

      if (fuse) {
        std::vector<int> widths;
        for (NodeId br : branches) widths.push_back(b.channels(br));
        std::optional<std::vector<int>> outs;
        if (role == FusionRole::kFinal && v1_like) outs = std::vector<int>{0};
        const FusionUnit unit = build_fusion(widths, grows, fopts, outs);
        const std::string fname = bname + ".fuse";
        b.set_group("fusion");
        const FusionNodes nodes = emit_fusion(b, fname, branches, unit);
        record_fusion(b, fname, s, blk, role, unit, nodes);
        branches = nodes.outputs;
      } else if (grows) {
        const std::string name = stage_name(s) + ".spawn";
        b.set_group("transition");
        const NodeId low = branches.back();
        branches.push_back(emit_conv_bn(b, name, low, 2 * b.channels(low), 3, 2, true));
        b.add_module(record(ModuleKind::kBranchSpawn, name, s, -1,
                            static_cast<int>(branches.size()) - 1));
      }
    }
  }

  b.set_group("head");
  const int k = config.outputs();
  std::vector<NodeId> outputs;
  NodeId rep = 0;
  switch (config.head) {
    case HeadKind::kV1:
    case HeadKind::kV1h:
      rep = build_head_v1(b, branches, config.head == HeadKind::kV1h);
      break;
    case HeadKind::kV2:
    case HeadKind::kV2p:
      rep = build_head_v2(b, branches);
      break;
    default:
      rep = build_head_classification(b, branches, config.head);
      break;
  }
  b.add_module(record(ModuleKind::kHead, "head"));

  if (config.head == HeadKind::kV2p) {
    outputs = build_head_v2p(b, rep, config.pyramid_levels, config.pyramid_width);
  } else if (k > 0) {
    b.set_group("task");
    if (is_classification(config.head)) {
      outputs.push_back(b.linear("task.fc", rep, k));
    } else {
      outputs.push_back(b.conv("task.conv", rep, k, 1, 1, true, ParamInit::kSmallUniform));
    }
    b.add_module(record(ModuleKind::kTask, "task"));
  } else {
    outputs.push_back(rep);
  }
  return std::move(b).finish(outputs);
}

}  // namespace hrnet
