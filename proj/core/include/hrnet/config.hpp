#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hrnet/blocks.hpp"

namespace hrnet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class HeadKind { kV1, kV1h, kV2, kV2p, kClsDefault, kClsCi, kClsCii };
/// a: final fusion only; b: stage-transition fusions plus the final one;
/// c: every modularized block ends in a fusion.
enum class FusionDesign { kA, kB, kC };

std::string_view to_string(HeadKind head);
std::string_view to_string(FusionDesign design);
std::string_view to_string(Combine combine);
std::string_view to_string(DownsampleKind kind);
std::string_view to_string(UpsampleOrder order);
HeadKind parse_head(std::string_view text);
FusionDesign parse_fusion_design(std::string_view text);
Combine parse_combine(std::string_view text);
DownsampleKind parse_downsample(std::string_view text);
UpsampleOrder parse_upsample_order(std::string_view text);

bool is_classification(HeadKind head);

struct ArchConfig {
  int width_c = 32;
  std::vector<int> stage_blocks{1, 1, 4, 3};
  int branch_units = 4;
  HeadKind head = HeadKind::kV1;
  FusionDesign fusion_design = FusionDesign::kC;
  Combine combine = Combine::kSum;
  DownsampleKind downsample_kind = DownsampleKind::kStridedConv;
  UpsampleOrder upsample_order = UpsampleOrder::kConvFirst;
  bool maintain_from_start = false;
  bool light_transition = false;
  int pyramid_levels = 5;
  int pyramid_width = 256;
  /// Keypoints, classes or segmentation labels; unset picks the head default
  /// (17 for V1/V1h, 19 for V2, none for V2p, 1000 for classification).
  std::optional<int> num_outputs;

  int outputs() const;
  int branch_width(int r) const { return width_c << r; }
  FusionOptions fusion_options() const;
  /// Throws ConfigError describing the first violated rule.
  void validate() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

std::string config_to_json(const ArchConfig& config, int indent = 2);
/// Unknown keys, wrong types and out-of-range values are ConfigErrors.
ArchConfig config_from_json(std::string_view text);
ArchConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ArchConfig& config);

/// FNV-1a 64 over the canonical (compact, key-sorted) JSON form, as 16 hex digits.
std::string config_hash(const ArchConfig& config);

struct Preset {
  std::string name;
  int width_c;
};
const std::vector<Preset>& presets();
/// "w32" etc.; V1 head with default options.
ArchConfig preset(std::string_view name);

}  // namespace hrnet
