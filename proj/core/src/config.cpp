#include "hrnet/config.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace hrnet {
namespace {

using nlohmann::json;

template <typename E, std::size_t N>
E parse_enum(std::string_view text, const std::array<std::pair<std::string_view, E>, N>& table,
             std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == text) return value;
  }
  std::string choices;
  for (const auto& [name, value] : table) {
    if (!choices.empty()) choices += ", ";
    choices += name;
  }
  throw ConfigError("unknown " + std::string(what) + " '" + std::string(text) +
                    "' (expected one of: " + choices + ")");
}

template <typename E, std::size_t N>
std::string_view enum_name(E value, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::array<std::pair<std::string_view, HeadKind>, 7> kHeads{{
    {"v1", HeadKind::kV1},
    {"v1h", HeadKind::kV1h},
    {"v2", HeadKind::kV2},
    {"v2p", HeadKind::kV2p},
    {"cls", HeadKind::kClsDefault},
    {"cls-ci", HeadKind::kClsCi},
    {"cls-cii", HeadKind::kClsCii},
}};
constexpr std::array<std::pair<std::string_view, FusionDesign>, 3> kDesigns{{
    {"a", FusionDesign::kA},
    {"b", FusionDesign::kB},
    {"c", FusionDesign::kC},
}};
constexpr std::array<std::pair<std::string_view, Combine>, 2> kCombines{{
    {"sum", Combine::kSum},
    {"multiply", Combine::kMultiply},
}};
constexpr std::array<std::pair<std::string_view, DownsampleKind>, 2> kDownsamples{{
    {"strided-conv", DownsampleKind::kStridedConv},
    {"bilinear", DownsampleKind::kBilinear},
}};
constexpr std::array<std::pair<std::string_view, UpsampleOrder>, 2> kOrders{{
    {"conv-first", UpsampleOrder::kConvFirst},
    {"resize-first", UpsampleOrder::kResizeFirst},
}};

json to_json_value(const ArchConfig& c) {
  json j;
  j["width_c"] = c.width_c;
  j["stage_blocks"] = c.stage_blocks;
  j["branch_units"] = c.branch_units;
  j["head"] = to_string(c.head);
  j["fusion_design"] = to_string(c.fusion_design);
  j["combine"] = to_string(c.combine);
  j["downsample_kind"] = to_string(c.downsample_kind);
  j["upsample_order"] = to_string(c.upsample_order);
  j["maintain_from_start"] = c.maintain_from_start;
  j["light_transition"] = c.light_transition;
  j["pyramid_levels"] = c.pyramid_levels;
  j["pyramid_width"] = c.pyramid_width;
  j["num_outputs"] = c.num_outputs ? json(*c.num_outputs) : json(nullptr);
  return j;
}

int get_int(const json& j, const std::string& key) {
  if (!j.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
  return j.get<int>();
}

bool get_bool(const json& j, const std::string& key) {
  if (!j.is_boolean()) throw ConfigError("'" + key + "' must be a boolean");
  return j.get<bool>();
}

std::string get_string(const json& j, const std::string& key) {
  if (!j.is_string()) throw ConfigError("'" + key + "' must be a string");
  return j.get<std::string>();
}

}  // namespace

std::string_view to_string(HeadKind head) { return enum_name(head, kHeads); }
std::string_view to_string(FusionDesign design) { return enum_name(design, kDesigns); }
std::string_view to_string(Combine combine) { return enum_name(combine, kCombines); }
std::string_view to_string(DownsampleKind kind) { return enum_name(kind, kDownsamples); }
std::string_view to_string(UpsampleOrder order) { return enum_name(order, kOrders); }
HeadKind parse_head(std::string_view text) { return parse_enum(text, kHeads, "head"); }
FusionDesign parse_fusion_design(std::string_view text) {
  return parse_enum(text, kDesigns, "fusion design");
}
Combine parse_combine(std::string_view text) { return parse_enum(text, kCombines, "combine"); }
DownsampleKind parse_downsample(std::string_view text) {
  return parse_enum(text, kDownsamples, "downsample kind");
}
UpsampleOrder parse_upsample_order(std::string_view text) {
  return parse_enum(text, kOrders, "upsample order");
}

bool is_classification(HeadKind head) {
  return head == HeadKind::kClsDefault || head == HeadKind::kClsCi || head == HeadKind::kClsCii;
}

int ArchConfig::outputs() const {
  if (num_outputs) return *num_outputs;
  switch (head) {
    case HeadKind::kV1:
    case HeadKind::kV1h: return 17;
    case HeadKind::kV2: return 19;
    case HeadKind::kV2p: return 0;
    default: return 1000;
  }
}

FusionOptions ArchConfig::fusion_options() const {
  return FusionOptions{combine, downsample_kind, upsample_order, light_transition};
}

void ArchConfig::validate() const {
  if (width_c < 1) throw ConfigError("width_c must be >= 1, got " + std::to_string(width_c));
  if (width_c > (1 << 20)) throw ConfigError("width_c is unreasonably large");
  if (stage_blocks.size() != 4) {
    throw ConfigError("stage_blocks must list 4 stages, got " +
                      std::to_string(stage_blocks.size()));
  }
  for (std::size_t s = 0; s < stage_blocks.size(); ++s) {
    if (stage_blocks[s] < 1) {
      throw ConfigError("stage_blocks[" + std::to_string(s) + "] must be >= 1");
    }
  }
  if (branch_units < 1) throw ConfigError("branch_units must be >= 1");
  if (pyramid_levels < 1) throw ConfigError("pyramid_levels must be >= 1");
  if (pyramid_width < 1) throw ConfigError("pyramid_width must be >= 1");
  if (num_outputs && *num_outputs < 0) throw ConfigError("num_outputs must be >= 0");
  if (is_classification(head) && outputs() < 1) {
    throw ConfigError("classification heads need num_outputs >= 1");
  }
  if (head == HeadKind::kV2p && outputs() != 0) {
    throw ConfigError("the v2p head feeds a detector and takes no num_outputs");
  }
  if (maintain_from_start && light_transition) {
    throw ConfigError("light_transition has no effect with maintain_from_start");
  }
}

std::string config_to_json(const ArchConfig& config, int indent) {
  return to_json_value(config).dump(indent);
}

ArchConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ArchConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "width_c") {
      c.width_c = get_int(value, key);
    } else if (key == "stage_blocks") {
      if (!value.is_array()) throw ConfigError("'stage_blocks' must be an array");
      c.stage_blocks.clear();
      for (const json& v : value) c.stage_blocks.push_back(get_int(v, key));
    } else if (key == "branch_units") {
      c.branch_units = get_int(value, key);
    } else if (key == "head") {
      c.head = parse_head(get_string(value, key));
    } else if (key == "fusion_design") {
      c.fusion_design = parse_fusion_design(get_string(value, key));
    } else if (key == "combine") {
      c.combine = parse_combine(get_string(value, key));
    } else if (key == "downsample_kind") {
      c.downsample_kind = parse_downsample(get_string(value, key));
    } else if (key == "upsample_order") {
      c.upsample_order = parse_upsample_order(get_string(value, key));
    } else if (key == "maintain_from_start") {
      c.maintain_from_start = get_bool(value, key);
    } else if (key == "light_transition") {
      c.light_transition = get_bool(value, key);
    } else if (key == "pyramid_levels") {
      c.pyramid_levels = get_int(value, key);
    } else if (key == "pyramid_width") {
      c.pyramid_width = get_int(value, key);
    } else if (key == "num_outputs") {
      if (value.is_null()) {
        c.num_outputs.reset();
      } else {
        c.num_outputs = get_int(value, key);
      }
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

ArchConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const std::filesystem::path& path, const ArchConfig& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << config_to_json(config) << '\n';
}

std::string config_hash(const ArchConfig& config) {
  const std::string canonical = to_json_value(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table{
      {"w18", 18}, {"w30", 30}, {"w32", 32}, {"w40", 40}, {"w44", 44},
      {"w48", 48}, {"w64", 64}, {"w76", 76}, {"w96", 96},
  };
  return table;
}

ArchConfig preset(std::string_view name) {
  for (const Preset& p : presets()) {
    if (p.name == name) {
      ArchConfig c;
      c.width_c = p.width_c;
      return c;
    }
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

}  // namespace hrnet
