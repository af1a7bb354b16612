#pragma once

// Run configuration: a TOML-style text file (tables, key = value, arrays,
// '#' comments) or JSON. Both parse into the same JSON tree, which is
// normalized (defaults filled in) and validated field by field.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "decac/actor.hpp"
#include "decac/environment.hpp"

namespace decac::config {

/// Parses the TOML subset used by the shipped configs. ConfigError with the
/// line number on malformed input.
nlohmann::json parse_toml(const std::string& text);
/// JSON when the first non-space character is '{', otherwise TOML.
nlohmann::json parse_text(const std::string& text);
nlohmann::json read_file(const std::filesystem::path& path);

struct EnvironmentBlock {
  std::string kind = "grid";  // grid | tabular
  env::GridSpreadConfig grid;
  std::optional<std::uint64_t> landmark_seed;  // derived from the run seed when unset
  std::size_t episode_len = 10;
  std::string tabular_path;
};

struct RunConfig {
  double gamma = 0.99;
  std::vector<std::uint64_t> seeds{0};
  std::string out = "runs";
  EnvironmentBlock environment;
  std::size_t width = 20;  // m
  std::size_t depth = 5;   // D
  critic::CriticConfig critic;
  actor::ActorConfig actor;
  std::string topology = "erdos(0.5)";
  std::string matrix_path;
  bool critic_warm_start = false;
  /// Directory the config was loaded from; relative paths resolve here.
  std::filesystem::path base_dir;
};

/// Builds a RunConfig, rejecting unknown keys and out-of-range values with a
/// ConfigError that names the field.
RunConfig from_json(const nlohmann::json& j);
RunConfig load(const std::filesystem::path& path);

/// Canonical JSON of every setting except `seeds`, `out` and base_dir.
nlohmann::json to_json(const RunConfig& cfg);
/// 16 hex digits of FNV-1a over the canonical dump; invariant under key order.
std::string config_hash(const RunConfig& cfg);

inline constexpr std::size_t kDeskRounds = 4000;
inline constexpr std::size_t kPaperRounds = 20000;
inline constexpr std::size_t kDeskRepetitions = 20;
inline constexpr std::size_t kPaperRepetitions = 100;

/// Full scale sets T = 20000; otherwise the config's own T is kept.
void apply_scale(RunConfig& cfg, bool paper_scale);

// ---------------------------------------------------------------------------

enum class Axis { TGossip, Width, Depth, Agents, KM, Signal };

struct SweepSpec {
  RunConfig base;
  Axis axis = Axis::TGossip;
  std::string axis_name;
  /// Axis values as given in the file (numbers, [K, M] pairs or strings).
  std::vector<nlohmann::json> values;
  std::size_t repetitions = 20;
  std::string name;
};

/// The sweep file names a base config (`base = "file.cfg"`, relative to the
/// sweep file) and a [sweep] table with `axis`, `values`, optionally
/// `repetitions` and `name`.
SweepSpec load_sweep(const std::filesystem::path& path);
SweepSpec sweep_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Base config with the axis set to values[index].
RunConfig sweep_cell(const SweepSpec& spec, std::size_t index);
std::string axis_label(const nlohmann::json& value);

/// Paths of the canonical configs whose values differ (dotted keys).
std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b);

}  // namespace decac::config
