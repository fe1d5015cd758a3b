#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eqmesh/model.hpp"
#include "eqmesh/train.hpp"

namespace eqmesh {

inline constexpr const char* kVersion = "1.0.0";

/// Raised for malformed configs and overrides (exit code 1).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::string dir;  // dataset root for train/eval
  int n_train = 500;
  int n_val = 83;
  std::vector<int> rotations{90, 180, 270};
};

struct EvalConfig {
  std::string split = "val";
  std::vector<int> angles{90, 180, 270};
  int batch_size = 16;
};

struct AuditConfig {
  std::vector<int> angles{45, 90, 135, 180, 270};
  int batch_size = 2;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out;
  std::string checkpoint;  // parameters for eval / audit / predict
  std::string image;       // input for predict
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
  AuditConfig audit;
};

/// Every key with its default value.
nlohmann::json default_config_json();

/// Overlays `patch` onto `base`. Keys absent from `base` are rejected with
/// their dotted path; value types must agree (integers where integers are
/// expected).
void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& path = "");

/// Applies "a.b.c=value". The value is read as JSON when it parses (numbers,
/// booleans, arrays) and as a plain string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

/// Defaults, then the optional file, then overrides in order.
RunConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

/// Writes the effective config (plus code version) to `path`.
void echo_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace eqmesh
