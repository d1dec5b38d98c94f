#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "daclyf/controllers.hpp"
#include "daclyf/dynamics.hpp"
#include "daclyf/episodic.hpp"
#include "daclyf/learning.hpp"

namespace daclyf {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Plain-text key-value configuration with [section] headers, # comments
/// and key = value lines. Keys are addressed as "section.key".
class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Every tunable of a run, resolved to concrete values. Unknown config
/// keys are rejected up front so typos cannot silently fall back to
/// defaults.
struct RunConfig {
  SegwayParams plant;
  double perturbation = 0.10;

  // desired pitch trajectory
  double traj_amplitude = 0.15;  // rad
  double traj_omega = 1.0;       // rad/s
  double traj_ramp = 1.0;        // s
  double horizon = 10.0;         // s

  // CLF gains (scalar per output) and Q = q_scale * I
  double clf_kp = 25.0;
  double clf_kd = 10.0;
  double q_scale = 1.0;

  // PD nominal controller
  double pd_kp = 60.0;
  double pd_kd = 10.0;

  // QP / augmentation weights
  double slack_weight = 100.0;
  double smooth_weight = 0.1;
  double c3_override = 0.0;  // <= 0: use lambda_min(Q)

  TrainConfig train;

  // schedules
  int episodes = 20;
  double trust_min = 0.01;
  double exploration_amplitude = 0.20;
  int exploration_plateau = 10;
  int exploration_decay = 10;
  double init_pitch_range = 0.02;

  SimulateOptions sim;

  uint64_t seed = 2024;
  std::string out_dir = "out";

  void validate() const;
};

/// Builds a RunConfig from a parsed file, applying defaults for missing
/// keys and rejecting unknown ones.
RunConfig resolve_run_config(const ConfigMap& cfg);

/// Serializes every resolved value back to config syntax, so a run can be
/// reproduced from its own metadata file alone.
std::string run_config_to_string(const RunConfig& cfg);

}  // namespace daclyf
