#include "daclyf/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace daclyf {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0;
  size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

ConfigMap ConfigMap::parse_string(const std::string& text) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("malformed section header at line " + std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("empty section name at line " + std::to_string(lineno));
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("expected key = value at line " + std::to_string(lineno));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key at line " + std::to_string(lineno));
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values_.count(full)) throw ConfigError("duplicate key: " + full);
    cfg.values_[full] = value;
  }
  return cfg;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("key " + key + ": not a number: '" + it->second + "'");
  }
}

int ConfigMap::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    const long v = std::stol(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return static_cast<int>(v);
  } catch (...) {
    throw ConfigError("key " + key + ": not an integer: '" + it->second + "'");
  }
}

uint64_t ConfigMap::get_u64(const std::string& key, uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    const unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return static_cast<uint64_t>(v);
  } catch (...) {
    throw ConfigError("key " + key + ": not an unsigned integer: '" + it->second + "'");
  }
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

void RunConfig::validate() const {
  plant.validate();
  if (perturbation < 0.0 || perturbation >= 1.0) {
    throw ConfigError("plant.perturbation must be in [0, 1)");
  }
  if (horizon <= 0.0) throw ConfigError("trajectory.horizon must be positive");
  if (traj_ramp <= 0.0) throw ConfigError("trajectory.ramp_time must be positive");
  if (clf_kp <= 0.0 || clf_kd <= 0.0) throw ConfigError("clf gains must be positive");
  if (q_scale <= 0.0) throw ConfigError("clf.q_scale must be positive");
  if (slack_weight <= 0.0) throw ConfigError("qp.slack_weight must be positive");
  if (smooth_weight < 0.0) throw ConfigError("qp.smooth_weight must be nonnegative");
  if (train.hidden_width < 1) throw ConfigError("learning.hidden_width must be >= 1");
  if (train.learning_rate <= 0.0) throw ConfigError("learning.learning_rate must be positive");
  if (train.batch_size < 1) throw ConfigError("learning.batch_size must be >= 1");
  if (train.epochs < 1) throw ConfigError("learning.epochs must be >= 1");
  if (episodes < 1) throw ConfigError("episodic.episodes must be >= 1");
  if (!(trust_min >= 0.0 && trust_min < 0.5)) {
    throw ConfigError("episodic.trust_min must lie in [0, 0.5)");
  }
  if (episodes >= 2 && trust_min == 0.0) {
    throw ConfigError("episodic.trust_min must be positive for multi-episode runs");
  }
  if (exploration_amplitude < 0.0) {
    throw ConfigError("episodic.exploration_amplitude must be >= 0");
  }
  if (exploration_plateau < 0 || exploration_decay < 0) {
    throw ConfigError("episodic exploration lengths must be >= 0");
  }
  if (init_pitch_range < 0.0) throw ConfigError("episodic.init_pitch_range must be >= 0");
  if (sim.dt_ctrl <= 0.0 || sim.dt_integrator <= 0.0) {
    throw ConfigError("simulation steps must be positive");
  }
  const double ratio = sim.dt_ctrl / sim.dt_integrator;
  if (std::abs(ratio - std::lround(ratio)) > 1e-9 * ratio) {
    throw ConfigError("simulation.dt_ctrl must be an integer multiple of dt_integrator");
  }
  if (sim.divergence_limit <= 0.0) throw ConfigError("simulation.divergence_limit must be positive");
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "plant.wheel_mass", "plant.body_mass", "plant.wheel_inertia", "plant.body_inertia",
      "plant.wheel_radius", "plant.com_distance", "plant.motor_kt", "plant.motor_kb",
      "plant.gravity", "plant.perturbation",
      "trajectory.amplitude", "trajectory.omega", "trajectory.ramp_time",
      "trajectory.horizon",
      "clf.kp", "clf.kd", "clf.q_scale",
      "pd.kp", "pd.kd",
      "qp.slack_weight", "qp.smooth_weight", "qp.c3_override",
      "learning.hidden_width", "learning.learning_rate", "learning.batch_size",
      "learning.epochs",
      "episodic.episodes", "episodic.trust_min", "episodic.exploration_amplitude",
      "episodic.exploration_plateau", "episodic.exploration_decay",
      "episodic.init_pitch_range",
      "simulation.dt_ctrl", "simulation.dt_integrator", "simulation.divergence_limit",
      "run.seed", "run.out_dir",
  };
  return keys;
}

}  // namespace

RunConfig resolve_run_config(const ConfigMap& cfg) {
  for (const auto& [key, value] : cfg.entries()) {
    if (!known_keys().count(key)) throw ConfigError("unknown config key: " + key);
  }
  RunConfig rc;
  rc.plant.wheel_mass = cfg.get_double("plant.wheel_mass", rc.plant.wheel_mass);
  rc.plant.body_mass = cfg.get_double("plant.body_mass", rc.plant.body_mass);
  rc.plant.wheel_inertia = cfg.get_double("plant.wheel_inertia", rc.plant.wheel_inertia);
  rc.plant.body_inertia = cfg.get_double("plant.body_inertia", rc.plant.body_inertia);
  rc.plant.wheel_radius = cfg.get_double("plant.wheel_radius", rc.plant.wheel_radius);
  rc.plant.com_distance = cfg.get_double("plant.com_distance", rc.plant.com_distance);
  rc.plant.motor_kt = cfg.get_double("plant.motor_kt", rc.plant.motor_kt);
  rc.plant.motor_kb = cfg.get_double("plant.motor_kb", rc.plant.motor_kb);
  rc.plant.gravity = cfg.get_double("plant.gravity", rc.plant.gravity);
  rc.perturbation = cfg.get_double("plant.perturbation", rc.perturbation);

  rc.traj_amplitude = cfg.get_double("trajectory.amplitude", rc.traj_amplitude);
  rc.traj_omega = cfg.get_double("trajectory.omega", rc.traj_omega);
  rc.traj_ramp = cfg.get_double("trajectory.ramp_time", rc.traj_ramp);
  rc.horizon = cfg.get_double("trajectory.horizon", rc.horizon);

  rc.clf_kp = cfg.get_double("clf.kp", rc.clf_kp);
  rc.clf_kd = cfg.get_double("clf.kd", rc.clf_kd);
  rc.q_scale = cfg.get_double("clf.q_scale", rc.q_scale);

  rc.pd_kp = cfg.get_double("pd.kp", rc.pd_kp);
  rc.pd_kd = cfg.get_double("pd.kd", rc.pd_kd);

  rc.slack_weight = cfg.get_double("qp.slack_weight", rc.slack_weight);
  rc.smooth_weight = cfg.get_double("qp.smooth_weight", rc.smooth_weight);
  rc.c3_override = cfg.get_double("qp.c3_override", rc.c3_override);

  rc.train.hidden_width = cfg.get_int("learning.hidden_width", rc.train.hidden_width);
  rc.train.learning_rate = cfg.get_double("learning.learning_rate", rc.train.learning_rate);
  rc.train.batch_size = cfg.get_int("learning.batch_size", rc.train.batch_size);
  rc.train.epochs = cfg.get_int("learning.epochs", rc.train.epochs);

  rc.episodes = cfg.get_int("episodic.episodes", rc.episodes);
  rc.trust_min = cfg.get_double("episodic.trust_min", rc.trust_min);
  rc.exploration_amplitude =
      cfg.get_double("episodic.exploration_amplitude", rc.exploration_amplitude);
  rc.exploration_plateau = cfg.get_int("episodic.exploration_plateau", rc.exploration_plateau);
  rc.exploration_decay = cfg.get_int("episodic.exploration_decay", rc.exploration_decay);
  rc.init_pitch_range = cfg.get_double("episodic.init_pitch_range", rc.init_pitch_range);

  rc.sim.dt_ctrl = cfg.get_double("simulation.dt_ctrl", rc.sim.dt_ctrl);
  rc.sim.dt_integrator = cfg.get_double("simulation.dt_integrator", rc.sim.dt_integrator);
  rc.sim.divergence_limit =
      cfg.get_double("simulation.divergence_limit", rc.sim.divergence_limit);

  rc.seed = cfg.get_u64("run.seed", rc.seed);
  rc.out_dir = cfg.get_string("run.out_dir", rc.out_dir);

  rc.validate();
  return rc;
}

std::string run_config_to_string(const RunConfig& cfg) {
  char buf[64];
  std::ostringstream out;
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  out << "[plant]\n";
  out << "wheel_mass = " << num(cfg.plant.wheel_mass) << "\n";
  out << "body_mass = " << num(cfg.plant.body_mass) << "\n";
  out << "wheel_inertia = " << num(cfg.plant.wheel_inertia) << "\n";
  out << "body_inertia = " << num(cfg.plant.body_inertia) << "\n";
  out << "wheel_radius = " << num(cfg.plant.wheel_radius) << "\n";
  out << "com_distance = " << num(cfg.plant.com_distance) << "\n";
  out << "motor_kt = " << num(cfg.plant.motor_kt) << "\n";
  out << "motor_kb = " << num(cfg.plant.motor_kb) << "\n";
  out << "gravity = " << num(cfg.plant.gravity) << "\n";
  out << "perturbation = " << num(cfg.perturbation) << "\n";
  out << "\n[trajectory]\n";
  out << "amplitude = " << num(cfg.traj_amplitude) << "\n";
  out << "omega = " << num(cfg.traj_omega) << "\n";
  out << "ramp_time = " << num(cfg.traj_ramp) << "\n";
  out << "horizon = " << num(cfg.horizon) << "\n";
  out << "\n[clf]\n";
  out << "kp = " << num(cfg.clf_kp) << "\n";
  out << "kd = " << num(cfg.clf_kd) << "\n";
  out << "q_scale = " << num(cfg.q_scale) << "\n";
  out << "\n[pd]\n";
  out << "kp = " << num(cfg.pd_kp) << "\n";
  out << "kd = " << num(cfg.pd_kd) << "\n";
  out << "\n[qp]\n";
  out << "slack_weight = " << num(cfg.slack_weight) << "\n";
  out << "smooth_weight = " << num(cfg.smooth_weight) << "\n";
  out << "c3_override = " << num(cfg.c3_override) << "\n";
  out << "\n[learning]\n";
  out << "hidden_width = " << cfg.train.hidden_width << "\n";
  out << "learning_rate = " << num(cfg.train.learning_rate) << "\n";
  out << "batch_size = " << cfg.train.batch_size << "\n";
  out << "epochs = " << cfg.train.epochs << "\n";
  out << "\n[episodic]\n";
  out << "episodes = " << cfg.episodes << "\n";
  out << "trust_min = " << num(cfg.trust_min) << "\n";
  out << "exploration_amplitude = " << num(cfg.exploration_amplitude) << "\n";
  out << "exploration_plateau = " << cfg.exploration_plateau << "\n";
  out << "exploration_decay = " << cfg.exploration_decay << "\n";
  out << "init_pitch_range = " << num(cfg.init_pitch_range) << "\n";
  out << "\n[simulation]\n";
  out << "dt_ctrl = " << num(cfg.sim.dt_ctrl) << "\n";
  out << "dt_integrator = " << num(cfg.sim.dt_integrator) << "\n";
  out << "divergence_limit = " << num(cfg.sim.divergence_limit) << "\n";
  out << "\n[run]\n";
  out << "seed = " << cfg.seed << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  return out.str();
}

}  // namespace daclyf
