// Command-line front end: single-controller rollouts, episodic learning
// runs and the multi-instance robustness study, all driven by a plain
// key-value config file. Outputs are CSV files with fixed headers plus a
// metadata file that records every resolved setting.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>

#include "daclyf/clf.hpp"
#include "daclyf/config.hpp"
#include "daclyf/controllers.hpp"
#include "daclyf/dynamics.hpp"
#include "daclyf/episodic.hpp"
#include "daclyf/io.hpp"
#include "daclyf/learning.hpp"

namespace fs = std::filesystem;
using namespace daclyf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitTraining = 4;

struct Problem {
  RoboticModel nominal_model;
  RoboticModel plant;  // perturbed by the configured fraction
  TrackingProblem tp;
  Clf clf;
  Controller pd;
  DaclyfOptions options;
};

Problem build_problem(const RunConfig& cfg) {
  Problem pr;
  pr.nominal_model = segway_model(cfg.plant);
  RngStream perturb_rng = RngStream(cfg.seed).split("perturb");
  const SegwayParams true_params = perturb_params(cfg.plant, cfg.perturbation, perturb_rng);
  pr.plant = segway_model(true_params);
  pr.tp = segway_pitch_tracking(cfg.traj_amplitude, cfg.traj_omega, cfg.traj_ramp, 0.0,
                                cfg.horizon);
  pr.clf = make_clf(cfg.clf_kp, cfg.clf_kd, cfg.q_scale);
  pr.pd = pd_controller(cfg.pd_kp, cfg.pd_kd, pr.tp);

  pr.options.episodes = cfg.episodes;
  pr.options.trust = TrustSchedule::sigmoid(cfg.episodes, cfg.trust_min);
  pr.options.exploration = {cfg.exploration_amplitude, cfg.exploration_plateau,
                            cfg.exploration_decay};
  pr.options.init_pitch_range = cfg.init_pitch_range;
  pr.options.sim = cfg.sim;
  pr.options.train = cfg.train;
  pr.options.augmentation.c3 = cfg.c3_override;
  pr.options.augmentation.slack_weight = cfg.slack_weight;
  pr.options.augmentation.smooth_weight = cfg.smooth_weight;
  return pr;
}

void write_metadata(const fs::path& dir, const RunConfig& cfg) {
  std::ofstream out(dir / "run_metadata.txt");
  out << run_config_to_string(cfg);
}

VdotEstimate base_estimate(std::shared_ptr<const VdotModel> base) {
  return [base](const Vec& q, const Vec& qd, double t) { return base->affine(q, qd, t); };
}

VdotEstimate learned_estimate(const ResidualEstimator& est) {
  ResidualEstimator copy = est;
  return [copy](const Vec& q, const Vec& qd, double t) { return copy.affine(q, qd, t); };
}

int cmd_simulate(const RunConfig& cfg, const std::string& controller_name) {
  const Problem pr = build_problem(cfg);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_metadata(dir, cfg);

  auto base = std::make_shared<const VdotModel>(pr.nominal_model, pr.tp, pr.clf);
  Controller controller;
  std::shared_ptr<ClfQpController> qp;
  if (controller_name == "pd") {
    controller = pr.pd;
  } else if (controller_name == "io-lin") {
    controller = io_lin_controller(pr.nominal_model, pr.tp, pr.clf);
  } else if (controller_name == "clf-qp") {
    qp = std::make_shared<ClfQpController>(VdotModel(pr.nominal_model, pr.tp, pr.clf));
    controller = [qp](const Vec& q, const Vec& qd, double t) { return (*qp)(q, qd, t); };
  } else {
    std::cerr << "unknown controller: " << controller_name << "\n";
    return kExitValidation;
  }

  const Vec q0{0.0, 0.0};
  const Vec qd0{0.0, 0.0};
  const StateTrajectory traj =
      simulate(pr.plant, controller, q0, qd0, pr.tp.t0, pr.tp.tf, cfg.sim);
  const EvalMetrics metrics = trajectory_metrics(traj, pr.tp);

  write_trajectory_csv((dir / "trajectory.csv").string(), traj, pr.tp, pr.clf,
                       base_estimate(base), qp ? &qp->log() : nullptr);
  {
    RunRecord single;
    EpisodeRecord ep;
    ep.episode = 0;
    ep.eval = metrics;
    single.episodes.push_back(ep);
    write_metrics_csv((dir / "metrics.csv").string(), single);
  }
  std::cout << "controller=" << controller_name << " ise=" << format_double(metrics.ise)
            << " max_err=" << format_double(metrics.max_err)
            << " diverged=" << (metrics.diverged ? 1 : 0) << "\n";
  return metrics.diverged ? kExitDivergence : kExitOk;
}

void persist_run(const fs::path& dir, const RunConfig& cfg, const Problem& pr,
                 const RunRecord& record) {
  fs::create_directories(dir / "episodes");
  write_metadata(dir, cfg);
  write_metrics_csv((dir / "metrics.csv").string(), record);

  auto base = std::make_shared<const VdotModel>(pr.nominal_model, pr.tp, pr.clf);
  for (size_t i = 0; i < record.episodes.size(); ++i) {
    const EpisodeRecord& ep = record.episodes[i];
    // the estimate the executing controller believed during episode k
    VdotEstimate est = (i == 0) ? base_estimate(base)
                                : learned_estimate(record.episodes[i - 1].estimator_after);
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%02d.csv", ep.episode);
    write_trajectory_csv((dir / "episodes" / name).string(), ep.trajectory, pr.tp, pr.clf,
                         est, ep.qp_log.empty() ? nullptr : &ep.qp_log);
  }
  if (!record.final_estimator.empty()) {
    save_estimator((dir / "estimator.bin").string(), record.final_estimator);
  }
}

int cmd_daclyf(const RunConfig& cfg) {
  const Problem pr = build_problem(cfg);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  const RunRecord record = run_daclyf(pr.plant, pr.nominal_model, pr.tp, pr.clf, pr.pd,
                                      pr.options, cfg.seed);
  persist_run(dir, cfg, pr, record);

  std::cout << "nominal_ise=" << format_double(record.nominal_eval.ise) << "\n";
  std::cout << "episode trust explore ise max_err diverged data loss\n";
  for (const EpisodeRecord& ep : record.episodes) {
    std::printf("%7d %5.3f %7.3f %.6g %.6g %8d %4d %.6g\n", ep.episode, ep.trust,
                ep.exploration, ep.eval.ise, ep.eval.max_err, ep.eval.diverged ? 1 : 0,
                ep.dataset_size, ep.train_loss);
  }
  if (record.aborted) {
    std::cerr << "run aborted: " << record.abort_reason << "\n";
    return kExitTraining;
  }
  return kExitOk;
}

int cmd_study(const RunConfig& cfg, int instances, int jobs) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_metadata(dir, cfg);

  RngStream master = RngStream(cfg.seed).split("study");
  std::vector<uint64_t> seeds(instances);
  for (int i = 0; i < instances; ++i) seeds[i] = master.split(static_cast<uint64_t>(i)).next_u64();

  std::vector<RunRecord> records(instances);
  std::vector<int> status(instances, -1);

  auto worker = [&](int idx) {
    RunConfig inst_cfg = cfg;
    inst_cfg.seed = seeds[idx];
    char name[32];
    std::snprintf(name, sizeof(name), "instance_%02d", idx + 1);
    inst_cfg.out_dir = (dir / name).string();
    try {
      const Problem pr = build_problem(inst_cfg);
      records[idx] = run_daclyf(pr.plant, pr.nominal_model, pr.tp, pr.clf, pr.pd,
                                pr.options, inst_cfg.seed);
      fs::create_directories(inst_cfg.out_dir);
      persist_run(inst_cfg.out_dir, inst_cfg, pr, records[idx]);
      status[idx] = records[idx].aborted ? kExitTraining : kExitOk;
    } catch (const std::exception& e) {
      std::cerr << name << " failed: " << e.what() << "\n";
      status[idx] = kExitTraining;
    }
  };

  if (jobs < 1) jobs = 1;
  for (int start = 0; start < instances; start += jobs) {
    std::vector<std::thread> pool;
    for (int i = start; i < std::min(instances, start + jobs); ++i) {
      pool.emplace_back(worker, i);
    }
    for (auto& th : pool) th.join();
  }

  // aggregate the per-episode evaluation ISE across completed instances
  std::vector<StudyRow> rows;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    StudyRow row;
    row.episode = ep + 1;
    int count = 0;
    for (int i = 0; i < instances; ++i) {
      if (status[i] != kExitOk) continue;
      if (ep >= static_cast<int>(records[i].episodes.size())) continue;
      const double ise = records[i].episodes[ep].eval.ise;
      if (count == 0) {
        row.ise_min = row.ise_max = ise;
      } else {
        row.ise_min = std::min(row.ise_min, ise);
        row.ise_max = std::max(row.ise_max, ise);
      }
      row.ise_mean += ise;
      ++count;
    }
    if (count > 0) {
      row.ise_mean /= count;
      rows.push_back(row);
    }
  }
  write_study_csv((dir / "study_summary.csv").string(), rows);

  const int completed =
      static_cast<int>(std::count(status.begin(), status.end(), kExitOk));
  std::cout << "completed " << completed << "/" << instances << " instances\n";
  for (const StudyRow& r : rows) {
    std::printf("episode %2d ise min/mean/max = %.6g / %.6g / %.6g\n", r.episode,
                r.ise_min, r.ise_mean, r.ise_max);
  }
  return completed >= 1 ? kExitOk : kExitTraining;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& estimator_path, double trust) {
  const Problem pr = build_problem(cfg);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  auto base = std::make_shared<const VdotModel>(pr.nominal_model, pr.tp, pr.clf);
  const ResidualEstimator est = load_estimator(estimator_path, base);

  AugmentationConfig aug_cfg = pr.options.augmentation;
  if (aug_cfg.c3 <= 0.0) aug_cfg.c3 = pr.clf.c3;
  auto aug = std::make_shared<AugmentingController>(pr.pd, learned_estimate(est), pr.tp,
                                                    aug_cfg);
  const Controller controller = trust_blended_controller(pr.pd, aug, trust);

  const Vec q0{0.0, 0.0};
  const Vec qd0{0.0, 0.0};
  const StateTrajectory traj =
      simulate(pr.plant, controller, q0, qd0, pr.tp.t0, pr.tp.tf, cfg.sim);
  const EvalMetrics metrics = trajectory_metrics(traj, pr.tp);
  write_trajectory_csv((dir / "trajectory.csv").string(), traj, pr.tp, pr.clf,
                       learned_estimate(est), &aug->log());
  std::cout << "trust=" << format_double(trust) << " ise=" << format_double(metrics.ise)
            << " max_err=" << format_double(metrics.max_err)
            << " diverged=" << (metrics.diverged ? 1 : 0) << "\n";
  return metrics.diverged ? kExitDivergence : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Episodic Lyapunov-derivative learning on a planar Segway"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string controller_name = "pd";
  std::string estimator_path;
  uint64_t seed = 0;
  bool seed_set = false;
  int episodes = 0;
  int instances = 10;
  int jobs = static_cast<int>(std::thread::hardware_concurrency());
  double trust = -1.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "configuration file");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option_function<uint64_t>(
        "--seed", [&](uint64_t v) { seed = v; seed_set = true; }, "random seed");
    sub->add_option("--episodes", episodes, "number of episodes");
  };

  CLI::App* sim = app.add_subcommand("simulate", "single-controller rollout");
  add_common(sim);
  sim->add_option("--controller", controller_name, "pd | clf-qp | io-lin");

  CLI::App* run = app.add_subcommand("daclyf", "episodic learning run");
  add_common(run);

  CLI::App* study = app.add_subcommand("study", "repeated runs with aggregate statistics");
  add_common(study);
  study->add_option("--instances", instances, "number of seeded instances");
  study->add_option("--jobs", jobs, "parallel instances");

  CLI::App* eval = app.add_subcommand("evaluate", "run a saved estimator");
  add_common(eval);
  eval->add_option("--estimator", estimator_path, "estimator file")->required();
  eval->add_option("--trust", trust, "trust weight on the augmentation");

  CLI11_PARSE(app, argc, argv);

  RunConfig cfg;
  try {
    ConfigMap map;
    if (!config_path.empty()) map = ConfigMap::parse_file(config_path);
    cfg = resolve_run_config(map);
    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (episodes > 0) cfg.episodes = episodes;
    cfg.validate();
    if (app.got_subcommand("study") && instances < 1) {
      throw ConfigError("--instances must be >= 1");
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (app.got_subcommand("simulate")) return cmd_simulate(cfg, controller_name);
    if (app.got_subcommand("daclyf")) return cmd_daclyf(cfg);
    if (app.got_subcommand("study")) return cmd_study(cfg, instances, jobs);
    if (app.got_subcommand("evaluate")) {
      if (trust < 0.0) trust = TrustSchedule::sigmoid(std::max(2, cfg.episodes), cfg.trust_min).w_max;
      return cmd_evaluate(cfg, estimator_path, trust);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
