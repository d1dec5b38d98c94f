#pragma once

#include <memory>
#include <optional>

#include "daclyf/clf.hpp"
#include "daclyf/controllers.hpp"
#include "daclyf/dynamics.hpp"
#include "daclyf/learning.hpp"

namespace daclyf {

/// Monotone sigmoid trust coefficients w_1 <= ... <= w_T on [0, 1]:
///   w_k = 1 / (1 + exp(-beta (k - (T+1)/2)))
/// with beta chosen so that w_1 = w_min and w_T = 1 - w_min exactly.
struct TrustSchedule {
  int episodes = 20;
  double w_min = 0.01;
  double w_max = 0.99;
  double beta = 0.0;

  static TrustSchedule sigmoid(int episodes, double w_min);
  double operator()(int k) const;  // k in 1..episodes
};

/// Exploration amplitude as a fraction of the controller norm: constant
/// over the plateau episodes, then decaying linearly to zero.
struct ExplorationSchedule {
  double amplitude = 0.20;
  int plateau = 10;
  int decay = 10;

  double operator()(int k) const;  // k in 1..
};

/// Wraps a controller with per-tick additive exploration noise: each
/// input coordinate gets an independent uniform draw from
/// [-amplitude ||u||, +amplitude ||u||] around the underlying value.
Controller perturbed(Controller base, double amplitude,
                     std::shared_ptr<RngStream> rng);

struct ExperimentResult {
  StateTrajectory trajectory;
  Dataset data;
};

/// One experiment: closed-loop rollout from (q0, 0) followed by dataset
/// extraction. Divergent runs contribute their prefix (if it spans at
/// least 3 ticks).
ExperimentResult run_experiment(const RoboticModel& plant, const Controller& controller,
                                const Vec& q0, const TrackingProblem& tp, const Clf& clf,
                                const SimulateOptions& opt);

struct EvalMetrics {
  double ise = 0.0;      // integral of squared output error, trapezoid rule
  double max_err = 0.0;  // max |y - y_d| over the run
  bool diverged = false;
};

EvalMetrics evaluate(const RoboticModel& plant, const Controller& controller,
                     const TrackingProblem& tp, const Vec& q0, const Vec& qd0,
                     const SimulateOptions& opt);

/// Metrics computed from an existing trajectory.
EvalMetrics trajectory_metrics(const StateTrajectory& traj, const TrackingProblem& tp);

struct EpisodeRecord {
  int episode = 0;  // 1-based
  double trust = 0.0;
  double exploration = 0.0;
  EvalMetrics eval;
  int dataset_size = 0;   // cumulative after aggregation
  double train_loss = 0.0;
  bool experiment_diverged = false;
  StateTrajectory trajectory;            // the experiment rollout
  std::vector<ControllerTick> qp_log;    // per-tick augmentation diagnostics
  ResidualEstimator estimator_after;     // the fit produced by this episode
};

struct RunRecord {
  std::vector<EpisodeRecord> episodes;
  ResidualEstimator final_estimator;
  EvalMetrics nominal_eval;  // the nominal controller, measured once up front
  uint64_t seed = 0;
  bool aborted = false;      // an episode's ERM failed; record is partial
  std::string abort_reason;
};

struct DaclyfOptions {
  int episodes = 20;
  TrustSchedule trust;
  ExplorationSchedule exploration;
  double init_pitch_range = 0.02;  // initial pitch ~ U[-range, +range]
  Vec eval_q0{0.0, 0.0};           // evaluation rollouts start here, at rest
  SimulateOptions sim;
  TrainConfig train;
  AugmentationConfig augmentation;  // c3 filled from the CLF unless overridden
};

/// The episodic loop: for each episode, sample an initial configuration,
/// run an experiment with the previous controller plus exploration noise,
/// aggregate the dataset, refit the residual networks against the fixed
/// model-based estimate, and rebuild the augmenting controller around the
/// fixed nominal scaled by the trust coefficient. Each episode ends with
/// a noise-free evaluation of the updated controller.
RunRecord run_daclyf(const RoboticModel& plant, const RoboticModel& est_model,
                     const TrackingProblem& tp, const Clf& clf, const Controller& nominal,
                     const DaclyfOptions& opt, uint64_t seed);

/// The controller DaCLyF would execute for a given trust and estimator:
/// u_0 + w * augment(u_0, What_dot). With w = 0 the nominal is returned
/// untouched. The shared AugmentingController instance carries the
/// smoothing state and diagnostics log.
Controller trust_blended_controller(const Controller& nominal,
                                    std::shared_ptr<AugmentingController> aug,
                                    double trust);

}  // namespace daclyf
