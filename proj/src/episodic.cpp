#include "daclyf/episodic.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace daclyf {

TrustSchedule TrustSchedule::sigmoid(int episodes, double w_min) {
  if (episodes < 1) throw std::invalid_argument("TrustSchedule: need at least 1 episode");
  TrustSchedule s;
  s.episodes = episodes;
  s.w_min = w_min;
  if (episodes == 1) {
    // degenerate single-episode schedule: the constant w_min
    if (!(w_min >= 0.0 && w_min <= 1.0)) {
      throw std::invalid_argument("TrustSchedule: w_min must lie in [0, 1]");
    }
    s.w_max = w_min;
    s.beta = 0.0;
    return s;
  }
  if (!(w_min > 0.0 && w_min < 0.5)) {
    throw std::invalid_argument("TrustSchedule: w_min must lie in (0, 0.5)");
  }
  s.w_max = 1.0 - w_min;
  s.beta = 2.0 * std::log((1.0 - w_min) / w_min) / (episodes - 1);
  return s;
}

double TrustSchedule::operator()(int k) const {
  if (k < 1 || k > episodes) throw std::out_of_range("TrustSchedule: episode index");
  if (episodes == 1) return w_min;
  const double mid = 0.5 * (episodes + 1);
  return 1.0 / (1.0 + std::exp(-beta * (k - mid)));
}

double ExplorationSchedule::operator()(int k) const {
  if (k < 1) throw std::out_of_range("ExplorationSchedule: episode index");
  if (k <= plateau) return amplitude;
  if (decay <= 0 || k >= plateau + decay) return 0.0;
  return amplitude * static_cast<double>(plateau + decay - k) / decay;
}

Controller perturbed(Controller base, double amplitude, std::shared_ptr<RngStream> rng) {
  if (amplitude < 0.0) throw std::invalid_argument("perturbed: amplitude must be >= 0");
  if (amplitude == 0.0) return base;
  return [base = std::move(base), amplitude, rng](const Vec& q, const Vec& qd, double t) {
    Vec u = base(q, qd, t);
    const double scale = amplitude * norm2(u);
    for (double& ui : u) ui += rng->uniform(-scale, scale);
    return u;
  };
}

ExperimentResult run_experiment(const RoboticModel& plant, const Controller& controller,
                                const Vec& q0, const TrackingProblem& tp, const Clf& clf,
                                const SimulateOptions& opt) {
  ExperimentResult result;
  const Vec qd0(q0.size(), 0.0);
  result.trajectory = simulate(plant, controller, q0, qd0, tp.t0, tp.tf, opt);
  if (result.trajectory.states.size() >= 3) {
    result.data = make_dataset(result.trajectory, tp, clf);
  }
  return result;
}

EvalMetrics trajectory_metrics(const StateTrajectory& traj, const TrackingProblem& tp) {
  EvalMetrics m;
  m.diverged = traj.diverged;
  const int n = traj.n;
  std::vector<double> err_sq(traj.states.size());
  for (size_t i = 0; i < traj.states.size(); ++i) {
    const Vec q(traj.states[i].begin(), traj.states[i].begin() + n);
    const Vec y = tp.output(q);
    const Vec yd = tp.desired(traj.times[i]);
    double e2 = 0.0;
    for (size_t j = 0; j < y.size(); ++j) {
      const double e = y[j] - yd[j];
      e2 += e * e;
      m.max_err = std::max(m.max_err, std::abs(e));
    }
    err_sq[i] = e2;
  }
  for (size_t i = 0; i + 1 < err_sq.size(); ++i) {
    m.ise += 0.5 * (err_sq[i] + err_sq[i + 1]) * (traj.times[i + 1] - traj.times[i]);
  }
  return m;
}

EvalMetrics evaluate(const RoboticModel& plant, const Controller& controller,
                     const TrackingProblem& tp, const Vec& q0, const Vec& qd0,
                     const SimulateOptions& opt) {
  const StateTrajectory traj = simulate(plant, controller, q0, qd0, tp.t0, tp.tf, opt);
  return trajectory_metrics(traj, tp);
}

Controller trust_blended_controller(const Controller& nominal,
                                    std::shared_ptr<AugmentingController> aug,
                                    double trust) {
  if (trust == 0.0 || !aug) return nominal;
  return [nominal, aug, trust](const Vec& q, const Vec& qd, double t) {
    const Vec u0 = nominal(q, qd, t);
    const Vec uprime = aug->augmentation(q, qd, t);
    Vec u = u0;
    for (size_t i = 0; i < u.size(); ++i) u[i] += trust * uprime[i];
    return u;
  };
}

RunRecord run_daclyf(const RoboticModel& plant, const RoboticModel& est_model,
                     const TrackingProblem& tp, const Clf& clf, const Controller& nominal,
                     const DaclyfOptions& opt, uint64_t seed) {
  RunRecord record;
  record.seed = seed;
  RngStream master(seed);

  auto base = std::make_shared<const VdotModel>(est_model, tp, clf);
  AugmentationConfig aug_cfg = opt.augmentation;
  if (aug_cfg.c3 <= 0.0) aug_cfg.c3 = clf.c3;

  const Vec eval_qd0(opt.eval_q0.size(), 0.0);
  record.nominal_eval = evaluate(plant, nominal, tp, opt.eval_q0, eval_qd0, opt.sim);

  Dataset aggregate;
  ResidualEstimator estimator;      // empty until the first fit
  Controller executed = nominal;    // u_{k-1}, starts as u_0
  std::shared_ptr<AugmentingController> active_aug;  // diagnostics source

  for (int k = 1; k <= opt.episodes; ++k) {
    RngStream episode_rng = master.split("episode").split(static_cast<uint64_t>(k));

    // initial configuration from Q0: pitch offset, zero velocity
    RngStream init_rng = episode_rng.split("init");
    Vec q0(plant.n, 0.0);
    q0[1] = init_rng.uniform(-opt.init_pitch_range, opt.init_pitch_range);

    // experiment with the previous controller plus exploration noise
    const double amplitude = opt.exploration(k);
    auto noise_rng = std::make_shared<RngStream>(episode_rng.split("explore"));
    if (active_aug) active_aug->reset();
    const Controller experiment_controller = perturbed(executed, amplitude, noise_rng);
    ExperimentResult experiment =
        run_experiment(plant, experiment_controller, q0, tp, clf, opt.sim);

    EpisodeRecord ep;
    ep.episode = k;
    ep.trust = opt.trust(k);
    ep.exploration = amplitude;
    ep.experiment_diverged = experiment.trajectory.diverged;
    ep.trajectory = std::move(experiment.trajectory);
    if (active_aug) ep.qp_log = active_aug->log();

    aggregate.append(experiment.data);
    ep.dataset_size = aggregate.size();

    if (aggregate.size() == 0) {
      record.aborted = true;
      record.abort_reason = "episode " + std::to_string(k) + ": no data collected";
      record.episodes.push_back(std::move(ep));
      break;
    }

    // refit both residual networks on the aggregated data
    RngStream train_rng = episode_rng.split("train");
    TrainResult fit;
    try {
      fit = fit_erm(aggregate, base, opt.train, train_rng);
    } catch (const TrainingError& err) {
      record.aborted = true;
      record.abort_reason = "episode " + std::to_string(k) + ": " + err.what();
      record.episodes.push_back(std::move(ep));
      break;
    }
    estimator = fit.estimator;
    ep.train_loss = fit.final_loss;
    ep.estimator_after = estimator;

    // rebuild the augmented controller around the fixed nominal
    ResidualEstimator est_copy = estimator;
    VdotEstimate what = [est_copy](const Vec& q, const Vec& qd, double t) {
      return est_copy.affine(q, qd, t);
    };
    active_aug = std::make_shared<AugmentingController>(nominal, what, tp, aug_cfg);
    executed = trust_blended_controller(nominal, active_aug, ep.trust);

    // noise-free evaluation of the updated controller
    auto eval_aug = std::make_shared<AugmentingController>(nominal, what, tp, aug_cfg);
    const Controller eval_controller =
        trust_blended_controller(nominal, eval_aug, ep.trust);
    ep.eval = evaluate(plant, eval_controller, tp, opt.eval_q0, eval_qd0, opt.sim);

    record.episodes.push_back(std::move(ep));
  }

  record.final_estimator = estimator;
  return record;
}

}  // namespace daclyf
