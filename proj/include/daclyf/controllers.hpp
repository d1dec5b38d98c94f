#pragma once

#include <vector>

#include "daclyf/clf.hpp"
#include "daclyf/dynamics.hpp"
#include "daclyf/numerics.hpp"

namespace daclyf {

/// Inequality-constrained quadratic program
///   min  1/2 z^T H z + g^T z + r   s.t.  A z <= b.
/// H must be symmetric positive definite.
struct QpProblem {
  Matrix hessian;  // d x d
  Vec linear;      // d
  double constant = 0.0;
  Matrix ineq;        // c x d
  Vec ineq_bound;     // c
};

enum class QpStatus { optimal, infeasible, failure };

struct QpSolution {
  QpStatus status = QpStatus::failure;
  Vec z;
  Vec lambda;               // one multiplier per constraint row, zero if inactive
  std::vector<int> active;  // indices of active constraints
  int iterations = 0;

  double objective(const QpProblem& p) const;
};

/// Dense active-set solver (dual iteration from the unconstrained
/// minimum, adding violated constraints and dropping blocking ones).
/// Terminates exactly for the tiny problems used here; iteration cap
/// 100 * (d + c). Infeasibility (empty polyhedron) is reported as a
/// distinct status from numerical failure.
QpSolution solve_qp(const QpProblem& p);

/// PD tracking controller on the output error: u = -kp (y - y_d) - kd (ydot - ydot_d).
Controller pd_controller(double kp, double kd, const TrackingProblem& tp);

/// Per-tick record of what a QP-based controller did, for episode logs.
struct ControllerTick {
  double t = 0.0;
  double vdot_pred = 0.0;  // derivative estimate at the returned input
  double slack = 0.0;      // relaxation delta (0 when the formulation has none)
  bool violated = false;   // constraint could not be met this tick
  bool fallback = false;   // solver failed; nominal input returned
};

struct QpCost {
  Matrix m;  // m x m positive semi-definite
  Vec s;
  double r = 0.0;
};

/// Pointwise min-cost controller subject to the CLF decrease constraint
///   Vdot(eta, u) <= -c3 ||eta||^2
/// evaluated through the estimated model. Infeasible ticks (zero input
/// coefficient with the drift above the bound) return the unconstrained
/// cost minimizer and are flagged; that failure mode is an observed
/// experimental behavior, not an error.
class ClfQpController {
 public:
  ClfQpController(VdotModel vdot, QpCost cost);
  explicit ClfQpController(VdotModel vdot);  // min-norm cost

  Vec operator()(const Vec& q, const Vec& qd, double t);

  const std::vector<ControllerTick>& log() const { return log_; }
  void clear_log() { log_.clear(); }

 private:
  VdotModel vdot_;
  QpCost cost_;
  std::vector<ControllerTick> log_;
};

struct AugmentationConfig {
  double c3 = 0.0;             // decrease rate; <= 0 means take lambda_min(Q) from the CLF
  double slack_weight = 100.0;   // penalty on delta^2, scaled by the constraint gradient
  double smooth_weight = 0.1;    // pull toward the previous augmentation
  double delta_floor = 1e-8;     // conditioning floor on the delta quadratic
};

/// Estimator interface used by the augmenting controller: the affine
/// decomposition of the learned Lyapunov derivative estimate at a state.
using VdotEstimate = std::function<VdotAffine(const Vec& q, const Vec& qd, double t)>;

/// Minimum-norm augmentation around a nominal controller, with a slack
/// variable that relaxes the decrease constraint near the trajectory and
/// a smoothing pull toward the previous tick's augmentation:
///   min 1/2 ||u_nom + u'||^2 + Rbar ||u' - u_prev||^2
///       + 1/2 Cbar ||what_coeff||^2 delta^2
///   s.t. what_drift + what_coeff^T (u_nom + u') <= -c3 ||eta||^2 + delta,
///        delta >= 0.
/// On solver failure the nominal input is returned and the tick flagged.
class AugmentingController {
 public:
  AugmentingController(Controller nominal, VdotEstimate estimate, TrackingProblem tp,
                       AugmentationConfig cfg);

  /// The augmentation u' alone (advances u_prev).
  Vec augmentation(const Vec& q, const Vec& qd, double t);
  /// Full augmented input u_nom + u'.
  Vec operator()(const Vec& q, const Vec& qd, double t);

  const std::vector<ControllerTick>& log() const { return log_; }
  void clear_log() { log_.clear(); }
  void reset() {
    u_prev_.assign(u_prev_.size(), 0.0);
    log_.clear();
  }

 private:
  Vec solve_tick(const Vec& u_nom, const Vec& q, const Vec& qd, double t);

  Controller nominal_;
  VdotEstimate estimate_;
  TrackingProblem tp_;
  AugmentationConfig cfg_;
  Vec u_prev_;
  std::vector<ControllerTick> log_;
};

}  // namespace daclyf
