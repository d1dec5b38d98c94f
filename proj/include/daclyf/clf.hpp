#pragma once

#include "daclyf/dynamics.hpp"
#include "daclyf/numerics.hpp"

namespace daclyf {

/// Output tracking task: k outputs of relative degree 2 with a twice
/// differentiable desired trajectory on [t0, tf].
struct TrackingProblem {
  int k = 0;
  std::function<Vec(const Vec& q)> output;                             // y(q)
  std::function<Matrix(const Vec& q)> output_jac;                      // dy/dq
  std::function<Matrix(const Vec& q, const Vec& qd)> output_rate_jac;  // d(ydot)/dq
  std::function<Vec(double t)> desired;
  std::function<Vec(double t)> desired_rate;
  std::function<Vec(double t)> desired_accel;
  double t0 = 0.0;
  double tf = 0.0;
};

/// Pitch-angle tracking for the Segway: y = theta, desired trajectory
/// theta_d(t) = amplitude * sin(omega t) * s(t) with the smooth-start
/// window s(t) = min(1, (t/ramp)^2 (3 - 2 t/ramp)). Analytic first and
/// second derivatives.
TrackingProblem segway_pitch_tracking(double amplitude, double omega, double ramp_time,
                                      double t0, double tf);

/// Error state eta = (y - y_d, ydot - ydot_d), with ydot = dy/dq qd.
Vec error_state(const TrackingProblem& tp, const Vec& q, const Vec& qd, double t);

/// Quadratic Lyapunov function V(eta) = eta^T P eta built from the
/// double-integrator error dynamics closed by the gain K = [Kp Kd]:
/// A_cl = F - G K, P solves A_cl^T P + P A_cl = -Q, and the certificate
/// constants are c1 = lambda_min(P), c2 = lambda_max(P), c3 = lambda_min(Q).
struct Clf {
  int k = 0;
  Matrix kp;    // k x k, symmetric positive definite
  Matrix kd;    // k x k, symmetric positive definite
  Matrix gain;  // K = [Kp Kd], k x 2k
  Matrix a_cl;  // 2k x 2k
  Matrix q;     // 2k x 2k
  Matrix p;     // CTLE solution
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;

  double value(const Vec& eta) const;
  Vec gradient(const Vec& eta) const;  // 2 P eta
};

Clf make_clf(const Matrix& kp, const Matrix& kd, const Matrix& q);

/// Scalar-gain convenience for single-output problems.
Clf make_clf(double kp, double kd, double q_scale = 1.0);

/// Output-coordinate maps of a model: ftilde = d(ydot)/dq qd - dy/dq D^-1 H
/// (the drift of yddot) and gtilde = dy/dq D^-1 B (the input map). gtilde
/// must have full row rank on the operating domain (relative degree 2).
Vec f_tilde(const RoboticModel& model, const TrackingProblem& tp, const Vec& q,
            const Vec& qd);
Matrix g_tilde(const RoboticModel& model, const TrackingProblem& tp, const Vec& q);

/// Right pseudoinverse apply: solves gtilde^+ v via normal equations on
/// the k x k Gram matrix. Rejects near-singular Gram (rank deficiency).
Vec pinv_apply(const Matrix& gt, const Vec& v);

/// Input-output linearizing tracking controller on the given model:
/// u = gtilde^+(-ftilde + yddot_d - K eta). In closed loop on the same
/// model the error obeys etadot = A_cl eta.
Controller io_lin_controller(const RoboticModel& model, const TrackingProblem& tp,
                             const Clf& clf);

/// Affine decomposition of the model-based Lyapunov derivative estimate:
/// Vdot(eta, u) = drift + input_coeff^T u, with
///   drift = dV/deta . (f - rdot) and input_coeff = (dV/deta . g)^T
/// where f, g are the stacked error dynamics maps of the given model.
struct VdotAffine {
  double drift = 0.0;
  Vec input_coeff;

  double eval(const Vec& u) const { return drift + dot(input_coeff, u); }
};

/// Bundles an estimated model with the tracking problem and CLF, exposing
/// the affine decomposition of the Lyapunov derivative estimate.
class VdotModel {
 public:
  VdotModel(RoboticModel model, TrackingProblem tp, Clf clf);

  VdotAffine affine(const Vec& q, const Vec& qd, double t) const;
  double eval(const Vec& q, const Vec& qd, double t, const Vec& u) const;

  const RoboticModel& model() const { return model_; }
  const TrackingProblem& tracking() const { return tp_; }
  const Clf& clf() const { return clf_; }

 private:
  RoboticModel model_;
  TrackingProblem tp_;
  Clf clf_;
};

/// Exact projections of the model error onto the CLF gradient:
///   a = ((g_true - g_est)^T dV/deta),  b = dV/deta . (f_true - f_est),
/// so that Vdot_true(eta, u) = Vdot_est(eta, u) + a^T u + b. Ground-truth
/// oracle for tests and evaluation; a real deployment never has it.
struct Residuals {
  Vec a;
  double b = 0.0;
};

Residuals true_residuals(const RoboticModel& true_model, const RoboticModel& est_model,
                         const TrackingProblem& tp, const Clf& clf, const Vec& q,
                         const Vec& qd, double t);

}  // namespace daclyf
