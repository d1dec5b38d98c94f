#include "daclyf/clf.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace daclyf {

TrackingProblem segway_pitch_tracking(double amplitude, double omega, double ramp_time,
                                      double t0, double tf) {
  if (ramp_time <= 0.0) throw std::invalid_argument("ramp_time must be positive");
  TrackingProblem tp;
  tp.k = 1;
  tp.t0 = t0;
  tp.tf = tf;
  tp.output = [](const Vec& q) { return Vec{q[1]}; };
  tp.output_jac = [](const Vec&) { return Matrix(1, 2, {0.0, 1.0}); };
  tp.output_rate_jac = [](const Vec&, const Vec&) { return Matrix(1, 2, {0.0, 0.0}); };

  // smooth-start window s on [0, ramp], identically 1 afterwards
  struct Window {
    double s, sd, sdd;
  };
  auto window = [ramp_time](double t) -> Window {
    if (t >= ramp_time) return {1.0, 0.0, 0.0};
    if (t <= 0.0) return {0.0, 0.0, 0.0};
    const double z = t / ramp_time;
    return {z * z * (3.0 - 2.0 * z), 6.0 * z * (1.0 - z) / ramp_time,
            (6.0 - 12.0 * z) / (ramp_time * ramp_time)};
  };

  tp.desired = [=](double t) {
    return Vec{amplitude * std::sin(omega * t) * window(t).s};
  };
  tp.desired_rate = [=](double t) {
    const Window w = window(t);
    return Vec{amplitude * (omega * std::cos(omega * t) * w.s + std::sin(omega * t) * w.sd)};
  };
  tp.desired_accel = [=](double t) {
    const Window w = window(t);
    return Vec{amplitude * (-omega * omega * std::sin(omega * t) * w.s +
                            2.0 * omega * std::cos(omega * t) * w.sd +
                            std::sin(omega * t) * w.sdd)};
  };
  return tp;
}

Vec error_state(const TrackingProblem& tp, const Vec& q, const Vec& qd, double t) {
  const Vec y = tp.output(q);
  const Vec ydot = tp.output_jac(q) * qd;
  const Vec yd = tp.desired(t);
  const Vec ydd = tp.desired_rate(t);
  Vec eta(2 * tp.k, 0.0);
  for (int i = 0; i < tp.k; ++i) {
    eta[i] = y[i] - yd[i];
    eta[tp.k + i] = ydot[i] - ydd[i];
  }
  return eta;
}

double Clf::value(const Vec& eta) const {
  return dot(eta, p * eta);
}

Vec Clf::gradient(const Vec& eta) const {
  return 2.0 * (p * eta);
}

Clf make_clf(const Matrix& kp, const Matrix& kd, const Matrix& q) {
  const int k = kp.rows;
  if (kp.cols != k || kd.rows != k || kd.cols != k || q.rows != 2 * k || q.cols != 2 * k) {
    throw std::invalid_argument("make_clf: dimension mismatch");
  }
  Clf clf;
  clf.k = k;
  clf.kp = kp;
  clf.kd = kd;
  clf.gain = Matrix(k, 2 * k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      clf.gain(i, j) = kp(i, j);
      clf.gain(i, k + j) = kd(i, j);
    }
  // A_cl = F - G K = [0 I; -Kp -Kd]
  clf.a_cl = Matrix(2 * k, 2 * k);
  for (int i = 0; i < k; ++i) clf.a_cl(i, k + i) = 1.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      clf.a_cl(k + i, j) = -kp(i, j);
      clf.a_cl(k + i, k + j) = -kd(i, j);
    }
  clf.q = q;
  clf.p = solve_ctle(clf.a_cl, q);

  Matrix lower;
  if (!cholesky(clf.p, lower)) {
    throw std::domain_error("make_clf: CTLE solution not positive definite");
  }
  const EigBounds pb = sym_eig_bounds(clf.p);
  const EigBounds qb = sym_eig_bounds(q);
  clf.c1 = pb.lambda_min;
  clf.c2 = pb.lambda_max;
  clf.c3 = qb.lambda_min;
  return clf;
}

Clf make_clf(double kp, double kd, double q_scale) {
  return make_clf(Matrix(1, 1, {kp}), Matrix(1, 1, {kd}), q_scale * Matrix::identity(2));
}

Vec f_tilde(const RoboticModel& model, const TrackingProblem& tp, const Vec& q,
            const Vec& qd) {
  const Matrix jac = tp.output_jac(q);
  const Matrix rate_jac = tp.output_rate_jac(q, qd);
  // D^{-1} H without forming the inverse
  const Vec h = model.drift(q, qd);
  Matrix d = model.inertia(q);
  const Vec dinv_h = lu_solve(d, h);
  return rate_jac * qd - jac * dinv_h;
}

Matrix g_tilde(const RoboticModel& model, const TrackingProblem& tp, const Vec& q) {
  const Matrix jac = tp.output_jac(q);
  const Matrix d = model.inertia(q);
  Matrix dinv_b(model.n, model.m);
  for (int col = 0; col < model.m; ++col) {
    Vec bcol(model.n, 0.0);
    for (int i = 0; i < model.n; ++i) bcol[i] = model.actuation(i, col);
    const Vec sol = lu_solve(d, bcol);
    for (int i = 0; i < model.n; ++i) dinv_b(i, col) = sol[i];
  }
  return jac * dinv_b;
}

Vec pinv_apply(const Matrix& gt, const Vec& v) {
  const int k = gt.rows;
  const int m = gt.cols;
  if (k == 1 && m == 1) {
    if (std::abs(gt(0, 0)) <= 1e-8) {
      throw std::domain_error("pinv_apply: input map below conditioning threshold");
    }
    return Vec{v[0] / gt(0, 0)};
  }
  // right pseudoinverse g^T (g g^T)^{-1} for full row rank g
  const Matrix gram = gt * transpose(gt);
  Vec w;
  try {
    w = lu_solve(gram, v);
  } catch (const SingularMatrixError&) {
    throw std::domain_error("pinv_apply: rank-deficient input map");
  }
  return transpose(gt) * w;
}

Controller io_lin_controller(const RoboticModel& model, const TrackingProblem& tp,
                             const Clf& clf) {
  return [model, tp, clf](const Vec& q, const Vec& qd, double t) {
    const Vec eta = error_state(tp, q, qd, t);
    const Vec ft = f_tilde(model, tp, q, qd);
    const Matrix gt = g_tilde(model, tp, q);
    const Vec yddot_d = tp.desired_accel(t);
    const Vec nu = (-1.0) * (clf.gain * eta);
    Vec rhs(tp.k, 0.0);
    for (int i = 0; i < tp.k; ++i) rhs[i] = -ft[i] + yddot_d[i] + nu[i];
    return pinv_apply(gt, rhs);
  };
}

VdotModel::VdotModel(RoboticModel model, TrackingProblem tp, Clf clf)
    : model_(std::move(model)), tp_(std::move(tp)), clf_(std::move(clf)) {}

VdotAffine VdotModel::affine(const Vec& q, const Vec& qd, double t) const {
  const int k = tp_.k;
  const Vec eta = error_state(tp_, q, qd, t);
  const Vec grad = clf_.gradient(eta);

  // stacked error dynamics: f = (dy/dq qd, ftilde), rdot = (ydot_d, yddot_d),
  // g = (0, gtilde)
  const Vec ydot = tp_.output_jac(q) * qd;
  const Vec ft = f_tilde(model_, tp_, q, qd);
  const Vec yd_rate = tp_.desired_rate(t);
  const Vec yd_accel = tp_.desired_accel(t);

  VdotAffine out;
  double drift = 0.0;
  for (int i = 0; i < k; ++i) {
    drift += grad[i] * (ydot[i] - yd_rate[i]);
    drift += grad[k + i] * (ft[i] - yd_accel[i]);
  }
  out.drift = drift;

  const Matrix gt = g_tilde(model_, tp_, q);
  out.input_coeff.assign(model_.m, 0.0);
  for (int j = 0; j < model_.m; ++j) {
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += grad[k + i] * gt(i, j);
    out.input_coeff[j] = acc;
  }
  return out;
}

double VdotModel::eval(const Vec& q, const Vec& qd, double t, const Vec& u) const {
  return affine(q, qd, t).eval(u);
}

Residuals true_residuals(const RoboticModel& true_model, const RoboticModel& est_model,
                         const TrackingProblem& tp, const Clf& clf, const Vec& q,
                         const Vec& qd, double t) {
  const int k = tp.k;
  const Vec eta = error_state(tp, q, qd, t);
  const Vec grad = clf.gradient(eta);

  const Vec ft_true = f_tilde(true_model, tp, q, qd);
  const Vec ft_est = f_tilde(est_model, tp, q, qd);
  const Matrix gt_true = g_tilde(true_model, tp, q);
  const Matrix gt_est = g_tilde(est_model, tp, q);

  Residuals res;
  res.a.assign(true_model.m, 0.0);
  // only the acceleration rows of the stacked maps differ between models
  for (int j = 0; j < true_model.m; ++j) {
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += grad[k + i] * (gt_true(i, j) - gt_est(i, j));
    res.a[j] = acc;
  }
  double b = 0.0;
  for (int i = 0; i < k; ++i) b += grad[k + i] * (ft_true[i] - ft_est[i]);
  res.b = b;
  return res;
}

}  // namespace daclyf
