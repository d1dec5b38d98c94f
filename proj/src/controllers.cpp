#include "daclyf/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace daclyf {

namespace {
constexpr double kFeasTol = 1e-11;
constexpr double kSlopeTol = 1e-13;
}  // namespace

double QpSolution::objective(const QpProblem& p) const {
  return 0.5 * dot(z, p.hessian * z) + dot(p.linear, z) + p.constant;
}

QpSolution solve_qp(const QpProblem& p) {
  const int d = p.hessian.rows;
  const int c = p.ineq.rows;
  QpSolution sol;
  sol.lambda.assign(c, 0.0);

  // unconstrained minimum H z = -g
  Vec z;
  try {
    z = lu_solve(p.hessian, (-1.0) * p.linear);
  } catch (const SingularMatrixError&) {
    return sol;  // degenerate cost rejected as failure
  }

  std::vector<int> active;
  Vec lam_active;
  const int iter_cap = 100 * (d + c);
  int iters = 0;

  auto row = [&](int i) {
    Vec a(d, 0.0);
    for (int j = 0; j < d; ++j) a[j] = p.ineq(i, j);
    return a;
  };

  while (iters < iter_cap) {
    // most violated inactive constraint
    int worst = -1;
    double worst_violation = kFeasTol;
    for (int i = 0; i < c; ++i) {
      if (std::find(active.begin(), active.end(), i) != active.end()) continue;
      double v = -p.ineq_bound[i];
      for (int j = 0; j < d; ++j) v += p.ineq(i, j) * z[j];
      if (v > worst_violation) {
        worst_violation = v;
        worst = i;
      }
    }
    if (worst < 0) {
      sol.status = QpStatus::optimal;
      sol.z = z;
      sol.active = active;
      for (size_t k = 0; k < active.size(); ++k)
        sol.lambda[active[k]] = std::max(0.0, lam_active[k]);
      sol.iterations = iters;
      return sol;
    }

    const Vec a_p = row(worst);
    double lam_p = 0.0;

    // bring constraint `worst` to the boundary, keeping the active set
    // stationary and all multipliers nonnegative
    while (iters < iter_cap) {
      ++iters;
      const int w = static_cast<int>(active.size());
      Vec dz(d, 0.0);
      Vec dlam(w, 0.0);
      {
        Matrix kkt(d + w, d + w);
        Vec rhs(d + w, 0.0);
        for (int i = 0; i < d; ++i) {
          for (int j = 0; j < d; ++j) kkt(i, j) = p.hessian(i, j);
          rhs[i] = -a_p[i];
        }
        for (int k = 0; k < w; ++k) {
          for (int j = 0; j < d; ++j) {
            kkt(j, d + k) = p.ineq(active[k], j);
            kkt(d + k, j) = p.ineq(active[k], j);
          }
        }
        Vec step;
        try {
          step = lu_solve(kkt, rhs);
        } catch (const SingularMatrixError&) {
          return sol;  // numerical failure
        }
        for (int i = 0; i < d; ++i) dz[i] = step[i];
        for (int k = 0; k < w; ++k) dlam[k] = step[d + k];
      }

      const double slope = dot(a_p, dz);
      double violation = -p.ineq_bound[worst];
      for (int j = 0; j < d; ++j) violation += a_p[j] * z[j];

      double t_full = std::numeric_limits<double>::infinity();
      if (slope < -kSlopeTol) t_full = violation / (-slope);

      double t_block = std::numeric_limits<double>::infinity();
      int blocker = -1;
      for (int k = 0; k < w; ++k) {
        if (dlam[k] < -kSlopeTol) {
          const double t = -lam_active[k] / dlam[k];
          if (t < t_block) {
            t_block = t;
            blocker = k;
          }
        }
      }

      if (!std::isfinite(t_full) && blocker < 0) {
        sol.status = QpStatus::infeasible;
        sol.iterations = iters;
        return sol;
      }

      const double t = std::min(t_full, t_block);
      for (int i = 0; i < d; ++i) z[i] += t * dz[i];
      for (int k = 0; k < w; ++k) lam_active[k] += t * dlam[k];
      lam_p += t;

      if (t_full <= t_block) {
        active.push_back(worst);
        lam_active.push_back(lam_p);
        break;  // outer loop rechecks remaining constraints
      }
      active.erase(active.begin() + blocker);
      lam_active.erase(lam_active.begin() + blocker);
    }
  }
  return sol;  // iteration cap: numerical failure
}

Controller pd_controller(double kp, double kd, const TrackingProblem& tp) {
  return [kp, kd, tp](const Vec& q, const Vec& qd, double t) {
    const Vec y = tp.output(q);
    const Vec ydot = tp.output_jac(q) * qd;
    const Vec yd = tp.desired(t);
    const Vec ydd = tp.desired_rate(t);
    Vec u(tp.k, 0.0);
    for (int i = 0; i < tp.k; ++i) {
      u[i] = -kp * (y[i] - yd[i]) - kd * (ydot[i] - ydd[i]);
    }
    return u;
  };
}

ClfQpController::ClfQpController(VdotModel vdot, QpCost cost)
    : vdot_(std::move(vdot)), cost_(std::move(cost)) {}

ClfQpController::ClfQpController(VdotModel vdot) : vdot_(std::move(vdot)) {
  const int m = vdot_.model().m;
  cost_.m = Matrix::identity(m);
  cost_.s.assign(m, 0.0);
  cost_.r = 0.0;
}

Vec ClfQpController::operator()(const Vec& q, const Vec& qd, double t) {
  const int m = vdot_.model().m;
  const VdotAffine va = vdot_.affine(q, qd, t);
  const Vec eta = error_state(vdot_.tracking(), q, qd, t);
  const double bound = -vdot_.clf().c3 * dot(eta, eta);

  ControllerTick tick;
  tick.t = t;

  Vec u(m, 0.0);
  const double coeff_norm = norm_inf(va.input_coeff);
  if (coeff_norm <= 1e-14) {
    // constraint row vanishes; satisfiable only if the drift already is
    try {
      u = lu_solve(cost_.m, (-1.0) * cost_.s);
    } catch (const SingularMatrixError&) {
      u.assign(m, 0.0);
    }
    tick.violated = va.drift > bound + 1e-9;
  } else {
    QpProblem prob;
    prob.hessian = cost_.m;
    prob.linear = cost_.s;
    prob.constant = cost_.r;
    prob.ineq = Matrix(1, m);
    for (int j = 0; j < m; ++j) prob.ineq(0, j) = va.input_coeff[j];
    prob.ineq_bound = Vec{bound - va.drift};
    const QpSolution sol = solve_qp(prob);
    if (sol.status == QpStatus::optimal) {
      u = sol.z;
    } else {
      try {
        u = lu_solve(cost_.m, (-1.0) * cost_.s);
      } catch (const SingularMatrixError&) {
        u.assign(m, 0.0);
      }
      tick.fallback = true;
    }
  }
  tick.vdot_pred = va.eval(u);
  tick.violated = tick.violated || tick.vdot_pred > bound + 1e-9;
  log_.push_back(tick);
  return u;
}

AugmentingController::AugmentingController(Controller nominal, VdotEstimate estimate,
                                           TrackingProblem tp, AugmentationConfig cfg)
    : nominal_(std::move(nominal)),
      estimate_(std::move(estimate)),
      tp_(std::move(tp)),
      cfg_(cfg) {
  if (!(cfg_.c3 > 0.0)) {
    throw std::invalid_argument("AugmentingController: c3 must be positive");
  }
  if (!(cfg_.slack_weight > 0.0) || cfg_.smooth_weight < 0.0) {
    throw std::invalid_argument("AugmentingController: invalid weights");
  }
}

Vec AugmentingController::augmentation(const Vec& q, const Vec& qd, double t) {
  return solve_tick(nominal_(q, qd, t), q, qd, t);
}

Vec AugmentingController::solve_tick(const Vec& u_nom, const Vec& q, const Vec& qd,
                                     double t) {
  const int m = static_cast<int>(u_nom.size());
  if (u_prev_.empty()) u_prev_.assign(m, 0.0);

  const VdotAffine est = estimate_(q, qd, t);
  const Vec eta = error_state(tp_, q, qd, t);
  const double bound = -cfg_.c3 * dot(eta, eta);

  ControllerTick tick;
  tick.t = t;

  if (!std::isfinite(est.drift) || !all_finite(est.input_coeff) || !all_finite(u_nom)) {
    tick.fallback = true;
    tick.vdot_pred = est.drift;
    log_.push_back(tick);
    u_prev_.assign(m, 0.0);
    return Vec(m, 0.0);
  }

  // decision variables (u', delta)
  QpProblem prob;
  prob.hessian = Matrix(m + 1, m + 1);
  prob.linear.assign(m + 1, 0.0);
  for (int i = 0; i < m; ++i) {
    prob.hessian(i, i) = 1.0 + 2.0 * cfg_.smooth_weight;
    prob.linear[i] = u_nom[i] - 2.0 * cfg_.smooth_weight * u_prev_[i];
  }
  const double coeff_sq = dot(est.input_coeff, est.input_coeff);
  prob.hessian(m, m) = cfg_.slack_weight * std::max(coeff_sq, cfg_.delta_floor);

  prob.ineq = Matrix(2, m + 1);
  prob.ineq_bound.assign(2, 0.0);
  for (int j = 0; j < m; ++j) prob.ineq(0, j) = est.input_coeff[j];
  prob.ineq(0, m) = -1.0;
  prob.ineq_bound[0] = bound - est.drift - dot(est.input_coeff, u_nom);
  prob.ineq(1, m) = -1.0;
  prob.ineq_bound[1] = 0.0;

  const QpSolution sol = solve_qp(prob);
  Vec u_prime(m, 0.0);
  if (sol.status == QpStatus::optimal) {
    u_prime.assign(sol.z.begin(), sol.z.begin() + m);
    tick.slack = sol.z[m];
  } else {
    tick.fallback = true;
  }
  u_prev_ = u_prime;

  Vec u_total = u_nom + u_prime;
  tick.vdot_pred = est.eval(u_total);
  tick.violated = tick.vdot_pred > bound + tick.slack + 1e-9;
  log_.push_back(tick);
  return u_prime;
}

Vec AugmentingController::operator()(const Vec& q, const Vec& qd, double t) {
  const Vec u_nom = nominal_(q, qd, t);
  return u_nom + solve_tick(u_nom, q, qd, t);
}

}  // namespace daclyf
