#include "daclyf/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace daclyf {

void SegwayParams::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("SegwayParams: ") + name +
                                  " must be strictly positive");
    }
  };
  check(wheel_mass, "wheel_mass");
  check(body_mass, "body_mass");
  check(wheel_inertia, "wheel_inertia");
  check(body_inertia, "body_inertia");
  check(wheel_radius, "wheel_radius");
  check(com_distance, "com_distance");
  check(motor_kt, "motor_kt");
  check(motor_kb, "motor_kb");
  check(gravity, "gravity");
}

Vec RoboticModel::drift(const Vec& q, const Vec& qd) const {
  Vec h = coriolis(q, qd) * qd + gravity(q);
  if (velocity_drift) {
    const Vec extra = velocity_drift(q, qd);
    for (int i = 0; i < n; ++i) h[i] += extra[i];
  }
  return h;
}

Vec RoboticModel::forward_dynamics(const Vec& q, const Vec& qd, const Vec& u) const {
  const Matrix d = inertia(q);
  Matrix lower;
  if (!cholesky(d, lower)) {
    throw std::domain_error("forward_dynamics: inertia matrix not positive definite");
  }
  Vec rhs = actuation * u - drift(q, qd);
  // forward substitution L y = rhs
  const int dim = d.rows;
  Vec y(dim, 0.0);
  for (int i = 0; i < dim; ++i) {
    double acc = rhs[i];
    for (int j = 0; j < i; ++j) acc -= lower(i, j) * y[j];
    y[i] = acc / lower(i, i);
  }
  // back substitution L^T x = y
  Vec x(dim, 0.0);
  for (int i = dim - 1; i >= 0; --i) {
    double acc = y[i];
    for (int j = i + 1; j < dim; ++j) acc -= lower(j, i) * x[j];
    x[i] = acc / lower(i, i);
  }
  return x;
}

RoboticModel segway_model(const SegwayParams& p) {
  p.validate();
  RoboticModel model;
  model.n = 2;
  model.m = 1;

  const double mw = p.wheel_mass;
  const double mb = p.body_mass;
  const double iw = p.wheel_inertia;
  const double ib = p.body_inertia;
  const double r = p.wheel_radius;
  const double l = p.com_distance;
  const double kt = p.motor_kt;
  const double kb = p.motor_kb;
  const double g = p.gravity;

  const double d11 = mw + mb + iw / (r * r);
  const double d22 = mb * l * l + ib;

  model.inertia = [=](const Vec& q) {
    Matrix d(2, 2);
    d(0, 0) = d11;
    d(0, 1) = mb * l * std::cos(q[1]);
    d(1, 0) = d(0, 1);
    d(1, 1) = d22;
    return d;
  };

  // Christoffel symbols of D: the only configuration dependence is
  // d12 = mb*l*cos(theta).
  model.coriolis = [=](const Vec& q, const Vec& qd) {
    Matrix c(2, 2);
    c(0, 1) = -mb * l * std::sin(q[1]) * qd[1];
    return c;
  };

  model.gravity = [=](const Vec& q) {
    return Vec{0.0, -mb * g * l * std::sin(q[1])};
  };

  // Motor wired so positive voltage applies positive pitch torque: axle
  // torque tau = -kt*u acting on the relative coordinate x/r - theta.
  Matrix b(2, 1);
  b(0, 0) = -kt / r;
  b(1, 0) = kt;
  model.actuation = b;

  // Back-EMF damping on the motor's relative speed, kept in the drift so
  // the system stays affine in the voltage.
  model.velocity_drift = [=](const Vec& /*q*/, const Vec& qd) {
    const double omega_rel = qd[0] / r - qd[1];
    const double tau = kt * kb * omega_rel;
    return Vec{tau / r, -tau};
  };

  return model;
}

SegwayParams perturb_params(const SegwayParams& p, double fraction, RngStream& rng) {
  if (fraction < 0.0 || fraction >= 1.0) {
    throw std::invalid_argument("perturb_params: fraction must be in [0, 1)");
  }
  SegwayParams out = p;
  auto scale = [&](double v) { return v * rng.uniform(1.0 - fraction, 1.0 + fraction); };
  out.wheel_mass = scale(p.wheel_mass);
  out.body_mass = scale(p.body_mass);
  out.wheel_inertia = scale(p.wheel_inertia);
  out.body_inertia = scale(p.body_inertia);
  out.wheel_radius = scale(p.wheel_radius);
  out.com_distance = scale(p.com_distance);
  out.motor_kt = scale(p.motor_kt);
  out.motor_kb = scale(p.motor_kb);
  // gravity stays untouched
  return out;
}

StateTrajectory simulate(const RoboticModel& model, const Controller& controller,
                         const Vec& q0, const Vec& qd0, double t0, double tf,
                         const SimulateOptions& opt) {
  if (!(tf > t0)) throw std::invalid_argument("simulate: tf must exceed t0");
  if (opt.dt_ctrl <= 0.0 || opt.dt_integrator <= 0.0) {
    throw std::invalid_argument("simulate: steps must be positive");
  }
  const double ratio = opt.dt_ctrl / opt.dt_integrator;
  const int substeps = static_cast<int>(std::lround(ratio));
  if (substeps < 1 || std::abs(ratio - substeps) > 1e-9 * ratio) {
    throw std::invalid_argument(
        "simulate: dt_ctrl must be an integer multiple of dt_integrator");
  }
  const int n = model.n;

  StateTrajectory traj;
  traj.n = n;
  traj.m = model.m;

  const int ticks = static_cast<int>(std::lround((tf - t0) / opt.dt_ctrl));

  Vec state = concat(q0, qd0);
  traj.times.push_back(t0);
  traj.states.push_back(state);

  for (int tick = 0; tick < ticks; ++tick) {
    const double t_tick = t0 + tick * opt.dt_ctrl;
    const Vec q(state.begin(), state.begin() + n);
    const Vec qd(state.begin() + n, state.end());
    const Vec u = controller(q, qd, t_tick);
    if (!all_finite(u)) {
      traj.diverged = true;
      break;
    }

    const OdeField field = [&model, &u, n](double /*t*/, const Vec& x) {
      const Vec xq(x.begin(), x.begin() + n);
      const Vec xqd(x.begin() + n, x.end());
      const Vec qdd = model.forward_dynamics(xq, xqd, u);
      return concat(xqd, qdd);
    };

    bool blown = false;
    for (int s = 0; s < substeps; ++s) {
      try {
        state = rk4_step(field, state, t_tick + s * opt.dt_integrator, opt.dt_integrator);
      } catch (const DivergenceError&) {
        blown = true;
        break;
      }
      if (norm_inf(state) > opt.divergence_limit) {
        blown = true;
        break;
      }
    }
    if (blown) {
      traj.diverged = true;
      break;
    }
    traj.inputs.push_back(u);
    traj.times.push_back(t_tick + opt.dt_ctrl);
    traj.states.push_back(state);
  }
  return traj;
}

}  // namespace daclyf
