#pragma once

#include <functional>

#include "daclyf/numerics.hpp"

namespace daclyf {

/// Physical parameters of the planar Segway. Wheel quantities cover the
/// wheel pair; the motor torque constant maps commanded voltage directly
/// to axle torque and the back-EMF constant gives volts per rad/s of
/// motor speed relative to the body. Values are validated strictly
/// positive.
struct SegwayParams {
  double wheel_mass = 4.0;       // kg
  double body_mass = 20.0;       // kg
  double wheel_inertia = 0.14;   // kg m^2
  double body_inertia = 1.5;     // kg m^2
  double wheel_radius = 0.19;    // m
  double com_distance = 0.30;    // m
  double motor_kt = 1.8;         // N m / V
  double motor_kb = 0.1;         // V s / rad
  double gravity = 9.81;         // m / s^2

  void validate() const;
};

/// Affine robotic system D(q) qdd + C(q, qd) qd + G(q) + damping(q, qd) = B u.
/// The combined drift H collects everything next to the inertia term;
/// velocity_drift carries actuator damping (back-EMF) so that C stays the
/// pure Christoffel map and B stays static.
struct RoboticModel {
  int n = 0;
  int m = 0;
  std::function<Matrix(const Vec& q)> inertia;
  std::function<Matrix(const Vec& q, const Vec& qd)> coriolis;
  std::function<Vec(const Vec& q)> gravity;
  Matrix actuation;
  std::function<Vec(const Vec& q, const Vec& qd)> velocity_drift;  // optional

  /// H(q, qd) = C(q, qd) qd + G(q) + velocity_drift(q, qd).
  Vec drift(const Vec& q, const Vec& qd) const;

  /// qdd = D(q)^{-1} (B u - H(q, qd)), via Cholesky solve on D.
  Vec forward_dynamics(const Vec& q, const Vec& qd, const Vec& u) const;
};

/// Planar wheeled inverted pendulum with q = (x, theta): wheel position
/// and pitch angle from vertical, one voltage input driving both motors.
/// Upright rest with zero input is an equilibrium. Voltage polarity is
/// chosen so that positive input produces positive pitch torque.
RoboticModel segway_model(const SegwayParams& p);

/// Multiplies every parameter except gravity by an independent uniform
/// draw from [1 - fraction, 1 + fraction]. Requires 0 <= fraction < 1.
SegwayParams perturb_params(const SegwayParams& p, double fraction, RngStream& rng);

using Controller = std::function<Vec(const Vec& q, const Vec& qd, double t)>;

/// Discrete-time state history of a closed-loop run. States and times are
/// recorded at control ticks; inputs[i] is the value held over
/// [times[i], times[i+1]), so inputs has one entry less than states.
struct StateTrajectory {
  int n = 0;
  int m = 0;
  std::vector<double> times;
  std::vector<Vec> states;  // (q, qd) stacked, length 2n
  std::vector<Vec> inputs;
  bool diverged = false;
};

struct SimulateOptions {
  double dt_ctrl = 0.01;        // controller sample period (zero-order hold)
  double dt_integrator = 1e-3;  // RK4 substep
  double divergence_limit = 1e6;
};

/// Integrates the plant under a zero-order-hold controller. dt_ctrl must
/// be an integer multiple of dt_integrator. A state component exceeding
/// the divergence limit (or a non-finite integration stage) stops the run
/// early and returns the partial trajectory with the diverged flag set;
/// this is an experimental outcome, not an error.
StateTrajectory simulate(const RoboticModel& model, const Controller& controller,
                         const Vec& q0, const Vec& qd0, double t0, double tf,
                         const SimulateOptions& opt = {});

}  // namespace daclyf
