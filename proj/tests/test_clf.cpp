#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "daclyf/clf.hpp"
#include "daclyf/dynamics.hpp"

using namespace daclyf;

namespace {

TrackingProblem default_tracking() {
  return segway_pitch_tracking(0.15, 1.0, 1.0, 0.0, 10.0);
}

// stacked error dynamics evaluated independently of VdotModel
double vdot_direct(const RoboticModel& model, const TrackingProblem& tp, const Clf& clf,
                   const Vec& q, const Vec& qd, double t, const Vec& u) {
  const int k = tp.k;
  const Vec eta = error_state(tp, q, qd, t);
  const Vec grad = clf.gradient(eta);
  const Vec ydot = tp.output_jac(q) * qd;
  const Vec ft = f_tilde(model, tp, q, qd);
  const Matrix gt = g_tilde(model, tp, q);
  const Vec rate = tp.desired_rate(t);
  const Vec accel = tp.desired_accel(t);
  double v = 0.0;
  for (int i = 0; i < k; ++i) {
    v += grad[i] * (ydot[i] - rate[i]);
    double row = ft[i] - accel[i];
    for (int j = 0; j < model.m; ++j) row += gt(i, j) * u[j];
    v += grad[k + i] * row;
  }
  return v;
}

}  // namespace

TEST_CASE("desired trajectory starts at rest and matches its derivatives") {
  const TrackingProblem tp = default_tracking();
  CHECK(tp.desired(0.0)[0] == 0.0);
  CHECK(tp.desired_rate(0.0)[0] == 0.0);

  // analytic derivatives vs central differences; the second derivative
  // has a step exactly at the ramp seam t = 1, so sample around it
  const double h = 1e-6;
  for (double t : {0.3, 0.9, 0.999, 1.001, 1.5, 4.2, 7.7}) {
    const double fd_rate = (tp.desired(t + h)[0] - tp.desired(t - h)[0]) / (2.0 * h);
    CHECK(tp.desired_rate(t)[0] == doctest::Approx(fd_rate).epsilon(1e-6));
    const double fd_accel =
        (tp.desired_rate(t + h)[0] - tp.desired_rate(t - h)[0]) / (2.0 * h);
    CHECK(tp.desired_accel(t)[0] == doctest::Approx(fd_accel).epsilon(1e-6));
  }
}

TEST_CASE("error state") {
  const TrackingProblem tp = default_tracking();

  SUBCASE("pitch error coordinates") {
    const Vec q{0.4, 0.2};
    const Vec qd{-0.3, 0.05};
    const double t = 2.0;
    const Vec eta = error_state(tp, q, qd, t);
    CHECK(eta.size() == 2);
    CHECK(eta[0] == doctest::Approx(0.2 - tp.desired(t)[0]).epsilon(1e-14));
    CHECK(eta[1] == doctest::Approx(0.05 - tp.desired_rate(t)[0]).epsilon(1e-14));
  }

  SUBCASE("on-trajectory state gives zero error") {
    const double t = 3.0;
    const Vec q{0.0, default_tracking().desired(t)[0]};
    const Vec qd{0.0, default_tracking().desired_rate(t)[0]};
    CHECK(norm_inf(error_state(tp, q, qd, t)) <= 1e-15);
  }

  SUBCASE("constant target at rest leaves only the position error") {
    TrackingProblem flat = segway_pitch_tracking(0.0, 1.0, 1.0, 0.0, 10.0);
    const Vec eta = error_state(flat, {0.0, 0.1}, {0.0, 0.0}, 5.0);
    CHECK(eta[0] == doctest::Approx(0.1));
    CHECK(eta[1] == 0.0);
  }
}

TEST_CASE("make_clf produces a certified Lyapunov function") {
  const Clf clf = make_clf(25.0, 10.0, 1.0);
  CHECK(clf.c1 > 0.0);
  CHECK(clf.c2 >= clf.c1);
  CHECK(clf.c3 == doctest::Approx(1.0));  // lambda_min of identity Q

  // CTLE residual
  const Matrix residual = transpose(clf.a_cl) * clf.p + clf.p * clf.a_cl + clf.q;
  CHECK(max_abs(residual) <= 1e-10);

  // eigenvalue sandwich on 1e4 random error states
  RngStream rng(31);
  for (int i = 0; i < 10000; ++i) {
    const Vec eta{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
    const double v = clf.value(eta);
    const double n2 = dot(eta, eta);
    CHECK(v >= clf.c1 * n2 - 1e-9);
    CHECK(v <= clf.c2 * n2 + 1e-9);
  }
}

TEST_CASE("lyapunov value and gradient") {
  SUBCASE("zero error") {
    const Clf clf = make_clf(25.0, 10.0, 1.0);
    CHECK(clf.value({0.0, 0.0}) == 0.0);
    CHECK(norm_inf(clf.gradient({0.0, 0.0})) == 0.0);
  }

  SUBCASE("identity P closed form") {
    Clf clf;
    clf.k = 1;
    clf.p = Matrix::identity(2);
    CHECK(clf.value({3.0, 4.0}) == doctest::Approx(25.0));
    const Vec g = clf.gradient({3.0, 4.0});
    CHECK(g[0] == doctest::Approx(6.0));
    CHECK(g[1] == doctest::Approx(8.0));
  }

  SUBCASE("gradient matches central differences") {
    const Clf clf = make_clf(25.0, 10.0, 1.0);
    RngStream rng(37);
    const double h = 1e-6;
    for (int i = 0; i < 50; ++i) {
      const Vec eta{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
      const Vec grad = clf.gradient(eta);
      for (int j = 0; j < 2; ++j) {
        Vec ep = eta, em = eta;
        ep[j] += h;
        em[j] -= h;
        const double fd = (clf.value(ep) - clf.value(em)) / (2.0 * h);
        CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-7));
      }
    }
  }
}

TEST_CASE("io-lin scalar arithmetic") {
  // synthetic 1-dof plant with ftilde = 3, gtilde = 2 at the test state
  RoboticModel m;
  m.n = 1;
  m.m = 1;
  m.inertia = [](const Vec&) { return Matrix::identity(1); };
  m.coriolis = [](const Vec&, const Vec&) { return Matrix(1, 1); };
  m.gravity = [](const Vec&) { return Vec{-3.0}; };
  m.actuation = Matrix(1, 1, {2.0});

  TrackingProblem tp;
  tp.k = 1;
  tp.t0 = 0.0;
  tp.tf = 1.0;
  tp.output = [](const Vec& q) { return Vec{q[0]}; };
  tp.output_jac = [](const Vec&) { return Matrix(1, 1, {1.0}); };
  tp.output_rate_jac = [](const Vec&, const Vec&) { return Matrix(1, 1, {0.0}); };
  tp.desired = [](double t) { return Vec{0.5 * t * t}; };
  tp.desired_rate = [](double t) { return Vec{t}; };
  tp.desired_accel = [](double) { return Vec{1.0}; };

  CHECK(f_tilde(m, tp, {0.0}, {0.0})[0] == doctest::Approx(3.0));
  CHECK(g_tilde(m, tp, {0.0})(0, 0) == doctest::Approx(2.0));

  const Clf clf = make_clf(25.0, 10.0, 1.0);
  const Controller ctrl = io_lin_controller(m, tp, clf);
  // at t = 0 the state (0, 0) sits on the trajectory, so nu = 0 and
  // u = (1/2) (-3 + 1 + 0) = -1
  CHECK(ctrl({0.0}, {0.0}, 0.0)[0] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("io-lin closed loop realizes the linear error dynamics") {
  const SegwayParams p;
  const RoboticModel model = segway_model(p);
  // gentle reference so the zero-order hold does not dominate the
  // finite-difference comparison
  const TrackingProblem tp = segway_pitch_tracking(0.02, 1.0, 1.0, 0.0, 10.0);
  const Clf clf = make_clf(4.0, 4.0, 1.0);
  const Controller ctrl = io_lin_controller(model, tp, clf);

  SimulateOptions opt;
  opt.dt_ctrl = 1e-4;
  opt.dt_integrator = 1e-4;
  const StateTrajectory traj = simulate(model, ctrl, {0.0, 0.01}, {0.0, 0.0}, 0.0, 2.0, opt);
  REQUIRE_FALSE(traj.diverged);

  std::vector<Vec> etas(traj.states.size());
  for (size_t i = 0; i < traj.states.size(); ++i) {
    const Vec q{traj.states[i][0], traj.states[i][1]};
    const Vec qd{traj.states[i][2], traj.states[i][3]};
    etas[i] = error_state(tp, q, qd, traj.times[i]);
  }
  double max_dev = 0.0;
  double max_signal = 0.0;
  for (size_t i = 1; i + 1 < etas.size(); ++i) {
    // the reference acceleration steps at the ramp seam; skip those ticks
    if (std::abs(traj.times[i] - 1.0) <= 2.0 * opt.dt_ctrl) continue;
    const Vec fd = (1.0 / (2.0 * opt.dt_ctrl)) * (etas[i + 1] - etas[i - 1]);
    const Vec lin = clf.a_cl * etas[i];
    max_dev = std::max(max_dev, norm_inf(fd - lin));
    max_signal = std::max(max_signal, norm_inf(lin));
  }
  CHECK(max_dev <= 1e-4);
  CHECK(max_signal > 0.01);  // the check is not vacuous
}

TEST_CASE("vdot affine decomposition") {
  const SegwayParams p;
  const RoboticModel model = segway_model(p);
  const TrackingProblem tp = default_tracking();
  const Clf clf = make_clf(25.0, 10.0, 1.0);
  const VdotModel vdot(model, tp, clf);

  SUBCASE("zero error kills both terms") {
    const double t = 0.0;
    const Vec q{0.0, tp.desired(t)[0]};
    const Vec qd{0.0, tp.desired_rate(t)[0]};
    const VdotAffine va = vdot.affine(q, qd, t);
    CHECK(std::abs(va.drift) <= 1e-14);
    CHECK(norm_inf(va.input_coeff) <= 1e-14);
  }

  SUBCASE("exact affinity in the input") {
    RngStream rng(41);
    for (int i = 0; i < 50; ++i) {
      const Vec q{rng.uniform(-1.0, 1.0), rng.uniform(-0.8, 0.8)};
      const Vec qd{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      const double t = rng.uniform(0.0, 10.0);
      const VdotAffine va = vdot.affine(q, qd, t);
      const double u1 = rng.uniform(-5.0, 5.0);
      const double u2 = rng.uniform(-5.0, 5.0);
      const double alpha = rng.uniform(0.0, 1.0);
      const double mix = va.eval({alpha * u1 + (1.0 - alpha) * u2});
      const double sep = alpha * va.eval({u1}) + (1.0 - alpha) * va.eval({u2});
      CHECK(mix == doctest::Approx(sep).epsilon(1e-12));
    }
  }

  SUBCASE("reconstruction matches the stacked dynamics") {
    RngStream rng(43);
    for (int i = 0; i < 100; ++i) {
      const Vec q{rng.uniform(-1.0, 1.0), rng.uniform(-0.8, 0.8)};
      const Vec qd{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      const double t = rng.uniform(0.0, 10.0);
      const Vec u{rng.uniform(-5.0, 5.0)};
      const double direct = vdot_direct(model, tp, clf, q, qd, t, u);
      const double via_pair = vdot.eval(q, qd, t, u);
      CHECK(std::abs(direct - via_pair) <= 1e-12 * (1.0 + std::abs(direct)));
    }
  }

  SUBCASE("io-lin control achieves the certified decrease") {
    const Controller ctrl = io_lin_controller(model, tp, clf);
    const StateTrajectory traj = simulate(model, ctrl, {0.0, 0.05}, {0.0, 0.0}, 0.0, 5.0, {});
    REQUIRE_FALSE(traj.diverged);
    for (size_t i = 0; i < traj.inputs.size(); ++i) {
      const Vec q{traj.states[i][0], traj.states[i][1]};
      const Vec qd{traj.states[i][2], traj.states[i][3]};
      const double t = traj.times[i];
      const Vec eta = error_state(tp, q, qd, t);
      const double val = vdot.eval(q, qd, t, traj.inputs[i]);
      CHECK(val <= -clf.c3 * dot(eta, eta) + 1e-8);
    }
  }
}

TEST_CASE("closed-loop exponential decrease of V on the estimated plant") {
  const SegwayParams p;
  const RoboticModel model = segway_model(p);
  const TrackingProblem tp = default_tracking();
  const Clf clf = make_clf(25.0, 10.0, 1.0);
  const Controller ctrl = io_lin_controller(model, tp, clf);
  const StateTrajectory traj = simulate(model, ctrl, {0.0, 0.05}, {0.0, 0.0}, 0.0, 10.0, {});
  REQUIRE_FALSE(traj.diverged);
  const double rate = clf.c3 / clf.c2;
  const Vec q0{traj.states[0][0], traj.states[0][1]};
  const Vec qd0{traj.states[0][2], traj.states[0][3]};
  const double v0 = clf.value(error_state(tp, q0, qd0, traj.times[0]));
  REQUIRE(v0 > 0.0);
  for (size_t i = 0; i < traj.states.size(); ++i) {
    const Vec q{traj.states[i][0], traj.states[i][1]};
    const Vec qd{traj.states[i][2], traj.states[i][3]};
    const double v = clf.value(error_state(tp, q, qd, traj.times[i]));
    const double bound = v0 * std::exp(-rate * (traj.times[i] - traj.times[0]));
    CHECK(v <= bound * (1.0 + 1e-2));
  }
}

TEST_CASE("true residuals") {
  const SegwayParams nominal;
  RngStream rng = RngStream(2024).split("perturb");
  const SegwayParams perturbed = perturb_params(nominal, 0.10, rng);
  const RoboticModel est = segway_model(nominal);
  const RoboticModel truth = segway_model(perturbed);
  const TrackingProblem tp = default_tracking();
  const Clf clf = make_clf(25.0, 10.0, 1.0);

  SUBCASE("identical models give zero residuals") {
    RngStream r(53);
    for (int i = 0; i < 20; ++i) {
      const Vec q{r.uniform(-1.0, 1.0), r.uniform(-0.5, 0.5)};
      const Vec qd{r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0)};
      const Residuals res = true_residuals(est, est, tp, clf, q, qd, 1.0);
      CHECK(norm_inf(res.a) == 0.0);
      CHECK(res.b == 0.0);
    }
  }

  SUBCASE("zero error state kills the residuals") {
    const double t = 2.0;
    const Vec q{0.3, tp.desired(t)[0]};
    const Vec qd{0.0, tp.desired_rate(t)[0]};
    const Residuals res = true_residuals(truth, est, tp, clf, q, qd, t);
    CHECK(norm_inf(res.a) <= 1e-14);
    CHECK(std::abs(res.b) <= 1e-14);
  }

  SUBCASE("corrected estimate matches finite differences of V on the true plant") {
    const VdotModel vdot(est, tp, clf);
    const Controller pd = [](const Vec& q, const Vec& qd, double) {
      return Vec{-60.0 * q[1] - 10.0 * qd[1]};
    };
    SimulateOptions opt;
    opt.dt_ctrl = 1e-4;
    opt.dt_integrator = 1e-4;
    const StateTrajectory traj =
        simulate(truth, pd, {0.0, 0.02}, {0.0, 0.0}, 0.0, 2.0, opt);
    REQUIRE_FALSE(traj.diverged);

    std::vector<double> v(traj.states.size());
    for (size_t i = 0; i < traj.states.size(); ++i) {
      const Vec q{traj.states[i][0], traj.states[i][1]};
      const Vec qd{traj.states[i][2], traj.states[i][3]};
      v[i] = clf.value(error_state(tp, q, qd, traj.times[i]));
    }
    const std::vector<double> vdot_fd = central_difference(v, opt.dt_ctrl);

    double max_dev = 0.0;
    double mean_residual = 0.0;
    for (size_t i = 1; i + 1 < traj.states.size(); ++i) {
      if (std::abs(traj.times[i] - 1.0) <= 2.0 * opt.dt_ctrl) continue;
      const Vec q{traj.states[i][0], traj.states[i][1]};
      const Vec qd{traj.states[i][2], traj.states[i][3]};
      const double t = traj.times[i];
      const Vec& u = traj.inputs[i];
      const Residuals res = true_residuals(truth, est, tp, clf, q, qd, t);
      const double corrected = vdot.eval(q, qd, t, u) + dot(res.a, u) + res.b;
      max_dev = std::max(max_dev, std::abs(corrected - vdot_fd[i]));
      mean_residual += std::abs(dot(res.a, u) + res.b);
    }
    mean_residual /= static_cast<double>(traj.states.size() - 2);
    CHECK(max_dev <= 2e-3);
    CHECK(mean_residual > 1e-4);  // the residual signal is nontrivial
  }
}

TEST_CASE("pseudoinverse guards conditioning") {
  CHECK_THROWS_AS(pinv_apply(Matrix(1, 1, {1e-9}), {1.0}), std::domain_error);
  const Vec x = pinv_apply(Matrix(1, 1, {2.0}), {3.0});
  CHECK(x[0] == doctest::Approx(1.5));
}
