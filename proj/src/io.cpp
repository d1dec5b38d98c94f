#include "daclyf/io.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace daclyf {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trajectory_csv(const std::string& path, const StateTrajectory& traj,
                          const TrackingProblem& tp, const Clf& clf,
                          const VdotEstimate& vdot,
                          const std::vector<ControllerTick>* qp_log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << kTrajectoryHeader << "\n";
  const int n = traj.n;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (size_t i = 0; i < traj.states.size(); ++i) {
    const Vec& s = traj.states[i];
    const Vec q(s.begin(), s.begin() + n);
    const Vec qd(s.begin() + n, s.end());
    const double t = traj.times[i];
    const Vec eta = error_state(tp, q, qd, t);
    const double v = clf.value(eta);

    double u = nan;
    double vdot_est = nan;
    double slack = nan;
    double fallback = nan;
    if (i < traj.inputs.size()) {
      u = traj.inputs[i][0];
      vdot_est = vdot ? vdot(q, qd, t).eval(traj.inputs[i]) : 0.0;
      slack = 0.0;
      fallback = 0.0;
      if (qp_log && i < qp_log->size()) {
        slack = (*qp_log)[i].slack;
        fallback = (*qp_log)[i].fallback ? 1.0 : 0.0;
      }
    }
    out << format_double(t) << ',' << format_double(q[0]) << ',' << format_double(qd[0])
        << ',' << format_double(q[1]) << ',' << format_double(qd[1]) << ','
        << format_double(u) << ',' << format_double(v) << ',' << format_double(vdot_est)
        << ',' << format_double(slack) << ',' << format_double(fallback) << "\n";
  }
}

void write_metrics_csv(const std::string& path, const RunRecord& record) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << kMetricsHeader << "\n";
  for (const EpisodeRecord& ep : record.episodes) {
    out << ep.episode << ',' << format_double(ep.trust) << ','
        << format_double(ep.exploration) << ',' << format_double(ep.eval.ise) << ','
        << format_double(ep.eval.max_err) << ',' << (ep.eval.diverged ? 1 : 0) << ','
        << ep.dataset_size << ',' << format_double(ep.train_loss) << "\n";
  }
}

void write_study_csv(const std::string& path, const std::vector<StudyRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << kStudyHeader << "\n";
  for (const StudyRow& r : rows) {
    out << r.episode << ',' << format_double(r.ise_min) << ',' << format_double(r.ise_mean)
        << ',' << format_double(r.ise_max) << "\n";
  }
}

}  // namespace daclyf
