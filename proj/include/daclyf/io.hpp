#pragma once

#include <optional>
#include <string>

#include "daclyf/clf.hpp"
#include "daclyf/controllers.hpp"
#include "daclyf/episodic.hpp"

namespace daclyf {

/// Column layouts are part of the tool's contract; headers are fixed and
/// never reordered.
inline constexpr const char* kTrajectoryHeader =
    "t,x,xdot,theta,thetadot,u,V,Vdot_est,constraint_slack,fallback_flag";
inline constexpr const char* kMetricsHeader =
    "episode,trust,exploration,ise,max_err,diverged,dataset_size,train_loss";
inline constexpr const char* kStudyHeader = "episode,ise_min,ise_mean,ise_max";

/// Serializes a trajectory with per-tick Lyapunov diagnostics. V comes
/// from the CLF at the recorded state; Vdot_est is evaluated through
/// `vdot` at the held input. The final row has no held input and writes
/// nan for the input-dependent columns. `qp_log`, when present, supplies
/// the slack and fallback columns (zero otherwise).
void write_trajectory_csv(const std::string& path, const StateTrajectory& traj,
                          const TrackingProblem& tp, const Clf& clf,
                          const VdotEstimate& vdot,
                          const std::vector<ControllerTick>* qp_log = nullptr);

void write_metrics_csv(const std::string& path, const RunRecord& record);

struct StudyRow {
  int episode = 0;
  double ise_min = 0.0;
  double ise_mean = 0.0;
  double ise_max = 0.0;
};

void write_study_csv(const std::string& path, const std::vector<StudyRow>& rows);

/// Formats a double exactly (round-trip precision), used everywhere a
/// CSV must be byte-stable across runs.
std::string format_double(double v);

}  // namespace daclyf
