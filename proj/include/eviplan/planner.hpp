#pragma once

#include <span>
#include <vector>

#include "eviplan/costs.hpp"
#include "eviplan/lbfgs.hpp"
#include "eviplan/rng.hpp"
#include "eviplan/scene.hpp"
#include "eviplan/spline.hpp"

namespace eviplan::planner {

enum class YawPolicy { kConstant, kForward, kPerceptionAware };

struct AblationFlags {
  bool entropy_weighting = true;       // exp(-a H) weights in the camera term
  bool entropy_rejection = true;       // percentile filter before sampling
  bool correspondence_filter = false;  // entropy filter on PnP inputs
};

struct PlannerConfig {
  double t_plan = 0.8;
  double t_exec = 0.5;
  int n_ctrl = 6;
  double entropy_percentile = 50.0;  // OR threshold
  int horizon_waypoints = 5;
  costs::CostWeights weights;
  costs::KinematicLimits limits;
  AblationFlags ablation;
  LbfgsConfig lbfgs;

  void validate() const;
};

/// Pose plus the derivatives carried over from the previous plan. t_start is
/// the absolute time the new plan begins at.
struct CurrentState {
  double t_start = 0.0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  costs::InitialState derivatives;
};

struct PlanResult {
  spline::BSplineTrajectory trajectory;     // 4 rows: x, y, z, yaw
  spline::BSplineTrajectory position_traj;  // 3-row view, same knots
  spline::BSplineTrajectory yaw_traj;       // 1-row view, same knots
  std::vector<int> selected_samples;        // indices into the sample pool
  std::vector<double> position_cost_history;
  std::vector<double> yaw_cost_history;
};

struct SampleSelection {
  std::vector<int> indices;
  std::vector<localize::SceneSample> samples;
};

/// Draws min(n_f, available) pool entries uniformly without replacement.
/// With entropy_rejection set, the pool is first cut at the configured
/// entropy percentile (nearest-rank, keeping entries at or below it).
SampleSelection select_samples(std::span<const localize::SceneSample> pool,
                               const PlannerConfig& cfg, Rng& rng);

/// Two-stage receding-horizon plan: positions minimize the waypoint
/// objective with the first control point pinned to the current pose and the
/// last to the final horizon waypoint; yaw then minimizes the visibility
/// objective along the fixed position trajectory (first yaw control point
/// pinned, the rest free including the final one).
PlanResult plan_horizon(const CurrentState& state, const costs::WaypointSet& wps,
                        std::span<const localize::SceneSample> pool,
                        const camera::CameraModel& cam, const PlannerConfig& cfg, Rng& rng);

/// Heuristic yaw references sharing the position spline's knots. kConstant
/// holds constant_yaw; kForward tracks atan2 of the horizontal velocity,
/// unwrapped and held wherever speed drops below 0.05 m/s.
spline::BSplineTrajectory baseline_yaw(YawPolicy policy, const spline::BSplineTrajectory& position_traj,
                                       double constant_yaw, double current_yaw);

/// Derivatives of the previous plan at the splice time, used as the equality
/// targets of the next plan.
costs::InitialState splice(const PlanResult& prev, double t_splice);

/// Builds a horizon waypoint set from an ordered point list: interior
/// arrival times are assigned proportionally to cumulative arc length,
/// scaled to [t_start, t_start + t_plan]. Zero-length polylines (hover) get
/// uniform times.
costs::WaypointSet make_waypoint_set(std::span<const Vec3> points, double t_start, double t_plan);

}  // namespace eviplan::planner
