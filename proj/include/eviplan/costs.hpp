#pragma once

#include <array>
#include <span>
#include <vector>

#include "eviplan/camera.hpp"
#include "eviplan/core.hpp"
#include "eviplan/scene.hpp"
#include "eviplan/spline.hpp"

namespace eviplan::costs {

struct CostWeights {
  double lambda_wp = 1e4;
  double lambda_fov = 1e1;
  double lambda_eq = 1e3;
  double lambda_ie = 1.0;
  double lambda_s = 5.0;
  double entropy_sharpness = 0.5;  // 'a' in the exp(-a H) information weight
  int n_f = 200;                   // scene samples drawn per replan

  void validate() const;
};

/// Ordered route points. arrival_times pins the interior waypoints
/// w_1..w_{r-2} to trajectory times; the first waypoint is the segment start
/// and the last is reached at the horizon end.
struct WaypointSet {
  std::vector<Vec3> waypoints;
  std::vector<double> arrival_times;

  void validate(double t_start, double t_end) const;
};

/// Per-coordinate symmetric box bounds on velocity and acceleration
/// (x, y, z, yaw).
struct KinematicLimits {
  Vec4 v_max{3.0, 3.0, 3.0, 2.0 * kPi};
  Vec4 a_max{6.0, 6.0, 6.0, 4.0 * kPi};

  void validate() const;
};

/// Derivatives the new trajectory must take over at its start time.
struct InitialState {
  Vec4 velocity = Vec4::Zero();
  Vec4 acceleration = Vec4::Zero();
  Vec4 jerk = Vec4::Zero();
};

/// Value plus gradient in every control point coordinate (rows match the
/// trajectory rows, columns the control point index).
struct CostTerm {
  double value = 0.0;
  MatX gradient;
};

using CoordMask = std::array<bool, 4>;
inline constexpr CoordMask kPositionCoords{true, true, true, false};
inline constexpr CoordMask kYawCoord{false, false, false, true};
inline constexpr CoordMask kAllCoords{true, true, true, true};

/// Squared position mismatch at the interior waypoint arrival times. Only
/// x, y, z contribute.
CostTerm waypoint_cost(const spline::BSplineTrajectory& traj, const WaypointSet& wps);

/// Negative information-weighted visibility of the scene samples summed over
/// the sample-time grid: -sum_i sum_j w_j F(pose(s_i), v_j) with
/// w_j = exp(-a H_j) when entropy_weighting is set, else 1.
CostTerm fov_cost(const spline::BSplineTrajectory& traj, const camera::CameraModel& cam,
                  std::span<const localize::SceneSample> samples, const CostWeights& weights,
                  std::span<const double> sample_times, bool entropy_weighting);

/// Squared mismatch of initial velocity, acceleration and jerk against the
/// spliced state, over the masked coordinates.
CostTerm equality_cost(const spline::BSplineTrajectory& traj, const InitialState& init,
                       const CoordMask& mask = kAllCoords);

/// Soft box-constraint penalty: sum over sample times and masked coordinates
/// of (max(0, x^2 - x_max^2))^2 for velocity and acceleration.
CostTerm inequality_cost(const spline::BSplineTrajectory& traj, const KinematicLimits& limits,
                         std::span<const double> sample_times, const CoordMask& mask = kAllCoords);

/// Squared second differences of a control point sequence (columns) over the
/// masked rows. Needs at least 3 columns.
double smoothness_value(const MatX& control_points, const CoordMask& mask);

CostTerm smoothness_cost(const spline::BSplineTrajectory& traj, const CoordMask& mask = kAllCoords);

/// Everything the two planning stages need to evaluate their objectives.
struct CostContext {
  CostWeights weights;
  WaypointSet waypoints;
  KinematicLimits limits;
  InitialState initial;
  const camera::CameraModel* camera = nullptr;
  std::vector<localize::SceneSample> samples;
  std::vector<double> sample_times;
  bool entropy_weighting = true;
};

/// lambda_wp C_wp + lambda_eq C_eq + lambda_ie C_ie + lambda_s C_s over
/// x, y, z.
CostTerm total_position_cost(const spline::BSplineTrajectory& traj, const CostContext& ctx);

/// lambda_fov C_fov + lambda_eq C_eq + lambda_ie C_ie + lambda_s C_s over
/// yaw (the camera term also reads the position rows, which stage two holds
/// fixed).
CostTerm total_yaw_cost(const spline::BSplineTrajectory& traj, const CostContext& ctx);

/// The shared evaluation grid for the visibility and limit penalties: the
/// interior waypoint arrival times plus the horizon end, or a uniform
/// 8-sample grid when no arrival times are given.
std::vector<double> cost_sample_times(const WaypointSet& wps, double t_start, double t_end);

}  // namespace eviplan::costs
