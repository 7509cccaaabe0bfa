#include "eviplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace eviplan::planner {

void PlannerConfig::validate() const {
  if (!(t_plan > 0.0) || !(t_exec > 0.0) || t_exec > t_plan)
    throw std::invalid_argument("PlannerConfig: need 0 < t_exec <= t_plan");
  if (n_ctrl < 5) throw std::invalid_argument("PlannerConfig: n_ctrl must be at least 5");
  if (!(entropy_percentile > 0.0) || !(entropy_percentile <= 100.0))
    throw std::invalid_argument("PlannerConfig: entropy_percentile must be in (0, 100]");
  if (horizon_waypoints < 2)
    throw std::invalid_argument("PlannerConfig: horizon_waypoints must be at least 2");
  weights.validate();
  limits.validate();
  lbfgs.validate();
}

SampleSelection select_samples(std::span<const localize::SceneSample> pool,
                               const PlannerConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<int> candidates(pool.size());
  for (size_t i = 0; i < pool.size(); ++i) candidates[i] = static_cast<int>(i);

  if (cfg.ablation.entropy_rejection && !pool.empty()) {
    std::vector<double> entropies(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) entropies[i] = pool[i].entropy;
    std::sort(entropies.begin(), entropies.end());
    // Nearest-rank percentile; entries at the threshold are kept.
    const auto rank = static_cast<size_t>(
        std::ceil(cfg.entropy_percentile / 100.0 * static_cast<double>(pool.size())));
    const double threshold = entropies[std::min(rank, pool.size()) - 1];
    std::erase_if(candidates, [&](int i) { return pool[static_cast<size_t>(i)].entropy > threshold; });
  }

  const int k = std::min<int>(cfg.weights.n_f, static_cast<int>(candidates.size()));
  const std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(candidates.size()), k);

  SampleSelection sel;
  sel.indices.reserve(static_cast<size_t>(k));
  sel.samples.reserve(static_cast<size_t>(k));
  for (int p : picks) {
    sel.indices.push_back(candidates[static_cast<size_t>(p)]);
    sel.samples.push_back(pool[static_cast<size_t>(candidates[static_cast<size_t>(p)])]);
  }
  return sel;
}

namespace {

// Greville abscissae: parameter locations where each control point has the
// most influence; used to seed initial guesses.
std::vector<double> greville(const spline::BSplineTrajectory& traj) {
  const auto& knots = traj.knots();
  std::vector<double> xi(static_cast<size_t>(traj.num_control_points()));
  for (size_t i = 0; i < xi.size(); ++i)
    xi[i] = (knots[i + 1] + knots[i + 2] + knots[i + 3]) / 3.0;
  return xi;
}

}  // namespace

spline::BSplineTrajectory baseline_yaw(YawPolicy policy,
                                       const spline::BSplineTrajectory& position_traj,
                                       double constant_yaw, double current_yaw) {
  if (position_traj.dimension() != 3)
    throw std::invalid_argument("baseline_yaw: expects a 3-row position trajectory");
  const int n = position_traj.num_control_points();
  MatX yaw_pts(1, n);

  switch (policy) {
    case YawPolicy::kConstant:
      yaw_pts.setConstant(constant_yaw);
      break;
    case YawPolicy::kForward: {
      constexpr double kSpeedHold = 0.05;  // m/s, below which yaw holds
      const auto xi = greville(position_traj);
      double last = current_yaw;
      for (int i = 0; i < n; ++i) {
        const VecX v = position_traj.derivative(xi[static_cast<size_t>(i)], 1);
        const double speed = std::hypot(v[0], v[1]);
        double yaw = last;
        if (speed >= kSpeedHold) {
          // Unwrap against the previous value for a continuous profile.
          yaw = last + wrap_angle(std::atan2(v[1], v[0]) - last);
        }
        yaw_pts(0, i) = yaw;
        last = yaw;
      }
      break;
    }
    case YawPolicy::kPerceptionAware:
      throw std::invalid_argument("baseline_yaw: perception-aware yaw comes from plan_horizon");
  }
  return spline::BSplineTrajectory(std::move(yaw_pts), position_traj.t_start(), position_traj.dt());
}

costs::InitialState splice(const PlanResult& prev, double t_splice) {
  costs::InitialState init;
  init.velocity = prev.trajectory.derivative(t_splice, 1);
  init.acceleration = prev.trajectory.derivative(t_splice, 2);
  init.jerk = prev.trajectory.derivative(t_splice, 3);
  return init;
}

costs::WaypointSet make_waypoint_set(std::span<const Vec3> points, double t_start, double t_plan) {
  if (points.size() < 2) throw std::invalid_argument("make_waypoint_set: need at least 2 points");
  if (!(t_plan > 0.0)) throw std::invalid_argument("make_waypoint_set: t_plan must be positive");

  std::vector<double> cumulative(points.size(), 0.0);
  for (size_t i = 1; i < points.size(); ++i)
    cumulative[i] = cumulative[i - 1] + (points[i] - points[i - 1]).norm();
  const double total = cumulative.back();

  costs::WaypointSet wps;
  wps.waypoints.assign(points.begin(), points.end());
  const auto r = points.size();
  for (size_t i = 1; i + 1 < r; ++i) {
    const double frac = total > 1e-12 ? cumulative[i] / total
                                      : static_cast<double>(i) / static_cast<double>(r - 1);
    wps.arrival_times.push_back(t_start + t_plan * std::clamp(frac, 1e-3, 1.0 - 1e-3));
  }
  // Repeated points give tied fractions; keep the times strictly ordered.
  for (size_t i = 1; i < wps.arrival_times.size(); ++i)
    wps.arrival_times[i] = std::max(wps.arrival_times[i], wps.arrival_times[i - 1] + 1e-6);
  return wps;
}

namespace {

struct StageLayout {
  std::vector<std::pair<int, int>> slots;  // (row, control index) per variable
};

VecX pack(const MatX& pts, const StageLayout& layout) {
  VecX x(static_cast<Eigen::Index>(layout.slots.size()));
  for (size_t k = 0; k < layout.slots.size(); ++k)
    x[static_cast<Eigen::Index>(k)] = pts(layout.slots[k].first, layout.slots[k].second);
  return x;
}

void unpack(const VecX& x, const StageLayout& layout, MatX& pts) {
  for (size_t k = 0; k < layout.slots.size(); ++k)
    pts(layout.slots[k].first, layout.slots[k].second) = x[static_cast<Eigen::Index>(k)];
}

}  // namespace

PlanResult plan_horizon(const CurrentState& state, const costs::WaypointSet& wps,
                        std::span<const localize::SceneSample> pool,
                        const camera::CameraModel& cam, const PlannerConfig& cfg, Rng& rng) {
  cfg.validate();
  const double t0 = state.t_start;
  const double dt = cfg.t_plan / (cfg.n_ctrl - spline::BSplineTrajectory::kDegree);
  const int n = cfg.n_ctrl;

  const costs::WaypointSet& horizon = wps;
  if (horizon.waypoints.size() < 2)
    throw std::invalid_argument("plan_horizon: need at least 2 horizon waypoints");

  SampleSelection selection = select_samples(pool, cfg, rng);

  costs::CostContext ctx;
  ctx.weights = cfg.weights;
  ctx.waypoints = horizon;
  ctx.limits = cfg.limits;
  ctx.initial = state.derivatives;
  ctx.camera = &cam;
  ctx.samples = std::move(selection.samples);
  ctx.sample_times = costs::cost_sample_times(horizon, t0, t0 + cfg.t_plan);
  ctx.entropy_weighting = cfg.ablation.entropy_weighting;

  // Initial control net: linear blend from the current position to the final
  // horizon waypoint, constant yaw.
  MatX pts(4, n);
  const Vec3& goal = horizon.waypoints.back();
  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / (n - 1);
    pts.col(i).head<3>() = (1.0 - u) * state.position + u * goal;
    pts(3, i) = state.yaw;
  }
  pts.col(0).head<3>() = state.position;
  pts.col(n - 1).head<3>() = goal;

  const spline::BSplineTrajectory base(pts, t0, dt);

  // The start velocity of a clamped cubic depends only on the first two
  // control points, so the second one is set from the spliced velocity and
  // held. Velocity is an integrated state: an estimator that integrates the
  // executed accelerations never sees a velocity step at a replan boundary,
  // so steps there would accumulate as estimation error. Acceleration and
  // jerk stay soft equality targets; both are measured directly, so a
  // mismatch costs nothing downstream.
  {
    const VecX w1 = base.control_weights(t0, 1);
    for (int row = 0; row < 3; ++row)
      pts(row, 1) = (state.derivatives.velocity[row] - w1[0] * pts(row, 0)) / w1[1];
  }

  // Stage one: the remaining interior position control points. The pinned
  // points never enter the optimization vector.
  StageLayout pos_layout;
  for (int i = 2; i < n - 1; ++i)
    for (int row = 0; row < 3; ++row) pos_layout.slots.emplace_back(row, i);

  MatX work = pts;
  const Objective position_objective = [&](const VecX& x, VecX& grad) {
    unpack(x, pos_layout, work);
    const auto term = costs::total_position_cost(base.with_control_points(work), ctx);
    grad.resize(x.size());
    for (size_t k = 0; k < pos_layout.slots.size(); ++k)
      grad[static_cast<Eigen::Index>(k)] =
          term.gradient(pos_layout.slots[k].first, pos_layout.slots[k].second);
    return term.value;
  };
  const LbfgsResult pos_result = lbfgs_minimize(position_objective, pack(pts, pos_layout), cfg.lbfgs);
  unpack(pos_result.x, pos_layout, pts);

  // Seed stage two with the forward-looking heuristic along the fixed
  // position trajectory, then free every yaw control point but the first.
  work = pts;
  {
    const int rows3[] = {0, 1, 2};
    const spline::BSplineTrajectory pos_only =
        base.with_control_points(pts).select_components(rows3);
    const spline::BSplineTrajectory seed =
        baseline_yaw(YawPolicy::kForward, pos_only, state.yaw, state.yaw);
    pts.row(3) = seed.control_points().row(0);
    pts(3, 0) = state.yaw;
  }

  StageLayout yaw_layout;
  for (int i = 1; i < n; ++i) yaw_layout.slots.emplace_back(3, i);

  work = pts;
  const Objective yaw_objective = [&](const VecX& x, VecX& grad) {
    unpack(x, yaw_layout, work);
    const auto term = costs::total_yaw_cost(base.with_control_points(work), ctx);
    grad.resize(x.size());
    for (size_t k = 0; k < yaw_layout.slots.size(); ++k)
      grad[static_cast<Eigen::Index>(k)] =
          term.gradient(yaw_layout.slots[k].first, yaw_layout.slots[k].second);
    return term.value;
  };

  // The camera term goes flat once every selected point sits far outside the
  // view, so a descent start facing the wrong way stays lost. Sweep a ring of
  // look directions and keep the cheapest start; the forward seed competes as
  // one more candidate. Every ramp reproduces the spliced yaw rate in its
  // second control point so the start-continuity term cancels out of the
  // comparison and the camera term alone picks the direction.
  if (!ctx.samples.empty()) {
    VecX grad_scratch;
    VecX best_x = pack(pts, yaw_layout);
    double best_cost = yaw_objective(best_x, grad_scratch);
    const VecX w1 = base.control_weights(t0, 1);
    const double rate_matched =
        (state.derivatives.velocity[3] - w1[0] * state.yaw) / w1[1];
    constexpr int kRingStarts = 12;
    MatX cand = pts;
    cand(3, 1) = rate_matched;
    for (int k = 0; k < kRingStarts; ++k) {
      const double heading = 2.0 * std::numbers::pi * k / kRingStarts;
      const double target = rate_matched + wrap_angle(heading - rate_matched);
      for (int i = 2; i < n; ++i)
        cand(3, i) = rate_matched + (target - rate_matched) * static_cast<double>(i - 1) /
                                        static_cast<double>(n - 2);
      const VecX x = pack(cand, yaw_layout);
      const double c = yaw_objective(x, grad_scratch);
      if (c < best_cost) {
        best_cost = c;
        best_x = x;
      }
    }
    unpack(best_x, yaw_layout, pts);
  }

  const LbfgsResult yaw_result = lbfgs_minimize(yaw_objective, pack(pts, yaw_layout), cfg.lbfgs);
  unpack(yaw_result.x, yaw_layout, pts);

  const int rows3[] = {0, 1, 2};
  const int rows1[] = {3};
  spline::BSplineTrajectory traj = base.with_control_points(pts);
  PlanResult result{traj, traj.select_components(rows3), traj.select_components(rows1),
                    std::move(selection.indices), pos_result.history, yaw_result.history};
  return result;
}

}  // namespace eviplan::planner
