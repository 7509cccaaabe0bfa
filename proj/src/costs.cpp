#include "eviplan/costs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eviplan::costs {

void CostWeights::validate() const {
  const double all[] = {lambda_wp, lambda_fov, lambda_eq, lambda_ie, lambda_s, entropy_sharpness};
  for (double w : all)
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("CostWeights: weights must be non-negative and finite");
  if (n_f < 1) throw std::invalid_argument("CostWeights: n_f must be positive");
}

void WaypointSet::validate(double t_start, double t_end) const {
  if (waypoints.size() < 2) throw std::invalid_argument("WaypointSet: need at least 2 waypoints");
  const size_t interior = waypoints.size() - 2;
  if (arrival_times.size() != interior && !(arrival_times.empty() && interior == 0))
    throw std::invalid_argument("WaypointSet: one arrival time per interior waypoint required");
  double prev = t_start;
  for (double s : arrival_times) {
    if (!(s > prev) || !(s < t_end))
      throw std::invalid_argument("WaypointSet: arrival times must increase strictly inside the horizon");
    prev = s;
  }
}

void KinematicLimits::validate() const {
  for (int i = 0; i < 4; ++i)
    if (!(v_max[i] > 0.0) || !(a_max[i] > 0.0))
      throw std::invalid_argument("KinematicLimits: limits must be positive");
}

namespace {

MatX zero_like(const spline::BSplineTrajectory& traj) {
  return MatX::Zero(traj.dimension(), traj.num_control_points());
}

void require_dim4(const spline::BSplineTrajectory& traj, const char* what) {
  if (traj.dimension() != 4)
    throw std::invalid_argument(std::string(what) + ": requires a 4-row trajectory");
}

}  // namespace

CostTerm waypoint_cost(const spline::BSplineTrajectory& traj, const WaypointSet& wps) {
  require_dim4(traj, "waypoint_cost");
  wps.validate(traj.t_start(), traj.t_end());
  CostTerm out{0.0, zero_like(traj)};
  for (size_t i = 0; i < wps.arrival_times.size(); ++i) {
    const double s = wps.arrival_times[i];
    const VecX b = traj.control_weights(s, 0);
    const VecX q = traj.value(s);
    const Vec3& w = wps.waypoints[i + 1];
    for (int o = 0; o < 3; ++o) {
      const double d = q[o] - w[o];
      out.value += d * d;
      out.gradient.row(o) += 2.0 * d * b.transpose();
    }
  }
  return out;
}

CostTerm fov_cost(const spline::BSplineTrajectory& traj, const camera::CameraModel& cam,
                  std::span<const localize::SceneSample> samples, const CostWeights& weights,
                  std::span<const double> sample_times, bool entropy_weighting) {
  require_dim4(traj, "fov_cost");
  weights.validate();
  CostTerm out{0.0, zero_like(traj)};
  for (double s : sample_times) {
    const VecX pose = traj.value(s);
    const VecX b = traj.control_weights(s, 0);
    const Vec3 position = pose.head<3>();
    const double yaw = pose[3];
    for (const auto& sample : samples) {
      const double w =
          entropy_weighting ? std::exp(-weights.entropy_sharpness * sample.entropy) : 1.0;
      const auto g = camera::score_pose_gradient(cam, position, yaw, sample.world_point);
      out.value -= w * g.score;
      for (int o = 0; o < 3; ++o) out.gradient.row(o) -= w * g.d_position[o] * b.transpose();
      out.gradient.row(3) -= w * g.d_yaw * b.transpose();
    }
  }
  return out;
}

CostTerm equality_cost(const spline::BSplineTrajectory& traj, const InitialState& init,
                       const CoordMask& mask) {
  require_dim4(traj, "equality_cost");
  CostTerm out{0.0, zero_like(traj)};
  const double t0 = traj.t_start();
  const Vec4 targets[3] = {init.velocity, init.acceleration, init.jerk};
  for (int order = 1; order <= 3; ++order) {
    const VecX d = traj.derivative(t0, order);
    const VecX b = traj.control_weights(t0, order);
    for (int o = 0; o < 4; ++o) {
      if (!mask[static_cast<size_t>(o)]) continue;
      const double r = d[o] - targets[order - 1][o];
      out.value += r * r;
      out.gradient.row(o) += 2.0 * r * b.transpose();
    }
  }
  return out;
}

CostTerm inequality_cost(const spline::BSplineTrajectory& traj, const KinematicLimits& limits,
                         std::span<const double> sample_times, const CoordMask& mask) {
  require_dim4(traj, "inequality_cost");
  limits.validate();
  CostTerm out{0.0, zero_like(traj)};
  for (double s : sample_times) {
    for (int order = 1; order <= 2; ++order) {
      const Vec4& cap = (order == 1) ? limits.v_max : limits.a_max;
      const VecX d = traj.derivative(s, order);
      const VecX b = traj.control_weights(s, order);
      for (int o = 0; o < 4; ++o) {
        if (!mask[static_cast<size_t>(o)]) continue;
        const double excess = d[o] * d[o] - cap[o] * cap[o];
        if (excess > 0.0) {
          out.value += excess * excess;
          out.gradient.row(o) += 4.0 * excess * d[o] * b.transpose();
        }
      }
    }
  }
  return out;
}

double smoothness_value(const MatX& control_points, const CoordMask& mask) {
  if (control_points.cols() < 3)
    throw std::invalid_argument("smoothness: need at least 3 control points");
  double acc = 0.0;
  for (int i = 1; i + 1 < control_points.cols(); ++i) {
    const VecX d = control_points.col(i + 1) - 2.0 * control_points.col(i) + control_points.col(i - 1);
    for (int o = 0; o < control_points.rows(); ++o)
      if (o >= 4 || mask[static_cast<size_t>(o)]) acc += d[o] * d[o];
  }
  return acc;
}

CostTerm smoothness_cost(const spline::BSplineTrajectory& traj, const CoordMask& mask) {
  const MatX& q = traj.control_points();
  CostTerm out{smoothness_value(q, mask), zero_like(traj)};
  for (int i = 1; i + 1 < q.cols(); ++i) {
    for (int o = 0; o < q.rows() && o < 4; ++o) {
      if (!mask[static_cast<size_t>(o)]) continue;
      const double d = q(o, i + 1) - 2.0 * q(o, i) + q(o, i - 1);
      out.gradient(o, i - 1) += 2.0 * d;
      out.gradient(o, i) -= 4.0 * d;
      out.gradient(o, i + 1) += 2.0 * d;
    }
  }
  return out;
}

std::vector<double> cost_sample_times(const WaypointSet& wps, double t_start, double t_end) {
  std::vector<double> times;
  if (wps.arrival_times.empty()) {
    constexpr int kFallbackSamples = 8;
    for (int i = 1; i <= kFallbackSamples; ++i)
      times.push_back(t_start + (t_end - t_start) * i / kFallbackSamples);
  } else {
    times = wps.arrival_times;
    times.push_back(t_end);
  }
  return times;
}

namespace {

CostTerm combine(std::initializer_list<std::pair<double, const CostTerm*>> terms) {
  CostTerm out;
  out.value = 0.0;
  for (const auto& [w, term] : terms) {
    if (out.gradient.size() == 0) out.gradient = MatX::Zero(term->gradient.rows(), term->gradient.cols());
    out.value += w * term->value;
    out.gradient += w * term->gradient;
  }
  return out;
}

}  // namespace

CostTerm total_position_cost(const spline::BSplineTrajectory& traj, const CostContext& ctx) {
  ctx.weights.validate();
  const CostTerm wp = waypoint_cost(traj, ctx.waypoints);
  const CostTerm eq = equality_cost(traj, ctx.initial, kPositionCoords);
  const CostTerm ie = inequality_cost(traj, ctx.limits, ctx.sample_times, kPositionCoords);
  const CostTerm sm = smoothness_cost(traj, kPositionCoords);
  return combine({{ctx.weights.lambda_wp, &wp},
                  {ctx.weights.lambda_eq, &eq},
                  {ctx.weights.lambda_ie, &ie},
                  {ctx.weights.lambda_s, &sm}});
}

CostTerm total_yaw_cost(const spline::BSplineTrajectory& traj, const CostContext& ctx) {
  ctx.weights.validate();
  if (ctx.camera == nullptr) throw std::invalid_argument("total_yaw_cost: camera required");
  CostTerm fov = fov_cost(traj, *ctx.camera, ctx.samples, ctx.weights, ctx.sample_times,
                          ctx.entropy_weighting);
  // Stage two only moves yaw control points; discard the position rows so the
  // reported gradient matches the stage's variables.
  fov.gradient.topRows(3).setZero();
  const CostTerm eq = equality_cost(traj, ctx.initial, kYawCoord);
  const CostTerm ie = inequality_cost(traj, ctx.limits, ctx.sample_times, kYawCoord);
  const CostTerm sm = smoothness_cost(traj, kYawCoord);
  return combine({{ctx.weights.lambda_fov, &fov},
                  {ctx.weights.lambda_eq, &eq},
                  {ctx.weights.lambda_ie, &ie},
                  {ctx.weights.lambda_s, &sm}});
}

}  // namespace eviplan::costs
