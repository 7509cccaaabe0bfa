#include "eviplan/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>

namespace eviplan::sim {

localize::Room default_room() {
  return localize::Room(Vec3(-5.0, -5.0, 0.0), Vec3(5.0, 5.0, 3.0));
}

localize::EntropyField default_field() {
  return localize::EntropyField::uniform(default_room(), 1, 1, 1,
                                         localize::FieldCell{0.05, 2.0, 3.0});
}

camera::CameraModel default_camera() {
  // 90 degree field of view at 480 px: the image is one focal length wide on
  // each side of the axis, so the pixel pitch is 2f / 480.
  const double f = 0.5;
  const double pitch = 2.0 * f / 480.0;
  return camera::CameraModel(480.0, 480.0, 240.0, 240.0, pitch, pitch, f, 5.0);
}

void SensorConfig::validate() const {
  if (!(scr_period > 0.0)) throw std::invalid_argument("SensorConfig: scr_period must be positive");
  if (scr_latency < 0.0) throw std::invalid_argument("SensorConfig: scr_latency must not be negative");
  if (n_pixels < 6) throw std::invalid_argument("SensorConfig: n_pixels must be at least 6");
  if (!(imu_rate_hz > 0.0)) throw std::invalid_argument("SensorConfig: imu_rate_hz must be positive");
  const double noise[] = {imu_noise.accel_sigma, imu_noise.gyro_sigma, imu_noise.accel_bias_sigma,
                          imu_noise.gyro_bias_sigma};
  for (double s : noise)
    if (s < 0.0) throw std::invalid_argument("SensorConfig: IMU noise sigmas must not be negative");
  if (pose_outlier_rate < 0.0 || pose_outlier_rate > 1.0)
    throw std::invalid_argument("SensorConfig: pose_outlier_rate must be in [0, 1]");
  if (pose_outlier_mag < 0.0)
    throw std::invalid_argument("SensorConfig: pose_outlier_mag must not be negative");
  ransac.validate();
  smoother.validate();
}

void Scenario::validate() const {
  if (name.empty()) throw std::invalid_argument("Scenario: name must not be empty");
  if (waypoints.empty()) throw std::invalid_argument("Scenario: needs at least one waypoint");
  for (const Vec3& w : waypoints)
    if (!field.room().contains(w))
      throw std::invalid_argument("Scenario: waypoints must lie inside the room");
  if (!(duration > 0.0)) throw std::invalid_argument("Scenario: duration must be positive");
  if (pool_per_face < 1) throw std::invalid_argument("Scenario: pool_per_face must be positive");
  if (repeats < 1) throw std::invalid_argument("Scenario: repeats must be positive");
  planner_cfg.validate();
  sensing.validate();
}

const char* policy_name(planner::YawPolicy policy) {
  switch (policy) {
    case planner::YawPolicy::kConstant: return "constant";
    case planner::YawPolicy::kForward: return "forward";
    case planner::YawPolicy::kPerceptionAware: return "perception_aware";
  }
  throw std::invalid_argument("policy_name: unknown policy");
}

PathShape parse_path_shape(const std::string& name) {
  if (name == "hover") return PathShape::kHover;
  if (name == "circle") return PathShape::kCircle;
  if (name == "lemniscate") return PathShape::kLemniscate;
  if (name == "rose") return PathShape::kRose;
  if (name == "square") return PathShape::kSquare;
  throw std::invalid_argument("parse_path_shape: unknown shape '" + name + "'");
}

std::vector<Vec3> make_path(PathShape shape, const Vec3& center, double radius, int n) {
  if (shape == PathShape::kHover) return {center};
  if (n < 3) throw std::invalid_argument("make_path: need at least 3 points");
  if (!(radius > 0.0)) throw std::invalid_argument("make_path: radius must be positive");

  std::vector<Vec3> pts;
  pts.reserve(static_cast<size_t>(n) + 1);
  for (int k = 0; k < n; ++k) {
    const double th = 2.0 * kPi * k / n;
    Vec3 p = center;
    switch (shape) {
      case PathShape::kCircle:
        p += radius * Vec3(std::cos(th), std::sin(th), 0.0);
        break;
      case PathShape::kLemniscate: {
        const double d = 1.0 + std::sin(th) * std::sin(th);
        p += radius * Vec3(std::cos(th) / d, std::sin(th) * std::cos(th) / d, 0.0);
        break;
      }
      case PathShape::kRose: {
        const double rho = radius * std::cos(2.0 * th);
        p += rho * Vec3(std::cos(th), std::sin(th), 0.0);
        break;
      }
      case PathShape::kSquare: {
        // Perimeter parameter in [0, 4): one unit per side, counterclockwise
        // from the corner (radius, radius).
        const double u = 4.0 * k / n;
        const int side = static_cast<int>(u);
        const double s = u - side;
        switch (side) {
          case 0: p += Vec3(radius - 2.0 * radius * s, radius, 0.0); break;
          case 1: p += Vec3(-radius, radius - 2.0 * radius * s, 0.0); break;
          case 2: p += Vec3(-radius + 2.0 * radius * s, -radius, 0.0); break;
          default: p += Vec3(radius, -radius + 2.0 * radius * s, 0.0); break;
        }
        break;
      }
      case PathShape::kHover: break;  // unreachable
    }
    pts.push_back(p);
  }
  pts.push_back(pts.front());
  return pts;
}

double rotation_error_deg(const Mat3& r_est, const Mat3& r_gt) {
  if (!is_rotation(r_est) || !is_rotation(r_gt))
    throw std::invalid_argument("rotation_error_deg: inputs must be rotations");
  const double c = ((r_est.transpose() * r_gt).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / kPi;
}

ErrorStats error_stats(std::span<const double> values) {
  ErrorStats s;
  if (values.empty()) return s;
  double sum = 0.0, sumsq = 0.0;
  for (double v : values) {
    sum += v;
    sumsq += v * v;
  }
  const auto n = static_cast<double>(values.size());
  s.mean = sum / n;
  s.rmse = std::sqrt(sumsq / n);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const size_t mid = sorted.size() / 2;
  s.median = sorted.size() % 2 != 0 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return s;
}

std::vector<localize::SceneSample> sample_surface_points(const localize::EntropyField& field,
                                                         int per_face, Rng& rng) {
  if (per_face < 1) throw std::invalid_argument("sample_surface_points: per_face must be positive");
  const localize::Room& room = field.room();
  std::vector<localize::SceneSample> out;
  out.reserve(static_cast<size_t>(per_face) * 6);
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      const double coord = side != 0 ? room.max[axis] : room.min[axis];
      for (int k = 0; k < per_face; ++k) {
        Vec3 p;
        p[axis] = coord;
        p[u] = rng.uniform(room.min[u], room.max[u]);
        p[v] = rng.uniform(room.min[v], room.max[v]);
        const localize::FieldCell& cell = field.cell_at(p);
        const double beta = cell.sigma * cell.sigma * (cell.alpha - 1.0);
        out.emplace_back(p, Vec2::Zero(),
                         evidential::NIGParams(p.x(), cell.lambda, cell.alpha, beta),
                         evidential::NIGParams(p.y(), cell.lambda, cell.alpha, beta),
                         evidential::NIGParams(p.z(), cell.lambda, cell.alpha, beta));
      }
    }
  }
  return out;
}

namespace {

// Piecewise-linear global route parameterized by arc length. The loop
// follows the path rather than a clock: horizons are cut from the arc ahead
// of the vehicle's own progress, so a vehicle that falls behind is never
// asked to sprint back onto a schedule (that feedback is what makes a
// tracking loop with hard endpoint pins oscillate).
class RoutePath {
 public:
  RoutePath(std::span<const Vec3> pts, double duration)
      : pts_(pts.begin(), pts.end()), arcs_(pts.size(), 0.0), duration_(duration) {
    for (size_t i = 1; i < pts_.size(); ++i)
      arcs_[i] = arcs_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
    total_length_ = arcs_.back();
  }

  double length() const { return total_length_; }

  // Mean speed implied by the requested duration; the reference pace.
  double cruise_speed() const { return duration_ > 0.0 ? total_length_ / duration_ : 0.0; }

  Vec3 at_arc(double s) const {
    if (total_length_ <= 1e-9 || s <= 0.0) return pts_.front();
    if (s >= total_length_) return pts_.back();
    const auto it = std::upper_bound(arcs_.begin(), arcs_.end(), s);
    const auto i = static_cast<size_t>(std::distance(arcs_.begin(), it));
    const double span = arcs_[i] - arcs_[i - 1];
    const double u = span > 1e-12 ? (s - arcs_[i - 1]) / span : 0.0;
    return (1.0 - u) * pts_[i - 1] + u * pts_[i];
  }

  // Arc coordinate of the point on the route nearest to p, searched within a
  // window ahead of (and slightly behind) the previous progress value so
  // self-intersecting routes cannot snap the vehicle across the crossing.
  double project(const Vec3& p, double prev_arc, double window) const {
    if (total_length_ <= 1e-9) return 0.0;
    const double lo = std::max(0.0, prev_arc - 0.25 * window);
    const double hi = std::min(total_length_, prev_arc + window);
    double best_arc = prev_arc;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (size_t i = 1; i < pts_.size(); ++i) {
      if (arcs_[i] < lo || arcs_[i - 1] > hi) continue;
      const Vec3 seg = pts_[i] - pts_[i - 1];
      const double len2 = seg.squaredNorm();
      double u = len2 > 1e-18 ? (p - pts_[i - 1]).dot(seg) / len2 : 0.0;
      u = std::clamp(u, 0.0, 1.0);
      double s = arcs_[i - 1] + u * (arcs_[i] - arcs_[i - 1]);
      s = std::clamp(s, lo, hi);
      const double d2 = (p - at_arc(s)).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best_arc = s;
      }
    }
    return best_arc;
  }

  // Route vertices with arc coordinate strictly inside (s0, s1), capped.
  std::vector<double> vertex_arcs_in(double s0, double s1, size_t max_count) const {
    std::vector<double> out;
    if (total_length_ <= 1e-9) return out;
    for (size_t i = 0; i < pts_.size() && out.size() < max_count; ++i)
      if (arcs_[i] > s0 + 1e-9 && arcs_[i] < s1 - 1e-9) out.push_back(arcs_[i]);
    return out;
  }

 private:
  std::vector<Vec3> pts_;
  std::vector<double> arcs_;
  double duration_;
  double total_length_ = 0.0;
};

planner::PlanResult plan_with_policy(const planner::CurrentState& cs,
                                     const costs::WaypointSet& wps,
                                     std::span<const localize::SceneSample> pool,
                                     const Scenario& sc, Rng& rng) {
  const bool aware = sc.yaw_policy == planner::YawPolicy::kPerceptionAware;
  planner::PlanResult plan = planner::plan_horizon(
      cs, wps, aware ? pool : std::span<const localize::SceneSample>{}, sc.cam, sc.planner_cfg,
      rng);
  if (!aware) {
    const spline::BSplineTrajectory yaw =
        planner::baseline_yaw(sc.yaw_policy, plan.position_traj, sc.constant_yaw, cs.yaw);
    MatX ctrl(4, plan.trajectory.num_control_points());
    ctrl.topRows(3) = plan.position_traj.control_points();
    ctrl.row(3) = yaw.control_points().row(0);
    plan.trajectory = plan.trajectory.with_control_points(std::move(ctrl));
    plan.yaw_traj = yaw;
    plan.yaw_cost_history.clear();
  }
  return plan;
}

double clamp_to_domain(const spline::BSplineTrajectory& traj, double t) {
  return std::clamp(t, traj.t_start(), traj.t_end());
}

double yaw_of(const Mat3& r) { return std::atan2(r(1, 0), r(0, 0)); }

struct Event {
  double t;
  int kind;  // 0 replan, 1 pose delivery, 2 capture, 3 imu
  int payload;
  long seq;
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.t != b.t) return a.t > b.t;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.seq > b.seq;
  }
};

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_meta(std::ostream& out, const CsvMeta& meta) {
  out << "# seed=" << meta.seed << " config=" << meta.config_hash << " version=" << meta.version
      << "\n";
}

}  // namespace

RunMetrics run_scenario(const Scenario& sc, uint64_t seed) {
  sc.validate();
  const localize::Room& room = sc.field.room();
  const double horizon = sc.planner_cfg.t_plan;
  const double exec = sc.planner_cfg.t_exec;
  const double duration = sc.duration;

  Rng base(seed);
  Rng rng_pool = base.fork(1);
  Rng rng_imu = base.fork(2);
  Rng rng_scr = base.fork(3);
  Rng rng_plan = base.fork(4);
  Rng rng_outlier = base.fork(5);

  const std::vector<localize::SceneSample> pool =
      sample_surface_points(sc.field, sc.pool_per_face, rng_pool);
  const localize::ImuBias bias = localize::draw_imu_bias(sc.sensing.imu_noise, rng_imu);

  RunMetrics metrics;
  metrics.scenario = sc.name;
  metrics.policy = policy_name(sc.yaw_policy);
  metrics.seed = seed;

  const RoutePath route(sc.waypoints, duration);

  localize::FixedLagSmoother smoother(sc.sensing.smoother);
  smoother.reset(localize::NavState{0.0, sc.waypoints.front(), Vec3::Zero(), sc.start_yaw});

  std::priority_queue<Event, std::vector<Event>, EventAfter> queue;
  long seq = 0;
  for (int k = 0; k * exec < duration - 1e-9; ++k)
    queue.push(Event{k * exec, 0, k, seq++});
  for (int k = 0; k * sc.sensing.scr_period < duration - 1e-9; ++k)
    queue.push(Event{k * sc.sensing.scr_period, 2, k, seq++});

  std::vector<localize::ImuSample> imu_store;
  std::vector<localize::PoseEstimate> pose_store;
  std::optional<planner::PlanResult> plan;
  // What the vehicle actually flies. Plans are drawn in the estimate's frame;
  // the vehicle executes the planned motion from wherever it truly is, so
  // each adopted plan is shifted by the estimation error at adoption time.
  // Ground truth stays continuous that way, which keeps the IMU stream and
  // the pose stream describing the same motion.
  std::optional<spline::BSplineTrajectory> executed;
  bool first_plan = true;
  double progress = 0.0;  // arc length already covered along the route

  std::vector<double> pnp_terr, pnp_rerr, sm_terr, sm_rerr;

  while (!queue.empty() && !metrics.failed) {
    const Event ev = queue.top();
    queue.pop();
    switch (ev.kind) {
      case 0: {  // replan from the current smoothed estimate
        const localize::NavState est = smoother.latest_state();
        planner::CurrentState cs;
        cs.t_start = ev.t;
        cs.position = est.position;
        cs.yaw = est.yaw;
        if (!first_plan) cs.derivatives = planner::splice(*plan, ev.t);

        // The spliced velocity is carried over exactly, but acceleration and
        // jerk are soft start targets, and feeding back super-physical values
        // from a stressed tail makes the next plan reproduce the stress. Cap
        // them at the configured limits (jerk at a full accel reversal per
        // replan period) so one bad handoff cannot escalate.
        {
          const Vec4& a_max = sc.planner_cfg.limits.a_max;
          const double j_scale = 2.0 / sc.planner_cfg.t_exec;
          for (int r = 0; r < 4; ++r) {
            cs.derivatives.acceleration[r] =
                std::clamp(cs.derivatives.acceleration[r], -a_max[r], a_max[r]);
            cs.derivatives.jerk[r] =
                std::clamp(cs.derivatives.jerk[r], -j_scale * a_max[r], j_scale * a_max[r]);
          }
        }

        // Cut the horizon from the arc ahead of the vehicle's progress. The
        // advance is ramp-limited from the current speed so the demanded pace
        // never exceeds cruise: a plan that can honor its start state without
        // fighting the terminal pin keeps the splice velocity consistent,
        // which is what keeps the whole loop stable.
        const double cruise = route.cruise_speed();
        progress = std::max(
            progress, route.project(cs.position, progress, std::max(1.0, 3.0 * cruise * exec)));
        const double speed = cs.derivatives.velocity.head<3>().norm();
        const double ramp = cruise > 0.0 ? cruise / 1.0 : 0.0;
        const double advance = std::min(cruise * horizon,
                                        std::min(speed, cruise) * horizon + 0.5 * ramp * horizon * horizon);
        const double s_end = std::min(progress + advance, route.length());

        costs::WaypointSet wps;
        wps.waypoints.push_back(cs.position);
        const size_t interior_cap =
            static_cast<size_t>(std::max(0, sc.planner_cfg.horizon_waypoints - 2));
        const double span = s_end - progress;
        for (double s : route.vertex_arcs_in(progress, s_end, interior_cap)) {
          wps.waypoints.push_back(route.at_arc(s));
          wps.arrival_times.push_back(ev.t + horizon * (s - progress) / span);
        }
        wps.waypoints.push_back(route.at_arc(s_end));

        plan = plan_with_policy(cs, wps, pool, sc, rng_plan);
        if (first_plan) {
          executed = plan->trajectory;
        } else {
          const VecX gt_now = executed->value(ev.t);
          const VecX plan_now = plan->trajectory.value(ev.t);
          MatX shifted = plan->trajectory.control_points();
          for (int r = 0; r < 4; ++r) shifted.row(r).array() += gt_now[r] - plan_now[r];
          executed = plan->trajectory.with_control_points(shifted);
        }
        first_plan = false;

        const double window_end = std::min(ev.t + exec, duration);
        const auto batch =
            localize::imu_simulate(*executed, ev.t, window_end, sc.sensing.imu_rate_hz,
                                   sc.sensing.imu_noise, bias, rng_imu);
        for (const auto& s : batch) {
          queue.push(Event{s.t, 3, static_cast<int>(imu_store.size()), seq++});
          imu_store.push_back(s);
        }
        break;
      }
      case 1: {  // delayed PnP pose reaches the smoother
        smoother.add_pose(pose_store[static_cast<size_t>(ev.payload)]);
        if (smoother.diverged()) metrics.failed = true;
        break;
      }
      case 2: {  // camera frame
        const auto gt = executed->sample(clamp_to_domain(*executed, ev.t));
        const Pose gt_pose{yaw_rotation(gt.yaw), gt.position};

        CaptureRecord rec;
        rec.t = ev.t;
        rec.gt_position = gt.position;
        rec.gt_yaw = gt.yaw;
        const localize::NavState cur = smoother.latest_state();
        rec.smoothed_position = cur.position;
        rec.smoothed_yaw = cur.yaw;
        rec.smoothed_err_t_cm = (cur.position - gt.position).norm() * 100.0;
        rec.smoothed_err_r_deg =
            rotation_error_deg(yaw_rotation(cur.yaw), gt_pose.rotation);

        const auto samples =
            localize::regress_scene(sc.cam, gt_pose, sc.field, room, sc.sensing.n_pixels, rng_scr);
        std::vector<localize::Correspondence> corrs;
        corrs.reserve(samples.size());
        for (const auto& s : samples)
          corrs.push_back(localize::Correspondence{s.world_point, s.pixel, s.entropy});

        localize::PnpRansacConfig rcfg = sc.sensing.ransac;
        rcfg.entropy_filter = sc.planner_cfg.ablation.correspondence_filter;

        try {
          localize::PoseEstimate pose = localize::pnp_ransac(corrs, sc.cam, rcfg, rng_scr);
          pose.t = ev.t;
          if (sc.sensing.pose_outlier_rate > 0.0 &&
              rng_outlier.uniform01() < sc.sensing.pose_outlier_rate) {
            Vec3 dir(rng_outlier.normal(), rng_outlier.normal(), rng_outlier.normal());
            const double norm = dir.norm();
            if (norm > 1e-12) pose.translation += sc.sensing.pose_outlier_mag * dir / norm;
          }
          rec.pnp_ok = true;
          rec.pnp_position = pose.translation;
          rec.pnp_yaw = yaw_of(pose.rotation);
          rec.pnp_err_t_cm = (pose.translation - gt.position).norm() * 100.0;
          rec.pnp_err_r_deg = rotation_error_deg(pose.rotation, gt_pose.rotation);
          pnp_terr.push_back(rec.pnp_err_t_cm);
          pnp_rerr.push_back(rec.pnp_err_r_deg);

          const double deliver_t = ev.t + sc.sensing.scr_latency;
          if (deliver_t <= duration + 1e-9) {
            queue.push(Event{deliver_t, 1, static_cast<int>(pose_store.size()), seq++});
            pose_store.push_back(pose);
          }
        } catch (const localize::LocalizationFailure&) {
          ++metrics.pnp_failures;
          const double nan = std::numeric_limits<double>::quiet_NaN();
          rec.pnp_position = Vec3::Constant(nan);
          rec.pnp_yaw = nan;
          rec.pnp_err_t_cm = nan;
          rec.pnp_err_r_deg = nan;
        }
        metrics.series.push_back(rec);
        ++metrics.captures;
        break;
      }
      default: {  // IMU tick
        const auto est = smoother.add_imu(imu_store[static_cast<size_t>(ev.payload)]);
        if (smoother.diverged()) {
          metrics.failed = true;
          break;
        }
        const auto gt = executed->sample(clamp_to_domain(*executed, ev.t));
        sm_terr.push_back((est.translation - gt.position).norm() * 100.0);
        sm_rerr.push_back(rotation_error_deg(est.rotation, yaw_rotation(gt.yaw)));
        break;
      }
    }
  }

  metrics.pnp_translation_cm = error_stats(pnp_terr);
  metrics.pnp_rotation_deg = error_stats(pnp_rerr);
  metrics.smoothed_translation_cm = error_stats(sm_terr);
  metrics.smoothed_rotation_deg = error_stats(sm_rerr);
  return metrics;
}

std::vector<SummaryRow> aggregate(std::span<const RunMetrics> runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate: no runs");

  std::vector<std::string> policies;
  for (const auto& r : runs)
    if (std::find(policies.begin(), policies.end(), r.policy) == policies.end())
      policies.push_back(r.policy);

  const auto mean_of = [](const std::vector<double>& vals) {
    double sum = 0.0;
    int n = 0;
    for (double v : vals)
      if (std::isfinite(v)) {
        sum += v;
        ++n;
      }
    return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
  };

  std::vector<SummaryRow> rows;
  for (const auto& policy : policies) {
    std::vector<const RunMetrics*> group;
    for (const auto& r : runs)
      if (r.policy == policy) group.push_back(&r);
    // Fixed reduction order regardless of how the caller scheduled the runs.
    std::sort(group.begin(), group.end(), [](const RunMetrics* a, const RunMetrics* b) {
      return std::tie(a->scenario, a->seed) < std::tie(b->scenario, b->seed);
    });

    const int total = static_cast<int>(group.size());
    int ok = 0;
    for (const auto* r : group)
      if (!r->failed) ++ok;

    for (const char* source : {"pnp", "smoothed"}) {
      SummaryRow row;
      row.policy = policy;
      row.source = source;
      row.total_runs = total;
      row.successful_runs = ok;
      row.success_rate = total > 0 ? static_cast<double>(ok) / total : 0.0;

      std::vector<double> rmse_t, mean_t, med_t, rmse_r, mean_r, med_r;
      for (const auto* r : group) {
        if (r->failed) continue;
        const ErrorStats& tr =
            std::string_view(source) == "pnp" ? r->pnp_translation_cm : r->smoothed_translation_cm;
        const ErrorStats& ro =
            std::string_view(source) == "pnp" ? r->pnp_rotation_deg : r->smoothed_rotation_deg;
        rmse_t.push_back(tr.rmse);
        mean_t.push_back(tr.mean);
        med_t.push_back(tr.median);
        rmse_r.push_back(ro.rmse);
        mean_r.push_back(ro.mean);
        med_r.push_back(ro.median);
      }
      row.translation_cm = ErrorStats{mean_of(rmse_t), mean_of(mean_t), mean_of(med_t)};
      row.rotation_deg = ErrorStats{mean_of(rmse_r), mean_of(mean_r), mean_of(med_r)};
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_run_csv(std::ostream& out, const RunMetrics& run, const CsvMeta& meta) {
  write_meta(out, meta);
  out << "# scenario=" << run.scenario << " policy=" << run.policy
      << " failed=" << (run.failed ? 1 : 0) << " captures=" << run.captures
      << " pnp_failures=" << run.pnp_failures << "\n";
  out << "t,gt_x,gt_y,gt_z,gt_yaw,pnp_x,pnp_y,pnp_z,pnp_yaw,pnp_err_t_cm,pnp_err_r_deg,"
         "sm_x,sm_y,sm_z,sm_yaw,sm_err_t_cm,sm_err_r_deg\n";
  for (const auto& r : run.series) {
    out << format_double(r.t);
    for (int i = 0; i < 3; ++i) out << ',' << format_double(r.gt_position[i]);
    out << ',' << format_double(r.gt_yaw);
    for (int i = 0; i < 3; ++i) out << ',' << format_double(r.pnp_position[i]);
    out << ',' << format_double(r.pnp_yaw) << ',' << format_double(r.pnp_err_t_cm) << ','
        << format_double(r.pnp_err_r_deg);
    for (int i = 0; i < 3; ++i) out << ',' << format_double(r.smoothed_position[i]);
    out << ',' << format_double(r.smoothed_yaw) << ',' << format_double(r.smoothed_err_t_cm)
        << ',' << format_double(r.smoothed_err_r_deg) << '\n';
  }
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows, const CsvMeta& meta,
                       std::span<const std::string> extra_comments) {
  write_meta(out, meta);
  for (const auto& line : extra_comments) out << "# " << line << "\n";
  out << "policy,source,rmse_t_cm,mean_t_cm,median_t_cm,rmse_r_deg,mean_r_deg,median_r_deg,"
         "success_rate\n";
  for (const auto& row : rows) {
    out << row.policy << ',' << row.source << ',' << format_double(row.translation_cm.rmse) << ','
        << format_double(row.translation_cm.mean) << ',' << format_double(row.translation_cm.median)
        << ',' << format_double(row.rotation_deg.rmse) << ',' << format_double(row.rotation_deg.mean)
        << ',' << format_double(row.rotation_deg.median) << ','
        << format_double(row.success_rate) << '\n';
  }
}

namespace {

UncertaintyTable make_table(const char* metric, const std::vector<double>& uncertainty,
                            const std::vector<double>& errors) {
  constexpr int kBins = 20;
  UncertaintyTable table;
  table.metric = metric;
  table.bins.assign(kBins, UncertaintyBin{});
  if (uncertainty.empty()) return table;

  std::vector<double> sorted = uncertainty;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<size_t>(
      std::ceil(0.97 * static_cast<double>(sorted.size())));
  const double clip = sorted[std::min(rank, sorted.size()) - 1];

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double u : uncertainty)
    if (u <= clip) {
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
  const double range = hi - lo;

  std::vector<std::vector<double>> binned(kBins);
  for (size_t i = 0; i < uncertainty.size(); ++i) {
    if (uncertainty[i] > clip) continue;
    int b = 0;
    if (range > 1e-300)
      b = std::min(kBins - 1, static_cast<int>((uncertainty[i] - lo) / range * kBins));
    binned[static_cast<size_t>(b)].push_back(errors[i]);
    ++table.retained;
  }

  for (int b = 0; b < kBins; ++b) {
    UncertaintyBin& bin = table.bins[static_cast<size_t>(b)];
    bin.lo = lo + range * b / kBins;
    bin.hi = lo + range * (b + 1) / kBins;
    const auto& vals = binned[static_cast<size_t>(b)];
    bin.count = static_cast<int>(vals.size());
    if (vals.empty()) continue;
    double sum = 0.0;
    for (double v : vals) sum += v;
    bin.mean_error = sum / static_cast<double>(vals.size());
    double ss = 0.0;
    for (double v : vals) ss += (v - bin.mean_error) * (v - bin.mean_error);
    bin.std_error = std::sqrt(ss / static_cast<double>(vals.size()));
  }

  // Pearson correlation between bin index and bin mean error over occupied
  // bins.
  {
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    int n = 0;
    for (int b = 0; b < kBins; ++b) {
      const auto& bin = table.bins[static_cast<size_t>(b)];
      if (bin.count == 0) continue;
      const double x = b, y = bin.mean_error;
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
      ++n;
    }
    const double cov = n * sxy - sx * sy;
    const double vx = n * sxx - sx * sx;
    const double vy = n * syy - sy * sy;
    table.pearson_r = (vx > 0.0 && vy > 0.0) ? cov / std::sqrt(vx * vy) : 0.0;
  }

  const auto quartile_std = [&](int from, int to) {
    double sum = 0.0;
    int n = 0;
    for (int b = from; b < to; ++b)
      if (table.bins[static_cast<size_t>(b)].count > 0) {
        sum += table.bins[static_cast<size_t>(b)].std_error;
        ++n;
      }
    return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
  };
  table.bottom_quartile_std = quartile_std(0, kBins / 4);
  table.top_quartile_std = quartile_std(kBins - kBins / 4, kBins);
  return table;
}

}  // namespace

UncertaintyStudy uncertainty_study(const camera::CameraModel& cam,
                                   const localize::EntropyField& field, int n_images,
                                   int pixels_per_image, Rng& rng) {
  if (n_images < 1 || pixels_per_image < 1)
    throw std::invalid_argument("uncertainty_study: image and pixel counts must be positive");
  const localize::Room& room = field.room();
  const Vec3 center = 0.5 * (room.min + room.max);
  const double radius = 0.35 * std::min(room.extent().x(), room.extent().y());

  std::vector<double> err, alea, epis, ent;
  for (int i = 0; i < n_images; ++i) {
    const double th = 2.0 * kPi * i / n_images;
    const Vec3 position = center + radius * Vec3(std::cos(th), std::sin(th), 0.0);
    const Pose pose{yaw_rotation(th), position};  // camera faces outward
    const Vec3 origin = camera::camera_position_world(cam, pose);
    const Mat3 cam_to_world = camera::camera_rotation_world(cam, pose).transpose();

    for (int k = 0; k < pixels_per_image; ++k) {
      const Vec2 px(rng.uniform(0.0, cam.width), rng.uniform(0.0, cam.height));
      const Vec3 dir = cam_to_world * camera::pixel_ray(cam, px);
      const auto hit = localize::ray_exit(room, origin, dir);
      if (!hit) continue;
      const localize::FieldCell& cell = field.cell_at(*hit);
      const Vec3 noise = cell.sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
      const evidential::NIGParams axis(0.0, cell.lambda, cell.alpha,
                                       cell.sigma * cell.sigma * (cell.alpha - 1.0));
      err.push_back(noise.norm());
      alea.push_back(3.0 * axis.aleatoric());
      epis.push_back(3.0 * axis.epistemic());
      ent.push_back(3.0 * evidential::predictive_entropy(axis));
    }
  }

  UncertaintyStudy study;
  study.total_samples = static_cast<int>(err.size());
  study.aleatoric = make_table("aleatoric", alea, err);
  study.epistemic = make_table("epistemic", epis, err);
  study.entropy = make_table("entropy", ent, err);
  return study;
}

void write_uncertainty_csv(std::ostream& out, const UncertaintyStudy& study, const CsvMeta& meta) {
  write_meta(out, meta);
  out << "# total_samples=" << study.total_samples << "\n";
  for (const UncertaintyTable* table : {&study.aleatoric, &study.epistemic, &study.entropy})
    out << "# " << table->metric << " retained=" << table->retained
        << " pearson_r=" << format_double(table->pearson_r)
        << " bottom_quartile_std=" << format_double(table->bottom_quartile_std)
        << " top_quartile_std=" << format_double(table->top_quartile_std) << "\n";
  out << "metric,bin,lo,hi,count,mean_error,std_error\n";
  for (const UncertaintyTable* table : {&study.aleatoric, &study.epistemic, &study.entropy}) {
    for (size_t b = 0; b < table->bins.size(); ++b) {
      const auto& bin = table->bins[b];
      out << table->metric << ',' << b << ',' << format_double(bin.lo) << ','
          << format_double(bin.hi) << ',' << bin.count << ',' << format_double(bin.mean_error)
          << ',' << format_double(bin.std_error) << '\n';
    }
  }
}

}  // namespace eviplan::sim
