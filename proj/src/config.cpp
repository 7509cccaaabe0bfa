#include "eviplan/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace eviplan::config {

namespace {

std::string trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail_line(int line, const std::string& msg) {
  throw ConfigError("config: line " + std::to_string(line) + ": " + msg);
}

[[noreturn]] void fail_key(const std::string& key, const std::string& msg) {
  throw ConfigError("config: invalid value for '" + key + "': " + msg);
}

double parse_double(const std::string& v, int line, const std::string& key) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    fail_line(line, "expected a number for '" + key + "', got '" + v + "'");
  return x;
}

long long parse_ll(const std::string& v, int line, const std::string& key) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    fail_line(line, "expected an integer for '" + key + "', got '" + v + "'");
  return x;
}

int parse_int(const std::string& v, int line, const std::string& key) {
  return static_cast<int>(parse_ll(v, line, key));
}

uint64_t parse_u64(const std::string& v, int line, const std::string& key) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    fail_line(line, "expected an unsigned integer for '" + key + "', got '" + v + "'");
  return static_cast<uint64_t>(x);
}

bool parse_bool(const std::string& v, int line, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail_line(line, "expected true/false for '" + key + "', got '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

Vec3 parse_vec3(const std::string& v, int line, const std::string& key) {
  const auto parts = split(v, ',');
  if (parts.size() != 3) fail_line(line, "expected x,y,z for '" + key + "', got '" + v + "'");
  return Vec3(parse_double(parts[0], line, key), parse_double(parts[1], line, key),
              parse_double(parts[2], line, key));
}

Vec4 parse_vec4(const std::string& v, int line, const std::string& key) {
  const auto parts = split(v, ',');
  if (parts.size() != 4)
    fail_line(line, "expected x,y,z,yaw for '" + key + "', got '" + v + "'");
  return Vec4(parse_double(parts[0], line, key), parse_double(parts[1], line, key),
              parse_double(parts[2], line, key), parse_double(parts[3], line, key));
}

std::vector<Vec3> parse_points(const std::string& v, int line, const std::string& key) {
  std::vector<Vec3> pts;
  for (const auto& part : split(v, ';'))
    if (!part.empty()) pts.push_back(parse_vec3(part, line, key));
  if (pts.empty()) fail_line(line, "'" + key + "' needs at least one x,y,z entry");
  return pts;
}

planner::YawPolicy parse_policy(const std::string& v, int line) {
  if (v == "constant") return planner::YawPolicy::kConstant;
  if (v == "forward") return planner::YawPolicy::kForward;
  if (v == "perception_aware") return planner::YawPolicy::kPerceptionAware;
  fail_line(line, "unknown yaw_policy '" + v + "'");
}

localize::Wall parse_wall(const std::string& v, int line) {
  if (v == "x_min") return localize::Wall::kXMin;
  if (v == "x_max") return localize::Wall::kXMax;
  if (v == "y_min") return localize::Wall::kYMin;
  if (v == "y_max") return localize::Wall::kYMax;
  fail_line(line, "unknown wall '" + v + "' (x_min, x_max, y_min, y_max)");
}

FieldKind parse_field_kind(const std::string& v, int line) {
  if (v == "uniform") return FieldKind::kUniform;
  if (v == "low_noise_wall") return FieldKind::kLowNoiseWall;
  if (v == "axis_gradient") return FieldKind::kAxisGradient;
  fail_line(line, "unknown field '" + v + "' (uniform, low_noise_wall, axis_gradient)");
}

void apply_scenario_key(ScenarioSpec& s, const std::string& key, const std::string& v, int line) {
  if (key == "name") s.name = v;
  else if (key == "duration") s.duration = parse_double(v, line, key);
  else if (key == "seed") s.seed = parse_u64(v, line, key);
  else if (key == "repeats") s.repeats = parse_int(v, line, key);
  else if (key == "yaw_policy") s.yaw_policy = parse_policy(v, line);
  else if (key == "constant_yaw") s.constant_yaw = parse_double(v, line, key);
  else if (key == "start_yaw") s.start_yaw = parse_double(v, line, key);
  else if (key == "waypoints") s.waypoints = parse_points(v, line, key);
  else if (key == "path") s.path = sim::parse_path_shape(v);
  else if (key == "path_center") s.path_center = parse_vec3(v, line, key);
  else if (key == "path_radius") s.path_radius = parse_double(v, line, key);
  else if (key == "path_points") s.path_points = parse_int(v, line, key);
  else if (key == "pool_per_face") s.pool_per_face = parse_int(v, line, key);
  else if (key == "room_min") s.field.room_min = parse_vec3(v, line, key);
  else if (key == "room_max") s.field.room_max = parse_vec3(v, line, key);
  else if (key == "field") s.field.kind = parse_field_kind(v, line);
  else if (key == "field_nx") s.field.nx = parse_int(v, line, key);
  else if (key == "field_ny") s.field.ny = parse_int(v, line, key);
  else if (key == "field_nz") s.field.nz = parse_int(v, line, key);
  else if (key == "field_lambda") s.field.lambda = parse_double(v, line, key);
  else if (key == "field_alpha") s.field.alpha = parse_double(v, line, key);
  else if (key == "sigma") s.field.sigma = parse_double(v, line, key);
  else if (key == "wall") s.field.wall = parse_wall(v, line);
  else if (key == "sigma_low") s.field.sigma_low = parse_double(v, line, key);
  else if (key == "sigma_high") s.field.sigma_high = parse_double(v, line, key);
  else if (key == "jitter_rel") s.field.jitter_rel = parse_double(v, line, key);
  else if (key == "field_seed") s.field.field_seed = parse_u64(v, line, key);
  else if (key == "axis") s.field.axis = parse_int(v, line, key);
  else if (key == "sigma_min") s.field.sigma_min = parse_double(v, line, key);
  else if (key == "sigma_max") s.field.sigma_max = parse_double(v, line, key);
  else fail_line(line, "unknown key 'scenario." + key + "'");
}

void apply_camera_key(ScenarioSpec& s, const std::string& key, const std::string& v, int line) {
  if (key == "width") s.cam_width = parse_double(v, line, key);
  else if (key == "height") s.cam_height = parse_double(v, line, key);
  else if (key == "cx") s.cam_cx = parse_double(v, line, key);
  else if (key == "cy") s.cam_cy = parse_double(v, line, key);
  else if (key == "pixel_size") s.cam_pixel_size = parse_double(v, line, key);
  else if (key == "focal_length") s.cam_focal_length = parse_double(v, line, key);
  else if (key == "smoothing") s.cam_smoothing = parse_double(v, line, key);
  else fail_line(line, "unknown key 'camera." + key + "'");
}

void apply_planner_key(ScenarioSpec& s, const std::string& key, const std::string& v, int line) {
  auto& p = s.planner;
  if (key == "t_plan") p.t_plan = parse_double(v, line, key);
  else if (key == "t_exec") p.t_exec = parse_double(v, line, key);
  else if (key == "n_ctrl") p.n_ctrl = parse_int(v, line, key);
  else if (key == "horizon_waypoints") p.horizon_waypoints = parse_int(v, line, key);
  else if (key == "entropy_percentile") p.entropy_percentile = parse_double(v, line, key);
  else if (key == "entropy_weighting") p.ablation.entropy_weighting = parse_bool(v, line, key);
  else if (key == "entropy_rejection") p.ablation.entropy_rejection = parse_bool(v, line, key);
  else if (key == "correspondence_filter")
    p.ablation.correspondence_filter = parse_bool(v, line, key);
  else if (key == "v_max") p.limits.v_max = parse_vec4(v, line, key);
  else if (key == "a_max") p.limits.a_max = parse_vec4(v, line, key);
  else if (key == "lbfgs_memory") p.lbfgs.memory = parse_int(v, line, key);
  else if (key == "lbfgs_max_iters") p.lbfgs.max_iters = parse_int(v, line, key);
  else if (key == "lbfgs_grad_tol") p.lbfgs.grad_tol = parse_double(v, line, key);
  else if (key == "lbfgs_cost_tol") p.lbfgs.cost_tol = parse_double(v, line, key);
  else fail_line(line, "unknown key 'planner." + key + "'");
}

void apply_weights_key(ScenarioSpec& s, const std::string& key, const std::string& v, int line) {
  auto& w = s.planner.weights;
  if (key == "lambda_wp") w.lambda_wp = parse_double(v, line, key);
  else if (key == "lambda_fov") w.lambda_fov = parse_double(v, line, key);
  else if (key == "lambda_eq") w.lambda_eq = parse_double(v, line, key);
  else if (key == "lambda_ie") w.lambda_ie = parse_double(v, line, key);
  else if (key == "lambda_s") w.lambda_s = parse_double(v, line, key);
  else if (key == "entropy_sharpness") w.entropy_sharpness = parse_double(v, line, key);
  else if (key == "n_f") w.n_f = parse_int(v, line, key);
  else fail_line(line, "unknown key 'weights." + key + "'");
}

void apply_localize_key(ScenarioSpec& s, const std::string& key, const std::string& v, int line) {
  auto& l = s.sensing;
  if (key == "scr_period_s") l.scr_period = parse_double(v, line, key);
  else if (key == "scr_latency_s") l.scr_latency = parse_double(v, line, key);
  else if (key == "imu_rate_hz") l.imu_rate_hz = parse_double(v, line, key);
  else if (key == "n_pixels") l.n_pixels = parse_int(v, line, key);
  else if (key == "inlier_px") l.ransac.inlier_px = parse_double(v, line, key);
  else if (key == "ransac_confidence") l.ransac.confidence = parse_double(v, line, key);
  else if (key == "ransac_max_iters") l.ransac.max_iters = parse_int(v, line, key);
  else if (key == "pnp_entropy_percentile")
    l.ransac.entropy_percentile = parse_double(v, line, key);
  else if (key == "lag_s") l.smoother.lag = parse_double(v, line, key);
  else if (key == "pose_sigma_t") l.smoother.pose_sigma_t = parse_double(v, line, key);
  else if (key == "pose_sigma_r") l.smoother.pose_sigma_r = parse_double(v, line, key);
  else if (key == "huber_delta") l.smoother.huber_delta = parse_double(v, line, key);
  else if (key == "process_sigma_p") l.smoother.process_sigma_p = parse_double(v, line, key);
  else if (key == "process_sigma_v") l.smoother.process_sigma_v = parse_double(v, line, key);
  else if (key == "process_sigma_yaw") l.smoother.process_sigma_yaw = parse_double(v, line, key);
  else if (key == "max_gn_iters") l.smoother.max_gn_iters = parse_int(v, line, key);
  else if (key == "accel_sigma") l.imu_noise.accel_sigma = parse_double(v, line, key);
  else if (key == "gyro_sigma") l.imu_noise.gyro_sigma = parse_double(v, line, key);
  else if (key == "accel_bias_sigma") l.imu_noise.accel_bias_sigma = parse_double(v, line, key);
  else if (key == "gyro_bias_sigma") l.imu_noise.gyro_bias_sigma = parse_double(v, line, key);
  else if (key == "pose_outlier_rate") l.pose_outlier_rate = parse_double(v, line, key);
  else if (key == "pose_outlier_mag") l.pose_outlier_mag = parse_double(v, line, key);
  else fail_line(line, "unknown key 'localize." + key + "'");
}

// Key-named range checks; anything that would make a component constructor
// throw later is reported here with the config vocabulary.
void check_spec(const ScenarioSpec& s) {
  const auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) fail_key(key, what);
  };
  require(!s.name.empty(), "name", "must not be empty");
  require(s.duration > 0.0, "duration", "must be positive");
  require(s.repeats >= 1, "repeats", "must be at least 1");
  require(s.pool_per_face >= 1, "pool_per_face", "must be at least 1");
  require(!(s.waypoints.empty() && !s.path.has_value()), "waypoints",
          "either waypoints or path must be given");
  require(!(!s.waypoints.empty() && s.path.has_value()), "path",
          "conflicts with an explicit waypoints list");
  if (s.path.has_value() && *s.path != sim::PathShape::kHover) {
    require(s.path_radius > 0.0, "path_radius", "must be positive");
    require(s.path_points >= 3, "path_points", "must be at least 3");
  }

  const auto& f = s.field;
  for (int a = 0; a < 3; ++a)
    require(f.room_min[a] < f.room_max[a], "room_min", "must be below room_max on every axis");
  require(f.nx >= 1 && f.ny >= 1 && f.nz >= 1, "field_nx", "grid sizes must be at least 1");
  require(f.lambda > 0.0, "field_lambda", "must be positive");
  require(f.alpha > 1.0, "field_alpha", "must exceed 1");
  require(f.sigma > 0.0, "sigma", "must be positive");
  require(f.sigma_low > 0.0, "sigma_low", "must be positive");
  require(f.sigma_high > 0.0, "sigma_high", "must be positive");
  require(f.jitter_rel >= 0.0 && f.jitter_rel < 1.0, "jitter_rel", "must be in [0, 1)");
  require(f.axis >= 0 && f.axis <= 2, "axis", "must be 0, 1, or 2");
  require(f.sigma_min > 0.0, "sigma_min", "must be positive");
  require(f.sigma_max > 0.0, "sigma_max", "must be positive");

  require(s.cam_width > 0.0, "width", "must be positive");
  require(s.cam_height > 0.0, "height", "must be positive");
  require(s.cam_pixel_size > 0.0, "pixel_size", "must be positive");
  require(s.cam_focal_length > 0.0, "focal_length", "must be positive");
  require(s.cam_smoothing > 0.0, "smoothing", "must be positive");

  const auto& p = s.planner;
  require(p.t_plan > 0.0, "t_plan", "must be positive");
  require(p.t_exec > 0.0 && p.t_exec <= p.t_plan, "t_exec", "must be in (0, t_plan]");
  require(p.n_ctrl >= 5, "n_ctrl", "must be at least 5");
  require(p.horizon_waypoints >= 2, "horizon_waypoints", "must be at least 2");
  require(p.entropy_percentile > 0.0 && p.entropy_percentile <= 100.0, "entropy_percentile",
          "must be in (0, 100]");
  require((p.limits.v_max.array() > 0.0).all(), "v_max", "must be positive");
  require((p.limits.a_max.array() > 0.0).all(), "a_max", "must be positive");
  require(p.lbfgs.memory >= 1, "lbfgs_memory", "must be at least 1");
  require(p.lbfgs.max_iters >= 1, "lbfgs_max_iters", "must be at least 1");
  require(p.lbfgs.grad_tol > 0.0, "lbfgs_grad_tol", "must be positive");
  require(p.lbfgs.cost_tol > 0.0, "lbfgs_cost_tol", "must be positive");

  const auto& w = p.weights;
  require(w.lambda_wp >= 0.0, "lambda_wp", "must be non-negative");
  require(w.lambda_fov >= 0.0, "lambda_fov", "must be non-negative");
  require(w.lambda_eq >= 0.0, "lambda_eq", "must be non-negative");
  require(w.lambda_ie >= 0.0, "lambda_ie", "must be non-negative");
  require(w.lambda_s >= 0.0, "lambda_s", "must be non-negative");
  require(w.entropy_sharpness >= 0.0, "entropy_sharpness", "must be non-negative");
  require(w.n_f >= 1, "n_f", "must be at least 1");

  const auto& l = s.sensing;
  require(l.scr_period > 0.0, "scr_period_s", "must be positive");
  require(l.scr_latency >= 0.0, "scr_latency_s", "must be non-negative");
  require(l.imu_rate_hz > 0.0, "imu_rate_hz", "must be positive");
  require(l.n_pixels >= 6, "n_pixels", "must be at least 6");
  require(l.ransac.inlier_px > 0.0, "inlier_px", "must be positive");
  require(l.ransac.confidence > 0.0 && l.ransac.confidence < 1.0, "ransac_confidence",
          "must be in (0, 1)");
  require(l.ransac.max_iters >= 1, "ransac_max_iters", "must be at least 1");
  require(l.ransac.entropy_percentile > 0.0 && l.ransac.entropy_percentile <= 100.0,
          "pnp_entropy_percentile", "must be in (0, 100]");
  require(l.smoother.lag > 0.0, "lag_s", "must be positive");
  require(l.smoother.pose_sigma_t > 0.0, "pose_sigma_t", "must be positive");
  require(l.smoother.pose_sigma_r > 0.0, "pose_sigma_r", "must be positive");
  require(l.smoother.huber_delta > 0.0, "huber_delta", "must be positive");
  require(l.smoother.process_sigma_p > 0.0, "process_sigma_p", "must be positive");
  require(l.smoother.process_sigma_v > 0.0, "process_sigma_v", "must be positive");
  require(l.smoother.process_sigma_yaw > 0.0, "process_sigma_yaw", "must be positive");
  require(l.smoother.max_gn_iters >= 1, "max_gn_iters", "must be at least 1");
  require(l.imu_noise.accel_sigma >= 0.0, "accel_sigma", "must be non-negative");
  require(l.imu_noise.gyro_sigma >= 0.0, "gyro_sigma", "must be non-negative");
  require(l.imu_noise.accel_bias_sigma >= 0.0, "accel_bias_sigma", "must be non-negative");
  require(l.imu_noise.gyro_bias_sigma >= 0.0, "gyro_bias_sigma", "must be non-negative");
  require(l.pose_outlier_rate >= 0.0 && l.pose_outlier_rate <= 1.0, "pose_outlier_rate",
          "must be in [0, 1]");
  require(l.pose_outlier_mag >= 0.0, "pose_outlier_mag", "must be non-negative");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const Vec3& v) { return fmt(v.x()) + ", " + fmt(v.y()) + ", " + fmt(v.z()); }

std::string fmt(const Vec4& v) {
  return fmt(v[0]) + ", " + fmt(v[1]) + ", " + fmt(v[2]) + ", " + fmt(v[3]);
}

const char* policy_string(planner::YawPolicy p) { return sim::policy_name(p); }

const char* wall_string(localize::Wall w) {
  switch (w) {
    case localize::Wall::kXMin: return "x_min";
    case localize::Wall::kXMax: return "x_max";
    case localize::Wall::kYMin: return "y_min";
    case localize::Wall::kYMax: return "y_max";
  }
  return "x_min";
}

const char* field_string(FieldKind k) {
  switch (k) {
    case FieldKind::kUniform: return "uniform";
    case FieldKind::kLowNoiseWall: return "low_noise_wall";
    case FieldKind::kAxisGradient: return "axis_gradient";
  }
  return "uniform";
}

const char* shape_string(sim::PathShape s) {
  switch (s) {
    case sim::PathShape::kHover: return "hover";
    case sim::PathShape::kCircle: return "circle";
    case sim::PathShape::kLemniscate: return "lemniscate";
    case sim::PathShape::kRose: return "rose";
    case sim::PathShape::kSquare: return "square";
  }
  return "hover";
}

}  // namespace

localize::EntropyField FieldSpec::build() const {
  const localize::Room room(room_min, room_max);
  switch (kind) {
    case FieldKind::kUniform:
      return localize::EntropyField::uniform(room, nx, ny, nz,
                                             localize::FieldCell{sigma, lambda, alpha});
    case FieldKind::kLowNoiseWall:
      return localize::EntropyField::low_noise_wall(room, nx, ny, nz, wall, sigma_low, sigma_high,
                                                    lambda, alpha, jitter_rel, field_seed);
    case FieldKind::kAxisGradient:
      return localize::EntropyField::axis_gradient(room, nx, ny, nz, axis, sigma_min, sigma_max,
                                                   lambda, alpha);
  }
  throw ConfigError("config: invalid value for 'field': unknown kind");
}

sim::Scenario ScenarioSpec::to_scenario() const {
  check_spec(*this);
  sim::Scenario sc;
  sc.name = name;
  sc.duration = duration;
  sc.seed = seed;
  sc.repeats = repeats;
  sc.yaw_policy = yaw_policy;
  sc.constant_yaw = constant_yaw;
  sc.start_yaw = start_yaw;
  sc.pool_per_face = pool_per_face;
  sc.field = field.build();
  sc.waypoints =
      waypoints.empty() ? sim::make_path(*path, path_center, path_radius, path_points) : waypoints;
  sc.cam = camera::CameraModel(cam_width, cam_height, cam_cx, cam_cy, cam_pixel_size,
                               cam_pixel_size, cam_focal_length, cam_smoothing);
  sc.planner_cfg = planner;
  sc.sensing = sensing;
  sc.validate();
  return sc;
}

ScenarioSpec parse_text(const std::string& text) {
  ScenarioSpec spec;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::set<std::string> seen;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail_line(line, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section != "scenario" && section != "camera" && section != "planner" &&
          section != "weights" && section != "localize")
        fail_line(line, "unknown section '[" + section + "]'");
      continue;
    }
    const size_t eq = s.find('=');
    if (eq == std::string::npos) fail_line(line, "expected 'key = value', got '" + s + "'");
    if (section.empty()) fail_line(line, "key outside any section");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) fail_line(line, "empty key");
    if (!seen.insert(section + "." + key).second)
      fail_line(line, "duplicate key '" + section + "." + key + "'");

    if (section == "scenario") apply_scenario_key(spec, key, value, line);
    else if (section == "camera") apply_camera_key(spec, key, value, line);
    else if (section == "planner") apply_planner_key(spec, key, value, line);
    else if (section == "weights") apply_weights_key(spec, key, value, line);
    else apply_localize_key(spec, key, value, line);
  }
  check_spec(spec);
  return spec;
}

ScenarioSpec parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str());
}

std::string serialize(const ScenarioSpec& s) {
  std::ostringstream out;
  out << "[scenario]\n";
  out << "name = " << s.name << "\n";
  out << "duration = " << fmt(s.duration) << "\n";
  out << "seed = " << s.seed << "\n";
  out << "repeats = " << s.repeats << "\n";
  out << "yaw_policy = " << policy_string(s.yaw_policy) << "\n";
  out << "constant_yaw = " << fmt(s.constant_yaw) << "\n";
  out << "start_yaw = " << fmt(s.start_yaw) << "\n";
  if (!s.waypoints.empty()) {
    out << "waypoints = ";
    for (size_t i = 0; i < s.waypoints.size(); ++i) {
      if (i) out << "; ";
      out << fmt(s.waypoints[i]);
    }
    out << "\n";
  }
  if (s.path) out << "path = " << shape_string(*s.path) << "\n";
  out << "path_center = " << fmt(s.path_center) << "\n";
  out << "path_radius = " << fmt(s.path_radius) << "\n";
  out << "path_points = " << s.path_points << "\n";
  out << "pool_per_face = " << s.pool_per_face << "\n";
  out << "room_min = " << fmt(s.field.room_min) << "\n";
  out << "room_max = " << fmt(s.field.room_max) << "\n";
  out << "field = " << field_string(s.field.kind) << "\n";
  out << "field_nx = " << s.field.nx << "\n";
  out << "field_ny = " << s.field.ny << "\n";
  out << "field_nz = " << s.field.nz << "\n";
  out << "field_lambda = " << fmt(s.field.lambda) << "\n";
  out << "field_alpha = " << fmt(s.field.alpha) << "\n";
  out << "sigma = " << fmt(s.field.sigma) << "\n";
  out << "wall = " << wall_string(s.field.wall) << "\n";
  out << "sigma_low = " << fmt(s.field.sigma_low) << "\n";
  out << "sigma_high = " << fmt(s.field.sigma_high) << "\n";
  out << "jitter_rel = " << fmt(s.field.jitter_rel) << "\n";
  out << "field_seed = " << s.field.field_seed << "\n";
  out << "axis = " << s.field.axis << "\n";
  out << "sigma_min = " << fmt(s.field.sigma_min) << "\n";
  out << "sigma_max = " << fmt(s.field.sigma_max) << "\n";

  out << "\n[camera]\n";
  out << "width = " << fmt(s.cam_width) << "\n";
  out << "height = " << fmt(s.cam_height) << "\n";
  out << "cx = " << fmt(s.cam_cx) << "\n";
  out << "cy = " << fmt(s.cam_cy) << "\n";
  out << "pixel_size = " << fmt(s.cam_pixel_size) << "\n";
  out << "focal_length = " << fmt(s.cam_focal_length) << "\n";
  out << "smoothing = " << fmt(s.cam_smoothing) << "\n";

  out << "\n[planner]\n";
  out << "t_plan = " << fmt(s.planner.t_plan) << "\n";
  out << "t_exec = " << fmt(s.planner.t_exec) << "\n";
  out << "n_ctrl = " << s.planner.n_ctrl << "\n";
  out << "horizon_waypoints = " << s.planner.horizon_waypoints << "\n";
  out << "entropy_percentile = " << fmt(s.planner.entropy_percentile) << "\n";
  out << "entropy_weighting = " << (s.planner.ablation.entropy_weighting ? "true" : "false")
      << "\n";
  out << "entropy_rejection = " << (s.planner.ablation.entropy_rejection ? "true" : "false")
      << "\n";
  out << "correspondence_filter = "
      << (s.planner.ablation.correspondence_filter ? "true" : "false") << "\n";
  out << "v_max = " << fmt(s.planner.limits.v_max) << "\n";
  out << "a_max = " << fmt(s.planner.limits.a_max) << "\n";
  out << "lbfgs_memory = " << s.planner.lbfgs.memory << "\n";
  out << "lbfgs_max_iters = " << s.planner.lbfgs.max_iters << "\n";
  out << "lbfgs_grad_tol = " << fmt(s.planner.lbfgs.grad_tol) << "\n";
  out << "lbfgs_cost_tol = " << fmt(s.planner.lbfgs.cost_tol) << "\n";

  out << "\n[weights]\n";
  out << "lambda_wp = " << fmt(s.planner.weights.lambda_wp) << "\n";
  out << "lambda_fov = " << fmt(s.planner.weights.lambda_fov) << "\n";
  out << "lambda_eq = " << fmt(s.planner.weights.lambda_eq) << "\n";
  out << "lambda_ie = " << fmt(s.planner.weights.lambda_ie) << "\n";
  out << "lambda_s = " << fmt(s.planner.weights.lambda_s) << "\n";
  out << "entropy_sharpness = " << fmt(s.planner.weights.entropy_sharpness) << "\n";
  out << "n_f = " << s.planner.weights.n_f << "\n";

  out << "\n[localize]\n";
  out << "scr_period_s = " << fmt(s.sensing.scr_period) << "\n";
  out << "scr_latency_s = " << fmt(s.sensing.scr_latency) << "\n";
  out << "imu_rate_hz = " << fmt(s.sensing.imu_rate_hz) << "\n";
  out << "n_pixels = " << s.sensing.n_pixels << "\n";
  out << "inlier_px = " << fmt(s.sensing.ransac.inlier_px) << "\n";
  out << "ransac_confidence = " << fmt(s.sensing.ransac.confidence) << "\n";
  out << "ransac_max_iters = " << s.sensing.ransac.max_iters << "\n";
  out << "pnp_entropy_percentile = " << fmt(s.sensing.ransac.entropy_percentile) << "\n";
  out << "lag_s = " << fmt(s.sensing.smoother.lag) << "\n";
  out << "pose_sigma_t = " << fmt(s.sensing.smoother.pose_sigma_t) << "\n";
  out << "pose_sigma_r = " << fmt(s.sensing.smoother.pose_sigma_r) << "\n";
  out << "huber_delta = " << fmt(s.sensing.smoother.huber_delta) << "\n";
  out << "process_sigma_p = " << fmt(s.sensing.smoother.process_sigma_p) << "\n";
  out << "process_sigma_v = " << fmt(s.sensing.smoother.process_sigma_v) << "\n";
  out << "process_sigma_yaw = " << fmt(s.sensing.smoother.process_sigma_yaw) << "\n";
  out << "max_gn_iters = " << s.sensing.smoother.max_gn_iters << "\n";
  out << "accel_sigma = " << fmt(s.sensing.imu_noise.accel_sigma) << "\n";
  out << "gyro_sigma = " << fmt(s.sensing.imu_noise.gyro_sigma) << "\n";
  out << "accel_bias_sigma = " << fmt(s.sensing.imu_noise.accel_bias_sigma) << "\n";
  out << "gyro_bias_sigma = " << fmt(s.sensing.imu_noise.gyro_bias_sigma) << "\n";
  out << "pose_outlier_rate = " << fmt(s.sensing.pose_outlier_rate) << "\n";
  out << "pose_outlier_mag = " << fmt(s.sensing.pose_outlier_mag) << "\n";
  return out.str();
}

uint64_t fnv1a(const std::string& data) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash(const ScenarioSpec& spec) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(serialize(spec))));
  return buf;
}

bool equal(const ScenarioSpec& a, const ScenarioSpec& b) { return serialize(a) == serialize(b); }

}  // namespace eviplan::config
