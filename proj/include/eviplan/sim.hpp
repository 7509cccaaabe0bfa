#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "eviplan/camera.hpp"
#include "eviplan/localize.hpp"
#include "eviplan/planner.hpp"
#include "eviplan/scene.hpp"

namespace eviplan::sim {

inline constexpr const char* kArtifactVersion = "eviplan-1";

localize::Room default_room();
localize::EntropyField default_field();

/// 480x480, 90 degree field of view, half-meter focal length, forward mount.
camera::CameraModel default_camera();

/// Sensing side of a run: camera cadence and latency, regression density,
/// RANSAC and smoother settings, and optional gross pose corruption for
/// robustness experiments.
struct SensorConfig {
  double scr_period = 0.2;   // seconds between camera frames
  double scr_latency = 0.06; // delay before a PnP pose reaches the smoother
  int n_pixels = 250;        // regressed pixels per frame
  double imu_rate_hz = 200.0;
  localize::ImuNoise imu_noise;
  localize::PnpRansacConfig ransac;
  localize::SmootherConfig smoother;
  double pose_outlier_rate = 0.0;  // fraction of delivered poses corrupted
  double pose_outlier_mag = 1.0;   // meters of translation corruption

  void validate() const;
};

struct Scenario {
  std::string name = "scenario";
  localize::EntropyField field = default_field();
  std::vector<Vec3> waypoints;  // global route; a single point means hover
  double duration = 12.0;       // seconds to traverse the route
  planner::YawPolicy yaw_policy = planner::YawPolicy::kPerceptionAware;
  double constant_yaw = 0.0;  // heading of the constant baseline
  double start_yaw = 0.0;
  camera::CameraModel cam = default_camera();
  planner::PlannerConfig planner_cfg;
  SensorConfig sensing;
  int pool_per_face = 250;  // planner map points sampled on each room face
  uint64_t seed = 1;
  int repeats = 1;

  void validate() const;
};

const char* policy_name(planner::YawPolicy policy);

enum class PathShape { kHover, kCircle, kLemniscate, kRose, kSquare };

PathShape parse_path_shape(const std::string& name);

/// Planar route generator at the center's height: n points around the shape
/// plus a closing copy of the first (except for hover, which is one point).
std::vector<Vec3> make_path(PathShape shape, const Vec3& center, double radius, int n);

/// Geodesic distance between two rotations, in degrees.
double rotation_error_deg(const Mat3& r_est, const Mat3& r_gt);

struct ErrorStats {
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
};

ErrorStats error_stats(std::span<const double> values);

/// One camera frame: ground truth at capture time, the PnP result (NaN
/// columns when RANSAC failed), and the smoothed estimate current at that
/// moment.
struct CaptureRecord {
  double t = 0.0;
  Vec3 gt_position = Vec3::Zero();
  double gt_yaw = 0.0;
  bool pnp_ok = false;
  Vec3 pnp_position = Vec3::Zero();
  double pnp_yaw = 0.0;
  double pnp_err_t_cm = 0.0;
  double pnp_err_r_deg = 0.0;
  Vec3 smoothed_position = Vec3::Zero();
  double smoothed_yaw = 0.0;
  double smoothed_err_t_cm = 0.0;
  double smoothed_err_r_deg = 0.0;
};

struct RunMetrics {
  std::string scenario;
  std::string policy;
  uint64_t seed = 0;
  bool failed = false;  // smoother diverged mid-run
  int captures = 0;
  int pnp_failures = 0;
  ErrorStats pnp_translation_cm;
  ErrorStats pnp_rotation_deg;
  ErrorStats smoothed_translation_cm;  // sampled at the IMU rate
  ErrorStats smoothed_rotation_deg;
  std::vector<CaptureRecord> series;
};

/// Closed-loop run: ground truth follows each plan exactly, the camera and
/// IMU observe it through the entropy field and noise models, and the next
/// plan starts from the smoothed estimate. Deterministic given the seed.
RunMetrics run_scenario(const Scenario& sc, uint64_t seed);

/// Planner map stand-in: per_face surface points per room face with the
/// field's local evidential parameters (no added noise).
std::vector<localize::SceneSample> sample_surface_points(const localize::EntropyField& field,
                                                         int per_face, Rng& rng);

struct SummaryRow {
  std::string policy;
  std::string source;  // "pnp" or "smoothed"
  ErrorStats translation_cm;
  ErrorStats rotation_deg;
  double success_rate = 0.0;
  int total_runs = 0;
  int successful_runs = 0;
};

/// Per-(policy, source) averages over the successful runs, in first-seen
/// policy order with "pnp" before "smoothed". All-failed groups keep NaN
/// statistics with success rate 0.
std::vector<SummaryRow> aggregate(std::span<const RunMetrics> runs);

struct CsvMeta {
  uint64_t seed = 0;
  std::string config_hash;
  std::string version = kArtifactVersion;
};

void write_run_csv(std::ostream& out, const RunMetrics& run, const CsvMeta& meta);

/// Each extra comment line is emitted after the metadata line, prefixed
/// with "# ".
void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows, const CsvMeta& meta,
                       std::span<const std::string> extra_comments = {});

struct UncertaintyBin {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
};

struct UncertaintyTable {
  std::string metric;
  std::vector<UncertaintyBin> bins;
  int retained = 0;       // samples kept after clipping the top 3%
  double pearson_r = 0.0; // bin index vs bin mean error, occupied bins only
  double top_quartile_std = 0.0;     // mean in-bin std over the top 5 bins
  double bottom_quartile_std = 0.0;  // and over the bottom 5
};

struct UncertaintyStudy {
  int total_samples = 0;
  UncertaintyTable aleatoric;
  UncertaintyTable epistemic;
  UncertaintyTable entropy;
};

/// Error-vs-uncertainty protocol: regress pixels from poses on a circular
/// flight through the field, record the L2 regression error with the three
/// uncertainty readings, clip the top 3% of each uncertainty, min-max
/// normalize, and bin into 20 equal-width bins.
UncertaintyStudy uncertainty_study(const camera::CameraModel& cam,
                                   const localize::EntropyField& field, int n_images,
                                   int pixels_per_image, Rng& rng);

void write_uncertainty_csv(std::ostream& out, const UncertaintyStudy& study, const CsvMeta& meta);

}  // namespace eviplan::sim
