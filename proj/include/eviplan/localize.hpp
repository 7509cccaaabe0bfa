#pragma once

#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "eviplan/camera.hpp"
#include "eviplan/core.hpp"
#include "eviplan/rng.hpp"
#include "eviplan/scene.hpp"
#include "eviplan/spline.hpp"

namespace eviplan::localize {

struct LocalizationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateConfiguration : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PoseSource { kPnp, kSmoothed, kGroundTruth };

/// Body pose estimate: rotation maps body to world, translation is the body
/// origin in world coordinates, t the capture timestamp.
struct PoseEstimate {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double t = 0.0;
  PoseSource source = PoseSource::kPnp;
  int inlier_count = 0;
  double reproj_rms_px = 0.0;
};

struct Correspondence {
  Vec3 world_point;
  Vec2 pixel;
  double entropy = 0.0;
};

struct ImuSample {
  double t;
  Vec3 accel;  // specific force in the body frame
  Vec3 gyro;   // body angular rate
};

struct ImuNoise {
  double accel_sigma = 0.02;       // m/s^2, per-axis white noise
  double gyro_sigma = 0.002;       // rad/s
  double accel_bias_sigma = 0.005; // per-run constant bias prior
  double gyro_bias_sigma = 0.0005;
};

struct ImuBias {
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

/// Point where a ray leaving origin (inside the room) crosses a room face,
/// or nullopt when the origin lies outside or the direction degenerates.
std::optional<Vec3> ray_exit(const Room& room, const Vec3& origin, const Vec3& dir);

/// Casts a ray through n_pixels uniformly drawn pixels, intersects each with
/// the room surfaces, and reports the hit corrupted by the field's noise
/// scale with matching per-axis NIG parameters. The true body pose supplies
/// the camera geometry.
std::vector<SceneSample> regress_scene(const camera::CameraModel& cam, const Pose& true_pose,
                                       const EntropyField& field, const Room& room, int n_pixels,
                                       Rng& rng);

/// Direct linear transform over >= 6 correspondences on normalized image
/// coordinates, followed by projection onto SO(3) and at most 20
/// Gauss-Newton refinement steps on pixel reprojection error. Throws
/// DegenerateConfiguration when the linear system does not pin down a unique
/// pose.
PoseEstimate pnp_dlt(std::span<const Correspondence> correspondences,
                     const camera::CameraModel& cam);

struct PnpRansacConfig {
  double inlier_px = 2.0;
  int max_iters = 500;
  double confidence = 0.999;
  bool entropy_filter = false;  // drop the high-entropy half before sampling
  double entropy_percentile = 50.0;

  void validate() const;
};

/// RANSAC over minimal 6-point DLT hypotheses with adaptive iteration count,
/// refined on the final consensus set. Input order does not matter: the
/// correspondences are canonically sorted before seeded sampling, so a
/// permuted input with the same rng yields the same pose and inlier set.
PoseEstimate pnp_ransac(std::span<const Correspondence> correspondences,
                        const camera::CameraModel& cam, const PnpRansacConfig& cfg, Rng& rng);

ImuBias draw_imu_bias(const ImuNoise& noise, Rng& rng);

/// Samples ideal strapdown measurements of a 4-row trajectory on the global
/// rate grid inside [t_from, t_to), then applies bias and white noise.
/// Attitude is yaw-only; accelerometers measure specific force, so hovering
/// yields +9.81 on body z.
std::vector<ImuSample> imu_simulate(const spline::BSplineTrajectory& traj, double t_from,
                                    double t_to, double rate_hz, const ImuNoise& noise,
                                    const ImuBias& bias, Rng& rng);

struct NavState {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double yaw = 0.0;
};

/// Midpoint strapdown integration of an IMU window from the given state.
/// Samples at or before state.t are skipped; timestamps must not decrease.
NavState propagate(const NavState& state, std::span<const ImuSample> window);

struct SmootherConfig {
  double lag = 2.0;             // seconds of history kept in the window
  double pose_sigma_t = 0.05;   // m, PnP translation prior
  double pose_sigma_r = 0.02;   // rad, PnP yaw prior
  double huber_delta = 0.1;     // m equivalent; divide by sigma for the whitened threshold
  double process_sigma_p = 0.02;
  double process_sigma_v = 0.05;
  double process_sigma_yaw = 0.01;
  int max_gn_iters = 15;

  void validate() const;
};

/// Sliding-window pose smoother: one state (position, velocity, yaw) per
/// accepted PnP timestamp, preintegrated IMU between consecutive states,
/// Huber-robustified pose priors, and a prior pinning the oldest state after
/// marginalization. IMU samples arriving between pose updates extend the
/// latest solution by strapdown propagation, so the output rate follows the
/// input rate.
class FixedLagSmoother {
 public:
  explicit FixedLagSmoother(const SmootherConfig& cfg);

  /// Anchors the window at a known initial state (e.g. takeoff).
  void reset(const NavState& initial);

  /// Feeds an IMU sample; returns the propagated estimate at its timestamp.
  PoseEstimate add_imu(const ImuSample& sample);

  /// Feeds a PnP pose (timestamps may lag already-buffered IMU), solves the
  /// window, and returns the smoothed estimate at the newest IMU time.
  PoseEstimate add_pose(const PoseEstimate& pose);

  /// Set when Gauss-Newton kept increasing the cost for five consecutive
  /// damped steps; the affected run counts as failed.
  bool diverged() const { return diverged_; }

  NavState latest_state() const;

 private:
  struct Node {
    NavState state;
    std::optional<PoseEstimate> pose;  // PnP prior attached to this node
  };

  struct Preintegration {
    double dt = 0.0;
    double dyaw = 0.0;
    Vec3 dv = Vec3::Zero();  // frame of the interval start
    Vec3 dp = Vec3::Zero();
  };

  struct AnchorPrior {
    NavState state;
    double sigma_p;
    double sigma_v;
    double sigma_yaw;
  };

  Preintegration integrate_between(double t0, double t1) const;
  double total_cost() const;
  void solve();
  void marginalize();
  void refresh_propagated();

  SmootherConfig cfg_;
  std::deque<Node> nodes_;
  std::deque<Preintegration> between_;  // between_[i] links node i to i+1
  std::deque<ImuSample> imu_buffer_;    // samples newer than the latest node
  std::optional<AnchorPrior> anchor_;   // prior pinning the oldest node
  int fail_streak_ = 0;
  bool diverged_ = false;
  NavState propagated_;
  bool have_state_ = false;
  double latest_imu_t_ = 0.0;
};

}  // namespace eviplan::localize
