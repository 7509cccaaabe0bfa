#include "eviplan/localize.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace eviplan::localize {

void PnpRansacConfig::validate() const {
  if (!(inlier_px > 0.0)) throw std::invalid_argument("PnpRansacConfig: inlier_px must be positive");
  if (max_iters < 1) throw std::invalid_argument("PnpRansacConfig: max_iters must be positive");
  if (!(confidence > 0.0) || !(confidence < 1.0))
    throw std::invalid_argument("PnpRansacConfig: confidence must be in (0, 1)");
  if (!(entropy_percentile > 0.0) || !(entropy_percentile <= 100.0))
    throw std::invalid_argument("PnpRansacConfig: entropy_percentile must be in (0, 100]");
}

void SmootherConfig::validate() const {
  if (!(lag > 0.0)) throw std::invalid_argument("SmootherConfig: lag must be positive");
  const double sigmas[] = {pose_sigma_t, pose_sigma_r, process_sigma_p, process_sigma_v,
                           process_sigma_yaw};
  for (double s : sigmas)
    if (!(s > 0.0)) throw std::invalid_argument("SmootherConfig: sigmas must be positive");
  if (!(huber_delta > 0.0)) throw std::invalid_argument("SmootherConfig: huber_delta must be positive");
  if (max_gn_iters < 1) throw std::invalid_argument("SmootherConfig: max_gn_iters must be positive");
}

std::optional<Vec3> ray_exit(const Room& room, const Vec3& origin, const Vec3& dir) {
  double t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-12) continue;
    const double bound = dir[a] > 0.0 ? room.max[a] : room.min[a];
    t_exit = std::min(t_exit, (bound - origin[a]) / dir[a]);
  }
  if (!std::isfinite(t_exit) || t_exit <= 0.0) return std::nullopt;
  return origin + t_exit * dir;
}

std::vector<SceneSample> regress_scene(const camera::CameraModel& cam, const Pose& true_pose,
                                       const EntropyField& field, const Room& room, int n_pixels,
                                       Rng& rng) {
  if (n_pixels < 1) throw std::invalid_argument("regress_scene: n_pixels must be positive");
  const Vec3 origin = camera::camera_position_world(cam, true_pose);
  const Mat3 cam_to_world = camera::camera_rotation_world(cam, true_pose).transpose();

  std::vector<SceneSample> samples;
  samples.reserve(static_cast<size_t>(n_pixels));
  for (int i = 0; i < n_pixels; ++i) {
    const Vec2 px(rng.uniform(0.0, cam.width), rng.uniform(0.0, cam.height));
    const Vec3 dir = cam_to_world * camera::pixel_ray(cam, px);
    const auto exit = ray_exit(room, origin, dir);
    if (!exit) continue;

    const Vec3 hit = *exit;
    const FieldCell& cell = field.cell_at(hit);
    const Vec3 noisy = hit + cell.sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
    const double beta = cell.sigma * cell.sigma * (cell.alpha - 1.0);
    samples.emplace_back(noisy, px,
                         evidential::NIGParams(noisy.x(), cell.lambda, cell.alpha, beta),
                         evidential::NIGParams(noisy.y(), cell.lambda, cell.alpha, beta),
                         evidential::NIGParams(noisy.z(), cell.lambda, cell.alpha, beta));
  }
  return samples;
}

namespace {

// Camera extrinsics: v_camera = rotation * v_world + translation.
struct Extrinsics {
  Mat3 rotation;
  Vec3 translation;
};

Vec2 project_extrinsic(const camera::CameraModel& cam, const Extrinsics& ext, const Vec3& world) {
  return camera::project_pixel(cam, ext.rotation * world + ext.translation);
}

Mat3 rodrigues(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 s = skew(w);
  if (theta < 1e-12) return Mat3::Identity() + s + 0.5 * s * s;
  return Mat3::Identity() + std::sin(theta) / theta * s +
         (1.0 - std::cos(theta)) / (theta * theta) * s * s;
}

Extrinsics solve_dlt(std::span<const Correspondence> corrs, const camera::CameraModel& cam) {
  const auto n = corrs.size();
  if (n < 6) throw std::invalid_argument("pnp_dlt: need at least 6 correspondences");

  // Normalized image coordinates (tangent of the viewing angles).
  std::vector<Vec2> img(n);
  for (size_t i = 0; i < n; ++i)
    img[i] = Vec2((corrs[i].pixel.x() - cam.cx) * cam.pixel_size_x / cam.focal_length,
                  (corrs[i].pixel.y() - cam.cy) * cam.pixel_size_y / cam.focal_length);

  // Hartley normalization of both point sets.
  Vec2 c2 = Vec2::Zero();
  Vec3 c3 = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    c2 += img[i];
    c3 += corrs[i].world_point;
  }
  c2 /= static_cast<double>(n);
  c3 /= static_cast<double>(n);
  double d2 = 0.0, d3 = 0.0;
  for (size_t i = 0; i < n; ++i) {
    d2 += (img[i] - c2).norm();
    d3 += (corrs[i].world_point - c3).norm();
  }
  d2 /= static_cast<double>(n);
  d3 /= static_cast<double>(n);
  if (!(d2 > 1e-12) || !(d3 > 1e-12))
    throw DegenerateConfiguration("pnp_dlt: coincident input points");
  const double s2 = std::sqrt(2.0) / d2;
  const double s3 = std::sqrt(3.0) / d3;

  MatX a = MatX::Zero(2 * static_cast<Eigen::Index>(n), 12);
  for (size_t i = 0; i < n; ++i) {
    const Vec2 x = s2 * (img[i] - c2);
    const Vec3 big = s3 * (corrs[i].world_point - c3);
    const double hx[4] = {big.x(), big.y(), big.z(), 1.0};
    const auto r = 2 * static_cast<Eigen::Index>(i);
    for (int j = 0; j < 4; ++j) {
      a(r, j) = hx[j];
      a(r, 8 + j) = -x.x() * hx[j];
      a(r + 1, 4 + j) = hx[j];
      a(r + 1, 8 + j) = -x.y() * hx[j];
    }
  }

  Eigen::JacobiSVD<MatX> svd(a, Eigen::ComputeThinV);
  const VecX& sv = svd.singularValues();
  // A unique projection needs exactly one vanishing singular value. A second
  // small one signals a degenerate (coplanar or collinear) configuration.
  if (sv[10] <= 1e-8 * sv[0])
    throw DegenerateConfiguration("pnp_dlt: configuration does not determine a unique pose");
  const VecX p = svd.matrixV().col(11);

  Eigen::Matrix<double, 3, 4> pn;
  pn << p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9], p[10], p[11];

  // Undo the normalizing similarity transforms.
  Eigen::Matrix3d t2inv = Eigen::Matrix3d::Identity();
  t2inv(0, 0) = t2inv(1, 1) = 1.0 / s2;
  t2inv(0, 2) = c2.x();
  t2inv(1, 2) = c2.y();
  Eigen::Matrix4d t3 = Eigen::Matrix4d::Identity();
  t3.topLeftCorner<3, 3>() *= s3;
  t3.topRightCorner<3, 1>() = -s3 * c3;
  Eigen::Matrix<double, 3, 4> proj = t2inv * pn * t3;

  Mat3 m = proj.leftCols<3>();
  const double det = m.determinant();
  if (std::abs(det) < 1e-20) throw DegenerateConfiguration("pnp_dlt: singular projection");
  const double kappa = std::cbrt(det);
  m /= kappa;
  const Vec3 t = proj.col(3) / kappa;

  Eigen::JacobiSVD<Mat3> polar(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = polar.matrixU() * polar.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = polar.matrixU() * flip * polar.matrixV().transpose();
  }

  int positive_depth = 0;
  for (const auto& c : corrs)
    if ((r * c.world_point + t).z() > 0.0) ++positive_depth;
  if (2 * positive_depth < static_cast<int>(n))
    throw DegenerateConfiguration("pnp_dlt: recovered pose places points behind the camera");

  return Extrinsics{r, t};
}

Extrinsics refine_gn(Extrinsics ext, std::span<const Correspondence> corrs,
                     const camera::CameraModel& cam) {
  constexpr int kMaxIters = 20;
  const double fx = cam.focal_length / cam.pixel_size_x;
  const double fy = cam.focal_length / cam.pixel_size_y;
  for (int it = 0; it < kMaxIters; ++it) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : corrs) {
      const Vec3 pc = ext.rotation * c.world_point + ext.translation;
      if (pc.z() <= 1e-9) continue;
      const double inv_z = 1.0 / pc.z();
      const Vec2 res(cam.cx + fx * pc.x() * inv_z - c.pixel.x(),
                     cam.cy + fy * pc.y() * inv_z - c.pixel.y());
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << fx * inv_z, 0.0, -fx * pc.x() * inv_z * inv_z, 0.0, fy * inv_z,
          -fy * pc.y() * inv_z * inv_z;
      Eigen::Matrix<double, 2, 6> j;
      j.leftCols<3>() = -dpi * skew(ext.rotation * c.world_point);
      j.rightCols<3>() = dpi;
      h += j.transpose() * j;
      b += j.transpose() * res;
    }
    const Eigen::Matrix<double, 6, 1> delta = h.ldlt().solve(-b);
    if (!delta.allFinite()) break;
    ext.rotation = rodrigues(delta.head<3>()) * ext.rotation;
    ext.translation += delta.tail<3>();
    if (delta.norm() < 1e-13) break;
  }
  return ext;
}

double reproj_rms(const Extrinsics& ext, std::span<const Correspondence> corrs,
                  const camera::CameraModel& cam) {
  double acc = 0.0;
  for (const auto& c : corrs) {
    const Vec3 pc = ext.rotation * c.world_point + ext.translation;
    if (pc.z() <= 0.0) return std::numeric_limits<double>::infinity();
    acc += (project_extrinsic(cam, ext, c.world_point) - c.pixel).squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(corrs.size()));
}

PoseEstimate to_body_pose(const Extrinsics& ext, const camera::CameraModel& cam) {
  PoseEstimate est;
  est.rotation = ext.rotation.transpose() * cam.mount_rotation;
  const Vec3 cam_pos_world = -ext.rotation.transpose() * ext.translation;
  est.translation = cam_pos_world - est.rotation * cam.mount_translation;
  return est;
}

}  // namespace

PoseEstimate pnp_dlt(std::span<const Correspondence> correspondences,
                     const camera::CameraModel& cam) {
  const Extrinsics ext = refine_gn(solve_dlt(correspondences, cam), correspondences, cam);
  PoseEstimate est = to_body_pose(ext, cam);
  est.inlier_count = static_cast<int>(correspondences.size());
  est.reproj_rms_px = reproj_rms(ext, correspondences, cam);
  return est;
}

PoseEstimate pnp_ransac(std::span<const Correspondence> correspondences,
                        const camera::CameraModel& cam, const PnpRansacConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<Correspondence> work(correspondences.begin(), correspondences.end());

  if (cfg.entropy_filter && !work.empty()) {
    std::vector<double> entropies;
    entropies.reserve(work.size());
    for (const auto& c : work) entropies.push_back(c.entropy);
    std::sort(entropies.begin(), entropies.end());
    const auto rank = static_cast<size_t>(
        std::ceil(cfg.entropy_percentile / 100.0 * static_cast<double>(work.size())));
    const double threshold = entropies[std::min(rank, work.size()) - 1];
    std::erase_if(work, [&](const Correspondence& c) { return c.entropy > threshold; });
  }

  if (work.size() < 6)
    throw LocalizationFailure("pnp_ransac: fewer than 6 usable correspondences");

  // Canonical order makes the seeded hypothesis sequence, and therefore the
  // result, independent of the caller's input order.
  std::sort(work.begin(), work.end(), [](const Correspondence& a, const Correspondence& b) {
    const double ka[6] = {a.pixel.x(), a.pixel.y(), a.world_point.x(),
                          a.world_point.y(), a.world_point.z(), a.entropy};
    const double kb[6] = {b.pixel.x(), b.pixel.y(), b.world_point.x(),
                          b.world_point.y(), b.world_point.z(), b.entropy};
    return std::lexicographical_compare(ka, ka + 6, kb, kb + 6);
  });

  const auto n = static_cast<int>(work.size());
  const auto count_inliers = [&](const Extrinsics& ext, std::vector<char>* mask) {
    int count = 0;
    for (int i = 0; i < n; ++i) {
      const Vec3 pc = ext.rotation * work[static_cast<size_t>(i)].world_point + ext.translation;
      bool ok = false;
      if (pc.z() > 0.0) {
        const Vec2 px = camera::project_pixel(cam, pc);
        ok = (px - work[static_cast<size_t>(i)].pixel).norm() <= cfg.inlier_px;
      }
      if (mask) (*mask)[static_cast<size_t>(i)] = ok ? 1 : 0;
      count += ok ? 1 : 0;
    }
    return count;
  };

  int best_count = 0;
  double best_rms = std::numeric_limits<double>::infinity();
  Extrinsics best_ext;
  std::vector<char> best_mask(static_cast<size_t>(n), 0);
  std::vector<char> mask(static_cast<size_t>(n), 0);

  int needed = cfg.max_iters;
  for (int iter = 0; iter < needed; ++iter) {
    const std::vector<int> pick = rng.sample_without_replacement(n, 6);
    std::array<Correspondence, 6> minimal{work[static_cast<size_t>(pick[0])],
                                          work[static_cast<size_t>(pick[1])],
                                          work[static_cast<size_t>(pick[2])],
                                          work[static_cast<size_t>(pick[3])],
                                          work[static_cast<size_t>(pick[4])],
                                          work[static_cast<size_t>(pick[5])]};
    Extrinsics hyp;
    try {
      hyp = refine_gn(solve_dlt(minimal, cam), minimal, cam);
    } catch (const DegenerateConfiguration&) {
      continue;
    }
    const int count = count_inliers(hyp, &mask);
    const double rms = count >= 6 ? reproj_rms(hyp, minimal, cam) : 0.0;
    if (count > best_count || (count == best_count && rms < best_rms)) {
      best_count = count;
      best_rms = rms;
      best_ext = hyp;
      best_mask = mask;

      // Polish the new best on its own consensus and rescore. Minimal samples
      // drawn from a nearly coplanar surface give rough poses that catch only
      // a sliver of the true consensus; one refinement round on that sliver
      // usually pulls in the rest.
      if (best_count > 6) {
        std::vector<Correspondence> consensus;
        consensus.reserve(static_cast<size_t>(best_count));
        for (int i = 0; i < n; ++i)
          if (best_mask[static_cast<size_t>(i)]) consensus.push_back(work[static_cast<size_t>(i)]);
        const Extrinsics polished = refine_gn(best_ext, consensus, cam);
        if (polished.translation.allFinite() && polished.rotation.allFinite()) {
          const int polished_count = count_inliers(polished, &mask);
          if (polished_count > best_count) {
            best_count = polished_count;
            best_rms = reproj_rms(polished, consensus, cam);
            best_ext = polished;
            best_mask = mask;
          }
        }
      }

      // Adaptive stopping: enough trials that a clean minimal sample was
      // drawn with the configured confidence.
      const double w = static_cast<double>(best_count) / n;
      const double p_good = std::pow(w, 6);
      if (p_good > 1e-12) {
        const double trials = std::log(1.0 - cfg.confidence) / std::log1p(-std::min(p_good, 1.0 - 1e-12));
        needed = std::min(needed, std::max(iter + 1, static_cast<int>(std::ceil(trials))));
      }
    }
  }

  if (best_count < 6) throw LocalizationFailure("pnp_ransac: no consensus found");

  std::vector<Correspondence> inliers;
  inliers.reserve(static_cast<size_t>(best_count));
  for (int i = 0; i < n; ++i)
    if (best_mask[static_cast<size_t>(i)]) inliers.push_back(work[static_cast<size_t>(i)]);

  // Refit on the full consensus. The fresh linear solve can wander off when
  // the inliers are nearly coplanar, so the best sampled pose doubles as a
  // fallback refinement start, and whichever result explains more of the set
  // wins. A pose that no longer explains its own consensus is a failure, not
  // an estimate.
  Extrinsics final_ext;
  int final_count = -1;
  const auto consider = [&](const Extrinsics& ext) {
    if (!ext.translation.allFinite() || !ext.rotation.allFinite()) return;
    const int count = count_inliers(ext, nullptr);
    if (count > final_count) {
      final_count = count;
      final_ext = ext;
    }
  };
  try {
    consider(refine_gn(solve_dlt(inliers, cam), inliers, cam));
  } catch (const DegenerateConfiguration&) {
  }
  consider(refine_gn(best_ext, inliers, cam));
  if (final_count < 6)
    throw LocalizationFailure("pnp_ransac: refinement lost the consensus");
  PoseEstimate est = to_body_pose(final_ext, cam);
  est.inlier_count = count_inliers(final_ext, nullptr);
  std::vector<Correspondence> final_inliers;
  for (int i = 0; i < n; ++i) {
    const Vec3 pc = final_ext.rotation * work[static_cast<size_t>(i)].world_point + final_ext.translation;
    if (pc.z() > 0.0 &&
        (camera::project_pixel(cam, pc) - work[static_cast<size_t>(i)].pixel).norm() <= cfg.inlier_px)
      final_inliers.push_back(work[static_cast<size_t>(i)]);
  }
  est.reproj_rms_px = final_inliers.empty()
                          ? std::numeric_limits<double>::infinity()
                          : reproj_rms(final_ext, final_inliers, cam);
  return est;
}

ImuBias draw_imu_bias(const ImuNoise& noise, Rng& rng) {
  ImuBias bias;
  for (int a = 0; a < 3; ++a) {
    bias.accel[a] = rng.normal(0.0, noise.accel_bias_sigma);
    bias.gyro[a] = rng.normal(0.0, noise.gyro_bias_sigma);
  }
  return bias;
}

std::vector<ImuSample> imu_simulate(const spline::BSplineTrajectory& traj, double t_from,
                                    double t_to, double rate_hz, const ImuNoise& noise,
                                    const ImuBias& bias, Rng& rng) {
  if (traj.dimension() != 4) throw std::invalid_argument("imu_simulate: need a 4-row trajectory");
  if (!(rate_hz > 0.0)) throw std::invalid_argument("imu_simulate: rate must be positive");
  if (t_from < traj.t_start() - 1e-9 || t_to > traj.t_end() + 1e-9 || !(t_from < t_to))
    throw std::invalid_argument("imu_simulate: window outside the trajectory domain");

  std::vector<ImuSample> out;
  const auto measure_at = [&](double t) {
    const double tt = std::clamp(t, traj.t_start(), traj.t_end());
    const VecX vel = traj.derivative(tt, 1);
    const VecX acc = traj.derivative(tt, 2);
    const double yaw = traj.value(tt)[3];
    const Mat3 r_t = yaw_rotation(yaw).transpose();
    ImuSample s;
    s.t = t;
    s.accel = r_t * (Vec3(acc[0], acc[1], acc[2]) - kGravityWorld) + bias.accel +
              noise.accel_sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
    s.gyro = Vec3(0.0, 0.0, vel[3]) + bias.gyro +
             noise.gyro_sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
    return s;
  };
  const auto k0 = static_cast<long>(std::ceil(t_from * rate_hz - 1e-9));
  for (long k = k0;; ++k) {
    const double t = static_cast<double>(k) / rate_hz;
    if (t >= t_to - 1e-12) break;
    out.push_back(measure_at(t));
  }
  // Close the window with a sample at its end. Consecutive windows may come
  // from different trajectories, and integrators that average neighbouring
  // samples would otherwise smear half of any measurement step at the seam
  // into the preceding interval. The duplicate timestamp is benign: a
  // zero-length interval contributes nothing and just refreshes the pairing.
  out.push_back(measure_at(t_to));
  return out;
}

NavState propagate(const NavState& state, std::span<const ImuSample> window) {
  NavState s = state;
  const ImuSample* prev = nullptr;
  for (const auto& sample : window) {
    if (prev != nullptr && sample.t < prev->t - 1e-12)
      throw std::invalid_argument("propagate: IMU timestamps must not decrease");
    if (sample.t <= s.t + 1e-12) {
      prev = &sample;
      continue;
    }
    const double dt = sample.t - s.t;
    // Midpoint rule: average neighbouring measurements where available.
    const Vec3 a_body = prev ? Vec3(0.5 * (prev->accel + sample.accel)) : sample.accel;
    const double wz = prev ? 0.5 * (prev->gyro.z() + sample.gyro.z()) : sample.gyro.z();
    const double yaw_mid = s.yaw + 0.5 * wz * dt;
    const Vec3 a_world = yaw_rotation(yaw_mid) * a_body + kGravityWorld;
    s.position += s.velocity * dt + 0.5 * a_world * dt * dt;
    s.velocity += a_world * dt;
    s.yaw += wz * dt;
    s.t = sample.t;
    prev = &sample;
  }
  return s;
}

FixedLagSmoother::FixedLagSmoother(const SmootherConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

void FixedLagSmoother::reset(const NavState& initial) {
  nodes_.clear();
  between_.clear();
  imu_buffer_.clear();
  nodes_.push_back(Node{initial, std::nullopt});
  anchor_ = AnchorPrior{initial, 1e-3, 1e-2, 1e-3};
  propagated_ = initial;
  latest_imu_t_ = initial.t;
  have_state_ = true;
  fail_streak_ = 0;
  diverged_ = false;
}

NavState FixedLagSmoother::latest_state() const {
  if (!have_state_) throw std::logic_error("FixedLagSmoother: no state yet");
  return propagated_;
}

PoseEstimate FixedLagSmoother::add_imu(const ImuSample& sample) {
  if (!imu_buffer_.empty() && sample.t < imu_buffer_.back().t - 1e-12)
    throw std::invalid_argument("FixedLagSmoother: IMU timestamps must not decrease");
  imu_buffer_.push_back(sample);
  if (!have_state_) {
    // No pose information yet; report dead-reckoning from an arbitrary
    // origin once a pose or reset arrives instead.
    propagated_ = NavState{sample.t, Vec3::Zero(), Vec3::Zero(), 0.0};
    latest_imu_t_ = sample.t;
  } else {
    const ImuSample pair[1] = {sample};
    NavState from = propagated_;
    // Feed the previous sample too so the midpoint rule sees both endpoints.
    if (imu_buffer_.size() >= 2) {
      const ImuSample both[2] = {imu_buffer_[imu_buffer_.size() - 2], sample};
      propagated_ = propagate(from, both);
    } else {
      propagated_ = propagate(from, pair);
    }
    latest_imu_t_ = sample.t;
  }
  PoseEstimate est;
  est.rotation = yaw_rotation(propagated_.yaw);
  est.translation = propagated_.position;
  est.t = propagated_.t;
  est.source = PoseSource::kSmoothed;
  return est;
}

FixedLagSmoother::Preintegration FixedLagSmoother::integrate_between(double t0, double t1) const {
  Preintegration pre;
  pre.dt = t1 - t0;
  double dyaw = 0.0;
  Vec3 dv = Vec3::Zero(), dp = Vec3::Zero();
  double tau = t0;
  const ImuSample* prev = nullptr;
  for (const auto& s : imu_buffer_) {
    if (s.t <= t0 + 1e-12) {
      prev = &s;
      continue;
    }
    if (s.t > t1 + 1e-12) break;
    const double dt = s.t - tau;
    const Vec3 a = prev ? Vec3(0.5 * (prev->accel + s.accel)) : s.accel;
    const double wz = prev ? 0.5 * (prev->gyro.z() + s.gyro.z()) : s.gyro.z();
    const Vec3 a_loc = yaw_rotation(dyaw + 0.5 * wz * dt) * a;
    dp += dv * dt + 0.5 * a_loc * dt * dt;
    dv += a_loc * dt;
    dyaw += wz * dt;
    tau = s.t;
    prev = &s;
  }
  if (tau < t1 - 1e-9 && prev != nullptr) {
    // Hold the last measurement over the residual gap to the node time.
    const double dt = t1 - tau;
    const Vec3 a_loc = yaw_rotation(dyaw + 0.5 * prev->gyro.z() * dt) * prev->accel;
    dp += dv * dt + 0.5 * a_loc * dt * dt;
    dv += a_loc * dt;
    dyaw += prev->gyro.z() * dt;
  }
  pre.dyaw = dyaw;
  pre.dv = dv;
  pre.dp = dp;
  return pre;
}

namespace {

double huber_cost(double norm, double delta) {
  if (norm <= delta) return norm * norm;
  return delta * (2.0 * norm - delta);
}

double huber_weight(double norm, double delta) { return norm <= delta ? 1.0 : delta / norm; }

}  // namespace

double FixedLagSmoother::total_cost() const {
  double cost = 0.0;
  if (anchor_) {
    const auto& a = *anchor_;
    const auto& s = nodes_.front().state;
    cost += ((s.position - a.state.position) / a.sigma_p).squaredNorm();
    cost += ((s.velocity - a.state.velocity) / a.sigma_v).squaredNorm();
    const double dy = wrap_angle(s.yaw - a.state.yaw) / a.sigma_yaw;
    cost += dy * dy;
  }
  for (const auto& node : nodes_) {
    if (!node.pose) continue;
    const Vec3 rt = (node.state.position - node.pose->translation) / cfg_.pose_sigma_t;
    const double meas_yaw = std::atan2(node.pose->rotation(1, 0), node.pose->rotation(0, 0));
    const double ry = wrap_angle(node.state.yaw - meas_yaw) / cfg_.pose_sigma_r;
    cost += huber_cost(rt.norm(), cfg_.huber_delta / cfg_.pose_sigma_t);
    cost += huber_cost(std::abs(ry), cfg_.huber_delta / cfg_.pose_sigma_r);
  }
  for (size_t i = 0; i < between_.size(); ++i) {
    const auto& pre = between_[i];
    const auto& s0 = nodes_[i].state;
    const auto& s1 = nodes_[i + 1].state;
    const Mat3 r0 = yaw_rotation(s0.yaw);
    const Vec3 rp = (s1.position - s0.position - s0.velocity * pre.dt -
                     0.5 * kGravityWorld * pre.dt * pre.dt - r0 * pre.dp) /
                    cfg_.process_sigma_p;
    const Vec3 rv =
        (s1.velocity - s0.velocity - kGravityWorld * pre.dt - r0 * pre.dv) / cfg_.process_sigma_v;
    const double ry = wrap_angle(s1.yaw - s0.yaw - pre.dyaw) / cfg_.process_sigma_yaw;
    cost += rp.squaredNorm() + rv.squaredNorm() + ry * ry;
  }
  return cost;
}

void FixedLagSmoother::solve() {
  const auto n = nodes_.size();
  const auto dim = static_cast<Eigen::Index>(7 * n);
  const auto var = [&](size_t node, int offset) { return static_cast<Eigen::Index>(7 * node + offset); };

  double cost = total_cost();
  bool progressed = false;
  for (int iter = 0; iter < cfg_.max_gn_iters; ++iter) {
    MatX h = MatX::Zero(dim, dim);
    VecX b = VecX::Zero(dim);

    const auto add_block = [&](Eigen::Index row_var, Eigen::Index col_var, const MatX& jtj) {
      h.block(row_var, col_var, jtj.rows(), jtj.cols()) += jtj;
    };

    if (anchor_) {
      const auto& a = *anchor_;
      const auto& s = nodes_.front().state;
      for (int k = 0; k < 3; ++k) {
        const double wp = 1.0 / (a.sigma_p * a.sigma_p);
        h(var(0, k), var(0, k)) += wp;
        b[var(0, k)] += wp * (s.position[k] - a.state.position[k]);
        const double wv = 1.0 / (a.sigma_v * a.sigma_v);
        h(var(0, 3 + k), var(0, 3 + k)) += wv;
        b[var(0, 3 + k)] += wv * (s.velocity[k] - a.state.velocity[k]);
      }
      const double wy = 1.0 / (a.sigma_yaw * a.sigma_yaw);
      h(var(0, 6), var(0, 6)) += wy;
      b[var(0, 6)] += wy * wrap_angle(s.yaw - a.state.yaw);
    }

    for (size_t i = 0; i < n; ++i) {
      const auto& node = nodes_[i];
      if (!node.pose) continue;
      const Vec3 rt = (node.state.position - node.pose->translation) / cfg_.pose_sigma_t;
      const double wt = huber_weight(rt.norm(), cfg_.huber_delta / cfg_.pose_sigma_t);
      for (int k = 0; k < 3; ++k) {
        const double scale = wt / (cfg_.pose_sigma_t * cfg_.pose_sigma_t);
        h(var(i, k), var(i, k)) += scale;
        b[var(i, k)] += scale * (node.state.position[k] - node.pose->translation[k]);
      }
      const double meas_yaw = std::atan2(node.pose->rotation(1, 0), node.pose->rotation(0, 0));
      const double ry = wrap_angle(node.state.yaw - meas_yaw) / cfg_.pose_sigma_r;
      const double wy = huber_weight(std::abs(ry), cfg_.huber_delta / cfg_.pose_sigma_r);
      const double scale = wy / (cfg_.pose_sigma_r * cfg_.pose_sigma_r);
      h(var(i, 6), var(i, 6)) += scale;
      b[var(i, 6)] += scale * wrap_angle(node.state.yaw - meas_yaw);
    }

    for (size_t i = 0; i < between_.size(); ++i) {
      const auto& pre = between_[i];
      const auto& s0 = nodes_[i].state;
      const auto& s1 = nodes_[i + 1].state;
      const Mat3 r0 = yaw_rotation(s0.yaw);
      const Mat3 dr0 = yaw_rotation_deriv(s0.yaw);

      // Stack the 7 whitened residuals and their Jacobian w.r.t.
      // (p0 v0 y0 p1 v1 y1) = 14 columns, then accumulate JtJ and Jtr.
      Eigen::Matrix<double, 7, 1> r;
      Eigen::Matrix<double, 7, 14> j = Eigen::Matrix<double, 7, 14>::Zero();
      const double sp = cfg_.process_sigma_p, sv = cfg_.process_sigma_v,
                   sy = cfg_.process_sigma_yaw;

      const Vec3 rp = s1.position - s0.position - s0.velocity * pre.dt -
                      0.5 * kGravityWorld * pre.dt * pre.dt - r0 * pre.dp;
      const Vec3 rv = s1.velocity - s0.velocity - kGravityWorld * pre.dt - r0 * pre.dv;
      const double ry = wrap_angle(s1.yaw - s0.yaw - pre.dyaw);

      r.segment<3>(0) = rp / sp;
      r.segment<3>(3) = rv / sv;
      r[6] = ry / sy;

      j.block<3, 3>(0, 0) = -Mat3::Identity() / sp;            // d rp / d p0
      j.block<3, 3>(0, 3) = -pre.dt * Mat3::Identity() / sp;   // d rp / d v0
      j.block<3, 1>(0, 6) = -(dr0 * pre.dp) / sp;              // d rp / d y0
      j.block<3, 3>(0, 7) = Mat3::Identity() / sp;             // d rp / d p1
      j.block<3, 3>(3, 3) = -Mat3::Identity() / sv;            // d rv / d v0
      j.block<3, 1>(3, 6) = -(dr0 * pre.dv) / sv;              // d rv / d y0
      j.block<3, 3>(3, 10) = Mat3::Identity() / sv;            // d rv / d v1
      j(6, 6) = -1.0 / sy;
      j(6, 13) = 1.0 / sy;

      const Eigen::Matrix<double, 14, 14> jtj = j.transpose() * j;
      const Eigen::Matrix<double, 14, 1> jtr = j.transpose() * r;
      const Eigen::Index base0 = var(i, 0), base1 = var(i + 1, 0);
      add_block(base0, base0, jtj.topLeftCorner<7, 7>());
      add_block(base0, base1, jtj.topRightCorner<7, 7>());
      add_block(base1, base0, jtj.bottomLeftCorner<7, 7>());
      add_block(base1, base1, jtj.bottomRightCorner<7, 7>());
      b.segment<7>(base0) += jtr.head<7>();
      b.segment<7>(base1) += jtr.tail<7>();
    }

    const VecX delta = (h + 1e-12 * MatX::Identity(dim, dim)).ldlt().solve(-b);
    if (!delta.allFinite()) break;
    if (delta.lpNorm<Eigen::Infinity>() < 1e-12) {
      progressed = true;
      break;
    }

    // Damped acceptance: halve the step until the cost stops increasing.
    const std::deque<Node> saved = nodes_;
    double step = 1.0;
    bool accepted = false;
    for (int attempt = 0; attempt < 6; ++attempt) {
      for (size_t i = 0; i < n; ++i) {
        nodes_[i].state.position = saved[i].state.position + step * delta.segment<3>(var(i, 0));
        nodes_[i].state.velocity = saved[i].state.velocity + step * delta.segment<3>(var(i, 3));
        nodes_[i].state.yaw = saved[i].state.yaw + step * delta[var(i, 6)];
      }
      const double new_cost = total_cost();
      if (new_cost <= cost + 1e-12) {
        cost = new_cost;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      nodes_ = saved;
      break;
    }
    progressed = true;
  }

  if (progressed) {
    fail_streak_ = 0;
  } else if (++fail_streak_ >= 5) {
    diverged_ = true;
  }
}

void FixedLagSmoother::marginalize() {
  const double newest = nodes_.back().state.t;
  while (nodes_.size() > 1 && nodes_.front().state.t < newest - cfg_.lag) {
    nodes_.pop_front();
    if (!between_.empty()) between_.pop_front();
    // Crude marginalization: pin the new oldest state at its current
    // estimate with process-level confidence.
    anchor_ = AnchorPrior{nodes_.front().state, cfg_.process_sigma_p, cfg_.process_sigma_v,
                          cfg_.process_sigma_yaw};
  }
}

PoseEstimate FixedLagSmoother::add_pose(const PoseEstimate& pose) {
  if (!nodes_.empty() && pose.t < nodes_.back().state.t - 1e-12)
    throw std::invalid_argument("FixedLagSmoother: pose timestamps must not decrease");

  if (nodes_.empty()) {
    NavState init{pose.t, pose.translation, Vec3::Zero(),
                  std::atan2(pose.rotation(1, 0), pose.rotation(0, 0))};
    nodes_.push_back(Node{init, pose});
    // Weak velocity pin keeps the first window solvable before motion
    // information arrives.
    anchor_ = AnchorPrior{init, 10.0, 5.0, 10.0};
    have_state_ = true;
  } else {
    const auto& s0 = nodes_.back().state;
    const Preintegration pre = integrate_between(s0.t, pose.t);
    const Mat3 r0 = yaw_rotation(s0.yaw);
    NavState init;
    init.t = pose.t;
    init.position =
        s0.position + s0.velocity * pre.dt + 0.5 * kGravityWorld * pre.dt * pre.dt + r0 * pre.dp;
    init.velocity = s0.velocity + kGravityWorld * pre.dt + r0 * pre.dv;
    init.yaw = s0.yaw + pre.dyaw;
    nodes_.push_back(Node{init, pose});
    between_.push_back(pre);
  }

  // Samples at or before the new node only matter for its preintegration.
  while (!imu_buffer_.empty() && imu_buffer_.front().t <= pose.t - 1e-12) imu_buffer_.pop_front();

  solve();
  marginalize();
  refresh_propagated();

  PoseEstimate est;
  est.rotation = yaw_rotation(propagated_.yaw);
  est.translation = propagated_.position;
  est.t = propagated_.t;
  est.source = PoseSource::kSmoothed;
  return est;
}

void FixedLagSmoother::refresh_propagated() {
  std::vector<ImuSample> tail(imu_buffer_.begin(), imu_buffer_.end());
  propagated_ = propagate(nodes_.back().state, tail);
  latest_imu_t_ = std::max(latest_imu_t_, propagated_.t);
  have_state_ = true;
}

}  // namespace eviplan::localize
