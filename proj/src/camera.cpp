#include "eviplan/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace eviplan::camera {

namespace {

// tanh arguments are clamped here; beyond this the factor is saturated and
// the analytic derivative is zero.
constexpr double kTanhClamp = 40.0;

// Keeps each factor strictly inside (0, 1) after rounding.
constexpr double kTanhInterior = 1.0 - 1e-15;

double soft_step(double arg, double s) {
  const double u = std::clamp(arg / s, -kTanhClamp, kTanhClamp);
  const double t = std::clamp(std::tanh(u), -kTanhInterior, kTanhInterior);
  return 0.5 * (1.0 + t);
}

// d/d(arg) of soft_step.
double soft_step_deriv(double arg, double s) {
  const double u = arg / s;
  if (u <= -kTanhClamp || u >= kTanhClamp) return 0.0;
  const double t = std::tanh(u);
  return 0.5 * (1.0 - t * t) / s;
}

}  // namespace

Mat3 CameraModel::default_mount_rotation() {
  Mat3 m;
  m << 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0;
  return m;
}

CameraModel::CameraModel(double width_in, double height_in, double cx_in, double cy_in,
                         double pixel_size_x_in, double pixel_size_y_in, double focal_length_in,
                         double smoothing_in, const Mat3& mount_rotation_in,
                         const Vec3& mount_translation_in)
    : width(width_in),
      height(height_in),
      cx(cx_in),
      cy(cy_in),
      pixel_size_x(pixel_size_x_in),
      pixel_size_y(pixel_size_y_in),
      focal_length(focal_length_in),
      smoothing(smoothing_in),
      mount_rotation(mount_rotation_in),
      mount_translation(mount_translation_in) {
  if (!(width > 0.0) || !(height > 0.0))
    throw std::invalid_argument("CameraModel: image dimensions must be positive");
  if (!(pixel_size_x > 0.0) || !(pixel_size_y > 0.0))
    throw std::invalid_argument("CameraModel: pixel sizes must be positive");
  if (!(focal_length > 0.0))
    throw std::invalid_argument("CameraModel: focal length must be positive");
  if (!(smoothing > 0.0)) throw std::invalid_argument("CameraModel: smoothing must be positive");
  if (!(cx > 0.0) || !(cx < width) || !(cy > 0.0) || !(cy < height))
    throw std::invalid_argument("CameraModel: principal point must lie inside the image");
  if (!is_rotation(mount_rotation))
    throw std::invalid_argument("CameraModel: mount rotation is not a rotation matrix");

  const double f = focal_length;
  corners_[0] = Vec3((width - cx) * pixel_size_x, -cy * pixel_size_y, f);           // TR
  corners_[1] = Vec3((width - cx) * pixel_size_x, (height - cy) * pixel_size_y, f); // LR
  corners_[2] = Vec3(-cx * pixel_size_x, -cy * pixel_size_y, f);                    // TL
  corners_[3] = Vec3(-cx * pixel_size_x, (height - cy) * pixel_size_y, f);          // LL

  side_normals_[0] = corners_[0].cross(corners_[1]);  // right
  side_normals_[1] = corners_[2].cross(corners_[0]);  // top
  side_normals_[2] = corners_[3].cross(corners_[2]);  // left
  side_normals_[3] = corners_[1].cross(corners_[3]);  // bottom

  // Orientation audit: every side normal must point toward the interior,
  // probed at the centroid of the unit-depth corner rays and the axis.
  Vec3 centroid = Vec3(0.0, 0.0, 1.0);
  for (const auto& c : corners_) centroid += c / f;
  centroid /= 5.0;
  for (const auto& n : side_normals_) {
    if (!(n.dot(centroid) > 0.0))
      throw std::domain_error("CameraModel: frustum normal does not point inward");
  }
}

std::array<Vec3, 4> corner_displacements(const CameraModel& cam) { return cam.corners(); }

std::array<Vec3, 4> frustum_normals(const CameraModel& cam) { return cam.side_normals(); }

Mat3 camera_rotation_world(const CameraModel& cam, const Pose& body) {
  return cam.mount_rotation * body.rotation.transpose();
}

Vec3 camera_position_world(const CameraModel& cam, const Pose& body) {
  return body.position + body.rotation * cam.mount_translation;
}

Vec3 world_to_camera(const CameraModel& cam, const Pose& body, const Vec3& p_world) {
  return camera_rotation_world(cam, body) * (p_world - camera_position_world(cam, body));
}

Vec3 camera_to_world(const CameraModel& cam, const Pose& body, const Vec3& p_camera) {
  return camera_rotation_world(cam, body).transpose() * p_camera +
         camera_position_world(cam, body);
}

std::array<double, 5> soft_indicator(const CameraModel& cam, const Vec3& v_camera) {
  std::array<double, 5> o;
  const auto& normals = cam.side_normals();
  for (int k = 0; k < 4; ++k) o[static_cast<size_t>(k)] = soft_step(normals[static_cast<size_t>(k)].dot(v_camera), cam.smoothing);
  o[4] = soft_step(v_camera.z() - cam.focal_length, cam.smoothing);
  return o;
}

double frustum_score(const CameraModel& cam, const Vec3& v_camera) {
  const auto o = soft_indicator(cam, v_camera);
  return o[0] * o[1] * o[2] * o[3] * o[4];
}

bool exact_inside(const CameraModel& cam, const Vec3& v_camera) {
  for (const auto& n : cam.side_normals())
    if (!(n.dot(v_camera) > 0.0)) return false;
  return v_camera.z() - cam.focal_length > 0.0;
}

Vec3 d_score_d_point(const CameraModel& cam, const Vec3& v_camera) {
  const auto o = soft_indicator(cam, v_camera);
  // Product rule: dF = sum_k (prod_{j != k} o_j) * do_k.
  Vec3 grad = Vec3::Zero();
  const auto& normals = cam.side_normals();
  for (int k = 0; k < 5; ++k) {
    double rest = 1.0;
    for (int j = 0; j < 5; ++j)
      if (j != k) rest *= o[static_cast<size_t>(j)];
    const double arg = (k < 4) ? normals[static_cast<size_t>(k)].dot(v_camera)
                               : v_camera.z() - cam.focal_length;
    const Vec3 dir = (k < 4) ? normals[static_cast<size_t>(k)] : Vec3(0.0, 0.0, 1.0);
    grad += rest * soft_step_deriv(arg, cam.smoothing) * dir;
  }
  return grad;
}

PoseScoreGradient score_pose_gradient(const CameraModel& cam, const Vec3& body_position,
                                      double body_yaw, const Vec3& point_world) {
  const Pose body = Pose::from_yaw(body_position, body_yaw);
  const Vec3 v_cam = world_to_camera(cam, body, point_world);

  PoseScoreGradient out;
  out.score = frustum_score(cam, v_cam);
  const Vec3 g = d_score_d_point(cam, v_cam);

  // v_cam = M (Rz(yaw)^T (point - position) - mount_translation).
  const Mat3 m_rzt = cam.mount_rotation * yaw_rotation(body_yaw).transpose();
  out.d_position = -m_rzt.transpose() * g;
  const Vec3 dv_dyaw =
      cam.mount_rotation * yaw_rotation_deriv(body_yaw).transpose() * (point_world - body_position);
  out.d_yaw = g.dot(dv_dyaw);
  return out;
}

Vec2 project_pixel(const CameraModel& cam, const Vec3& v_camera) {
  if (!(v_camera.z() > 0.0)) throw std::invalid_argument("project_pixel: non-positive depth");
  const double inv_z = 1.0 / v_camera.z();
  return Vec2(cam.cx + cam.focal_length / cam.pixel_size_x * v_camera.x() * inv_z,
              cam.cy + cam.focal_length / cam.pixel_size_y * v_camera.y() * inv_z);
}

Vec3 pixel_ray(const CameraModel& cam, const Vec2& pixel) {
  const Vec3 ray((pixel.x() - cam.cx) * cam.pixel_size_x, (pixel.y() - cam.cy) * cam.pixel_size_y,
                 cam.focal_length);
  return ray.normalized();
}

}  // namespace eviplan::camera
