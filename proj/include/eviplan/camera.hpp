#pragma once

#include <array>

#include "eviplan/core.hpp"

namespace eviplan::camera {

/// Pinhole camera with a physical pixel pitch and a rigid mount on the body.
/// mount_rotation maps body coordinates to camera coordinates (camera z is
/// the optical axis, x right, y down); mount_translation is the camera
/// origin expressed in the body frame.
struct CameraModel {
  double width;
  double height;
  double cx;
  double cy;
  double pixel_size_x;
  double pixel_size_y;
  double focal_length;
  double smoothing;  // tanh transition scale of the soft frustum indicator
  Mat3 mount_rotation;
  Vec3 mount_translation;

  CameraModel(double width, double height, double cx, double cy, double pixel_size_x,
              double pixel_size_y, double focal_length, double smoothing,
              const Mat3& mount_rotation = default_mount_rotation(),
              const Vec3& mount_translation = Vec3::Zero());

  /// Forward-looking mount for a z-up body frame: body x becomes the optical
  /// axis, image x points along -body y, image y along -body z.
  static Mat3 default_mount_rotation();

  const std::array<Vec3, 4>& side_normals() const { return side_normals_; }
  const std::array<Vec3, 4>& corners() const { return corners_; }

 private:
  std::array<Vec3, 4> corners_;       // TR, LR, TL, LL displacement vectors
  std::array<Vec3, 4> side_normals_;  // right, top, left, bottom (inward)
};

/// Displacement vectors from the optical center to the four image corners at
/// focal-plane depth, in camera coordinates: top-right, lower-right,
/// top-left, lower-left.
std::array<Vec3, 4> corner_displacements(const CameraModel& cam);

/// Inward-pointing normals of the four frustum side planes, ordered right,
/// top, left, bottom. Not normalized.
std::array<Vec3, 4> frustum_normals(const CameraModel& cam);

Mat3 camera_rotation_world(const CameraModel& cam, const Pose& body);  // world -> camera
Vec3 camera_position_world(const CameraModel& cam, const Pose& body);
Vec3 world_to_camera(const CameraModel& cam, const Pose& body, const Vec3& p_world);
Vec3 camera_to_world(const CameraModel& cam, const Pose& body, const Vec3& p_camera);

/// The five sigmoidal visibility factors of a point in camera coordinates:
/// four side planes plus the depth test against the focal plane. Each factor
/// lies strictly inside (0, 1).
std::array<double, 5> soft_indicator(const CameraModel& cam, const Vec3& v_camera);

/// Product of the five soft factors; a differentiable stand-in for frustum
/// membership.
double frustum_score(const CameraModel& cam, const Vec3& v_camera);

/// Hard membership test: strictly inside all four side planes and strictly
/// beyond focal-plane depth.
bool exact_inside(const CameraModel& cam, const Vec3& v_camera);

Vec3 d_score_d_point(const CameraModel& cam, const Vec3& v_camera);

struct PoseScoreGradient {
  double score;
  Vec3 d_position;
  double d_yaw;
};

/// Frustum score of a world point seen from a yaw-parameterized body pose,
/// with its gradient in body position and yaw.
PoseScoreGradient score_pose_gradient(const CameraModel& cam, const Vec3& body_position,
                                      double body_yaw, const Vec3& point_world);

/// Pinhole projection to pixel coordinates. Throws when depth is not positive.
Vec2 project_pixel(const CameraModel& cam, const Vec3& v_camera);

/// Unit ray through a pixel, in camera coordinates.
Vec3 pixel_ray(const CameraModel& cam, const Vec2& pixel);

}  // namespace eviplan::camera
