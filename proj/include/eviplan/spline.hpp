#pragma once

#include <span>
#include <vector>

#include "eviplan/core.hpp"

namespace eviplan::spline {

/// Single Cox-de Boor basis function N_{i,degree}(t) on the given knots.
/// The last non-degenerate span is treated as closed so the domain endpoint
/// evaluates by its left-hand limit.
double basis(int i, int degree, double t, std::span<const double> knots);

struct TrajectorySample {
  double t;
  Vec3 position;
  double yaw;
  Vec4 velocity;
  Vec4 acceleration;
  Vec4 jerk;
};

/// Cubic B-spline curve on a clamped uniform knot vector. The curve dimension
/// is set by the control point rows; the planner uses four rows (x, y, z,
/// yaw, with yaw stored unwrapped). Immutable after construction.
class BSplineTrajectory {
 public:
  static constexpr int kDegree = 3;

  /// control_points is dim x n with n >= 4; dt is the uniform span length.
  BSplineTrajectory(MatX control_points, double t_start, double dt);

  int dimension() const { return static_cast<int>(control_points_.rows()); }
  int num_control_points() const { return static_cast<int>(control_points_.cols()); }
  double t_start() const { return t_start_; }
  double t_end() const { return t_start_ + (num_control_points() - kDegree) * dt_; }
  double dt() const { return dt_; }
  const MatX& control_points() const { return control_points_; }
  const std::vector<double>& knots() const { return knots_; }

  /// Copy of this trajectory with replaced control points (same layout).
  BSplineTrajectory with_control_points(MatX control_points) const;

  /// Sub-curve over a subset of coordinate rows, sharing the knot vector.
  BSplineTrajectory select_components(std::span<const int> rows) const;

  /// Curve value at t; throws when t is outside [t_start, t_end].
  VecX value(double t) const;

  /// Derivative of the given order (1..3) at t, via the derivative spline
  /// with differenced control points.
  VecX derivative(double t, int order) const;

  /// Weights b_j such that the order-th derivative at t equals
  /// sum_j b_j * q_j. Order 0 gives the basis values themselves.
  VecX control_weights(double t, int order) const;

  /// Convenience bundle for 4-row trajectories.
  TrajectorySample sample(double t) const;

 private:
  void check_domain(double t) const;

  MatX control_points_;
  double t_start_;
  double dt_;
  std::vector<double> knots_;
};

}  // namespace eviplan::spline
