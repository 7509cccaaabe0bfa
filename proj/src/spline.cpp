#include "eviplan/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eviplan::spline {

namespace {

// Degree-0 basis with the closed right end of the last non-degenerate span,
// so that clamped curves interpolate their final control point.
bool in_span(int i, double t, std::span<const double> knots) {
  const double lo = knots[static_cast<size_t>(i)];
  const double hi = knots[static_cast<size_t>(i) + 1];
  if (lo >= hi) return false;
  if (t >= lo && t < hi) return true;
  const double domain_end = knots[knots.size() - 1];
  return t == domain_end && hi == domain_end;
}

}  // namespace

double basis(int i, int degree, double t, std::span<const double> knots) {
  if (degree < 0) throw std::invalid_argument("basis: negative degree");
  if (i < 0 || static_cast<size_t>(i + degree + 1) >= knots.size())
    throw std::invalid_argument("basis: index out of range for knot vector");
  if (degree == 0) return in_span(i, t, knots) ? 1.0 : 0.0;

  const auto k = [&](int j) { return knots[static_cast<size_t>(j)]; };
  double acc = 0.0;
  const double den_left = k(i + degree) - k(i);
  if (den_left > 0.0) acc += (t - k(i)) / den_left * basis(i, degree - 1, t, knots);
  const double den_right = k(i + degree + 1) - k(i + 1);
  if (den_right > 0.0)
    acc += (k(i + degree + 1) - t) / den_right * basis(i + 1, degree - 1, t, knots);
  return acc;
}

BSplineTrajectory::BSplineTrajectory(MatX control_points, double t_start, double dt)
    : control_points_(std::move(control_points)), t_start_(t_start), dt_(dt) {
  const int n = num_control_points();
  if (n < kDegree + 1)
    throw std::invalid_argument("BSplineTrajectory: need at least 4 control points");
  if (control_points_.rows() < 1)
    throw std::invalid_argument("BSplineTrajectory: control points need at least one row");
  if (!(dt_ > 0.0)) throw std::invalid_argument("BSplineTrajectory: dt must be positive");
  if (!control_points_.allFinite() || !std::isfinite(t_start_))
    throw std::invalid_argument("BSplineTrajectory: non-finite input");

  // Clamped uniform knots: degree+1 copies at each end, uniform interior.
  knots_.resize(static_cast<size_t>(n + kDegree + 1));
  const double end = t_start_ + (n - kDegree) * dt_;
  for (int j = 0; j < n + kDegree + 1; ++j) {
    const int spans = std::clamp(j - kDegree, 0, n - kDegree);
    knots_[static_cast<size_t>(j)] = (spans == n - kDegree) ? end : t_start_ + spans * dt_;
  }
}

BSplineTrajectory BSplineTrajectory::with_control_points(MatX control_points) const {
  if (control_points.rows() != control_points_.rows() ||
      control_points.cols() != control_points_.cols())
    throw std::invalid_argument("with_control_points: layout mismatch");
  return BSplineTrajectory(std::move(control_points), t_start_, dt_);
}

BSplineTrajectory BSplineTrajectory::select_components(std::span<const int> rows) const {
  MatX sub(static_cast<Eigen::Index>(rows.size()), control_points_.cols());
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= dimension())
      throw std::invalid_argument("select_components: row out of range");
    sub.row(static_cast<Eigen::Index>(r)) = control_points_.row(rows[r]);
  }
  return BSplineTrajectory(std::move(sub), t_start_, dt_);
}

void BSplineTrajectory::check_domain(double t) const {
  const double slack = 1e-9 * std::max(1.0, t_end() - t_start_);
  if (t < t_start_ - slack || t > t_end() + slack)
    throw std::invalid_argument("BSplineTrajectory: t outside curve domain");
}

VecX BSplineTrajectory::value(double t) const {
  check_domain(t);
  t = std::clamp(t, t_start_, t_end());
  VecX acc = VecX::Zero(dimension());
  for (int i = 0; i < num_control_points(); ++i) {
    const double b = basis(i, kDegree, t, knots_);
    if (b != 0.0) acc += b * control_points_.col(i);
  }
  return acc;
}

VecX BSplineTrajectory::derivative(double t, int order) const {
  if (order < 1 || order > kDegree)
    throw std::invalid_argument("derivative: order must be in 1..3");
  check_domain(t);
  t = std::clamp(t, t_start_, t_end());

  // Differenced control points over successively shortened knot vectors.
  MatX pts = control_points_;
  std::vector<double> knots = knots_;
  int degree = kDegree;
  for (int d = 0; d < order; ++d) {
    const auto n = static_cast<int>(pts.cols());
    MatX diff(pts.rows(), n - 1);
    for (int i = 0; i + 1 < n; ++i) {
      const double den = knots[static_cast<size_t>(i + degree + 1)] - knots[static_cast<size_t>(i + 1)];
      diff.col(i) = degree * (pts.col(i + 1) - pts.col(i)) / den;
    }
    pts = std::move(diff);
    knots.erase(knots.begin());
    knots.pop_back();
    --degree;
  }

  VecX acc = VecX::Zero(dimension());
  for (int i = 0; i < pts.cols(); ++i) {
    const double b = basis(i, degree, t, knots);
    if (b != 0.0) acc += b * pts.col(i);
  }
  return acc;
}

VecX BSplineTrajectory::control_weights(double t, int order) const {
  // The curve is linear in its control points, so the weight of q_j is the
  // evaluation with a unit impulse at index j. Exactly consistent with
  // value()/derivative() by construction.
  const int n = num_control_points();
  VecX weights(n);
  MatX unit = MatX::Zero(1, n);
  for (int j = 0; j < n; ++j) {
    unit(0, j) = 1.0;
    const BSplineTrajectory impulse(unit, t_start_, dt_);
    weights[j] = (order == 0) ? impulse.value(t)[0] : impulse.derivative(t, order)[0];
    unit(0, j) = 0.0;
  }
  return weights;
}

TrajectorySample BSplineTrajectory::sample(double t) const {
  if (dimension() != 4)
    throw std::invalid_argument("sample: requires a 4-row (x, y, z, yaw) trajectory");
  TrajectorySample s;
  s.t = t;
  const VecX v = value(t);
  s.position = v.head<3>();
  s.yaw = v[3];
  s.velocity = derivative(t, 1);
  s.acceleration = derivative(t, 2);
  s.jerk = derivative(t, 3);
  return s;
}

}  // namespace eviplan::spline
