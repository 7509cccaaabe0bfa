#include "eviplan/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

namespace eviplan::planner {

void LbfgsConfig::validate() const {
  if (memory < 1) throw std::invalid_argument("LbfgsConfig: memory must be positive");
  if (max_iters < 1) throw std::invalid_argument("LbfgsConfig: max_iters must be positive");
  if (!(grad_tol > 0.0) || !(cost_tol >= 0.0))
    throw std::invalid_argument("LbfgsConfig: tolerances must be positive");
  if (max_line_search < 1 || !(armijo_c > 0.0) || !(backtrack > 0.0) || !(backtrack < 1.0))
    throw std::invalid_argument("LbfgsConfig: bad line search parameters");
}

LbfgsResult lbfgs_minimize(const Objective& objective, VecX x0, const LbfgsConfig& cfg) {
  cfg.validate();
  const auto n = x0.size();
  if (n == 0) throw std::invalid_argument("lbfgs_minimize: empty variable vector");

  VecX x = std::move(x0);
  VecX grad(n);
  double f = objective(x, grad);
  if (!std::isfinite(f) || !grad.allFinite())
    throw std::invalid_argument("lbfgs_minimize: objective not finite at the initial point");

  LbfgsResult result;
  result.history.push_back(f);

  struct Pair {
    VecX s, y;
    double rho;
  };
  std::deque<Pair> pairs;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    if (grad.norm() < cfg.grad_tol) {
      result.status = LbfgsStatus::kGradientConverged;
      break;
    }

    // Two-loop recursion for the search direction.
    VecX q = grad;
    std::vector<double> alpha(pairs.size());
    for (size_t i = pairs.size(); i-- > 0;) {
      alpha[i] = pairs[i].rho * pairs[i].s.dot(q);
      q -= alpha[i] * pairs[i].y;
    }
    if (!pairs.empty()) {
      const Pair& last = pairs.back();
      q *= last.s.dot(last.y) / last.y.squaredNorm();
    }
    for (size_t i = 0; i < pairs.size(); ++i) {
      const double beta = pairs[i].rho * pairs[i].y.dot(q);
      q += (alpha[i] - beta) * pairs[i].s;
    }
    VecX dir = -q;

    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {  // fall back to steepest descent
      dir = -grad;
      slope = grad.dot(dir);
    }

    double step = 1.0;
    double f_new = f;
    VecX x_new(n), grad_new(n);
    bool accepted = false;
    for (int ls = 0; ls < cfg.max_line_search; ++ls) {
      x_new = x + step * dir;
      f_new = objective(x_new, grad_new);
      if (std::isfinite(f_new) && f_new <= f + cfg.armijo_c * step * slope) {
        accepted = true;
        break;
      }
      step *= cfg.backtrack;
    }
    if (!accepted) {
      result.status = LbfgsStatus::kLineSearchFailed;
      break;
    }

    const VecX s = x_new - x;
    const VecX y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      pairs.push_back(Pair{s, y, 1.0 / sy});
      if (pairs.size() > static_cast<size_t>(cfg.memory)) pairs.pop_front();
    }

    const double decrease = f - f_new;
    x = std::move(x_new);
    grad = std::move(grad_new);
    f = f_new;
    result.history.push_back(f);
    ++result.iterations;

    if (decrease <= cfg.cost_tol * std::max(1.0, std::abs(f))) {
      result.status = LbfgsStatus::kCostConverged;
      break;
    }
  }

  result.x = std::move(x);
  result.value = f;
  return result;
}

}  // namespace eviplan::planner
