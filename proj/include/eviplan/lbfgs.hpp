#pragma once

#include <functional>
#include <vector>

#include "eviplan/core.hpp"

namespace eviplan::planner {

struct LbfgsConfig {
  int memory = 10;
  int max_iters = 100;
  double grad_tol = 1e-6;    // stop when ||g||_2 drops below this
  double cost_tol = 1e-9;    // stop on relative cost decrease below this
  int max_line_search = 50;
  double armijo_c = 1e-4;
  double backtrack = 0.5;

  void validate() const;
};

enum class LbfgsStatus {
  kGradientConverged,
  kCostConverged,
  kMaxIterations,
  kLineSearchFailed,
};

struct LbfgsResult {
  VecX x;
  double value = 0.0;
  int iterations = 0;
  LbfgsStatus status = LbfgsStatus::kMaxIterations;
  std::vector<double> history;  // accepted objective values, non-increasing
};

/// Objective callback: returns f(x) and fills grad (same size as x).
using Objective = std::function<double(const VecX&, VecX&)>;

/// Limited-memory BFGS with two-loop recursion and Armijo backtracking.
/// Throws std::invalid_argument when the objective is non-finite at x0.
LbfgsResult lbfgs_minimize(const Objective& objective, VecX x0, const LbfgsConfig& cfg);

}  // namespace eviplan::planner
