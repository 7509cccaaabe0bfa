#pragma once

namespace eviplan {

/// Natural log of the gamma function, Lanczos approximation (g = 7, 9 terms).
/// Accurate to better than 1e-12 relative error for positive arguments.
double log_gamma(double x);

/// Digamma function psi(x) = d/dx log Gamma(x) for x > 0, computed with the
/// ascending recurrence followed by the asymptotic Bernoulli series.
double digamma(double x);

}  // namespace eviplan
