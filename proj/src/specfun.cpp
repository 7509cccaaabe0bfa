#include "eviplan/specfun.hpp"

#include <cmath>
#include <stdexcept>

namespace eviplan {

namespace {

constexpr double kLanczosG = 7.0;
constexpr double kLanczos[9] = {
    0.99999999999980993,      676.5203681218851,     -1259.1392167224028,
    771.32342877765313,       -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,     9.9843695780195716e-6, 1.5056327351493116e-7,
};
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2*pi)/2
constexpr double kPi = 3.14159265358979323846;

double lanczos_positive(double x) {
  // Valid for x >= 0.5.
  const double z = x - 1.0;
  double acc = kLanczos[0];
  for (int i = 1; i < 9; ++i) acc += kLanczos[i] / (z + i);
  const double t = z + kLanczosG + 0.5;
  return kHalfLog2Pi + (z + 0.5) * std::log(t) - t + std::log(acc);
}

}  // namespace

double log_gamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("log_gamma: argument must be positive");
  if (x < 0.5) {
    // Reflection keeps the Lanczos series on its accurate branch.
    return std::log(kPi / std::sin(kPi * x)) - lanczos_positive(1.0 - x);
  }
  return lanczos_positive(x);
}

double digamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("digamma: argument must be positive");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Asymptotic series: log x - 1/(2x) - sum B_{2n} / (2n x^{2n}).
  const double series = inv2 * (1.0 / 12.0 +
                        inv2 * (-1.0 / 120.0 +
                        inv2 * (1.0 / 252.0 +
                        inv2 * (-1.0 / 240.0 +
                        inv2 * (1.0 / 132.0 +
                        inv2 * (-691.0 / 32760.0 +
                        inv2 * (1.0 / 12.0)))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

}  // namespace eviplan
