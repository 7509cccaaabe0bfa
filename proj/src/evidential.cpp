#include "eviplan/evidential.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "eviplan/rng.hpp"
#include "eviplan/specfun.hpp"

namespace eviplan::evidential {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

NIGParams::NIGParams(double gamma_in, double lambda_in, double alpha_in, double beta_in)
    : gamma(gamma_in), lambda(lambda_in), alpha(alpha_in), beta(beta_in) {
  if (!std::isfinite(gamma)) throw std::invalid_argument("NIGParams: gamma must be finite");
  if (!(lambda > 0.0)) throw std::invalid_argument("NIGParams: lambda must be positive");
  if (!(alpha > 1.0)) throw std::invalid_argument("NIGParams: alpha must exceed 1");
  if (!(beta > 0.0)) throw std::invalid_argument("NIGParams: beta must be positive");
}

StudentT::StudentT(double location_in, double scale_sq_in, double dof_in)
    : location(location_in), scale_sq(scale_sq_in), dof(dof_in) {
  if (!std::isfinite(location)) throw std::invalid_argument("StudentT: location must be finite");
  if (!(scale_sq > 0.0)) throw std::invalid_argument("StudentT: scale_sq must be positive");
  if (!(dof > 0.0)) throw std::invalid_argument("StudentT: dof must be positive");
}

double StudentT::log_pdf(double v) const {
  const double half = 0.5 * (dof + 1.0);
  const double u2 = (v - location) * (v - location) / (dof * scale_sq);
  return log_gamma(half) - log_gamma(0.5 * dof) - 0.5 * std::log(kPi * dof * scale_sq) -
         half * std::log1p(u2);
}

double StudentT::pdf(double v) const { return std::exp(log_pdf(v)); }

void EvidentialLossConfig::validate() const {
  if (!(rho >= 0.0)) throw std::invalid_argument("EvidentialLossConfig: rho must be non-negative");
}

StudentT predictive(const NIGParams& m) {
  return StudentT(m.gamma, m.beta * (1.0 + m.lambda) / (m.lambda * m.alpha), 2.0 * m.alpha);
}

Moments moments(const NIGParams& m) {
  return Moments{m.prediction(), m.aleatoric(), m.epistemic()};
}

double nll_loss(double v, const NIGParams& m) {
  if (!std::isfinite(v)) throw std::invalid_argument("nll_loss: observation must be finite");
  const double d = v - m.gamma;
  const double twob = 2.0 * m.beta * (1.0 + m.lambda);
  return log_gamma(m.alpha) - log_gamma(m.alpha + 0.5) + 0.5 * std::log(kPi / m.lambda) -
         m.alpha * std::log(twob) + (m.alpha + 0.5) * std::log(m.lambda * d * d + twob);
}

double reg_loss(double v, const NIGParams& m) {
  if (!std::isfinite(v)) throw std::invalid_argument("reg_loss: observation must be finite");
  return (2.0 * m.lambda + m.alpha) * std::abs(v - m.gamma);
}

double total_loss(std::span<const std::pair<double, NIGParams>> samples,
                  const EvidentialLossConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("total_loss: empty sample batch");
  double acc = 0.0;
  for (const auto& [v, m] : samples) acc += nll_loss(v, m) + cfg.rho * reg_loss(v, m);
  return acc / static_cast<double>(samples.size());
}

double predictive_entropy(const NIGParams& m) {
  const double a = m.alpha;
  return (a + 0.5) * (digamma(a + 0.5) - digamma(a)) +
         0.5 * std::log(2.0 * kPi * m.beta * (1.0 + m.lambda) / m.lambda) + log_gamma(a) -
         log_gamma(a + 0.5);
}

LossGradient loss_gradients(double v, const NIGParams& m, const EvidentialLossConfig& cfg) {
  cfg.validate();
  if (!std::isfinite(v)) throw std::invalid_argument("loss_gradients: observation must be finite");
  const double d = v - m.gamma;
  const double twob = 2.0 * m.beta * (1.0 + m.lambda);
  const double q = m.lambda * d * d + twob;
  const double a_half = m.alpha + 0.5;

  LossGradient g;
  g.d_gamma = -2.0 * m.lambda * d * a_half / q;
  g.d_lambda = -0.5 / m.lambda - m.alpha / (1.0 + m.lambda) + a_half * (d * d + 2.0 * m.beta) / q;
  g.d_alpha = digamma(m.alpha) - digamma(a_half) - std::log(twob) + std::log(q);
  g.d_beta = -m.alpha / m.beta + 2.0 * a_half * (1.0 + m.lambda) / q;

  const double sgn = (d > 0.0) ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  g.d_gamma += cfg.rho * (2.0 * m.lambda + m.alpha) * (-sgn);
  g.d_lambda += cfg.rho * 2.0 * std::abs(d);
  g.d_alpha += cfg.rho * std::abs(d);
  return g;
}

namespace {

double softplus(double u) { return u > 30.0 ? u : std::log1p(std::exp(u)); }
double softplus_inv(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

constexpr double kFloor = 1e-8;

NIGParams raw_to_params(const double u[4]) {
  return NIGParams(u[0], softplus(u[1]) + kFloor, 1.0 + kFloor + softplus(u[2]),
                   softplus(u[3]) + kFloor);
}

double bin_loss(const double u[4], std::span<const double> vs, const EvidentialLossConfig& cfg) {
  const NIGParams m = raw_to_params(u);
  double acc = 0.0;
  for (double v : vs) acc += nll_loss(v, m) + cfg.rho * reg_loss(v, m);
  return acc / static_cast<double>(vs.size());
}

void bin_gradient(const double u[4], std::span<const double> vs, const EvidentialLossConfig& cfg,
                  double out[4]) {
  const NIGParams m = raw_to_params(u);
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  for (double v : vs) {
    const LossGradient g = loss_gradients(v, m, cfg);
    acc[0] += g.d_gamma;
    acc[1] += g.d_lambda;
    acc[2] += g.d_alpha;
    acc[3] += g.d_beta;
  }
  const double n = static_cast<double>(vs.size());
  out[0] = acc[0] / n;
  out[1] = acc[1] / n * sigmoid(u[1]);
  out[2] = acc[2] / n * sigmoid(u[2]);
  out[3] = acc[3] / n * sigmoid(u[3]);
}

}  // namespace

std::vector<BinFit> fit_toy_dataset(std::span<const double> xs, std::span<const double> vs,
                                    const EvidentialLossConfig& cfg, const ToyFitOptions& opts) {
  cfg.validate();
  if (xs.size() != vs.size()) throw std::invalid_argument("fit_toy_dataset: xs/vs size mismatch");
  if (xs.empty()) throw std::invalid_argument("fit_toy_dataset: empty dataset");
  if (opts.n_bins < 1) throw std::invalid_argument("fit_toy_dataset: n_bins must be positive");
  if (!(opts.step > 0.0)) throw std::invalid_argument("fit_toy_dataset: step must be positive");

  const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  const double lo = *lo_it;
  const double width = std::max(*hi_it - lo, 1e-12) / opts.n_bins;

  std::vector<std::vector<double>> buckets(static_cast<size_t>(opts.n_bins));
  for (size_t i = 0; i < xs.size(); ++i) {
    auto b = static_cast<int>((xs[i] - lo) / width);
    b = std::clamp(b, 0, opts.n_bins - 1);
    buckets[static_cast<size_t>(b)].push_back(vs[i]);
  }

  Rng rng(opts.seed);
  std::vector<BinFit> fits;
  fits.reserve(static_cast<size_t>(opts.n_bins));
  for (int b = 0; b < opts.n_bins; ++b) {
    // High-epistemic initialization: lambda small, so the mean is weakly
    // backed until data pulls it in.
    double u[4] = {rng.normal(0.0, 1e-3), softplus_inv(0.1), softplus_inv(1.0), softplus_inv(1.0)};
    const auto& data = buckets[static_cast<size_t>(b)];
    std::vector<double> history;
    if (!data.empty()) {
      double step = opts.step;
      double loss = bin_loss(u, data, cfg);
      history.push_back(loss);
      for (int it = 0; it < opts.iters; ++it) {
        double g[4];
        bin_gradient(u, data, cfg, g);
        double cand[4];
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
          for (int k = 0; k < 4; ++k) cand[k] = u[k] - step * g[k];
          const double cand_loss = bin_loss(cand, data, cfg);
          if (std::isfinite(cand_loss) && cand_loss <= loss) {
            for (int k = 0; k < 4; ++k) u[k] = cand[k];
            loss = cand_loss;
            history.push_back(loss);
            step = std::min(step * 1.5, opts.step);
            accepted = true;
            break;
          }
          step *= 0.5;
        }
        if (!accepted) break;
      }
    }
    const NIGParams params = raw_to_params(u);
    fits.push_back(BinFit{lo + b * width, lo + (b + 1) * width,
                          static_cast<int>(data.size()), params, predictive_entropy(params),
                          std::move(history)});
  }
  return fits;
}

}  // namespace eviplan::evidential
