#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace eviplan::evidential {

/// Normal-Inverse-Gamma hyperparameters of an evidential regression head.
/// gamma is the predicted mean, lambda the virtual observation count backing
/// the mean, and (alpha, beta) the Inverse-Gamma evidence on the variance.
struct NIGParams {
  double gamma;
  double lambda;
  double alpha;
  double beta;

  NIGParams(double gamma, double lambda, double alpha, double beta);

  double prediction() const { return gamma; }
  /// Expected data noise variance E[sigma^2] = beta / (alpha - 1).
  double aleatoric() const { return beta / (alpha - 1.0); }
  /// Variance of the mean estimate Var[mu] = beta / (lambda (alpha - 1)).
  double epistemic() const { return beta / (lambda * (alpha - 1.0)); }
};

/// Location-scale Student-t; scale_sq is the squared scale, dof the degrees
/// of freedom.
struct StudentT {
  double location;
  double scale_sq;
  double dof;

  StudentT(double location, double scale_sq, double dof);

  double log_pdf(double v) const;
  double pdf(double v) const;
};

struct EvidentialLossConfig {
  double rho = 0.0;  // weight of the evidence regularizer

  void validate() const;
};

struct Moments {
  double prediction;
  double aleatoric;
  double epistemic;
};

/// Marginal predictive distribution of an observation under the NIG prior:
/// St(gamma, beta (1 + lambda) / (lambda alpha), 2 alpha).
StudentT predictive(const NIGParams& m);

Moments moments(const NIGParams& m);

/// Negative log marginal likelihood of observation v. Identical (to rounding)
/// with -log predictive(m).pdf(v).
double nll_loss(double v, const NIGParams& m);

/// Evidence regularizer (2 lambda + alpha) |v - gamma|.
double reg_loss(double v, const NIGParams& m);

/// Mean of nll + rho * reg over a batch. Throws on an empty batch.
double total_loss(std::span<const std::pair<double, NIGParams>> samples,
                  const EvidentialLossConfig& cfg);

/// Differential entropy of the predictive Student-t, in nats.
double predictive_entropy(const NIGParams& m);

struct LossGradient {
  double d_gamma;
  double d_lambda;
  double d_alpha;
  double d_beta;
};

/// Analytic gradient of nll_loss + rho * reg_loss in the four NIG parameters.
/// The regularizer subgradient at v == gamma is taken as zero.
LossGradient loss_gradients(double v, const NIGParams& m, const EvidentialLossConfig& cfg);

struct ToyFitOptions {
  int iters = 400;
  double step = 0.5;
  uint64_t seed = 0;
  int n_bins = 8;
};

struct BinFit {
  double bin_lo;
  double bin_hi;
  int count;
  NIGParams params;
  double entropy;
  std::vector<double> loss_history;  // accepted (non-increasing) losses
};

/// Fits independent NIG heads to equal-width bins of a 1-D dataset by
/// gradient descent on total_loss with backtracking step control. Positivity
/// constraints are kept by a softplus reparameterization. Bins without
/// samples keep their initialization.
std::vector<BinFit> fit_toy_dataset(std::span<const double> xs, std::span<const double> vs,
                                    const EvidentialLossConfig& cfg, const ToyFitOptions& opts);

}  // namespace eviplan::evidential
