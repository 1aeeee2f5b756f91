#pragma once

#include <cstddef>

#include "fftkf/rng.hpp"
#include "fftkf/spectral.hpp"

namespace fftkf::analysis {

using spectral::SpectralMask;

/// Variance retention of a step mask: (k0 + (1-rho)^2 (d - k0)) / d with
/// k0 = floor(lambda * d). Lies in ((1-rho)^2, 1].
double rho_star(double lambda, double rho, std::size_t d);

/// Monte-Carlo check of the shaped-noise covariance statistics: trace of
/// Cov[shaped w] against rho_star * d * sigma_w^2, and the bias operator
/// norm ||A - I||_2 estimated by power iteration through the filter.
struct Lemma1Report {
  std::size_t d = 0;
  double lambda = 0.0;
  double rho = 0.0;
  double sigma_w = 0.0;
  double rho_star_analytic = 0.0;  // sum phi_k^2 / d of the mask used
  double trace_mc = 0.0;
  double trace_analytic = 0.0;     // rho_star_analytic * d * sigma_w^2
  double bias_norm_mc = 0.0;
  std::size_t n_samples = 0;
};

/// Step-mask form: builds the mask from (lambda, rho) and samples n Gaussian
/// vectors. d must be a power of two; n_samples >= 1.
Lemma1Report verify_lemma1(std::size_t d, double lambda, double rho,
                           double sigma_w, std::size_t n_samples, Rng& rng);

/// General form for an arbitrary mask (identity included).
Lemma1Report verify_lemma1(const SpectralMask& mask, double sigma_w,
                           std::size_t n_samples, Rng& rng);

/// Largest singular value of (filter - identity), by power iteration through
/// apply_filter. max_iters at tolerance tol; exact spectral value for step
/// masks is rho.
double filter_bias_norm(const SpectralMask& mask, Rng& rng,
                        int max_iters = 30, double tol = 1e-8);

/// Convergence-constant report for the descent bound: C1 and the
/// coefficients scaling the noise, bias, and privacy terms. The spectral
/// quantities (bias_coefficient, dp_term_multiplier) are filled only by the
/// overload that receives the mask parameters.
struct Theorem2Constants {
  double eta = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;
  double L = 0.0;
  double beta = 0.0;
  double C1 = 0.0;
  bool valid = false;              // C1 > 0; coefficients below need it
  double noise_coefficient = 0.0;  // 2 (beta + eta^2 L) kappa^2 / (C1 eta)
  double bias_coefficient = 0.0;   // rho^2
  double dp_term_multiplier = 0.0; // (2 + |1 + gamma|) rho_star d sigma_w^2
};

Theorem2Constants theorem2_constants(double eta, double kappa, double gamma,
                                     double L, double beta);

Theorem2Constants theorem2_constants(double eta, double kappa, double gamma,
                                     double L, double beta, double lambda,
                                     double rho, std::size_t d,
                                     double sigma_w);

/// Headline percentages for a (lambda, rho) choice in the large-d limit:
/// noise variance reduced by (1 - lambda - (1-rho)^2 (1-lambda)) * 100 and
/// the optimization bias term inflated by rho^2 * 100.
struct NoiseReductionReport {
  double reduction_pct = 0.0;
  double bias_inflation_pct = 0.0;
};

NoiseReductionReport noise_reduction_report(double lambda, double rho);

}  // namespace fftkf::analysis
