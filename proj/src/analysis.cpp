#include "fftkf/analysis.hpp"

#include <cmath>
#include <stdexcept>

#include "fftkf/privacy.hpp"

namespace fftkf::analysis {

using spectral::ParamVector;

double rho_star(double lambda, double rho, std::size_t d) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw std::invalid_argument("rho_star: lambda must lie in (0, 1)");
  }
  if (!(rho > 0.0 && rho < 1.0)) {
    throw std::invalid_argument("rho_star: rho must lie in (0, 1)");
  }
  if (d < 2) throw std::invalid_argument("rho_star: d must be >= 2");
  // same k0 as build_mask, so the analytic value matches the built filter
  const auto k0 = static_cast<std::size_t>(
      std::floor(lambda * static_cast<double>(d)));
  const double keep = 1.0 - rho;
  return (static_cast<double>(k0) +
          keep * keep * static_cast<double>(d - k0)) /
         static_cast<double>(d);
}

double filter_bias_norm(const SpectralMask& mask, Rng& rng, int max_iters,
                        double tol) {
  const std::size_t d = mask.size();
  ParamVector v(d);
  for (auto& x : v) x = rng.gaussian();
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;

  double estimate = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    ParamVector u = spectral::apply_filter(v, mask);
    for (std::size_t i = 0; i < d; ++i) u[i] -= v[i];
    double un = 0.0;
    for (double x : u) un += x * x;
    un = std::sqrt(un);
    if (un < 1e-14) return 0.0;  // v is (numerically) a fixed point: A = I
    if (std::abs(un - estimate) < tol) return un;
    estimate = un;
    for (std::size_t i = 0; i < d; ++i) v[i] = u[i] / un;
  }
  return estimate;
}

Lemma1Report verify_lemma1(const SpectralMask& mask, double sigma_w,
                           std::size_t n_samples, Rng& rng) {
  if (n_samples < 1) {
    throw std::invalid_argument("verify_lemma1: n_samples must be >= 1");
  }
  const std::size_t d = mask.size();

  double phi_sq = 0.0;
  for (double p : mask.phi) phi_sq += p * p;

  Lemma1Report rep;
  rep.d = d;
  rep.lambda = mask.lambda;
  rep.rho = mask.rho;
  rep.sigma_w = sigma_w;
  rep.rho_star_analytic = phi_sq / static_cast<double>(d);
  rep.trace_analytic = sigma_w * sigma_w * phi_sq;
  rep.n_samples = n_samples;

  double acc = 0.0;
  ParamVector w(d);
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (auto& x : w) x = sigma_w * rng.gaussian();
    const ParamVector shaped = privacy::shape_noise(w, mask);
    double sq = 0.0;
    for (double x : shaped) sq += x * x;
    acc += sq;
  }
  rep.trace_mc = acc / static_cast<double>(n_samples);
  rep.bias_norm_mc = filter_bias_norm(mask, rng);
  return rep;
}

Lemma1Report verify_lemma1(std::size_t d, double lambda, double rho,
                           double sigma_w, std::size_t n_samples, Rng& rng) {
  const SpectralMask mask = spectral::build_mask(d, lambda, rho, 0.0);
  Lemma1Report rep = verify_lemma1(mask, sigma_w, n_samples, rng);
  rep.lambda = lambda;
  rep.rho = rho;
  return rep;
}

Theorem2Constants theorem2_constants(double eta, double kappa, double gamma,
                                     double L, double beta) {
  if (!(eta > 0.0)) {
    throw std::invalid_argument("theorem2_constants: eta must be > 0");
  }
  if (!(kappa > 0.0 && kappa <= 1.0)) {
    throw std::invalid_argument("theorem2_constants: kappa must lie in (0, 1]");
  }
  if (!(gamma > 0.0)) {
    throw std::invalid_argument("theorem2_constants: gamma must be > 0");
  }
  if (!(L > 0.0)) {
    throw std::invalid_argument("theorem2_constants: L must be > 0");
  }
  if (!(beta >= 0.0)) {
    throw std::invalid_argument("theorem2_constants: beta must be >= 0");
  }

  Theorem2Constants c;
  c.eta = eta;
  c.kappa = kappa;
  c.gamma = gamma;
  c.L = L;
  c.beta = beta;
  const double curv = beta + eta * eta * L;
  const double one_minus_k = 1.0 - kappa;
  const double gamma_term = 2.0 + std::abs(1.0 + gamma);
  c.C1 = (1.0 + kappa - 2.0 * eta * L) -
         4.0 * curv * one_minus_k * one_minus_k * L * L * eta * gamma_term;
  c.valid = c.C1 > 0.0;
  if (c.valid) {
    c.noise_coefficient = 2.0 * curv * kappa * kappa / (c.C1 * eta);
  }
  return c;
}

Theorem2Constants theorem2_constants(double eta, double kappa, double gamma,
                                     double L, double beta, double lambda,
                                     double rho, std::size_t d,
                                     double sigma_w) {
  Theorem2Constants c = theorem2_constants(eta, kappa, gamma, L, beta);
  c.bias_coefficient = rho * rho;
  c.dp_term_multiplier = (2.0 + std::abs(1.0 + gamma)) *
                         rho_star(lambda, rho, d) * static_cast<double>(d) *
                         sigma_w * sigma_w;
  return c;
}

NoiseReductionReport noise_reduction_report(double lambda, double rho) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw std::invalid_argument(
        "noise_reduction_report: lambda must lie in (0, 1)");
  }
  if (!(rho > 0.0 && rho < 1.0)) {
    throw std::invalid_argument(
        "noise_reduction_report: rho must lie in (0, 1)");
  }
  const double keep = 1.0 - rho;
  const double retained = lambda + keep * keep * (1.0 - lambda);
  NoiseReductionReport rep;
  rep.reduction_pct = (1.0 - retained) * 100.0;
  rep.bias_inflation_pct = rho * rho * 100.0;
  return rep;
}

}  // namespace fftkf::analysis
