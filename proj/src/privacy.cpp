#include "fftkf/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fftkf::privacy {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

// log(e^a - e^b) for a >= b; tiny numeric overshoots clamp to -inf.
double log_sub(double a, double b) {
  if (b == kNegInf) return a;
  if (b >= a) return kNegInf;
  return a + std::log1p(-std::exp(b - a));
}

// log(erfc(x)), stable for large positive x via the asymptotic expansion.
double log_erfc(double x) {
  if (x < 25.0) {
    return std::log(std::erfc(x));
  }
  const double x2 = x * x;
  return -x2 - std::log(x) - 0.5 * std::log(M_PI) +
         std::log1p(-0.5 / x2 + 0.75 / (x2 * x2));
}

double log_binom(std::uint64_t n, std::uint64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// log E_{mu0}[(mu/mu0)^a] for integer a: binomial expansion over the
// subsampling mixture, summed in log space.
double log_a_int(double q, double z, std::uint64_t a) {
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double acc = kNegInf;
  for (std::uint64_t k = 0; k <= a; ++k) {
    double term = log_binom(a, k);
    if (k > 0) term += static_cast<double>(k) * log_q;
    if (k < a) term += static_cast<double>(a - k) * log_1mq;
    term += (static_cast<double>(k) * static_cast<double>(k) -
             static_cast<double>(k)) /
            (2.0 * z * z);
    acc = log_add(acc, term);
  }
  return acc;
}

// Fractional orders: two-sided series around the crossover point
// z0 = z^2 log(1/q - 1) + 1/2 of the mixture densities.
double log_a_frac(double q, double z, double a) {
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double z0 = z * z * std::log(1.0 / q - 1.0) + 0.5;
  const double sqrt2z = std::sqrt(2.0) * z;

  double log_a0 = kNegInf;
  double log_a1 = kNegInf;
  double log_coef = 0.0;  // log |binom(a, i)|, updated incrementally
  int sign = 1;

  for (int i = 0; i < 2000; ++i) {
    const double di = static_cast<double>(i);
    const double dj = a - di;

    const double log_t0 = log_coef + di * log_q + dj * log_1mq;
    const double log_t1 = log_coef + dj * log_q + di * log_1mq;
    const double log_e0 =
        std::log(0.5) + log_erfc((di - z0) / sqrt2z);
    const double log_e1 =
        std::log(0.5) + log_erfc((z0 - dj) / sqrt2z);
    const double log_s0 = log_t0 + (di * di - di) / (2.0 * z * z) + log_e0;
    const double log_s1 = log_t1 + (dj * dj - dj) / (2.0 * z * z) + log_e1;

    if (sign > 0) {
      log_a0 = log_add(log_a0, log_s0);
      log_a1 = log_add(log_a1, log_s1);
    } else {
      log_a0 = log_sub(log_a0, log_s0);
      log_a1 = log_sub(log_a1, log_s1);
    }

    if (di > a && std::max(log_s0, log_s1) < -30.0 &&
        std::max(log_s0, log_s1) + 37.0 < std::max(log_a0, log_a1)) {
      break;
    }

    // binom(a, i+1) = binom(a, i) * (a - i) / (i + 1)
    const double factor = a - di;
    log_coef += std::log(std::abs(factor)) - std::log(di + 1.0);
    if (factor < 0.0) sign = -sign;
  }
  return log_add(log_a0, log_a1);
}

}  // namespace

void PrivacyParams::validate() const {
  if (!(clip_C > 0.0)) {
    throw std::invalid_argument("privacy: clip_C must be > 0");
  }
  if (!(sigma_w >= 0.0) || !(sigma_fd >= 0.0)) {
    throw std::invalid_argument("privacy: sigma values must be >= 0");
  }
  if (!(sampling_rate_q > 0.0 && sampling_rate_q <= 1.0)) {
    throw std::invalid_argument("privacy: sampling rate must lie in (0, 1]");
  }
  if (!(target_delta > 0.0 && target_delta < 1.0)) {
    throw std::invalid_argument("privacy: delta must lie in (0, 1)");
  }
  if (target_epsilon < 0.0) {
    throw std::invalid_argument("privacy: target epsilon must be >= 0");
  }
}

ParamVector clip(const ParamVector& v, double C) {
  if (!(C > 0.0)) throw std::invalid_argument("clip: C must be > 0");
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  const double norm = std::sqrt(norm_sq);
  if (norm <= C) return v;
  const double scale = C / norm;
  ParamVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * scale;
  return out;
}

ParamVector privatize_gradient(const std::vector<ParamVector>& per_sample_grads,
                               double C, double sigma_w, Rng& rng) {
  if (per_sample_grads.empty()) {
    throw std::invalid_argument("privatize_gradient: empty batch");
  }
  const std::size_t d = per_sample_grads.front().size();
  ParamVector sum(d, 0.0);
  for (const ParamVector& g : per_sample_grads) {
    if (g.size() != d) {
      throw std::invalid_argument(
          "privatize_gradient: inconsistent gradient lengths");
    }
    ParamVector c = clip(g, C);
    for (std::size_t i = 0; i < d; ++i) sum[i] += c[i];
  }
  const double inv_b = 1.0 / static_cast<double>(per_sample_grads.size());
  for (std::size_t i = 0; i < d; ++i) {
    sum[i] = sum[i] * inv_b + sigma_w * rng.gaussian();
  }
  return sum;
}

ParamVector shape_noise(const ParamVector& w, const SpectralMask& m) {
  return spectral::apply_filter(w, m);
}

std::vector<double> default_rdp_orders() {
  std::vector<double> orders = {1.25, 1.5};
  for (int a = 2; a <= 64; ++a) orders.push_back(static_cast<double>(a));
  return orders;
}

AccountantState make_accountant(int releases_per_step) {
  if (releases_per_step < 1) {
    throw std::invalid_argument("accountant: releases_per_step must be >= 1");
  }
  AccountantState s;
  s.releases_per_step = releases_per_step;
  s.rdp_orders = default_rdp_orders();
  s.accumulated_rdp.assign(s.rdp_orders.size(), 0.0);
  return s;
}

double subsampled_gaussian_rdp(double q, double z, double a) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::invalid_argument("rdp: sampling rate must lie in [0, 1]");
  }
  if (!(a > 1.0)) throw std::invalid_argument("rdp: order must be > 1");
  if (q == 0.0) return 0.0;
  if (z <= 0.0) return kInf;
  if (q == 1.0) return a / (2.0 * z * z);

  const double rounded = std::nearbyint(a);
  double log_a;
  if (std::abs(a - rounded) < 1e-12 && rounded >= 2.0) {
    log_a = log_a_int(q, z, static_cast<std::uint64_t>(rounded));
  } else {
    log_a = log_a_frac(q, z, a);
  }
  return log_a / (a - 1.0);
}

AccountantState account_step(AccountantState state, double q, double z) {
  for (std::size_t i = 0; i < state.rdp_orders.size(); ++i) {
    state.accumulated_rdp[i] +=
        static_cast<double>(state.releases_per_step) *
        subsampled_gaussian_rdp(q, z, state.rdp_orders[i]);
  }
  ++state.steps_taken;
  return state;
}

double epsilon_at_delta(const AccountantState& state, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("epsilon_at_delta: delta must lie in (0, 1)");
  }
  if (state.steps_taken == 0) return 0.0;
  const double log_inv_delta = std::log(1.0 / delta);
  double best = kInf;
  for (std::size_t i = 0; i < state.rdp_orders.size(); ++i) {
    best = std::min(best, state.accumulated_rdp[i] +
                              log_inv_delta / (state.rdp_orders[i] - 1.0));
  }
  return best;
}

double calibrate_sigma(double target_epsilon, double target_delta, double q,
                       std::uint64_t T, int releases_per_step) {
  if (!(target_epsilon > 0.0)) {
    throw std::invalid_argument("calibrate_sigma: target epsilon must be > 0");
  }
  if (!(target_delta > 0.0 && target_delta < 1.0)) {
    throw std::invalid_argument("calibrate_sigma: delta must lie in (0, 1)");
  }
  if (!(q > 0.0 && q <= 1.0)) {
    throw std::invalid_argument("calibrate_sigma: q must lie in (0, 1]");
  }
  if (T == 0) {
    throw std::invalid_argument("calibrate_sigma: T must be >= 1");
  }

  const auto eps_for = [&](double z) {
    AccountantState s = make_accountant(releases_per_step);
    AccountantState one = account_step(s, q, z);
    // RDP composes additively, so T steps cost T times one step.
    for (std::size_t i = 0; i < one.accumulated_rdp.size(); ++i) {
      one.accumulated_rdp[i] *= static_cast<double>(T);
    }
    one.steps_taken = T;
    return epsilon_at_delta(one, target_delta);
  };

  // The conversion term log(1/delta)/(a-1) lower-bounds epsilon for any z.
  double floor_eps = kInf;
  for (double a : default_rdp_orders()) {
    floor_eps = std::min(floor_eps, std::log(1.0 / target_delta) / (a - 1.0));
  }
  if (target_epsilon <= floor_eps) {
    throw InfeasiblePrivacyTarget(
        "privacy target epsilon=" + std::to_string(target_epsilon) +
        " is at or below the accountant floor " + std::to_string(floor_eps) +
        " for delta=" + std::to_string(target_delta) +
        "; no noise scale can reach it");
  }

  // Bracket the target: eps is monotone decreasing in z, so expand hi until
  // feasible and shrink lo until infeasible.
  double lo = 1e-3;
  double hi = 1e-3;
  int moves = 0;
  while (eps_for(hi) > target_epsilon) {
    lo = hi;
    hi *= 2.0;
    if (++moves > 80) {
      throw InfeasiblePrivacyTarget(
          "privacy target epsilon=" + std::to_string(target_epsilon) +
          " not reachable within the search bounds");
    }
  }
  while (eps_for(lo) <= target_epsilon) {
    hi = lo;
    lo *= 0.5;
    if (++moves > 160) break;  // z -> 0 diverges for q > 0, so this ends
  }
  // Invariant: eps(hi) <= target < eps(lo), eps monotone decreasing in z.
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (eps_for(mid) > target_epsilon) {
      lo = mid;
    } else {
      hi = mid;
    }
    if ((hi - lo) <= 1e-12 * hi) break;
  }
  return hi;
}

}  // namespace fftkf::privacy
