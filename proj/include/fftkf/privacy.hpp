#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fftkf/rng.hpp"
#include "fftkf/spectral.hpp"

namespace fftkf::privacy {

using spectral::ParamVector;
using spectral::SpectralMask;

/// Noise/clipping configuration for one training arm.
struct PrivacyParams {
  double clip_C = 1.0;          // per-sample l2 clipping bound
  double sigma_w = 0.0;         // gradient noise scale (per coordinate)
  double sigma_fd = 0.0;        // finite-difference noise scale
  double sampling_rate_q = 1.0; // B / N
  double target_epsilon = 0.0;  // 0 disables calibration
  double target_delta = 1e-5;

  void validate() const;  // throws std::invalid_argument on bad ranges
};

/// clip(v, C) = v * min(1, C / ||v||_2). The zero vector maps to itself.
ParamVector clip(const ParamVector& v, double C);

/// Mean of clipped per-sample gradients plus N(0, sigma_w^2 I). The pre-noise
/// mean has l2 sensitivity C/B between add/remove-neighboring batches.
/// Summation order is fixed (batch index order) so results are deterministic.
ParamVector privatize_gradient(const std::vector<ParamVector>& per_sample_grads,
                               double C, double sigma_w, Rng& rng);

/// Spectral shaping of a noise (or observation) vector; delegates to
/// apply_filter, so it is non-expansive and mask errors surface identically.
ParamVector shape_noise(const ParamVector& w, const SpectralMask& m);

/// Raised by calibrate_sigma when no finite noise scale can meet the target.
class InfeasiblePrivacyTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Renyi-DP ledger over a fixed order grid. Value semantics: account_step
/// returns the advanced copy, so snapshots are free.
struct AccountantState {
  std::uint64_t steps_taken = 0;
  int releases_per_step = 2;  // FFTKF releases gradient + FD term per step
  std::vector<double> rdp_orders;
  std::vector<double> accumulated_rdp;
};

/// Order grid {1.25, 1.5, 2, 3, ..., 64}.
std::vector<double> default_rdp_orders();

AccountantState make_accountant(int releases_per_step);

/// Renyi divergence at order `a` of one subsampled Gaussian release with
/// sampling rate q and noise multiplier z = sigma / sensitivity.
/// q = 0 costs nothing; q = 1 is the closed form a / (2 z^2); z = 0 with
/// q > 0 is infinite.
double subsampled_gaussian_rdp(double q, double z, double a);

/// Adds releases_per_step subsampled-Gaussian releases at noise multiplier z.
AccountantState account_step(AccountantState state, double q, double z);

/// min over orders of rdp(a) + log(1/delta)/(a - 1); 0 for an empty ledger.
double epsilon_at_delta(const AccountantState& state, double delta);

/// Smallest noise multiplier z such that T steps of releases_per_step
/// releases at sampling rate q stay within (target_epsilon, target_delta).
/// Re-accounting with the result lands in [0.99 * eps, eps]. Throws
/// InfeasiblePrivacyTarget when the target sits at or below the conversion
/// floor min_a log(1/delta)/(a - 1), which no finite z can beat.
double calibrate_sigma(double target_epsilon, double target_delta, double q,
                       std::uint64_t T, int releases_per_step);

}  // namespace fftkf::privacy
