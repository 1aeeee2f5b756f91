#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fftkf/kalman.hpp"
#include "fftkf/privacy.hpp"
#include "fftkf/problems.hpp"
#include "fftkf/rng.hpp"
#include "fftkf/spectral.hpp"

namespace fftkf::optimizer {

using spectral::ParamVector;

enum class BaseKind { kSgd, kMomentum, kAdam };

/// Base parameter-update rule. Moment vectors live inside so one instance
/// carries the full optimizer state of a run; call reset(d) before the
/// first apply.
struct BaseOptimizer {
  BaseKind kind = BaseKind::kSgd;
  double learning_rate = 0.1;
  double momentum_beta = 0.9;   // used by kMomentum
  double adam_beta1 = 0.9;      // used by kAdam
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  ParamVector m;           // first moment (momentum buffer for kMomentum)
  ParamVector v;           // second moment (kAdam only)
  long long step_count = 0;

  void validate() const;
  void reset(std::size_t d);
  // x <- Opt(x, learning_rate, g). Pure in (x, g, moments).
  void apply(ParamVector& x, const ParamVector& g);
};

enum class Method { kDpsgd, kDisk, kFftkf };

struct FilterParams {
  double lambda = 0.25;  // low-frequency fraction, in (0, 1)
  double rho = 0.5;      // high-frequency attenuation, in (0, 1)
  double alpha = 0.0;    // smooth-mask decay rate, >= 0 (0 = step mask)
};

struct KalmanParams {
  double kappa = 0.5;  // gain in (0, 1]; 1 disables the filter
  double gamma = 1.0;  // finite-difference parameter, > 0
};

struct MethodConfig {
  Method method = Method::kDpsgd;
  privacy::PrivacyParams privacy;
  std::optional<FilterParams> filter;  // fftkf only
  std::optional<KalmanParams> kalman;  // disk and fftkf
  BaseOptimizer base;
  long long steps = 0;        // T
  std::size_t batch_size = 1; // expected batch size B under Poisson sampling
  std::uint64_t seed = 0;
  long long eval_interval = 0;  // test-accuracy cadence in steps; 0 = never
  bool record_timing = false;   // per-step wall clock; off keeps logs
                                // byte-reproducible

  void validate() const;
};

const char* method_name(Method m);
Method parse_method(const std::string& name);

/// Everything one training run mutates. The mask is the identity for dpsgd
/// and disk, so a single step implementation serves all three methods.
struct TrainerState {
  ParamVector x;
  BaseOptimizer base;
  kalman::KalmanState kalman;
  spectral::SpectralMask mask;
  Rng noise_rng;  // w_t stream
  Rng fd_rng;     // w_fd stream
  double sigma_w = 0.0;   // resolved noise scales (explicit or calibrated)
  double sigma_fd = 0.0;
  double noise_multiplier = 0.0;  // sigma over sensitivity, for accounting

  // diagnostics from the most recent step
  ParamVector last_raw{};       // privatized gradient g_t before any filtering
  ParamVector last_estimate{};  // g_tilde actually fed to the base optimizer
};

/// Builds the initial state: draws x0, zeroes moments and the Kalman state,
/// builds the mask, and resolves noise scales. When privacy.target_epsilon
/// is set and sigma_w is not, calibrates the noise multiplier for T steps at
/// q = B/N and derives both sigmas from it; throws InfeasiblePrivacyTarget
/// if the budget cannot be met.
TrainerState make_trainer_state(const MethodConfig& cfg,
                                const problems::Problem& problem);

/// One DP-SGD step on the given batch: clip, fixed-denominator average,
/// Gaussian noise, base-optimizer update. An empty batch yields a pure
/// noise step.
void step_dpsgd(TrainerState& st, const problems::Problem& problem,
                const std::vector<std::size_t>& batch,
                const MethodConfig& cfg);

/// One FFTKF step: privatize the batch gradient, apply the spectral mask,
/// form the finite-difference Kalman prediction (same batch, second
/// evaluation at x + gamma * d_prev), blend, update, advance.
void step_fftkf(TrainerState& st, const problems::Problem& problem,
                const std::vector<std::size_t>& batch,
                const MethodConfig& cfg);

/// DiSK is FFTKF without spectral shaping: the same code path with the
/// identity mask (st.mask must be the identity).
void step_disk(TrainerState& st, const problems::Problem& problem,
               const std::vector<std::size_t>& batch,
               const MethodConfig& cfg);

struct RunResult {
  std::vector<double> train_loss;      // per step; exact F for synthetic
                                       // problems, batch mean loss otherwise
  std::vector<double> grad_error;      // ||g_tilde - grad F||, exact-gradient
                                       // problems only (empty otherwise)
  std::vector<double> raw_grad_error;  // same for the unfiltered privatized
                                       // gradient
  std::vector<double> epsilon;         // spent budget after each step
  std::vector<double> wall_ms;         // per-step wall clock (0 if disabled)
  std::vector<long long> eval_steps;   // 1-based steps with accuracy evals
  std::vector<double> test_acc;
  double final_epsilon = 0.0;
  double sigma_w = 0.0;            // resolved scales actually used
  double sigma_fd = 0.0;
  double noise_multiplier = 0.0;
  ParamVector final_x;
};

/// Runs T steps with Poisson subsampling at rate q = B/N and per-step
/// accounting. Deterministic given cfg.seed (with record_timing off).
RunResult run(const MethodConfig& cfg, const problems::Problem& problem);

}  // namespace fftkf::optimizer
