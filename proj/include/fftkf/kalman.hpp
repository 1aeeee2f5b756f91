#pragma once

#include <cstddef>
#include <vector>

#include "fftkf/rng.hpp"
#include "fftkf/spectral.hpp"

namespace fftkf::kalman {

using spectral::ParamVector;

/// State of one scalar-gain filter: the running gradient estimate and the
/// previous parameter step it was advanced with. Value semantics; one filter
/// per training run.
struct KalmanState {
  ParamVector g_tilde;  // filtered gradient estimate, zeros before step 0
  ParamVector d_prev;   // previous parameter step x_t - x_{t-1}, zeros first
  double kappa = 0.5;   // gain in (0, 1]; 1 disables filtering entirely
  double gamma = 1.0;   // finite-difference parameter > 0
  bool initialized = false;
};

KalmanState make_state(std::size_t d, double kappa, double gamma);

/// Finite-difference prediction of the current gradient:
///   g_tilde + (mean clip(grad at x + gamma*d_prev) - mean clip(grad at x))
///             / gamma + w_fd,   w_fd ~ N(0, sigma_fd^2 I).
/// Both batches must come from the same mini-batch (same samples, two
/// evaluation points). With d_prev = 0 the difference cancels exactly.
/// batch_denom > 0 fixes the 1/B normalizer independently of the realized
/// batch size (required for Poisson-sampled batches, which may be empty);
/// 0 divides by the list length.
ParamVector predict(const KalmanState& state,
                    const std::vector<ParamVector>& grads_at_x,
                    const std::vector<ParamVector>& grads_at_shifted,
                    double C, double sigma_fd, Rng& rng,
                    std::size_t batch_denom = 0);

/// Convex blend (1 - kappa) * prediction + kappa * g_hat. kappa = 1 returns
/// g_hat itself (exact algebraic limit, kept bit-identical so a gain-1 filter
/// collapses onto the unfiltered method).
ParamVector correct(const ParamVector& prediction, const ParamVector& g_hat,
                    double kappa);

/// Store the corrected estimate and the realized parameter step.
KalmanState advance(KalmanState state, ParamVector new_g_tilde,
                    ParamVector new_step_d);

}  // namespace fftkf::kalman
