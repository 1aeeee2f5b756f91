#include "fftkf/kalman.hpp"

#include <stdexcept>
#include <string>
#include <utility>

#include "fftkf/privacy.hpp"

namespace fftkf::kalman {

KalmanState make_state(std::size_t d, double kappa, double gamma) {
  if (!(kappa > 0.0 && kappa <= 1.0)) {
    throw std::invalid_argument("kalman: kappa must lie in (0, 1]");
  }
  if (!(gamma > 0.0)) {
    throw std::invalid_argument("kalman: gamma must be > 0");
  }
  KalmanState s;
  s.g_tilde.assign(d, 0.0);
  s.d_prev.assign(d, 0.0);
  s.kappa = kappa;
  s.gamma = gamma;
  return s;
}

ParamVector predict(const KalmanState& state,
                    const std::vector<ParamVector>& grads_at_x,
                    const std::vector<ParamVector>& grads_at_shifted,
                    double C, double sigma_fd, Rng& rng,
                    std::size_t batch_denom) {
  if (grads_at_x.size() != grads_at_shifted.size()) {
    throw std::invalid_argument(
        "predict: batch size mismatch between evaluation points (" +
        std::to_string(grads_at_x.size()) + " vs " +
        std::to_string(grads_at_shifted.size()) + ")");
  }
  // A fixed denominator keeps the finite-difference sensitivity 2C/(B*gamma)
  // under Poisson sampling, where the realized batch size fluctuates and may
  // even be zero.
  if (grads_at_x.empty() && batch_denom == 0) {
    throw std::invalid_argument("predict: empty batch");
  }
  const std::size_t d = state.g_tilde.size();
  ParamVector diff(d, 0.0);  // sum clip(shifted) - sum clip(unshifted)
  for (std::size_t b = 0; b < grads_at_x.size(); ++b) {
    if (grads_at_x[b].size() != d || grads_at_shifted[b].size() != d) {
      throw std::invalid_argument("predict: gradient length mismatch");
    }
    const ParamVector cs = privacy::clip(grads_at_shifted[b], C);
    const ParamVector cu = privacy::clip(grads_at_x[b], C);
    for (std::size_t i = 0; i < d; ++i) diff[i] += cs[i] - cu[i];
  }
  const std::size_t denom =
      batch_denom > 0 ? batch_denom : grads_at_x.size();
  const double scale = 1.0 / (static_cast<double>(denom) * state.gamma);
  ParamVector out(d);
  if (sigma_fd > 0.0) {
    for (std::size_t i = 0; i < d; ++i) {
      out[i] = state.g_tilde[i] + diff[i] * scale + sigma_fd * rng.gaussian();
    }
  } else {
    for (std::size_t i = 0; i < d; ++i) {
      out[i] = state.g_tilde[i] + diff[i] * scale;
    }
  }
  return out;
}

ParamVector correct(const ParamVector& prediction, const ParamVector& g_hat,
                    double kappa) {
  if (prediction.size() != g_hat.size()) {
    throw std::invalid_argument("correct: length mismatch");
  }
  if (!(kappa > 0.0 && kappa <= 1.0)) {
    throw std::invalid_argument("correct: kappa must lie in (0, 1]");
  }
  if (kappa == 1.0) return g_hat;
  ParamVector out(prediction.size());
  const double one_minus = 1.0 - kappa;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = one_minus * prediction[i] + kappa * g_hat[i];
  }
  return out;
}

KalmanState advance(KalmanState state, ParamVector new_g_tilde,
                    ParamVector new_step_d) {
  if (new_g_tilde.size() != state.g_tilde.size() ||
      new_step_d.size() != state.d_prev.size()) {
    throw std::invalid_argument("advance: length mismatch");
  }
  state.g_tilde = std::move(new_g_tilde);
  state.d_prev = std::move(new_step_d);
  state.initialized = true;
  return state;
}

}  // namespace fftkf::kalman
