#include "fftkf/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace fftkf::optimizer {

void BaseOptimizer::validate() const {
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("base optimizer: learning_rate must be > 0");
  }
  if (!(momentum_beta >= 0.0 && momentum_beta < 1.0)) {
    throw std::invalid_argument("base optimizer: momentum_beta must lie in [0, 1)");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("base optimizer: adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) {
    throw std::invalid_argument("base optimizer: adam_epsilon must be > 0");
  }
}

void BaseOptimizer::reset(std::size_t d) {
  m.assign(d, 0.0);
  v.assign(d, 0.0);
  step_count = 0;
}

void BaseOptimizer::apply(ParamVector& x, const ParamVector& g) {
  if (x.size() != g.size()) {
    throw std::invalid_argument("base optimizer: length mismatch");
  }
  if (kind != BaseKind::kSgd && m.size() != x.size()) {
    throw std::logic_error("base optimizer: reset(d) not called");
  }
  switch (kind) {
    case BaseKind::kSgd:
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= learning_rate * g[i];
      break;
    case BaseKind::kMomentum:
      for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = momentum_beta * m[i] + g[i];
        x[i] -= learning_rate * m[i];
      }
      break;
    case BaseKind::kAdam: {
      ++step_count;
      const double bc1 = 1.0 - std::pow(adam_beta1, static_cast<double>(step_count));
      const double bc2 = 1.0 - std::pow(adam_beta2, static_cast<double>(step_count));
      for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = adam_beta1 * m[i] + (1.0 - adam_beta1) * g[i];
        v[i] = adam_beta2 * v[i] + (1.0 - adam_beta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        x[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + adam_epsilon);
      }
      break;
    }
  }
}

const char* method_name(Method m) {
  switch (m) {
    case Method::kDpsgd: return "dpsgd";
    case Method::kDisk:  return "disk";
    case Method::kFftkf: return "fftkf";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "dpsgd") return Method::kDpsgd;
  if (name == "disk")  return Method::kDisk;
  if (name == "fftkf") return Method::kFftkf;
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected dpsgd, disk, or fftkf)");
}

void MethodConfig::validate() const {
  base.validate();
  privacy.validate();
  if (steps < 0) throw std::invalid_argument("config: steps must be >= 0");
  if (batch_size < 1) {
    throw std::invalid_argument("config: batch_size must be >= 1");
  }
  if (eval_interval < 0) {
    throw std::invalid_argument("config: eval_interval must be >= 0");
  }
  switch (method) {
    case Method::kDpsgd:
      if (filter || kalman) {
        throw std::invalid_argument(
            "config: dpsgd takes no filter or kalman parameters");
      }
      break;
    case Method::kDisk:
      if (filter) {
        throw std::invalid_argument("config: disk takes no filter parameters");
      }
      if (!kalman) {
        throw std::invalid_argument("config: disk requires kalman parameters");
      }
      break;
    case Method::kFftkf:
      if (!filter || !kalman) {
        throw std::invalid_argument(
            "config: fftkf requires filter and kalman parameters");
      }
      break;
  }
  if (filter) {
    if (!(filter->lambda > 0.0 && filter->lambda < 1.0)) {
      throw std::invalid_argument("config: filter lambda must lie in (0, 1)");
    }
    if (!(filter->rho > 0.0 && filter->rho < 1.0)) {
      throw std::invalid_argument("config: filter rho must lie in (0, 1)");
    }
    if (!(filter->alpha >= 0.0)) {
      throw std::invalid_argument("config: filter alpha must be >= 0");
    }
  }
  if (kalman) {
    if (!(kalman->kappa > 0.0 && kalman->kappa <= 1.0)) {
      throw std::invalid_argument("config: kappa must lie in (0, 1]");
    }
    if (!(kalman->gamma > 0.0)) {
      throw std::invalid_argument("config: gamma must be > 0");
    }
  }
}

namespace {

// Fixed-denominator private release: (1/B) sum clip(g_i) + sigma_w * xi.
// The denominator is the configured batch size, not the realized one, so the
// sensitivity C/B holds under Poisson sampling; an empty batch releases pure
// noise.
ParamVector privatize_batch(const std::vector<ParamVector>& grads, double C,
                            double sigma_w, std::size_t batch_denom,
                            std::size_t d, Rng& rng) {
  ParamVector g(d, 0.0);
  for (const ParamVector& gi : grads) {
    const ParamVector cg = privacy::clip(gi, C);
    for (std::size_t i = 0; i < d; ++i) g[i] += cg[i];
  }
  const double inv_b = 1.0 / static_cast<double>(batch_denom);
  for (std::size_t i = 0; i < d; ++i) g[i] *= inv_b;
  if (sigma_w > 0.0) {
    for (std::size_t i = 0; i < d; ++i) g[i] += sigma_w * rng.gaussian();
  }
  return g;
}

double l2_norm(const ParamVector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TrainerState make_trainer_state(const MethodConfig& cfg,
                                const problems::Problem& problem) {
  cfg.validate();
  const std::size_t d = problem.dimension();
  const std::size_t n = problem.num_examples();
  if (cfg.batch_size > n) {
    throw std::invalid_argument("config: batch_size exceeds the dataset size");
  }

  const bool kalman_method = cfg.method != Method::kDpsgd;
  TrainerState st{
      .x = {},
      .base = cfg.base,
      .kalman = kalman_method
                    ? kalman::make_state(d, cfg.kalman->kappa, cfg.kalman->gamma)
                    : kalman::make_state(d, 1.0, 1.0),
      .mask = cfg.method == Method::kFftkf
                  ? spectral::build_mask(spectral::next_pow2(d),
                                         cfg.filter->lambda, cfg.filter->rho,
                                         cfg.filter->alpha)
                  : spectral::identity_mask(spectral::next_pow2(d)),
      .noise_rng = make_rng(cfg.seed, Stream::kGradNoise),
      .fd_rng = make_rng(cfg.seed, Stream::kFdNoise),
  };
  Rng init_rng = make_rng(cfg.seed, Stream::kInit);
  st.x = problem.initial_point(init_rng);
  st.base.reset(d);

  const double C = cfg.privacy.clip_C;
  const double B = static_cast<double>(cfg.batch_size);
  st.sigma_w = cfg.privacy.sigma_w;
  st.sigma_fd = cfg.privacy.sigma_fd;
  if (cfg.privacy.target_epsilon > 0.0 && st.sigma_w == 0.0) {
    const double q = B / static_cast<double>(n);
    const int releases = kalman_method ? 2 : 1;
    const double z = privacy::calibrate_sigma(
        cfg.privacy.target_epsilon, cfg.privacy.target_delta, q,
        static_cast<std::uint64_t>(cfg.steps), releases);
    st.sigma_w = z * C / B;
    if (kalman_method) st.sigma_fd = z * 2.0 * C / (B * cfg.kalman->gamma);
  }

  // Noise multiplier for accounting: sigma over sensitivity per release,
  // taking the weaker (smaller) of the two FFTKF releases.
  const double z_w = st.sigma_w * B / C;
  if (kalman_method && st.sigma_fd > 0.0) {
    const double z_fd = st.sigma_fd * B * cfg.kalman->gamma / (2.0 * C);
    st.noise_multiplier = std::min(z_w, z_fd);
  } else {
    st.noise_multiplier = z_w;
  }
  return st;
}

void step_dpsgd(TrainerState& st, const problems::Problem& problem,
                const std::vector<std::size_t>& batch,
                const MethodConfig& cfg) {
  const auto grads = problem.batch_gradients(st.x, batch);
  ParamVector g = privatize_batch(grads, cfg.privacy.clip_C, st.sigma_w,
                                  cfg.batch_size, st.x.size(), st.noise_rng);
  st.last_raw = g;
  st.last_estimate = g;
  st.base.apply(st.x, g);
}

void step_fftkf(TrainerState& st, const problems::Problem& problem,
                const std::vector<std::size_t>& batch,
                const MethodConfig& cfg) {
  const std::size_t d = st.x.size();
  const double C = cfg.privacy.clip_C;

  const auto grads = problem.batch_gradients(st.x, batch);
  ParamVector g_t = privatize_batch(grads, C, st.sigma_w, cfg.batch_size, d,
                                    st.noise_rng);
  ParamVector g_hat = spectral::apply_filter(g_t, st.mask);

  // Second evaluation of the same batch at the probe point x + gamma * d_prev
  // feeds the finite-difference Hessian-action prediction.
  ParamVector shifted = st.x;
  for (std::size_t i = 0; i < d; ++i) {
    shifted[i] += st.kalman.gamma * st.kalman.d_prev[i];
  }
  const auto grads_shifted = problem.batch_gradients(shifted, batch);
  ParamVector prediction =
      kalman::predict(st.kalman, grads, grads_shifted, C, st.sigma_fd,
                      st.fd_rng, cfg.batch_size);
  ParamVector g_tilde =
      kalman::correct(prediction, g_hat, st.kalman.kappa);

  st.last_raw = std::move(g_t);
  st.last_estimate = g_tilde;

  const ParamVector x_old = st.x;
  st.base.apply(st.x, g_tilde);
  ParamVector d_t(d);
  for (std::size_t i = 0; i < d; ++i) d_t[i] = st.x[i] - x_old[i];
  st.kalman = kalman::advance(std::move(st.kalman), std::move(g_tilde),
                              std::move(d_t));
}

void step_disk(TrainerState& st, const problems::Problem& problem,
               const std::vector<std::size_t>& batch,
               const MethodConfig& cfg) {
  if (!st.mask.is_identity()) {
    throw std::logic_error("disk step requires the identity mask");
  }
  step_fftkf(st, problem, batch, cfg);
}

RunResult run(const MethodConfig& cfg, const problems::Problem& problem) {
  TrainerState st = make_trainer_state(cfg, problem);
  const std::size_t n = problem.num_examples();
  const double q =
      static_cast<double>(cfg.batch_size) / static_cast<double>(n);
  const bool kalman_method = cfg.method != Method::kDpsgd;
  privacy::AccountantState acct = privacy::make_accountant(
      kalman_method && st.sigma_fd > 0.0 ? 2 : 1);
  Rng sampling_rng = make_rng(cfg.seed, Stream::kSampling);

  const bool exact = problem.has_exact_gradient();
  const bool eval_acc = cfg.eval_interval > 0 && problem.has_test_accuracy();

  RunResult out;
  const auto T = static_cast<std::size_t>(cfg.steps);
  out.train_loss.reserve(T);
  out.epsilon.reserve(T);
  out.wall_ms.reserve(T);
  if (exact) {
    out.grad_error.reserve(T);
    out.raw_grad_error.reserve(T);
  }

  std::vector<std::size_t> batch;
  for (std::size_t t = 0; t < T; ++t) {
    const auto t0 = std::chrono::steady_clock::now();

    batch.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (sampling_rng.uniform() < q) batch.push_back(i);
    }

    if (exact) {
      out.train_loss.push_back(problem.full_loss(st.x));
    } else if (!batch.empty()) {
      double loss = 0.0;
      for (std::size_t xi : batch) loss += problem.per_sample_loss(st.x, xi);
      out.train_loss.push_back(loss / static_cast<double>(batch.size()));
    } else {
      out.train_loss.push_back(std::numeric_limits<double>::quiet_NaN());
    }

    ParamVector grad_f;
    if (exact) grad_f = problem.exact_full_gradient(st.x);

    switch (cfg.method) {
      case Method::kDpsgd: step_dpsgd(st, problem, batch, cfg); break;
      case Method::kDisk:  step_disk(st, problem, batch, cfg); break;
      case Method::kFftkf: step_fftkf(st, problem, batch, cfg); break;
    }

    if (exact) {
      ParamVector err(grad_f.size());
      for (std::size_t i = 0; i < grad_f.size(); ++i) {
        err[i] = st.last_estimate[i] - grad_f[i];
      }
      out.grad_error.push_back(l2_norm(err));
      for (std::size_t i = 0; i < grad_f.size(); ++i) {
        err[i] = st.last_raw[i] - grad_f[i];
      }
      out.raw_grad_error.push_back(l2_norm(err));
    }

    acct = privacy::account_step(std::move(acct), q, st.noise_multiplier);
    out.epsilon.push_back(
        privacy::epsilon_at_delta(acct, cfg.privacy.target_delta));

    if (eval_acc && ((static_cast<long long>(t) + 1) % cfg.eval_interval == 0 ||
                     t + 1 == T)) {
      out.eval_steps.push_back(static_cast<long long>(t) + 1);
      out.test_acc.push_back(problem.test_accuracy(st.x));
    }

    if (cfg.record_timing) {
      const std::chrono::duration<double, std::milli> dt =
          std::chrono::steady_clock::now() - t0;
      out.wall_ms.push_back(dt.count());
    } else {
      out.wall_ms.push_back(0.0);
    }
  }

  out.final_epsilon = out.epsilon.empty() ? 0.0 : out.epsilon.back();
  out.sigma_w = st.sigma_w;
  out.sigma_fd = st.sigma_fd;
  out.noise_multiplier = st.noise_multiplier;
  out.final_x = std::move(st.x);
  return out;
}

}  // namespace fftkf::optimizer
