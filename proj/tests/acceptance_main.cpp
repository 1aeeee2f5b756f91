// Acceptance gate: every release-blocking property in one binary, one
// pass/fail line each, nonzero exit if any line fails. Criteria carry their
// own time budgets; exceeding a budget fails the criterion even if the
// numbers agree.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fftkf/analysis.hpp"
#include "fftkf/harness.hpp"
#include "fftkf/kalman.hpp"
#include "fftkf/optimizer.hpp"
#include "fftkf/privacy.hpp"
#include "fftkf/problems.hpp"
#include "fftkf/rng.hpp"
#include "fftkf/spectral.hpp"
#include "rdp_oracle.hpp"

using namespace fftkf;
using harness::format_double;
using optimizer::MethodConfig;
using optimizer::RunResult;
using spectral::ParamVector;

namespace {

struct CriterionFail {
  std::string what;
};

[[noreturn]] void fail(const std::string& what) { throw CriterionFail{what}; }

void require(bool ok, const std::string& what) {
  if (!ok) fail(what);
}

double l2(const ParamVector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

ParamVector gaussian_vec(std::size_t d, Rng& rng) {
  ParamVector v(d);
  for (double& x : v) x = rng.gaussian();
  return v;
}

Rng test_rng(std::uint64_t seed) {
  return Rng(seed, static_cast<std::uint64_t>(Stream::kTest));
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// criterion 1: the (0.5, 0.5) step mask keeps exactly 5/8 of the noise
// energy at every even dimension, with no floating-point slack.

std::string criterion_preserved_fraction() {
  std::size_t checked = 0;
  for (std::size_t d = 2; d <= 8192; d += 2) {
    if (analysis::rho_star(0.5, 0.5, d) != 0.625) {
      fail("rho_star(0.5, 0.5, " + std::to_string(d) + ") != 0.625");
    }
    ++checked;
  }
  for (std::size_t d : {std::size_t{1} << 16, std::size_t{1} << 20}) {
    if (analysis::rho_star(0.5, 0.5, d) != 0.625) {
      fail("rho_star(0.5, 0.5, " + std::to_string(d) + ") != 0.625");
    }
    ++checked;
  }
  return "0.625 exact at " + std::to_string(checked) + " even dimensions";
}

// ---------------------------------------------------------------------------
// criterion 2: Monte-Carlo covariance trace of shaped noise at d = 1024
// against rho_star * d * sigma_w^2 = 640, and the bias operator norm
// against rho = 0.5 by power iteration.

std::string criterion_shaped_noise() {
  Rng rng = test_rng(205);
  const auto rep = analysis::verify_lemma1(1024, 0.5, 0.5, 1.0, 100000, rng);
  const double trace_rel = std::abs(rep.trace_mc - 640.0) / 640.0;
  require(trace_rel <= 0.02,
          "trace " + format_double(rep.trace_mc) + " deviates " +
              format_double(trace_rel * 100.0) + "% from 640");
  const double bias_err = std::abs(rep.bias_norm_mc - 0.5);
  require(bias_err <= 1e-6, "bias norm " + format_double(rep.bias_norm_mc) +
                                " off 0.5 by " + format_double(bias_err));
  return "trace " + format_double(rep.trace_mc) + " (target 640 +/- 2%), bias " +
         format_double(rep.bias_norm_mc) + " (target 0.5 +/- 1e-6), n=100000";
}

// ---------------------------------------------------------------------------
// criterion 3: headline percentages of the (0.5, 0.5) mask, exact.

std::string criterion_headline_figures() {
  const auto rep = analysis::noise_reduction_report(0.5, 0.5);
  require(rep.reduction_pct == 37.5,
          "reduction " + format_double(rep.reduction_pct) + " != 37.5");
  require(rep.bias_inflation_pct == 25.0,
          "bias inflation " + format_double(rep.bias_inflation_pct) +
              " != 25");
  return "noise energy down 37.5%, bias term up at most 25%, both exact";
}

// ---------------------------------------------------------------------------
// criterion 4: the radix-2 transform against the O(d^2) direct sum, plus
// Parseval and roundtrip, on 100 Gaussian vectors per power-of-two size.

std::string criterion_fft() {
  Rng rng = test_rng(207);
  double worst_naive = 0.0, worst_pv = 0.0, worst_rt = 0.0;
  int vectors = 0;
  for (std::size_t d = 4; d <= 256; d *= 2) {
    for (int rep = 0; rep < 100; ++rep) {
      const ParamVector v = gaussian_vec(d, rng);
      const auto fast = spectral::dft_forward(v);
      const auto slow = spectral::naive_dft(v);
      double num = 0.0, den = 0.0, spec_energy = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        num += std::norm(fast[k] - slow[k]);
        den += std::norm(slow[k]);
        spec_energy += std::norm(fast[k]);
      }
      worst_naive = std::max(worst_naive, std::sqrt(num / den));
      const double time_energy = l2(v) * l2(v);
      worst_pv = std::max(worst_pv,
                          std::abs(spec_energy - static_cast<double>(d) *
                                                     time_energy) /
                              (static_cast<double>(d) * time_energy));
      const ParamVector back = spectral::dft_inverse(fast);
      double rt = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        rt += (back[i] - v[i]) * (back[i] - v[i]);
      }
      worst_rt = std::max(worst_rt, std::sqrt(rt) / l2(v));
      ++vectors;
    }
  }
  require(worst_naive <= 1e-9, "direct-sum mismatch " +
                                   format_double(worst_naive) + " > 1e-9");
  require(worst_pv <= 1e-10,
          "Parseval defect " + format_double(worst_pv) + " > 1e-10");
  require(worst_rt <= 1e-10,
          "roundtrip error " + format_double(worst_rt) + " > 1e-10");
  return std::to_string(vectors) + " vectors, direct " +
         format_double(worst_naive) + ", parseval " + format_double(worst_pv) +
         ", roundtrip " + format_double(worst_rt);
}

// ---------------------------------------------------------------------------
// criterion 5: shaping never lengthens a vector, for step and smooth masks
// across five (lambda, rho, alpha) settings, 10^4 draws each.

std::string criterion_non_expansion() {
  const struct {
    double lambda, rho, alpha;
  } settings[] = {{0.25, 0.5, 0.0},
                  {0.5, 0.5, 0.0},
                  {0.1, 0.9, 0.0},
                  {0.5, 0.9, 1.0},
                  {0.75, 0.3, 2.0}};
  Rng rng = test_rng(209);
  const std::size_t d = 128;
  double worst = -1.0;
  long draws = 0;
  for (const auto& s : settings) {
    const spectral::SpectralMask step = spectral::build_mask(d, s.lambda,
                                                             s.rho, 0.0);
    const spectral::SpectralMask smooth = spectral::build_mask(
        d, s.lambda, s.rho, s.alpha > 0.0 ? s.alpha : 1.0);
    for (const auto* mask : {&step, &smooth}) {
      for (int i = 0; i < 10000; ++i) {
        const double scale = 0.5 + 2.0 * rng.uniform();
        ParamVector w(d);
        for (double& x : w) x = scale * rng.gaussian();
        const ParamVector out = privacy::shape_noise(w, *mask);
        const double excess = l2(out) - l2(w);
        worst = std::max(worst, excess);
        require(excess <= 1e-9,
                "expansion by " + format_double(excess) + " at lambda=" +
                    format_double(s.lambda) + " rho=" + format_double(s.rho));
        ++draws;
      }
    }
  }
  return std::to_string(draws) + " draws, worst norm excess " +
         format_double(worst);
}

// ---------------------------------------------------------------------------
// criterion 6: the method family collapses down the chain bit-exactly:
// gain-1 Kalman equals the plain privatized method over a full run, and an
// identity mask equals the maskless Kalman method step by step.

std::string criterion_reduction_chain() {
  const problems::QuadraticProblem prob(16, 0.25, 1.0, 0.3, 64, 3);

  MethodConfig a;
  a.method = optimizer::Method::kDpsgd;
  a.base.learning_rate = 0.05;
  a.privacy.sigma_w = 0.3;
  a.steps = 100;
  a.batch_size = 8;
  a.seed = 77;
  MethodConfig b = a;
  b.method = optimizer::Method::kDisk;
  b.kalman = optimizer::KalmanParams{1.0, 0.7};
  b.privacy.sigma_fd = 0.25;
  const RunResult ra = optimizer::run(a, prob);
  const RunResult rb = optimizer::run(b, prob);
  for (std::size_t i = 0; i < ra.final_x.size(); ++i) {
    require(ra.final_x[i] == rb.final_x[i],
            "gain-1 run diverged at coordinate " + std::to_string(i));
  }

  MethodConfig f = a;
  f.method = optimizer::Method::kFftkf;
  f.kalman = optimizer::KalmanParams{0.5, 0.8};
  f.filter = optimizer::FilterParams{0.25, 0.5, 0.0};
  f.privacy.sigma_fd = 0.15;
  f.seed = 11;
  MethodConfig g = a;
  g.method = optimizer::Method::kDisk;
  g.kalman = f.kalman;
  g.privacy.sigma_fd = 0.15;
  g.seed = 11;
  auto sf = optimizer::make_trainer_state(f, prob);
  auto sg = optimizer::make_trainer_state(g, prob);
  sf.mask = spectral::identity_mask(sf.mask.size());
  Rng batch_rng = test_rng(99);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> batch(8);
    for (auto& i : batch) i = batch_rng.next_u64() % prob.num_examples();
    optimizer::step_fftkf(sf, prob, batch, f);
    optimizer::step_disk(sg, prob, batch, g);
  }
  for (std::size_t i = 0; i < sf.x.size(); ++i) {
    require(sf.x[i] == sg.x[i],
            "identity-mask run diverged at coordinate " + std::to_string(i));
  }
  return "gain-1 == unfiltered and identity mask == maskless, bitwise over "
         "100 steps";
}

// ---------------------------------------------------------------------------
// criterion 7: analytic per-sample gradients of the two data problems
// against central finite differences on random unit directions.

double fd_gradient_max_rel_err(const problems::Problem& p, Rng& rng,
                               int probes, double h, double x_scale) {
  const std::size_t d = p.dimension();
  double worst = 0.0;
  for (int k = 0; k < probes; ++k) {
    ParamVector x(d);
    for (double& xi : x) xi = x_scale * rng.gaussian();
    const std::size_t sample = rng.next_u64() % p.num_examples();
    ParamVector u = gaussian_vec(d, rng);
    const double un = l2(u);
    for (double& ui : u) ui /= un;
    ParamVector xp = x, xm = x;
    for (std::size_t i = 0; i < d; ++i) {
      xp[i] += h * u[i];
      xm[i] -= h * u[i];
    }
    const double fd =
        (p.per_sample_loss(xp, sample) - p.per_sample_loss(xm, sample)) /
        (2.0 * h);
    const ParamVector g = p.per_sample_gradient(x, sample);
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) dot += g[i] * u[i];
    const double rel = std::abs(fd - dot) /
                       std::max({std::abs(fd), std::abs(dot), 1e-6});
    worst = std::max(worst, rel);
  }
  return worst;
}

std::string criterion_gradient_oracles() {
  auto train = std::make_shared<problems::MnistDataset>(
      problems::make_synthetic_digits(64, 155));
  auto test = std::make_shared<problems::MnistDataset>(
      problems::make_synthetic_digits(16, 156));
  Rng rng = test_rng(211);
  const problems::LogisticProblem logit(train, test);
  const double e1 = fd_gradient_max_rel_err(logit, rng, 20, 1e-5, 0.05);
  require(e1 <= 1e-5,
          "logistic rel err " + format_double(e1) + " > 1e-5");
  const problems::MlpProblem mlp(train, test);
  const double e2 = fd_gradient_max_rel_err(mlp, rng, 20, 1e-4, 0.05);
  require(e2 <= 1e-4, "mlp rel err " + format_double(e2) + " > 1e-4");
  return "logistic " + format_double(e1) + " (tol 1e-5), mlp " +
         format_double(e2) + " (tol 1e-4), 20 probes each";
}

// ---------------------------------------------------------------------------
// criterion 8: on the d = 512 quadratic with the same calibrated noise scale
// in both arms (epsilon = 4, delta = 1e-5, T = 500), the filtered method
// ends at lower loss than the plain method on average over 20 paired seeds,
// and its gradient estimates are closer to the true gradient than the raw
// privatized ones.

std::string criterion_quadratic_utility() {
  // kappa well above 1/2 matters here: the correction's AR(1) error
  // autocorrelation (1 - kappa) inflates the integrated parameter noise by
  // about (2 - kappa) / kappa, which at small gains cancels the filter's
  // per-step variance savings.
  const problems::QuadraticProblem prob(512, 0.1, 1.0, 0.0, 2048, 7);
  const std::size_t B = 128;
  const long long T = 500;
  const double q = static_cast<double>(B) / 2048.0;
  const double gamma = 2.0;
  const double z = privacy::calibrate_sigma(4.0, 1e-5, q, T, 2);
  const double sigma_w = z * 1.0 / static_cast<double>(B);
  const double sigma_fd = z * 2.0 / (static_cast<double>(B) * gamma);

  MethodConfig dp;
  dp.method = optimizer::Method::kDpsgd;
  dp.base.learning_rate = 1.0;
  dp.privacy.clip_C = 1.0;
  dp.privacy.sigma_w = sigma_w;
  dp.steps = T;
  dp.batch_size = B;

  MethodConfig kf = dp;
  kf.method = optimizer::Method::kFftkf;
  kf.kalman = optimizer::KalmanParams{0.9, gamma};
  kf.filter = optimizer::FilterParams{0.25, 0.5, 0.0};
  kf.privacy.sigma_fd = sigma_fd;

  std::vector<double> dp_final, kf_final, est_err, raw_err;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    dp.seed = seed;
    kf.seed = seed;
    const RunResult rd = optimizer::run(dp, prob);
    const RunResult rk = optimizer::run(kf, prob);
    dp_final.push_back(rd.train_loss.back());
    kf_final.push_back(rk.train_loss.back());
    est_err.push_back(mean(rk.grad_error));
    raw_err.push_back(mean(rk.raw_grad_error));
  }
  const double dp_loss = mean(dp_final), kf_loss = mean(kf_final);
  const double est = mean(est_err), raw = mean(raw_err);
  require(kf_loss < dp_loss,
          "mean final loss " + format_double(kf_loss) +
              " not below plain method's " + format_double(dp_loss));
  require(est < raw, "estimate error " + format_double(est) +
                         " not below raw privatized error " +
                         format_double(raw));
  return "final loss " + format_double(kf_loss) + " vs " +
         format_double(dp_loss) + ", estimate error " + format_double(est) +
         " vs raw " + format_double(raw) + " (20 paired seeds, z=" +
         format_double(z) + ")";
}

// ---------------------------------------------------------------------------
// criterion 9: logistic regression on a 10,000-example image subset with
// each arm calibrated to (epsilon = 4, delta = 1e-5): mean test accuracy of
// the filtered method is at least the plain method's over 5 paired seeds.

std::string criterion_logistic_utility() {
  harness::ProblemSpec spec;
  spec.kind = "logistic";
  spec.dataset = "auto";
  spec.subset_n = 10000;
  const char* env = std::getenv("FFTKF_DATA_DIR");
  const std::filesystem::path scratch =
      std::filesystem::temp_directory_path() / "fftkf_acceptance_data";
  const auto bundle =
      harness::make_problem(spec, env ? env : "", scratch.string());
  const problems::Problem& prob = *bundle.problem;

  MethodConfig dp;
  dp.method = optimizer::Method::kDpsgd;
  dp.base.learning_rate = 0.5;
  dp.privacy.clip_C = 1.0;
  dp.privacy.target_epsilon = 4.0;
  dp.privacy.target_delta = 1e-5;
  dp.steps = 400;
  dp.batch_size = 250;
  dp.eval_interval = 400;

  MethodConfig kf = dp;
  kf.method = optimizer::Method::kFftkf;
  kf.kalman = optimizer::KalmanParams{0.9, 2.0};
  kf.filter = optimizer::FilterParams{0.25, 0.5, 0.0};

  std::vector<double> dp_acc, kf_acc;
  double dp_eps = 0.0, kf_eps = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    dp.seed = seed;
    kf.seed = seed;
    const RunResult rd = optimizer::run(dp, prob);
    const RunResult rk = optimizer::run(kf, prob);
    require(!rd.test_acc.empty() && !rk.test_acc.empty(),
            "run produced no test accuracy");
    dp_acc.push_back(rd.test_acc.back());
    kf_acc.push_back(rk.test_acc.back());
    dp_eps = rd.final_epsilon;
    kf_eps = rk.final_epsilon;
  }
  const double da = mean(dp_acc), ka = mean(kf_acc);
  require(ka >= da, "mean accuracy " + format_double(ka) +
                        " below plain method's " + format_double(da));
  return "accuracy " + format_double(ka) + " vs " + format_double(da) +
         " at epsilon " + format_double(kf_eps) + "/" + format_double(dp_eps) +
         " (5 paired seeds, " + bundle.source + ")";
}

// ---------------------------------------------------------------------------
// criterion 10: the benchmark's own gate: per-doubling filter-time ratio at
// most 2.5 across d = 2^14..2^17 and exactly two transform calls per
// filtered step.

std::string criterion_cost_scaling() {
  const std::filesystem::path out_dir =
      std::filesystem::temp_directory_path() / "fftkf_acceptance_bench";
  std::ostringstream out, err;
  const int rc = harness::cli_bench({16384, 32768, 65536, 131072},
                                    out_dir.string(), out, err);
  if (rc != 0) {
    std::string msg = err.str();
    if (!msg.empty() && msg.back() == '\n') msg.pop_back();
    fail("bench exited with code " + std::to_string(rc) +
         (msg.empty() ? "" : ": " + msg));
  }
  // surface the fitted exponent line as the detail
  std::string detail = "ratios <= 2.5 and 2 ffts/step at d=2^14..2^17";
  std::istringstream lines(out.str());
  for (std::string line; std::getline(lines, line);) {
    if (line.find("fitted filter-cost exponent") != std::string::npos) {
      detail += ", " + line;
    }
  }
  return detail;
}

// ---------------------------------------------------------------------------
// criterion 11: the accountant calibrates tightly, composes monotonically in
// steps and sampling rate, and matches direct numerical integration.

std::string criterion_accountant() {
  const double z = privacy::calibrate_sigma(4.0, 1e-5, 0.0625, 500, 2);
  auto st = privacy::make_accountant(2);
  double prev = 0.0;
  bool monotone_T = true;
  for (int t = 1; t <= 500; ++t) {
    st = privacy::account_step(std::move(st), 0.0625, z);
    if (t % 100 == 0) {
      const double eps = privacy::epsilon_at_delta(st, 1e-5);
      if (eps <= prev) monotone_T = false;
      prev = eps;
    }
  }
  const double replay = privacy::epsilon_at_delta(st, 1e-5);
  require(replay >= 0.99 * 4.0 && replay <= 4.0 + 1e-9,
          "replayed epsilon " + format_double(replay) +
              " outside [3.96, 4]");
  require(monotone_T, "epsilon not strictly increasing in steps");

  double prev_q = 0.0;
  for (double q : {0.01, 0.02, 0.04, 0.08, 0.16}) {
    auto s = privacy::make_accountant(1);
    for (int t = 0; t < 200; ++t) s = privacy::account_step(std::move(s), q, 2.0);
    const double eps = privacy::epsilon_at_delta(s, 1e-5);
    require(eps > prev_q, "epsilon not increasing in sampling rate at q=" +
                              format_double(q));
    prev_q = eps;
  }

  double worst = 0.0;
  const struct {
    double q, z, a;
  } spots[] = {{0.01, 1.0, 2.0}, {0.2, 0.8, 4.0}, {0.01, 1.0, 32.0}};
  for (const auto& s : spots) {
    const double got = privacy::subsampled_gaussian_rdp(s.q, s.z, s.a);
    const double want = rdp_oracle::oracle_rdp(s.q, s.z, s.a);
    const double rel = std::abs(got - want) / std::abs(want);
    worst = std::max(worst, rel);
    require(rel <= 0.05, "integration mismatch " + format_double(rel) +
                             " at q=" + format_double(s.q) +
                             " z=" + format_double(s.z) +
                             " a=" + format_double(s.a));
  }
  return "replay " + format_double(replay) +
         " in [3.96, 4], monotone in T and q, integration off by at most " +
         format_double(worst);
}

// ---------------------------------------------------------------------------
// criterion 12: the descent constant against an independently grouped
// extended-precision evaluation, plus both closed-form limits.

std::string criterion_descent_constant() {
  Rng rng = test_rng(213);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double eta = 0.001 + 0.35 * rng.uniform();
    const double kappa = 0.05 + 0.95 * rng.uniform();
    const double gamma = 0.1 + 2.9 * rng.uniform();
    const double L = 0.2 + 3.0 * rng.uniform();
    const double beta = 2.0 * rng.uniform();
    const auto tc = analysis::theorem2_constants(eta, kappa, gamma, L, beta);
    const long double le = eta, lk = kappa, lg = gamma, lL = L, lb = beta;
    const long double dual =
        ((1.0L + lk) - 2.0L * le * lL) -
        4.0L * le * lL * lL * (1.0L - lk) * (1.0L - lk) *
            (lb + le * le * lL) * (2.0L + std::fabs(1.0L + lg));
    const double rel = std::abs(tc.C1 - static_cast<double>(dual)) /
                       std::max(1.0, std::abs(static_cast<double>(dual)));
    worst = std::max(worst, rel);
    require(rel <= 1e-12, "dual evaluation off by " + format_double(rel));
    require(tc.valid == (static_cast<double>(dual) > 0.0),
            "validity flag disagrees with the sign of the constant");
  }
  for (double eta : {0.01, 0.05, 0.1, 0.3}) {
    for (double L : {0.5, 1.0, 2.0}) {
      const auto tc = analysis::theorem2_constants(eta, 1.0, 1.3, L, 0.7);
      require(std::abs(tc.C1 - (2.0 - 2.0 * eta * L)) <= 1e-15,
              "gain-1 limit broken at eta=" + format_double(eta) +
                  " L=" + format_double(L));
    }
  }
  for (double kappa : {0.2, 0.5, 0.9}) {
    const auto tc = analysis::theorem2_constants(1e-12, kappa, 1.0, 1.0, 0.5);
    require(std::abs(tc.C1 - (1.0 + kappa)) <= 1e-9,
            "vanishing-step limit broken at kappa=" + format_double(kappa));
  }
  return "100 tuples within " + format_double(worst) +
         " of the extended-precision form, both limits exact";
}

struct Criterion {
  int id;
  const char* label;
  double budget_s;  // 0 = untimed
  std::function<std::string()> body;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "preserved-fraction reference value", 0.0,
       criterion_preserved_fraction},
      {2, "shaped-noise covariance trace and bias", 30.0,
       criterion_shaped_noise},
      {3, "noise-reduction and bias headline figures", 0.0,
       criterion_headline_figures},
      {4, "fft against direct transform", 10.0, criterion_fft},
      {5, "filter non-expansion", 10.0, criterion_non_expansion},
      {6, "method reduction chain", 0.0, criterion_reduction_chain},
      {7, "gradient oracles vs finite differences", 0.0,
       criterion_gradient_oracles},
      {8, "quadratic utility under matched noise", 300.0,
       criterion_quadratic_utility},
      {9, "logistic utility at equal privacy budget", 600.0,
       criterion_logistic_utility},
      {10, "filter cost scaling and fft count", 0.0, criterion_cost_scaling},
      {11, "accountant calibration and monotonicity", 0.0,
       criterion_accountant},
      {12, "descent-constant closed form", 0.0, criterion_descent_constant},
  };

  int passed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    try {
      detail = c.body();
    } catch (const CriterionFail& f) {
      ok = false;
      detail = f.what;
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("unexpected error: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (ok && c.budget_s > 0.0 && secs > c.budget_s) {
      ok = false;
      detail = "exceeded time budget: " + format_double(secs) + "s > " +
               format_double(c.budget_s) + "s";
    }
    std::printf("[%s] criterion %2d: %-42s %s (%.1fs)\n",
                ok ? "PASS" : "FAIL", c.id, c.label, detail.c_str(), secs);
    std::fflush(stdout);
    if (ok) ++passed;
  }
  std::printf("%d/%d criteria passed\n", passed,
              static_cast<int>(criteria.size()));
  return passed == static_cast<int>(criteria.size())
             ? harness::kExitOk
             : harness::kExitVerifyFailed;
}
