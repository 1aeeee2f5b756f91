#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "fftkf/analysis.hpp"
#include "fftkf/privacy.hpp"
#include "fftkf/rng.hpp"
#include "fftkf/spectral.hpp"

using namespace fftkf;
using namespace fftkf::analysis;
using spectral::ParamVector;

TEST_SUITE("analysis") {

TEST_CASE("rho_star reference points") {
  for (std::size_t d = 2; d <= 2048; d += 2) {
    CHECK(rho_star(0.5, 0.5, d) == 0.625);
  }
  CHECK(rho_star(0.25, 0.5, 8) == 0.4375);  // (2 + 0.25 * 6) / 8
  CHECK(rho_star(0.3, 1e-9, 64) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("rho_star bounds and consistency with built masks") {
  Rng rng = make_rng(600, Stream::kTest);
  for (int t = 0; t < 200; ++t) {
    const double lambda = 0.05 + 0.9 * rng.uniform();
    const double rho = 0.05 + 0.9 * rng.uniform();
    const std::size_t d = 2 + rng.next_u64() % 500;
    const double rs = rho_star(lambda, rho, d);
    CHECK(rs <= 1.0);
    CHECK(rs > (1.0 - rho) * (1.0 - rho) - 1e-15);
  }
  // the analytic value equals sum phi_k^2 / d of the built step mask
  for (std::size_t d : {8, 64, 256, 1024}) {
    for (double lambda : {0.1, 0.25, 0.5, 0.8}) {
      for (double rho : {0.2, 0.5, 0.9}) {
        const auto mask = spectral::build_mask(d, lambda, rho, 0.0);
        double phi_sq = 0.0;
        for (double p : mask.phi) phi_sq += p * p;
        CHECK(rho_star(lambda, rho, d) ==
              doctest::Approx(phi_sq / static_cast<double>(d))
                  .epsilon(1e-12));
      }
    }
  }
  CHECK_THROWS_AS(rho_star(0.0, 0.5, 8), std::invalid_argument);
  CHECK_THROWS_AS(rho_star(0.5, 1.0, 8), std::invalid_argument);
  CHECK_THROWS_AS(rho_star(0.5, 0.5, 1), std::invalid_argument);
}

TEST_CASE("noise reduction report reference points") {
  const auto ref = noise_reduction_report(0.5, 0.5);
  CHECK(ref.reduction_pct == 37.5);
  CHECK(ref.bias_inflation_pct == 25.0);

  const auto strong = noise_reduction_report(0.5, 0.9);
  CHECK(strong.reduction_pct == doctest::Approx(49.5).epsilon(1e-12));
  CHECK(strong.bias_inflation_pct == doctest::Approx(81.0).epsilon(1e-12));

  const auto faint = noise_reduction_report(0.5, 1e-9);
  CHECK(faint.reduction_pct == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(faint.bias_inflation_pct ==
        doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(noise_reduction_report(1.0, 0.5), std::invalid_argument);
}

TEST_CASE("descent constant C1 limit cases") {
  for (double eta : {0.01, 0.1, 0.4}) {
    for (double L : {0.5, 1.0, 3.0}) {
      const auto c = theorem2_constants(eta, 1.0, 1.0, L, 0.5);
      CHECK(c.C1 == doctest::Approx(2.0 - 2.0 * eta * L).epsilon(1e-15));
    }
  }
  const auto tiny = theorem2_constants(1e-12, 0.7, 1.5, 2.0, 0.3);
  CHECK(tiny.C1 == doctest::Approx(1.7).epsilon(1e-9));
}

TEST_CASE("descent constant C1 against a dual evaluation") {
  Rng rng = make_rng(601, Stream::kTest);
  for (int t = 0; t < 100; ++t) {
    const double eta = 0.001 + 0.5 * rng.uniform();
    const double kappa = 0.05 + 0.95 * rng.uniform();
    const double gamma = 0.1 + 2.9 * rng.uniform();
    const double L = 0.1 + 4.9 * rng.uniform();
    const double beta = 2.0 * rng.uniform();
    const auto c = theorem2_constants(eta, kappa, gamma, L, beta);

    const double omk = 1.0 - kappa;
    const double dual = (1.0 + kappa) - 2.0 * eta * L -
                        eta * (2.0 + std::abs(1.0 + gamma)) * 4.0 * L * L *
                            omk * omk * (beta + eta * eta * L);
    CHECK(std::abs(c.C1 - dual) <= 1e-12 * std::max(1.0, std::abs(c.C1)));
    CHECK(c.valid == (c.C1 > 0.0));
    if (c.valid) {
      const double nc =
          2.0 * (beta + eta * eta * L) * kappa * kappa / (c.C1 * eta);
      CHECK(c.noise_coefficient == doctest::Approx(nc).epsilon(1e-12));
    } else {
      CHECK(c.noise_coefficient == 0.0);
    }
  }
}

TEST_CASE("contraction-violating regimes are flagged, not thrown") {
  const auto bad = theorem2_constants(2.0, 0.5, 1.0, 1.0, 1.0);
  CHECK(bad.C1 < 0.0);
  CHECK_FALSE(bad.valid);
  CHECK(bad.noise_coefficient == 0.0);
  CHECK_THROWS_AS(theorem2_constants(0.0, 0.5, 1.0, 1.0, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(theorem2_constants(0.1, 1.5, 1.0, 1.0, 0.0),
                  std::invalid_argument);
}

TEST_CASE("spectral coefficients of the full constants report") {
  const auto c = theorem2_constants(0.01, 0.5, 1.0, 1.0, 0.1, 0.5, 0.5, 1024,
                                    0.02);
  CHECK(c.valid);
  CHECK(c.bias_coefficient == 0.25);
  const double want = 4.0 * 0.625 * 1024.0 * 0.02 * 0.02;
  CHECK(c.dp_term_multiplier == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("verify_lemma1 on the identity mask") {
  Rng rng = make_rng(602, Stream::kTest);
  const auto mask = spectral::identity_mask(128);
  const auto rep = verify_lemma1(mask, 0.8, 20000, rng);
  CHECK(rep.rho_star_analytic == 1.0);
  CHECK(rep.trace_mc ==
        doctest::Approx(128.0 * 0.64).epsilon(0.02));
  CHECK(rep.bias_norm_mc == 0.0);
}

TEST_CASE("verify_lemma1 at the reference operating point") {
  Rng rng = make_rng(603, Stream::kTest);
  const auto rep = verify_lemma1(256, 0.5, 0.5, 1.0, 20000, rng);
  CHECK(rep.trace_analytic == doctest::Approx(160.0).epsilon(1e-12));
  CHECK(rep.trace_mc == doctest::Approx(160.0).epsilon(0.02));
  CHECK(std::abs(rep.bias_norm_mc - 0.5) < 1e-6);
  CHECK(rep.lambda == 0.5);
  CHECK(rep.rho == 0.5);
  CHECK(rep.d == 256);
  CHECK(rep.n_samples == 20000);
  CHECK_THROWS_AS(verify_lemma1(256, 0.5, 0.5, 1.0, 0, rng),
                  std::invalid_argument);
}

TEST_CASE("bias norm via power iteration matches the mask spectrum") {
  Rng rng = make_rng(604, Stream::kTest);
  // step mask: largest attenuation is rho itself
  const auto step = spectral::build_mask(64, 0.25, 0.7, 0.0);
  CHECK(std::abs(filter_bias_norm(step, rng) - 0.7) < 1e-6);
  // smooth mask: the rank-0 class keeps |1 - phi| = rho as the top value
  const auto smooth = spectral::build_mask(64, 0.25, 0.7, 1.0);
  CHECK(std::abs(filter_bias_norm(smooth, rng) - 0.7) < 1e-6);
}

TEST_CASE("monte carlo trace deviation shrinks like one over sqrt n") {
  const double target = 0.625 * 64.0;  // d = 64, lambda = rho = 0.5
  const std::size_t ns[3] = {10000, 40000, 160000};
  double mean_dev[3] = {};
  for (int k = 0; k < 3; ++k) {
    for (std::uint64_t rep = 0; rep < 4; ++rep) {
      Rng rng(9000 + rep, 77);
      const auto r = verify_lemma1(64, 0.5, 0.5, 1.0, ns[k], rng);
      mean_dev[k] += std::abs(r.trace_mc - target);
    }
    mean_dev[k] /= 4.0;
  }
  // quadrupling n should halve the deviation, up to Monte-Carlo scatter
  CHECK(mean_dev[0] > mean_dev[2]);
  CHECK(mean_dev[0] / mean_dev[1] > 1.2);
  CHECK(mean_dev[0] / mean_dev[1] < 14.0);
  CHECK(mean_dev[1] / mean_dev[2] > 1.2);
  CHECK(mean_dev[1] / mean_dev[2] < 14.0);
}

TEST_CASE("shaped noise is diagonal in the spectral domain") {
  const std::size_t d = 64;
  const double sigma = 0.7;
  const auto mask = spectral::build_mask(d, 0.25, 0.5, 0.0);
  Rng rng = make_rng(605, Stream::kTest);

  const std::size_t n = 30000;
  std::vector<double> bin_power(d, 0.0);
  ParamVector w(d);
  for (std::size_t s = 0; s < n; ++s) {
    for (auto& x : w) x = sigma * rng.gaussian();
    const auto shaped = privacy::shape_noise(w, mask);
    const auto spec = spectral::dft_forward(shaped);
    for (std::size_t k = 0; k < d; ++k) bin_power[k] += std::norm(spec[k]);
  }
  for (std::size_t k = 0; k < d; ++k) {
    const double mc = bin_power[k] / static_cast<double>(n);
    const double want =
        sigma * sigma * static_cast<double>(d) * mask.phi[k] * mask.phi[k];
    CHECK(mc == doctest::Approx(want).epsilon(0.10));
  }
}

}  // TEST_SUITE
