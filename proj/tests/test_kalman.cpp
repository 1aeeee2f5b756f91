#include <doctest.h>

#include <cmath>
#include <vector>

#include "fftkf/kalman.hpp"
#include "fftkf/rng.hpp"

using namespace fftkf::kalman;
using fftkf::Rng;
using fftkf::Stream;
using fftkf::make_rng;

namespace {

double l2(const ParamVector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Small dense SPD matrix for exactness checks: A = D + c * ones outer ones.
std::vector<ParamVector> test_matrix(std::size_t d) {
  std::vector<ParamVector> A(d, ParamVector(d, 0.1));
  for (std::size_t i = 0; i < d; ++i) A[i][i] += 1.0 + 0.05 * i;
  return A;
}

ParamVector matvec(const std::vector<ParamVector>& A, const ParamVector& x) {
  ParamVector y(A.size(), 0.0);
  for (std::size_t i = 0; i < A.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += A[i][j] * x[j];
  }
  return y;
}

}  // namespace

TEST_SUITE("kalman") {

TEST_CASE("state factory zero-initializes") {
  KalmanState s = make_state(6, 0.7, 1.0);
  CHECK(s.g_tilde.size() == 6);
  CHECK(s.d_prev.size() == 6);
  for (double x : s.g_tilde) CHECK(x == 0.0);
  for (double x : s.d_prev) CHECK(x == 0.0);
  CHECK(!s.initialized);
  CHECK_THROWS_AS((void)make_state(4, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)make_state(4, 1.5, 1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)make_state(4, 0.5, 0.0), std::invalid_argument);
}

TEST_CASE("correct blends and hits its endpoints") {
  ParamVector p = {2.0, 0.0};
  ParamVector g = {0.0, 2.0};
  ParamVector mid = correct(p, g, 0.5);
  CHECK(mid[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mid[1] == doctest::Approx(1.0).epsilon(1e-15));

  // gain 1 returns the observation bit-for-bit
  ParamVector full = correct(p, g, 1.0);
  CHECK(full[0] == g[0]);
  CHECK(full[1] == g[1]);

  // fixed point: identical inputs are invariant under any gain
  for (double k : {0.1, 0.5, 1.0}) {
    ParamVector same = correct(p, p, k);
    CHECK(same[0] == doctest::Approx(p[0]).epsilon(1e-15));
    CHECK(same[1] == doctest::Approx(p[1]).epsilon(1e-15));
  }

  CHECK_THROWS_AS((void)correct(p, ParamVector{1.0}, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)correct(p, g, 0.0), std::invalid_argument);
}

TEST_CASE("correction is a coordinatewise convex combination") {
  Rng rng = make_rng(301, Stream::kTest);
  for (int trial = 0; trial < 100; ++trial) {
    ParamVector p(8), g(8);
    for (std::size_t i = 0; i < 8; ++i) {
      p[i] = 5.0 * rng.gaussian();
      g[i] = 5.0 * rng.gaussian();
    }
    const double k = 0.05 + 0.9 * rng.uniform();
    ParamVector out = correct(p, g, k);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(out[i] >= std::min(p[i], g[i]) - 1e-12);
      CHECK(out[i] <= std::max(p[i], g[i]) + 1e-12);
    }
  }
}

TEST_CASE("repeated correction converges geometrically to the observation") {
  const double kappa = 0.5;
  ParamVector target = {3.0, -1.0, 2.0};
  ParamVector g_tilde = {10.0, 10.0, 10.0};
  ParamVector err0(3);
  for (std::size_t i = 0; i < 3; ++i) err0[i] = g_tilde[i] - target[i];

  for (int t = 1; t <= 50; ++t) {
    // prediction carries the previous estimate with zero offset
    g_tilde = correct(g_tilde, target, kappa);
    if (t == 10) {
      const double want = std::pow(1.0 - kappa, 10) * l2(err0);
      ParamVector err(3);
      for (std::size_t i = 0; i < 3; ++i) err[i] = g_tilde[i] - target[i];
      CHECK(l2(err) == doctest::Approx(want).epsilon(1e-9));
    }
  }
  ParamVector err(3);
  for (std::size_t i = 0; i < 3; ++i) err[i] = g_tilde[i] - target[i];
  CHECK(l2(err) < 1e-6);
}

TEST_CASE("predict with a zero previous step returns the estimate") {
  KalmanState s = make_state(4, 0.5, 1.0);
  s.g_tilde = {1.0, 2.0, 3.0, 4.0};
  // d_prev = 0 means both evaluation points coincide.
  std::vector<ParamVector> at_x = {{0.5, 0.5, 0.5, 0.5}, {1.0, 0.0, 0.0, 1.0}};
  Rng rng = make_rng(302, Stream::kFdNoise);
  ParamVector pred = predict(s, at_x, at_x, 100.0, 0.0, rng);
  for (std::size_t i = 0; i < 4; ++i) CHECK(pred[i] == s.g_tilde[i]);
  CHECK(rng.counter() == 0);  // sigma_fd = 0 draws nothing
}

TEST_CASE("prediction is exact on quadratics") {
  // F(x) = 0.5 x^T A x: grad = A x, so the directional FD recovers A d
  // exactly and predict(g_tilde = grad(x_prev)) equals grad(x) to rounding.
  const std::size_t d = 8;
  auto A = test_matrix(d);
  Rng rng = make_rng(303, Stream::kTest);
  ParamVector x_prev(d), step(d);
  for (auto& v : x_prev) v = rng.gaussian();
  for (auto& v : step) v = 0.3 * rng.gaussian();
  ParamVector x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = x_prev[i] + step[i];

  for (double gamma : {1.0, 0.5, 0.05}) {
    KalmanState s = make_state(d, 0.5, gamma);
    s.g_tilde = matvec(A, x_prev);
    s.d_prev = step;

    ParamVector shifted_pt(d);
    for (std::size_t i = 0; i < d; ++i) shifted_pt[i] = x[i] + gamma * step[i];
    std::vector<ParamVector> at_x = {matvec(A, x)};
    std::vector<ParamVector> at_shifted = {matvec(A, shifted_pt)};

    Rng noise = make_rng(304, Stream::kFdNoise);
    ParamVector pred = predict(s, at_x, at_shifted, 1e9, 0.0, noise);
    ParamVector want = matvec(A, x);
    ParamVector err(d);
    for (std::size_t i = 0; i < d; ++i) err[i] = pred[i] - want[i];
    CHECK(l2(err) < 1e-9 * std::max(1.0, l2(want)));
  }
}

TEST_CASE("gamma = 1 is the plain mean difference") {
  KalmanState s = make_state(2, 0.5, 1.0);
  s.g_tilde = {1.0, 1.0};
  std::vector<ParamVector> at_x = {{1.0, 0.0}, {3.0, 0.0}};
  std::vector<ParamVector> at_shifted = {{2.0, 0.0}, {4.0, 0.0}};
  Rng rng = make_rng(305, Stream::kFdNoise);
  ParamVector pred = predict(s, at_x, at_shifted, 100.0, 0.0, rng);
  CHECK(pred[0] == doctest::Approx(2.0).epsilon(1e-15));  // 1 + (3 - 2)
  CHECK(pred[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("predict clips both evaluations") {
  KalmanState s = make_state(2, 0.5, 1.0);
  std::vector<ParamVector> at_x = {{3.0, 4.0}};      // norm 5 -> clip to 1
  std::vector<ParamVector> at_shifted = {{6.0, 8.0}};  // norm 10 -> clip to 1
  Rng rng = make_rng(306, Stream::kFdNoise);
  ParamVector pred = predict(s, at_x, at_shifted, 1.0, 0.0, rng);
  // Both clip to (0.6, 0.8): difference is zero.
  CHECK(pred[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(pred[1] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("predict validates batches") {
  KalmanState s = make_state(2, 0.5, 1.0);
  Rng rng = make_rng(307, Stream::kFdNoise);
  std::vector<ParamVector> one = {{1.0, 2.0}};
  std::vector<ParamVector> two = {{1.0, 2.0}, {3.0, 4.0}};
  CHECK_THROWS_AS((void)predict(s, one, two, 1.0, 0.0, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)predict(s, {}, {}, 1.0, 0.0, rng),
                  std::invalid_argument);
  std::vector<ParamVector> bad = {{1.0, 2.0, 3.0}};
  CHECK_THROWS_AS((void)predict(s, bad, bad, 1.0, 0.0, rng),
                  std::invalid_argument);
}

TEST_CASE("finite-difference noise has the configured scale") {
  const std::size_t d = 16;
  const double sigma_fd = 2.0;
  KalmanState s = make_state(d, 0.5, 1.0);
  std::vector<ParamVector> batch = {ParamVector(d, 0.0)};
  Rng rng = make_rng(308, Stream::kFdNoise);
  const int draws = 2000;
  double sum_sq = 0.0;
  for (int t = 0; t < draws; ++t) {
    ParamVector pred = predict(s, batch, batch, 1.0, sigma_fd, rng);
    for (double x : pred) sum_sq += x * x;  // pure noise here
  }
  const double var = sum_sq / (static_cast<double>(draws) * d);
  CHECK(var == doctest::Approx(sigma_fd * sigma_fd).epsilon(0.1));
}

TEST_CASE("advance stores values and marks initialization") {
  KalmanState s = make_state(2, 0.5, 1.0);
  ParamVector g = {1.5, -2.5};
  ParamVector d_step = {0.1, 0.2};
  KalmanState s1 = advance(s, g, d_step);
  CHECK(s1.initialized);
  CHECK(s1.g_tilde[0] == 1.5);
  CHECK(s1.g_tilde[1] == -2.5);
  CHECK(s1.d_prev[0] == 0.1);
  CHECK(s1.d_prev[1] == 0.2);

  // last writer wins
  KalmanState s2 = advance(s1, {9.0, 9.0}, {0.0, 0.0});
  CHECK(s2.g_tilde[0] == 9.0);
  CHECK(s2.d_prev[0] == 0.0);

  CHECK_THROWS_AS((void)advance(s, ParamVector{1.0}, d_step),
                  std::invalid_argument);
}

}  // TEST_SUITE
