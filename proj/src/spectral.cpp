#include "fftkf/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>

namespace fftkf::spectral {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kImagResidueTol = 1e-9;

thread_local std::uint64_t g_fft_calls = 0;

// Twiddle table for size d: w[j] = exp(-2 pi i j / d), j < d/2. Cached per
// thread so transforms stay lock-free and pure.
const std::vector<std::complex<double>>& twiddles_for(std::size_t d) {
  thread_local std::unordered_map<std::size_t, std::vector<std::complex<double>>> cache;
  auto it = cache.find(d);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<double>> w(d / 2);
  for (std::size_t j = 0; j < d / 2; ++j) {
    w[j] = std::polar(1.0, -kTwoPi * static_cast<double>(j) / static_cast<double>(d));
  }
  return cache.emplace(d, std::move(w)).first->second;
}

// Iterative radix-2 decimation-in-time; no normalization.
void fft_in_place(std::vector<std::complex<double>>& a, bool invert) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& w = twiddles_for(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t block = 0; block < n; block += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> tw = w[k * stride];
        if (invert) tw = std::conj(tw);
        const std::complex<double> u = a[block + k];
        const std::complex<double> t = tw * a[block + k + len / 2];
        a[block + k] = u + t;
        a[block + k + len / 2] = u - t;
      }
    }
  }
}

void require_pow2(std::size_t d, const char* what) {
  if (d == 0 || !is_pow2(d)) {
    throw std::invalid_argument(std::string(what) + ": length " + std::to_string(d) +
                                " is not a power of two");
  }
}

}  // namespace

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

Spectrum dft_forward(const ParamVector& v) {
  require_pow2(v.size(), "dft_forward");
  ++g_fft_calls;
  Spectrum a(v.begin(), v.end());
  fft_in_place(a, false);
  return a;
}

ParamVector dft_inverse(const Spectrum& s, double* imag_residue) {
  require_pow2(s.size(), "dft_inverse");
  ++g_fft_calls;
  Spectrum a = s;
  fft_in_place(a, true);
  const double inv_d = 1.0 / static_cast<double>(a.size());
  double imag_sq = 0.0;
  double total_sq = 0.0;
  ParamVector out(a.size());
  for (std::size_t n = 0; n < a.size(); ++n) {
    const double re = a[n].real() * inv_d;
    const double im = a[n].imag() * inv_d;
    out[n] = re;
    imag_sq += im * im;
    total_sq += re * re + im * im;
  }
  const double residue =
      total_sq > 0.0 ? std::sqrt(imag_sq) / std::sqrt(total_sq) : 0.0;
  if (imag_residue != nullptr) *imag_residue = residue;
  if (residue > kImagResidueTol) {
    throw std::runtime_error(
        "dft_inverse: imaginary residue " + std::to_string(residue) +
        " exceeds " + std::to_string(kImagResidueTol) +
        " (non-Hermitian spectrum; check mask symmetry)");
  }
  return out;
}

Spectrum naive_dft(const ParamVector& v) {
  const std::size_t d = v.size();
  if (d == 0) throw std::invalid_argument("naive_dft: empty input");
  Spectrum out(d);
  for (std::size_t k = 0; k < d; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t n = 0; n < d; ++n) {
      // reduce k*n mod d before forming the angle to keep sin/cos accurate
      const std::size_t idx = (k * n) % d;
      acc += v[n] * std::polar(1.0, -kTwoPi * static_cast<double>(idx) /
                                        static_cast<double>(d));
    }
    out[k] = acc;
  }
  return out;
}

SpectralMask build_mask(std::size_t d, double lambda, double rho, double alpha) {
  require_pow2(d, "build_mask");
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw std::invalid_argument("build_mask: lambda must lie in (0,1)");
  }
  if (!(rho > 0.0 && rho < 1.0)) {
    throw std::invalid_argument("build_mask: rho must lie in (0,1)");
  }
  if (!(alpha >= 0.0)) {
    throw std::invalid_argument("build_mask: alpha must be >= 0");
  }
  const std::size_t k0 =
      static_cast<std::size_t>(std::floor(lambda * static_cast<double>(d)));

  // Magnitude classes in increasing order: {0}, {1, d-1}, ..., {d/2}.
  struct Class {
    std::size_t magnitude;
    std::size_t count;  // 1 for DC/Nyquist, 2 for conjugate pairs
  };
  std::vector<Class> classes;
  classes.push_back({0, 1});
  for (std::size_t m = 1; m < (d + 1) / 2; ++m) classes.push_back({m, 2});
  if (d >= 2) classes.push_back({d / 2, 1});

  // Greedy fit: preserve whole classes while they fit in the k0 budget.
  std::vector<bool> preserved(classes.size(), false);
  std::size_t remaining = k0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].count <= remaining) {
      preserved[c] = true;
      remaining -= classes[c].count;
    }
  }

  // Rank attenuated classes by ascending magnitude for the smooth decay.
  std::vector<double> phi_by_class(classes.size(), 1.0);
  std::size_t rank = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (!preserved[c]) {
      phi_by_class[c] = 1.0 - rho * std::exp(-alpha * static_cast<double>(rank));
      ++rank;
    }
  }

  SpectralMask mask;
  mask.phi.assign(d, 1.0);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const std::size_t m = classes[c].magnitude;
    mask.phi[m] = phi_by_class[c];
    mask.phi[(d - m) % d] = phi_by_class[c];
  }
  mask.k0 = k0;
  mask.rho = rho;
  mask.alpha = alpha;
  mask.lambda = lambda;
  return mask;
}

SpectralMask identity_mask(std::size_t d) {
  require_pow2(d, "identity_mask");
  SpectralMask mask;
  mask.phi.assign(d, 1.0);
  mask.k0 = d;
  mask.rho = 0.0;
  mask.alpha = 0.0;
  mask.lambda = 1.0;
  mask.identity_ = true;
  return mask;
}

ParamVector apply_filter(const ParamVector& v, const SpectralMask& m) {
  if (v.empty()) throw std::invalid_argument("apply_filter: empty input");
  const std::size_t padded = next_pow2(v.size());
  if (m.size() != padded) {
    throw std::invalid_argument(
        "apply_filter: mask length " + std::to_string(m.size()) +
        " does not match padded input length " + std::to_string(padded));
  }
  if (m.is_identity()) return v;  // Phi = I is exact, no transform needed
  ParamVector vp = v;
  vp.resize(padded, 0.0);
  Spectrum s = dft_forward(vp);
  for (std::size_t k = 0; k < padded; ++k) s[k] *= m.phi[k];
  ParamVector out = dft_inverse(s);
  out.resize(v.size());
  return out;
}

std::vector<double> operator_eigenvalues(const SpectralMask& m) {
  // A = F^{-1} Phi F is diagonalized by the DFT, so the mask entries are the
  // eigenvalues regardless of mask family.
  std::vector<double> eig = m.phi;
  std::sort(eig.begin(), eig.end(), std::greater<double>());
  return eig;
}

std::uint64_t fft_call_count() { return g_fft_calls; }

void reset_fft_call_count() { g_fft_calls = 0; }

}  // namespace fftkf::spectral
