#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace fftkf::spectral {

/// Dense real vector; used interchangeably for parameters, gradients, noise
/// and parameter steps.
using ParamVector = std::vector<double>;

/// DFT image of a ParamVector (same length).
using Spectrum = std::vector<std::complex<double>>;

std::size_t next_pow2(std::size_t n);
bool is_pow2(std::size_t n);

/// Per-frequency attenuation profile with Hermitian symmetry:
/// phi[k] == phi[(d-k) mod d], every entry in [1-rho, 1].
///
/// "Frequency" is the magnitude m(k) = min(k, d-k). The builder preserves
/// exactly k0 bins, chosen as whole magnitude classes ({0}, {m, d-m}, {d/2})
/// in increasing-magnitude order; a class that no longer fits is skipped, so
/// the Nyquist singleton can fill a final odd slot. Attenuated classes get
/// phi = 1 - rho * exp(-alpha * rank), where rank orders the attenuated
/// magnitudes ascending; alpha = 0 is the flat step mask.
struct SpectralMask {
  std::vector<double> phi;
  std::size_t k0 = 0;    // number of preserved (phi == 1) bins
  double rho = 0.0;      // attenuation ratio
  double alpha = 0.0;    // decay rate; 0 encodes the step mask
  double lambda = 0.0;   // pivot fraction, k0 = floor(lambda * d)

  std::size_t size() const { return phi.size(); }
  bool is_identity() const { return identity_; }

  bool identity_ = false;  // set by identity_mask(); build_mask never yields it
};

/// Unnormalized forward DFT: z_hat[k] = sum_n z[n] e^{-2 pi i k n / d}.
/// Radix-2 only; throws std::invalid_argument for non-power-of-two lengths.
Spectrum dft_forward(const ParamVector& v);

/// Inverse DFT carrying the 1/d factor. The imaginary residue of the result
/// (l2 of imaginary parts relative to the full output) is discarded below
/// 1e-9; above that a std::runtime_error is raised, since a real pipeline
/// only produces a non-Hermitian spectrum through an asymmetric-mask bug.
/// Pass `imag_residue` to observe the measured residue.
ParamVector dft_inverse(const Spectrum& s, double* imag_residue = nullptr);

/// O(d^2) direct evaluation of the DFT sum; test oracle for dft_forward.
/// Accepts any d >= 1.
Spectrum naive_dft(const ParamVector& v);

/// Build a Hermitian-symmetric attenuation mask (see SpectralMask).
/// Preconditions: d a power of two, lambda in (0,1), rho in (0,1), alpha >= 0.
SpectralMask build_mask(std::size_t d, double lambda, double rho, double alpha);

/// All-pass mask (phi == 1); apply_filter short-circuits it exactly.
SpectralMask identity_mask(std::size_t d);

/// G_Phi(v) = F^{-1}(phi ⊙ F(v)). Inputs shorter than the mask are
/// zero-padded to the mask length (which must equal next_pow2(v.size())) and
/// truncated after the inverse transform, so padding is invisible to callers.
/// Non-expansive: ||out||_2 <= max_k |phi_k| * ||v||_2.
ParamVector apply_filter(const ParamVector& v, const SpectralMask& m);

/// Eigenvalues of A = F^{-1} Phi F as a multiset (sorted descending). For the
/// step mask this is {1 x k0, (1-rho) x (d-k0)}; for a smooth mask it is the
/// d mask entries.
std::vector<double> operator_eigenvalues(const SpectralMask& m);

/// Count of dft_forward/dft_inverse invocations on this thread; the identity
/// short-circuit performs none. Used by the cost instrumentation.
std::uint64_t fft_call_count();
void reset_fft_call_count();

}  // namespace fftkf::spectral
