#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fftkf/rng.hpp"
#include "fftkf/spectral.hpp"

namespace fftkf::problems {

using spectral::ParamVector;

/// Optimization problem with per-sample structure. Implementations are pure
/// and immutable after construction: evaluations at the same (x, sample)
/// always agree, which the paired-arm experiment design relies on.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::size_t dimension() const = 0;
  virtual std::size_t num_examples() const = 0;

  virtual double per_sample_loss(const ParamVector& x, std::size_t xi) const = 0;

  /// Counts every per-sample gradient evaluation (thread-local; see
  /// gradient_eval_count) and delegates to gradient_impl.
  ParamVector per_sample_gradient(const ParamVector& x, std::size_t xi) const;

  /// Batch evaluation; the default loops per_sample_gradient. Overrides must
  /// produce identical values and advance the eval counter by batch size.
  virtual std::vector<ParamVector> batch_gradients(
      const ParamVector& x, const std::vector<std::size_t>& xis) const;

  /// Exact population gradient, available for synthetic problems only.
  virtual bool has_exact_gradient() const { return false; }
  virtual ParamVector exact_full_gradient(const ParamVector& x) const;

  /// Mean loss over the full dataset (closed form where available).
  virtual double full_loss(const ParamVector& x) const;

  virtual bool has_test_accuracy() const { return false; }
  virtual double test_accuracy(const ParamVector& x) const;

  /// Deterministic starting point drawn from the caller's init stream.
  virtual ParamVector initial_point(Rng& rng) const = 0;

 protected:
  virtual ParamVector gradient_impl(const ParamVector& x,
                                    std::size_t xi) const = 0;
};

/// Per-sample gradient evaluations on this thread; cost instrumentation.
std::uint64_t gradient_eval_count();
void reset_gradient_eval_count();

/// F(x) = 0.5 (x - x*)^T A (x - x*) with A = Q diag(mu..L) Q^T, Q a product
/// of seeded Householder reflectors. Per-sample gradients add tau * zeta_xi
/// where the zeta vectors are seeded and sum to zero over the dataset, so the
/// full-dataset mean gradient is exactly A (x - x*).
class QuadraticProblem : public Problem {
 public:
  QuadraticProblem(std::size_t d, double mu, double L, double tau,
                   std::size_t n_samples, std::uint64_t seed);

  std::size_t dimension() const override { return d_; }
  std::size_t num_examples() const override { return zeta_.size(); }
  double per_sample_loss(const ParamVector& x, std::size_t xi) const override;
  std::vector<ParamVector> batch_gradients(
      const ParamVector& x, const std::vector<std::size_t>& xis) const override;
  bool has_exact_gradient() const override { return true; }
  ParamVector exact_full_gradient(const ParamVector& x) const override;
  double full_loss(const ParamVector& x) const override;
  ParamVector initial_point(Rng& rng) const override;

  double smoothness_L() const { return L_; }
  double strong_convexity_mu() const { return mu_; }
  const ParamVector& optimum() const { return x_star_; }

  /// A v, applied through the reflector factorization in O(d) per reflector.
  ParamVector hessian_apply(const ParamVector& v) const;

 protected:
  ParamVector gradient_impl(const ParamVector& x, std::size_t xi) const override;

 private:
  ParamVector rotate(ParamVector v, bool transpose) const;

  std::size_t d_;
  double mu_, L_, tau_;
  ParamVector eigenvalues_;
  std::vector<ParamVector> reflectors_;  // unit vectors u: H = I - 2 u u^T
  ParamVector x_star_;
  std::vector<ParamVector> zeta_;  // per-sample perturbations, sum to zero
};

/// One IDX-loaded split: N examples of 28x28 pixels in [0,1] plus labels.
struct MnistDataset {
  std::vector<float> images;  // n * 784, row-major
  std::vector<int> labels;    // n entries in [0, 9]
  std::size_t n = 0;
};

/// Parse big-endian IDX pairs (image magic 0x00000803, label magic
/// 0x00000801). subset_n > 0 keeps only the first subset_n examples.
/// Distinct failures: magic mismatch, truncated file, image/label count
/// mismatch; all reported as std::runtime_error with distinguishing text.
MnistDataset load_mnist_idx(const std::string& images_path,
                            const std::string& labels_path,
                            std::size_t subset_n = 0);

/// Serialize a dataset in the same IDX layout load_mnist_idx parses.
void write_mnist_idx(const std::string& images_path,
                     const std::string& labels_path, const MnistDataset& ds);

/// Deterministic MNIST-shaped stand-in: each class is a Gaussian intensity
/// bump at a class-specific location plus pixel noise. Linearly separable
/// enough for the logistic model to train on.
MnistDataset make_synthetic_digits(std::size_t n, std::uint64_t seed);

/// Multinomial logistic regression on 784 features: 10 x (784 + 1)
/// parameters, flattened class-major (weights then bias per class).
class LogisticProblem : public Problem {
 public:
  LogisticProblem(std::shared_ptr<const MnistDataset> train,
                  std::shared_ptr<const MnistDataset> test);

  std::size_t dimension() const override { return 10 * 785; }
  std::size_t num_examples() const override { return train_->n; }
  double per_sample_loss(const ParamVector& x, std::size_t xi) const override;
  bool has_test_accuracy() const override { return test_ && test_->n > 0; }
  double test_accuracy(const ParamVector& x) const override;
  ParamVector initial_point(Rng& rng) const override;

 protected:
  ParamVector gradient_impl(const ParamVector& x, std::size_t xi) const override;

 private:
  std::shared_ptr<const MnistDataset> train_;
  std::shared_ptr<const MnistDataset> test_;
};

/// 784 -> 64 -> 10 network, tanh hidden activation, cross-entropy loss.
/// Flat layout: W1 (64x784), b1 (64), W2 (10x64), b2 (10); d = 50890.
class MlpProblem : public Problem {
 public:
  MlpProblem(std::shared_ptr<const MnistDataset> train,
             std::shared_ptr<const MnistDataset> test);

  static constexpr std::size_t kHidden = 64;
  static constexpr std::size_t kClasses = 10;
  static constexpr std::size_t kInput = 784;

  std::size_t dimension() const override {
    return kInput * kHidden + kHidden + kHidden * kClasses + kClasses;
  }
  std::size_t num_examples() const override { return train_->n; }
  double per_sample_loss(const ParamVector& x, std::size_t xi) const override;
  bool has_test_accuracy() const override { return test_ && test_->n > 0; }
  double test_accuracy(const ParamVector& x) const override;
  ParamVector initial_point(Rng& rng) const override;

 protected:
  ParamVector gradient_impl(const ParamVector& x, std::size_t xi) const override;

 private:
  // loss + optional gradient in one pass; throws on non-finite activations.
  double forward_backward(const ParamVector& x, const float* image, int label,
                          ParamVector* grad_out) const;

  std::shared_ptr<const MnistDataset> train_;
  std::shared_ptr<const MnistDataset> test_;
};

}  // namespace fftkf::problems
