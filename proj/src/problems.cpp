#include "fftkf/problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace fftkf::problems {
namespace {

thread_local std::uint64_t g_gradient_evals = 0;

double dot(const ParamVector& a, const ParamVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

constexpr std::size_t kReflectors = 8;
constexpr std::size_t kImageSide = 28;
constexpr std::size_t kImagePixels = kImageSide * kImageSide;
constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

ParamVector Problem::per_sample_gradient(const ParamVector& x,
                                         std::size_t xi) const {
  ++g_gradient_evals;
  return gradient_impl(x, xi);
}

std::vector<ParamVector> Problem::batch_gradients(
    const ParamVector& x, const std::vector<std::size_t>& xis) const {
  std::vector<ParamVector> out;
  out.reserve(xis.size());
  for (std::size_t xi : xis) out.push_back(per_sample_gradient(x, xi));
  return out;
}

ParamVector Problem::exact_full_gradient(const ParamVector&) const {
  throw std::logic_error("problem does not expose an exact gradient");
}

double Problem::full_loss(const ParamVector& x) const {
  double s = 0.0;
  for (std::size_t xi = 0; xi < num_examples(); ++xi) {
    s += per_sample_loss(x, xi);
  }
  return s / static_cast<double>(num_examples());
}

double Problem::test_accuracy(const ParamVector&) const {
  throw std::logic_error("problem has no labeled test split");
}

std::uint64_t gradient_eval_count() { return g_gradient_evals; }
void reset_gradient_eval_count() { g_gradient_evals = 0; }

QuadraticProblem::QuadraticProblem(std::size_t d, double mu, double L,
                                   double tau, std::size_t n_samples,
                                   std::uint64_t seed)
    : d_(d), mu_(mu), L_(L), tau_(tau) {
  if (d == 0) throw std::invalid_argument("quadratic: dimension must be >= 1");
  if (!(mu > 0.0 && mu <= L)) {
    throw std::invalid_argument("quadratic: need 0 < mu <= L");
  }
  if (tau < 0.0) throw std::invalid_argument("quadratic: tau must be >= 0");
  if (n_samples == 0) {
    throw std::invalid_argument("quadratic: need at least one sample");
  }

  eigenvalues_.resize(d_);
  for (std::size_t i = 0; i < d_; ++i) {
    eigenvalues_[i] =
        d_ == 1 ? L
                : mu + (L - mu) * static_cast<double>(i) /
                          static_cast<double>(d_ - 1);
  }

  Rng rng = make_rng(seed, Stream::kInit);
  reflectors_.reserve(kReflectors);
  for (std::size_t r = 0; r < kReflectors; ++r) {
    ParamVector u(d_);
    double norm_sq = 0.0;
    for (auto& v : u) {
      v = rng.gaussian();
      norm_sq += v * v;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& v : u) v *= inv;
    reflectors_.push_back(std::move(u));
  }

  x_star_.resize(d_);
  for (auto& v : x_star_) v = rng.gaussian();

  zeta_.resize(n_samples);
  if (tau_ > 0.0 && n_samples > 1) {
    ParamVector sum(d_, 0.0);
    for (std::size_t s = 0; s + 1 < n_samples; ++s) {
      zeta_[s].resize(d_);
      for (std::size_t i = 0; i < d_; ++i) {
        zeta_[s][i] = rng.gaussian();
        sum[i] += zeta_[s][i];
      }
    }
    zeta_.back().resize(d_);
    for (std::size_t i = 0; i < d_; ++i) zeta_.back()[i] = -sum[i];
  }
  // tau = 0 or a single sample: all-zero perturbations, left empty.
}

ParamVector QuadraticProblem::rotate(ParamVector v, bool transpose) const {
  // Q = H_0 H_1 ... H_{k-1}; applying Q runs reflectors right to left.
  if (transpose) {
    for (std::size_t r = 0; r < reflectors_.size(); ++r) {
      const double c = 2.0 * dot(reflectors_[r], v);
      for (std::size_t i = 0; i < d_; ++i) v[i] -= c * reflectors_[r][i];
    }
  } else {
    for (std::size_t r = reflectors_.size(); r-- > 0;) {
      const double c = 2.0 * dot(reflectors_[r], v);
      for (std::size_t i = 0; i < d_; ++i) v[i] -= c * reflectors_[r][i];
    }
  }
  return v;
}

ParamVector QuadraticProblem::hessian_apply(const ParamVector& v) const {
  if (v.size() != d_) {
    throw std::invalid_argument("quadratic: dimension mismatch");
  }
  ParamVector w = rotate(v, /*transpose=*/true);
  for (std::size_t i = 0; i < d_; ++i) w[i] *= eigenvalues_[i];
  return rotate(std::move(w), /*transpose=*/false);
}

double QuadraticProblem::per_sample_loss(const ParamVector& x,
                                         std::size_t xi) const {
  if (xi >= zeta_.size()) throw std::out_of_range("quadratic: sample index");
  ParamVector e(d_);
  for (std::size_t i = 0; i < d_; ++i) e[i] = x[i] - x_star_[i];
  double loss = 0.5 * dot(e, hessian_apply(e));
  if (tau_ > 0.0 && !zeta_[xi].empty()) loss += tau_ * dot(zeta_[xi], e);
  return loss;
}

ParamVector QuadraticProblem::gradient_impl(const ParamVector& x,
                                            std::size_t xi) const {
  if (xi >= zeta_.size()) throw std::out_of_range("quadratic: sample index");
  ParamVector e(d_);
  for (std::size_t i = 0; i < d_; ++i) e[i] = x[i] - x_star_[i];
  ParamVector g = hessian_apply(e);
  if (tau_ > 0.0 && !zeta_[xi].empty()) {
    for (std::size_t i = 0; i < d_; ++i) g[i] += tau_ * zeta_[xi][i];
  }
  return g;
}

std::vector<ParamVector> QuadraticProblem::batch_gradients(
    const ParamVector& x, const std::vector<std::size_t>& xis) const {
  // The common A(x - x*) term is shared across the batch; computing it once
  // keeps large-batch steps O(B d) instead of O(B d k).
  ParamVector e(d_);
  for (std::size_t i = 0; i < d_; ++i) e[i] = x[i] - x_star_[i];
  const ParamVector base = hessian_apply(e);
  std::vector<ParamVector> out;
  out.reserve(xis.size());
  for (std::size_t xi : xis) {
    if (xi >= zeta_.size()) throw std::out_of_range("quadratic: sample index");
    ++g_gradient_evals;
    ParamVector g = base;
    if (tau_ > 0.0 && !zeta_[xi].empty()) {
      for (std::size_t i = 0; i < d_; ++i) g[i] += tau_ * zeta_[xi][i];
    }
    out.push_back(std::move(g));
  }
  return out;
}

ParamVector QuadraticProblem::exact_full_gradient(const ParamVector& x) const {
  ParamVector e(d_);
  for (std::size_t i = 0; i < d_; ++i) e[i] = x[i] - x_star_[i];
  return hessian_apply(e);
}

double QuadraticProblem::full_loss(const ParamVector& x) const {
  ParamVector e(d_);
  for (std::size_t i = 0; i < d_; ++i) e[i] = x[i] - x_star_[i];
  return 0.5 * dot(e, hessian_apply(e));
}

ParamVector QuadraticProblem::initial_point(Rng& rng) const {
  ParamVector x(d_);
  for (std::size_t i = 0; i < d_; ++i) x[i] = x_star_[i] + rng.gaussian();
  return x;
}

namespace {

std::uint32_t read_u32_be(const std::string& buf, std::size_t offset,
                          const std::string& path) {
  if (offset + 4 > buf.size()) {
    throw std::runtime_error("idx file truncated: " + path);
  }
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset]))
          << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset + 1]))
          << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset + 2]))
          << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset + 3]));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open idx file: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return buf;
}

void write_u32_be(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

MnistDataset load_mnist_idx(const std::string& images_path,
                            const std::string& labels_path,
                            std::size_t subset_n) {
  const std::string img = read_file(images_path);
  const std::uint32_t img_magic = read_u32_be(img, 0, images_path);
  if (img_magic != kImageMagic) {
    throw std::runtime_error("idx magic mismatch in " + images_path +
                             ": expected 2051 (images), got " +
                             std::to_string(img_magic));
  }
  const std::uint32_t n_img = read_u32_be(img, 4, images_path);
  const std::uint32_t rows = read_u32_be(img, 8, images_path);
  const std::uint32_t cols = read_u32_be(img, 12, images_path);
  if (rows != kImageSide || cols != kImageSide) {
    throw std::runtime_error("idx image dimensions are not 28x28 in " +
                             images_path);
  }
  const std::size_t need_img =
      16 + static_cast<std::size_t>(n_img) * kImagePixels;
  if (img.size() < need_img) {
    throw std::runtime_error("idx file truncated: " + images_path);
  }

  const std::string lab = read_file(labels_path);
  const std::uint32_t lab_magic = read_u32_be(lab, 0, labels_path);
  if (lab_magic != kLabelMagic) {
    throw std::runtime_error("idx magic mismatch in " + labels_path +
                             ": expected 2049 (labels), got " +
                             std::to_string(lab_magic));
  }
  const std::uint32_t n_lab = read_u32_be(lab, 4, labels_path);
  if (lab.size() < 8 + static_cast<std::size_t>(n_lab)) {
    throw std::runtime_error("idx file truncated: " + labels_path);
  }
  if (n_img != n_lab) {
    throw std::runtime_error(
        "idx count mismatch: " + std::to_string(n_img) + " images in " +
        images_path + " vs " + std::to_string(n_lab) + " labels in " +
        labels_path);
  }

  MnistDataset ds;
  ds.n = subset_n > 0 ? std::min<std::size_t>(subset_n, n_img) : n_img;
  ds.images.resize(ds.n * kImagePixels);
  ds.labels.resize(ds.n);
  for (std::size_t i = 0; i < ds.n * kImagePixels; ++i) {
    ds.images[i] =
        static_cast<float>(static_cast<unsigned char>(img[16 + i])) / 255.0f;
  }
  for (std::size_t i = 0; i < ds.n; ++i) {
    const int label = static_cast<unsigned char>(lab[8 + i]);
    if (label > 9) {
      throw std::runtime_error("idx label out of range in " + labels_path);
    }
    ds.labels[i] = label;
  }
  return ds;
}

void write_mnist_idx(const std::string& images_path,
                     const std::string& labels_path, const MnistDataset& ds) {
  {
    std::ofstream out(images_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write idx file: " + images_path);
    write_u32_be(out, kImageMagic);
    write_u32_be(out, static_cast<std::uint32_t>(ds.n));
    write_u32_be(out, kImageSide);
    write_u32_be(out, kImageSide);
    std::vector<unsigned char> bytes(ds.n * kImagePixels);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      const double v = std::clamp(static_cast<double>(ds.images[i]), 0.0, 1.0);
      bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  {
    std::ofstream out(labels_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write idx file: " + labels_path);
    write_u32_be(out, kLabelMagic);
    write_u32_be(out, static_cast<std::uint32_t>(ds.n));
    std::vector<unsigned char> bytes(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) {
      bytes[i] = static_cast<unsigned char>(ds.labels[i]);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
}

MnistDataset make_synthetic_digits(std::size_t n, std::uint64_t seed) {
  // Class templates: intensity bumps at ten points on a ring.
  std::vector<float> templates(10 * kImagePixels);
  for (int c = 0; c < 10; ++c) {
    const double angle = 2.0 * M_PI * c / 10.0;
    const double cr = 14.0 + 8.0 * std::cos(angle);
    const double cc = 14.0 + 8.0 * std::sin(angle);
    for (std::size_t r = 0; r < kImageSide; ++r) {
      for (std::size_t col = 0; col < kImageSide; ++col) {
        const double dr = static_cast<double>(r) - cr;
        const double dc = static_cast<double>(col) - cc;
        templates[c * kImagePixels + r * kImageSide + col] =
            static_cast<float>(std::exp(-(dr * dr + dc * dc) / 18.0));
      }
    }
  }

  MnistDataset ds;
  ds.n = n;
  ds.images.resize(n * kImagePixels);
  ds.labels.resize(n);
  Rng rng = make_rng(seed, Stream::kInit);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.next_u64() % 10);
    ds.labels[i] = label;
    const float* tmpl = &templates[label * kImagePixels];
    float* img = &ds.images[i * kImagePixels];
    for (std::size_t p = 0; p < kImagePixels; ++p) {
      const double v =
          std::clamp(tmpl[p] + 0.15 * rng.gaussian(), 0.0, 1.0);
      // Quantize to the 8-bit grid now so an IDX write/load round trip is
      // lossless and in-memory and on-disk datasets agree exactly.
      img[p] = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
    }
  }
  return ds;
}

LogisticProblem::LogisticProblem(std::shared_ptr<const MnistDataset> train,
                                 std::shared_ptr<const MnistDataset> test)
    : train_(std::move(train)), test_(std::move(test)) {
  if (!train_ || train_->n == 0) {
    throw std::invalid_argument("logistic: empty training set");
  }
}

namespace {

// Stable softmax utilities shared by the linear and MLP models.
void softmax_inplace(std::vector<double>& z) {
  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

double log_sum_exp(const std::vector<double>& z) {
  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  return zmax + std::log(sum);
}

}  // namespace

double LogisticProblem::per_sample_loss(const ParamVector& x,
                                        std::size_t xi) const {
  if (xi >= train_->n) throw std::out_of_range("logistic: sample index");
  const float* img = &train_->images[xi * kImagePixels];
  std::vector<double> z(10);
  for (int c = 0; c < 10; ++c) {
    const double* w = &x[static_cast<std::size_t>(c) * 785];
    double acc = w[784];  // bias
    for (std::size_t j = 0; j < kImagePixels; ++j) acc += w[j] * img[j];
    z[c] = acc;
  }
  return log_sum_exp(z) - z[static_cast<std::size_t>(train_->labels[xi])];
}

ParamVector LogisticProblem::gradient_impl(const ParamVector& x,
                                           std::size_t xi) const {
  if (xi >= train_->n) throw std::out_of_range("logistic: sample index");
  const float* img = &train_->images[xi * kImagePixels];
  const int label = train_->labels[xi];
  std::vector<double> p(10);
  for (int c = 0; c < 10; ++c) {
    const double* w = &x[static_cast<std::size_t>(c) * 785];
    double acc = w[784];
    for (std::size_t j = 0; j < kImagePixels; ++j) acc += w[j] * img[j];
    p[c] = acc;
  }
  softmax_inplace(p);
  ParamVector g(dimension());
  for (int c = 0; c < 10; ++c) {
    const double delta = p[c] - (c == label ? 1.0 : 0.0);
    double* gc = &g[static_cast<std::size_t>(c) * 785];
    for (std::size_t j = 0; j < kImagePixels; ++j) gc[j] = delta * img[j];
    gc[784] = delta;
  }
  return g;
}

double LogisticProblem::test_accuracy(const ParamVector& x) const {
  if (!test_ || test_->n == 0) {
    throw std::logic_error("logistic: no test split");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_->n; ++i) {
    const float* img = &test_->images[i * kImagePixels];
    int best = 0;
    double best_z = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < 10; ++c) {
      const double* w = &x[static_cast<std::size_t>(c) * 785];
      double acc = w[784];
      for (std::size_t j = 0; j < kImagePixels; ++j) acc += w[j] * img[j];
      if (acc > best_z) {
        best_z = acc;
        best = c;
      }
    }
    if (best == test_->labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_->n);
}

ParamVector LogisticProblem::initial_point(Rng&) const {
  return ParamVector(dimension(), 0.0);  // standard zero init for the linear model
}

MlpProblem::MlpProblem(std::shared_ptr<const MnistDataset> train,
                       std::shared_ptr<const MnistDataset> test)
    : train_(std::move(train)), test_(std::move(test)) {
  if (!train_ || train_->n == 0) {
    throw std::invalid_argument("mlp: empty training set");
  }
}

double MlpProblem::forward_backward(const ParamVector& x, const float* image,
                                    int label, ParamVector* grad_out) const {
  const std::size_t w1_off = 0;
  const std::size_t b1_off = kInput * kHidden;
  const std::size_t w2_off = b1_off + kHidden;
  const std::size_t b2_off = w2_off + kHidden * kClasses;

  std::vector<double> h(kHidden);
  for (std::size_t k = 0; k < kHidden; ++k) {
    const double* row = &x[w1_off + k * kInput];
    double a = x[b1_off + k];
    for (std::size_t j = 0; j < kInput; ++j) a += row[j] * image[j];
    if (!std::isfinite(a)) {
      throw std::runtime_error("mlp: non-finite activation in hidden layer");
    }
    h[k] = std::tanh(a);
  }

  std::vector<double> z(kClasses);
  for (std::size_t c = 0; c < kClasses; ++c) {
    const double* row = &x[w2_off + c * kHidden];
    double a = x[b2_off + c];
    for (std::size_t k = 0; k < kHidden; ++k) a += row[k] * h[k];
    if (!std::isfinite(a)) {
      throw std::runtime_error("mlp: non-finite activation in output layer");
    }
    z[c] = a;
  }

  const double loss = log_sum_exp(z) - z[static_cast<std::size_t>(label)];
  if (grad_out == nullptr) return loss;

  std::vector<double> p = z;
  softmax_inplace(p);
  ParamVector& g = *grad_out;
  g.assign(dimension(), 0.0);

  std::vector<double> dh(kHidden, 0.0);
  for (std::size_t c = 0; c < kClasses; ++c) {
    const double dz = p[c] - (static_cast<int>(c) == label ? 1.0 : 0.0);
    double* gw2 = &g[w2_off + c * kHidden];
    const double* w2 = &x[w2_off + c * kHidden];
    for (std::size_t k = 0; k < kHidden; ++k) {
      gw2[k] = dz * h[k];
      dh[k] += dz * w2[k];
    }
    g[b2_off + c] = dz;
  }
  for (std::size_t k = 0; k < kHidden; ++k) {
    const double da = dh[k] * (1.0 - h[k] * h[k]);  // tanh'
    double* gw1 = &g[w1_off + k * kInput];
    for (std::size_t j = 0; j < kInput; ++j) gw1[j] = da * image[j];
    g[b1_off + k] = da;
  }
  return loss;
}

double MlpProblem::per_sample_loss(const ParamVector& x, std::size_t xi) const {
  if (xi >= train_->n) throw std::out_of_range("mlp: sample index");
  return forward_backward(x, &train_->images[xi * kImagePixels],
                          train_->labels[xi], nullptr);
}

ParamVector MlpProblem::gradient_impl(const ParamVector& x,
                                      std::size_t xi) const {
  if (xi >= train_->n) throw std::out_of_range("mlp: sample index");
  ParamVector g;
  forward_backward(x, &train_->images[xi * kImagePixels], train_->labels[xi],
                   &g);
  return g;
}

double MlpProblem::test_accuracy(const ParamVector& x) const {
  if (!test_ || test_->n == 0) throw std::logic_error("mlp: no test split");
  const std::size_t w1_off = 0;
  const std::size_t b1_off = kInput * kHidden;
  const std::size_t w2_off = b1_off + kHidden;
  const std::size_t b2_off = w2_off + kHidden * kClasses;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_->n; ++i) {
    const float* img = &test_->images[i * kImagePixels];
    std::vector<double> h(kHidden);
    for (std::size_t k = 0; k < kHidden; ++k) {
      const double* row = &x[w1_off + k * kInput];
      double a = x[b1_off + k];
      for (std::size_t j = 0; j < kInput; ++j) a += row[j] * img[j];
      h[k] = std::tanh(a);
    }
    int best = 0;
    double best_z = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < kClasses; ++c) {
      const double* row = &x[w2_off + c * kHidden];
      double a = x[b2_off + c];
      for (std::size_t k = 0; k < kHidden; ++k) a += row[k] * h[k];
      if (a > best_z) {
        best_z = a;
        best = static_cast<int>(c);
      }
    }
    if (best == test_->labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_->n);
}

ParamVector MlpProblem::initial_point(Rng& rng) const {
  ParamVector x(dimension(), 0.0);
  const std::size_t b1_off = kInput * kHidden;
  const std::size_t w2_off = b1_off + kHidden;
  const std::size_t b2_off = w2_off + kHidden * kClasses;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(kInput));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(kHidden));
  for (std::size_t i = 0; i < b1_off; ++i) x[i] = s1 * rng.gaussian();
  for (std::size_t i = w2_off; i < b2_off; ++i) x[i] = s2 * rng.gaussian();
  return x;  // biases stay zero
}

}  // namespace fftkf::problems
