#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfmfg/format.hpp"
#include "rfmfg/rng.hpp"
#include "rfmfg/simd_math.hpp"
#include "rfmfg/tensor.hpp"

namespace rfmfg {

/// Gaussian repulsive kernel K(x - y) = mu * exp(-|x' - y'|^2 / (2 sigma^2)),
/// where x' keeps the first `interaction_dims` coordinates.
struct GaussianKernelSpec {
  double mu = 1.0;
  double sigma = 1.0;
  std::size_t interaction_dims = 2;

  void validate() const {
    require(mu > 0.0 && std::isfinite(mu), "kernels: mu must be positive");
    require(sigma > 0.0 && std::isfinite(sigma), "kernels: sigma must be positive");
    require(interaction_dims >= 1, "kernels: interaction_dims must be >= 1");
  }
};

/// Random Fourier features for a Gaussian kernel.
///
/// Feature layout is interleaved: entry 2j is amplitude*cos(w_j . x') and
/// entry 2j+1 is amplitude*sin(w_j . x'), j = 0 .. r/2-1. With
/// amplitude = sqrt(2 mu / r), |zeta(x)|^2 = mu for every x.
class RandomFeatureBasis {
 public:
  RandomFeatureBasis() = default;
  RandomFeatureBasis(double mu, double sigma, std::uint64_t seed, Matrix frequencies)
      : mu_(mu), sigma_(sigma), seed_(seed), frequencies_(std::move(frequencies)) {
    require(mu_ >= 0.0 && std::isfinite(mu_), "kernels: basis mu must be >= 0");
    require(frequencies_.rows() >= 1, "kernels: basis needs at least one frequency");
    require(frequencies_.cols() >= 1, "kernels: basis needs interaction_dims >= 1");
    by_dim_ = Matrix(frequencies_.cols(), frequencies_.rows());
    for (std::size_t j = 0; j < frequencies_.rows(); ++j)
      for (std::size_t k = 0; k < frequencies_.cols(); ++k) by_dim_(k, j) = frequencies_(j, k);
  }

  std::size_t feature_count() const { return 2 * frequencies_.rows(); }
  std::size_t interaction_dims() const { return frequencies_.cols(); }
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }
  std::uint64_t seed() const { return seed_; }
  double amplitude() const { return std::sqrt(2.0 * mu_ / static_cast<double>(feature_count())); }
  /// Rows are the frequencies w_j, shape (r/2) x d_int.
  const Matrix& frequencies() const { return frequencies_; }
  /// Transposed copy, shape d_int x (r/2).
  const Matrix& frequencies_by_dim() const { return by_dim_; }

  /// Same frequencies with a different intensity; mu = 0 switches the
  /// interaction off while keeping every shape intact.
  RandomFeatureBasis with_mu(double mu) const {
    return RandomFeatureBasis(mu, sigma_, seed_, frequencies_);
  }

  bool operator==(const RandomFeatureBasis&) const = default;

 private:
  double mu_ = 0.0;
  double sigma_ = 1.0;
  std::uint64_t seed_ = 0;
  Matrix frequencies_;
  Matrix by_dim_;
};

/// Draws r/2 frequencies i.i.d. from N(0, sigma^-2 I) on R^{d_int}, row by row.
/// Bases with the same seed share their leading rows regardless of r.
inline RandomFeatureBasis sample_frequencies(const GaussianKernelSpec& spec, std::size_t r,
                                             std::uint64_t seed) {
  spec.validate();
  require(r >= 2 && r % 2 == 0, "kernels: feature count r must be even and >= 2, got " +
                                    std::to_string(r));
  Rng rng(seed, Stream::Frequencies);
  Matrix freq(r / 2, spec.interaction_dims);
  const double scale = 1.0 / spec.sigma;
  for (double& w : freq.data()) w = scale * rng.normal();
  return RandomFeatureBasis(spec.mu, spec.sigma, seed, std::move(freq));
}

namespace detail {
inline void check_state(const RandomFeatureBasis& basis, std::size_t len) {
  if (len < basis.interaction_dims())
    throw std::invalid_argument("kernels: state has " + std::to_string(len) +
                                " coordinates, basis needs " +
                                std::to_string(basis.interaction_dims()));
}

/// Per-thread scratch for phase evaluation.
struct PhaseScratch {
  std::vector<double> theta, cos, sin;
  void resize(std::size_t n) {
    if (theta.size() != n) {
      theta.resize(n);
      cos.resize(n);
      sin.resize(n);
    }
  }
};

inline PhaseScratch& phase_scratch() {
  thread_local PhaseScratch scratch;
  return scratch;
}

/// theta_j = w_j . x' for all j, then cos and sin of every phase. The loops are
/// written so that they vectorize (see RFMFG_SIMD_TRIG in simd_math.hpp).
inline PhaseScratch& eval_phases(const RandomFeatureBasis& basis, std::span<const double> x) {
  const Matrix& wt = basis.frequencies_by_dim();
  const std::size_t half = wt.cols();
  PhaseScratch& s = phase_scratch();
  s.resize(half);
  double* theta = s.theta.data();
  std::fill(theta, theta + half, 0.0);
  for (std::size_t k = 0; k < wt.rows(); ++k) {
    const double xk = x[k];
    const double* wk = wt.row(k).data();
    for (std::size_t j = 0; j < half; ++j) theta[j] += wk[j] * xk;
  }
  simd_cos_sin(theta, s.cos.data(), s.sin.data(), half);
  return s;
}
}  // namespace detail

/// Writes zeta(x) into out (size r).
inline void eval_features_into(const RandomFeatureBasis& basis, std::span<const double> x,
                               std::span<double> out) {
  detail::check_state(basis, x.size());
  const auto& s = detail::eval_phases(basis, x);
  const double amp = basis.amplitude();
  for (std::size_t j = 0; j < s.theta.size(); ++j) {
    out[2 * j] = amp * s.cos[j];
    out[2 * j + 1] = amp * s.sin[j];
  }
}

/// Accumulates sum_i zeta_i(x) into acc (size r).
inline void add_features(const RandomFeatureBasis& basis, std::span<const double> x,
                         std::span<double> acc) {
  const auto& s = detail::eval_phases(basis, x);
  const double amp = basis.amplitude();
  for (std::size_t j = 0; j < s.theta.size(); ++j) {
    acc[2 * j] += amp * s.cos[j];
    acc[2 * j + 1] += amp * s.sin[j];
  }
}

inline std::vector<double> eval_features(const RandomFeatureBasis& basis,
                                         std::span<const double> x) {
  std::vector<double> out(basis.feature_count());
  eval_features_into(basis, x, out);
  return out;
}

/// Jacobian d zeta / dx, shape r x len(x). Columns past d_int are zero.
inline Matrix eval_feature_gradient(const RandomFeatureBasis& basis, std::span<const double> x) {
  detail::check_state(basis, x.size());
  const Matrix& w = basis.frequencies();
  const std::size_t di = w.cols();
  const double amp = basis.amplitude();
  Matrix g(basis.feature_count(), x.size());
  for (std::size_t j = 0; j < w.rows(); ++j) {
    const double theta = dot(w.row(j), x.first(di));
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    for (std::size_t k = 0; k < di; ++k) {
      g(2 * j, k) = -amp * s * w(j, k);
      g(2 * j + 1, k) = amp * c * w(j, k);
    }
  }
  return g;
}

/// Accumulates scale * G(x)^T coeffs into out (size len(x)) without forming G.
inline void add_feature_gradient_transpose(const RandomFeatureBasis& basis,
                                           std::span<const double> x,
                                           std::span<const double> coeffs, double scale,
                                           std::span<double> out) {
  const Matrix& wt = basis.frequencies_by_dim();
  auto& s = detail::eval_phases(basis, x);
  const std::size_t half = wt.cols();
  const double amp = basis.amplitude() * scale;
  double* weight = s.theta.data();  // phases are no longer needed
  for (std::size_t j = 0; j < half; ++j)
    weight[j] = amp * (s.cos[j] * coeffs[2 * j + 1] - s.sin[j] * coeffs[2 * j]);
  for (std::size_t k = 0; k < wt.rows(); ++k) out[k] += dot(wt.row(k), {weight, half});
}

inline double kernel_exact(const GaussianKernelSpec& spec, std::span<const double> x,
                           std::span<const double> y) {
  require(x.size() == y.size(), "kernels: kernel_exact arguments differ in length");
  require(x.size() >= spec.interaction_dims, "kernels: state shorter than interaction_dims");
  double d2 = 0.0;
  for (std::size_t k = 0; k < spec.interaction_dims; ++k) d2 += (x[k] - y[k]) * (x[k] - y[k]);
  return spec.mu * std::exp(-d2 / (2.0 * spec.sigma * spec.sigma));
}

/// zeta(x) . zeta(y) = (2 mu / r) sum_j cos(w_j . (x' - y')).
inline double kernel_approx(const RandomFeatureBasis& basis, std::span<const double> x,
                            std::span<const double> y) {
  require(x.size() == y.size(), "kernels: kernel_approx arguments differ in length");
  detail::check_state(basis, x.size());
  const Matrix& w = basis.frequencies();
  const std::size_t di = w.cols();
  double s = 0.0;
  for (std::size_t j = 0; j < w.rows(); ++j) {
    double theta = 0.0;
    for (std::size_t k = 0; k < di; ++k) theta += w(j, k) * (x[k] - y[k]);
    s += std::cos(theta);
  }
  return 2.0 * basis.mu() / static_cast<double>(basis.feature_count()) * s;
}

struct ApproximationError {
  double linf = 0.0;
  double l2 = 0.0;
};

/// Errors of K(p, 0) - K_r(p, 0) over the rows of `points` (n x d_int).
/// l2 is the root-mean-square over the set.
inline ApproximationError approximation_error(const GaussianKernelSpec& spec,
                                              const RandomFeatureBasis& basis,
                                              const Matrix& points) {
  require(points.rows() >= 1, "kernels: approximation_error needs a nonempty point set");
  require(points.cols() == spec.interaction_dims && points.cols() == basis.interaction_dims(),
          "kernels: evaluation points must have interaction_dims coordinates");
  const std::vector<double> origin(points.cols(), 0.0);
  ApproximationError err;
  double sum_sq = 0.0;
  for (std::size_t p = 0; p < points.rows(); ++p) {
    const double e = kernel_exact(spec, points.row(p), origin) - kernel_approx(basis, points.row(p), origin);
    err.linf = std::max(err.linf, std::abs(e));
    sum_sq += e * e;
  }
  err.l2 = std::sqrt(sum_sq / static_cast<double>(points.rows()));
  return err;
}

enum class EvaluationSet { Grid, Sampled };

struct KernelErrorReport {
  std::vector<std::size_t> feature_counts;
  std::vector<double> linf_errors;
  std::vector<double> l2_errors;
  EvaluationSet evaluation_set = EvaluationSet::Grid;

  void write_csv(std::ostream& os) const {
    os << "r,linf,l2\n";
    for (std::size_t i = 0; i < feature_counts.size(); ++i)
      os << feature_counts[i] << ',' << format_double(linf_errors[i]) << ','
         << format_double(l2_errors[i]) << '\n';
  }
};

/// One basis per r, all drawn from the same seed (nested frequency prefixes).
inline KernelErrorReport kernel_error_report(const GaussianKernelSpec& spec,
                                             std::span<const std::size_t> r_values,
                                             std::uint64_t seed, const Matrix& points,
                                             EvaluationSet tag) {
  KernelErrorReport rep;
  rep.evaluation_set = tag;
  for (std::size_t r : r_values) {
    const auto err = approximation_error(spec, sample_frequencies(spec, r, seed), points);
    rep.feature_counts.push_back(r);
    rep.linf_errors.push_back(err.linf);
    rep.l2_errors.push_back(err.l2);
  }
  return rep;
}

/// Uniform tensor grid with `per_axis` points per coordinate on [-half, half]^dims.
inline Matrix uniform_grid(std::size_t dims, std::size_t per_axis, double half_width) {
  require(dims >= 1 && per_axis >= 2, "kernels: grid needs dims >= 1 and >= 2 points per axis");
  std::size_t n = 1;
  for (std::size_t k = 0; k < dims; ++k) n *= per_axis;
  Matrix g(n, dims);
  const double step = 2.0 * half_width / static_cast<double>(per_axis - 1);
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t idx = p;
    for (std::size_t k = dims; k-- > 0;) {
      g(p, k) = -half_width + step * static_cast<double>(idx % per_axis);
      idx /= per_axis;
    }
  }
  return g;
}

/// 51 x 51 grid on [-2.5, 2.5]^2.
inline Matrix default_grid_2d() { return uniform_grid(2, 51, 2.5); }

// Basis text record:
//   rfmfg-basis v1
//   mu sigma d_int r seed
//   one frequency row per line
// Numbers use 17 significant digits, which round-trips doubles exactly.
inline void write_basis(std::ostream& os, const RandomFeatureBasis& b) {
  os << "rfmfg-basis v1\n"
     << format_double(b.mu()) << ' ' << format_double(b.sigma()) << ' ' << b.interaction_dims()
     << ' ' << b.feature_count() << ' ' << b.seed() << '\n';
  const Matrix& w = b.frequencies();
  for (std::size_t j = 0; j < w.rows(); ++j) {
    for (std::size_t k = 0; k < w.cols(); ++k) os << (k ? " " : "") << format_double(w(j, k));
    os << '\n';
  }
}

inline RandomFeatureBasis read_basis(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != "rfmfg-basis" || version != "v1")
    throw std::invalid_argument("kernels: not an rfmfg-basis v1 record");
  std::string mu, sigma, di, r, seed;
  is >> mu >> sigma >> di >> r >> seed;
  const std::size_t dims = parse_u64(di);
  const std::size_t count = parse_u64(r);
  require(count >= 2 && count % 2 == 0, "kernels: basis record has invalid r");
  Matrix w(count / 2, dims);
  for (double& v : w.data()) {
    std::string tok;
    if (!(is >> tok)) throw std::invalid_argument("kernels: truncated basis record");
    v = parse_double(tok);
  }
  return RandomFeatureBasis(parse_double(mu), parse_double(sigma), parse_u64(seed), std::move(w));
}

}  // namespace rfmfg
