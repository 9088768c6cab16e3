#pragma once

#include "scorelab/errors.hpp"
#include "scorelab/random.hpp"
#include "scorelab/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <vector>

namespace scorelab {

/// Uniform density on the unit squares of [-extent, extent]^2 whose
/// integer-floor coordinates have an even sum.
template <typename Scalar>
struct BasicCheckerboard {
  Scalar extent = Scalar(4);

  bool on_support(Scalar x1, Scalar x2) const {
    using std::floor;
    if (!(x1 >= -extent && x1 < extent && x2 >= -extent && x2 < extent)) return false;
    const long parity = static_cast<long>(floor(x1)) + static_cast<long>(floor(x2));
    return parity % 2 == 0;
  }

  /// Index of the unit square containing (x1, x2), row-major from the lower-left.
  Index cell(Scalar x1, Scalar x2) const {
    using std::floor;
    const Index width = static_cast<Index>(2 * extent);
    const Index col = static_cast<Index>(floor(x1 + extent));
    const Index row = static_cast<Index>(floor(x2 + extent));
    return row * width + col;
  }

  Index cell_count() const {
    const Index width = static_cast<Index>(2 * extent);
    return width * width;
  }
};

using Checkerboard = BasicCheckerboard<double>;

struct RejectionStats {
  long proposals = 0;
  long accepted = 0;
};

/// Rejection sampling from the uniform box; returns exactly n points.
Matrix checkerboard_sample(const Checkerboard& board, Index n, Rng& rng, RejectionStats* stats = nullptr);
/// Fraction of rows that land on the support.
double on_support_fraction(const Checkerboard& board, const Matrix& x);
/// Share of on-support points per on-support square (in cell order).
std::vector<double> on_square_occupancy(const Checkerboard& board, const Matrix& x);

/// Isotropic Gaussian mixture Σ_k w_k N(μ_k, τ_k^2 I).
template <typename Scalar>
struct BasicGaussianMixture {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  VectorType weights;
  MatrixType means;  // K x d
  VectorType stds;

  Index components() const { return weights.size(); }
  Index dim() const { return means.cols(); }

  void validate() const;

  /// Mixture with every variance increased by `extra_var` (the law of x + sqrt(extra_var) z).
  BasicGaussianMixture widened(Scalar extra_var) const {
    BasicGaussianMixture out = *this;
    out.stds = (stds.array().square() + extra_var).sqrt().matrix();
    return out;
  }

  /// Log-density of every row of x (B x d) -> B.
  VectorType log_density(const MatrixType& x, Scalar extra_var = Scalar(0)) const;
  /// ∇ log p per row, computed with log-space responsibilities.
  MatrixType score(const MatrixType& x, Scalar extra_var = Scalar(0)) const;

  static BasicGaussianMixture ring(Index modes = 8, Scalar radius = Scalar(3), Scalar std = Scalar(0.3));
};

using GaussianMixture = BasicGaussianMixture<double>;

inline Matrix gmm_score(const GaussianMixture& mix, const Matrix& x, double extra_var = 0.0) {
  return mix.score(x, extra_var);
}

/// Ancestral sampling. When `labels` is given it receives the component of each row.
Matrix gmm_sample(const GaussianMixture& mix, Index n, Rng& rng, std::vector<Index>* labels = nullptr);

/// One point per line under an "x1,x2,..." header, 17 significant digits.
void write_samples_csv(const Matrix& x, const std::filesystem::path& path);

template <typename Scalar>
void BasicGaussianMixture<Scalar>::validate() const {
  if (weights.size() == 0) throw ParameterError("mixture needs at least one component");
  if (means.rows() != weights.size() || stds.size() != weights.size()) {
    throw DimensionError("mixture weights, means and stds disagree on the component count");
  }
  if ((weights.array() <= 0).any()) throw ParameterError("mixture weights must be positive");
  using std::abs;
  if (abs(weights.sum() - Scalar(1)) > Scalar(1e-12)) throw ParameterError("mixture weights must sum to 1");
  if ((stds.array() <= 0).any()) throw ParameterError("mixture stds must be positive");
}

template <typename Scalar>
auto BasicGaussianMixture<Scalar>::log_density(const MatrixType& x, Scalar extra_var) const -> VectorType {
  if (x.cols() != dim()) throw DimensionError("log_density: point dimension mismatch");
  if (!(extra_var >= 0)) throw ParameterError("extra_var must be >= 0");
  const Index k_count = components();
  const Scalar d = static_cast<Scalar>(dim());
  const Scalar log_two_pi = std::log(Scalar(2) * Scalar(EIGEN_PI));
  VectorType out(x.rows());
  VectorType terms(k_count);
  for (Index b = 0; b < x.rows(); ++b) {
    for (Index k = 0; k < k_count; ++k) {
      const Scalar var = stds[k] * stds[k] + extra_var;
      terms[k] = std::log(weights[k]) - Scalar(0.5) * d * (log_two_pi + std::log(var)) -
                 (x.row(b) - means.row(k)).squaredNorm() / (Scalar(2) * var);
    }
    const Scalar top = terms.maxCoeff();
    out[b] = top + std::log((terms.array() - top).exp().sum());
  }
  return out;
}

template <typename Scalar>
auto BasicGaussianMixture<Scalar>::score(const MatrixType& x, Scalar extra_var) const -> MatrixType {
  if (x.cols() != dim()) throw DimensionError("gmm_score: point dimension mismatch");
  if (!(extra_var >= 0)) throw ParameterError("extra_var must be >= 0");
  const Index k_count = components();
  const Scalar d = static_cast<Scalar>(dim());
  MatrixType out = MatrixType::Zero(x.rows(), dim());
  VectorType logits(k_count);
  VectorType var(k_count);
  for (Index k = 0; k < k_count; ++k) var[k] = stds[k] * stds[k] + extra_var;
  for (Index b = 0; b < x.rows(); ++b) {
    for (Index k = 0; k < k_count; ++k) {
      logits[k] = std::log(weights[k]) - Scalar(0.5) * d * std::log(var[k]) -
                  (x.row(b) - means.row(k)).squaredNorm() / (Scalar(2) * var[k]);
    }
    const VectorType resp = (logits.array() - logits.maxCoeff()).exp().matrix();
    const Scalar total = resp.sum();
    for (Index k = 0; k < k_count; ++k) {
      out.row(b) += (resp[k] / total / var[k]) * (means.row(k) - x.row(b));
    }
  }
  return out;
}

template <typename Scalar>
BasicGaussianMixture<Scalar> BasicGaussianMixture<Scalar>::ring(Index modes, Scalar radius, Scalar std) {
  if (modes < 1) throw ParameterError("ring needs at least one mode");
  BasicGaussianMixture mix;
  mix.weights = VectorType::Constant(modes, Scalar(1) / static_cast<Scalar>(modes));
  mix.means.resize(modes, 2);
  for (Index k = 0; k < modes; ++k) {
    const Scalar angle = Scalar(2) * Scalar(EIGEN_PI) * static_cast<Scalar>(k) / static_cast<Scalar>(modes);
    mix.means(k, 0) = radius * std::cos(angle);
    mix.means(k, 1) = radius * std::sin(angle);
  }
  mix.stds = VectorType::Constant(modes, std);
  mix.validate();
  return mix;
}

}  // namespace scorelab
