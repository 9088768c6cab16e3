#include "scorelab/datasets.hpp"

#include "scorelab/errors.hpp"

#include <cstdio>
#include <fstream>

namespace scorelab {

Matrix checkerboard_sample(const Checkerboard& board, Index n, Rng& rng, RejectionStats* stats) {
  if (n < 0) throw ParameterError("checkerboard_sample: n must be >= 0");
  Matrix out(n, 2);
  Index filled = 0;
  RejectionStats local;
  while (filled < n) {
    const double x1 = rng.uniform(-board.extent, board.extent);
    const double x2 = rng.uniform(-board.extent, board.extent);
    ++local.proposals;
    if (!board.on_support(x1, x2)) continue;
    out(filled, 0) = x1;
    out(filled, 1) = x2;
    ++filled;
  }
  local.accepted = static_cast<long>(n);
  if (stats) *stats = local;
  return out;
}

double on_support_fraction(const Checkerboard& board, const Matrix& x) {
  if (x.cols() != 2) throw DimensionError("checkerboard points must be 2-D");
  if (x.rows() == 0) return 0.0;
  Index hits = 0;
  for (Index i = 0; i < x.rows(); ++i) hits += board.on_support(x(i, 0), x(i, 1)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

std::vector<double> on_square_occupancy(const Checkerboard& board, const Matrix& x) {
  if (x.cols() != 2) throw DimensionError("checkerboard points must be 2-D");
  std::vector<double> counts(static_cast<std::size_t>(board.cell_count()), 0.0);
  double total = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    if (!board.on_support(x(i, 0), x(i, 1))) continue;
    counts[static_cast<std::size_t>(board.cell(x(i, 0), x(i, 1)))] += 1.0;
    total += 1.0;
  }
  std::vector<double> shares;
  const Index width = static_cast<Index>(2 * board.extent);
  for (Index cell = 0; cell < board.cell_count(); ++cell) {
    const double cx = -board.extent + static_cast<double>(cell % width) + 0.5;
    const double cy = -board.extent + static_cast<double>(cell / width) + 0.5;
    if (!board.on_support(cx, cy)) continue;
    shares.push_back(total > 0 ? counts[static_cast<std::size_t>(cell)] / total : 0.0);
  }
  return shares;
}

Matrix gmm_sample(const GaussianMixture& mix, Index n, Rng& rng, std::vector<Index>* labels) {
  mix.validate();
  if (n < 0) throw ParameterError("gmm_sample: n must be >= 0");
  Matrix out(n, mix.dim());
  if (labels) labels->assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    const double u = rng.uniform();
    Index k = 0;
    double cumulative = mix.weights[0];
    while (u >= cumulative && k + 1 < mix.components()) cumulative += mix.weights[++k];
    for (Index j = 0; j < mix.dim(); ++j) out(i, j) = mix.means(k, j) + mix.stds[k] * rng.normal();
    if (labels) (*labels)[static_cast<std::size_t>(i)] = k;
  }
  return out;
}

void write_samples_csv(const Matrix& x, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  for (Index j = 0; j < x.cols(); ++j) file << (j ? "," : "") << 'x' << j + 1;
  file << '\n';
  char buffer[64];
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      std::snprintf(buffer, sizeof buffer, "%.17g", x(i, j));
      file << (j ? "," : "") << buffer;
    }
    file << '\n';
  }
  if (!file) throw IoError("write failed for " + path.string());
}

}  // namespace scorelab
