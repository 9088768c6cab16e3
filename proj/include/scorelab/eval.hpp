#pragma once

#include "scorelab/datasets.hpp"
#include "scorelab/random.hpp"
#include "scorelab/sde.hpp"
#include "scorelab/tensor.hpp"
#include "scorelab/training.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace scorelab {

/// Differentiable vector field on a batch: (B x d) -> (B x d').
using TensorFn = std::function<Tensor(const Tensor& x)>;

/// Σ_i ∂f_i/∂x_i per row (B x 1) via one backward pass per output component.
Tensor jacobian_trace(Tape& tape, const TensorFn& f, const Tensor& x);

/// Pass bar for every Monte Carlo comparison: |difference| / standard error.
inline constexpr double kDiscrepancyBar = 4.0;

struct SteinCheckReport {
  Matrix lhs;        // E[h_i(z) (z_j − μ_j) / σ²], d' x d
  Matrix rhs;        // E[∂h_i/∂z_j]
  Matrix lhs_error;  // standard errors
  Matrix rhs_error;
  /// Standardised paired difference per entry (0 where both sides are
  /// identically equal).
  Matrix discrepancy;
  long samples = 0;
  double max_discrepancy = 0.0;

  bool passed(double bar = kDiscrepancyBar) const { return max_discrepancy < bar; }
};

/// Monte Carlo check of E[h(z)(z − μ)ᵀ]/σ² = E[∇h(z)] for z ~ N(μ, σ² I).
SteinCheckReport stein_check(const TensorFn& h, const Vector& mu, double sigma, long samples, Rng& rng,
                             Index chunk = 10000);

struct TraceConvergenceRow {
  long samples = 0;
  double estimate = 0.0;   // first replicate
  double std_error = 0.0;  // of that estimate
  double rms_error = 0.0;  // over replicates, against the reference
};

struct TraceConvergenceReport {
  double reference = 0.0;
  std::vector<TraceConvergenceRow> rows;
  /// Least-squares slope of log RMS error against log N.
  double slope = 0.0;
};

/// Single estimate of E[s(x')ᵀ(x' − x)]/σ² with x' = x + σ z, plus its standard error.
struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long samples = 0;
};
MeanEstimate stein_trace_estimate(const ScoreFieldFn& s, const Vector& x, double sigma, long samples, Rng& rng,
                                  Index chunk = 10000);

/// Error of the Stein trace estimator against `reference` for each N.
TraceConvergenceReport lcss_trace_convergence(const ScoreFieldFn& s, const Vector& x, double sigma,
                                              const std::vector<long>& ns, int replicates, double reference,
                                              Rng& rng);

/// Monte Carlo E[Tr ∇s(x')] with x' = x + σ z (the smoothed trace).
MeanEstimate smoothed_trace(const TensorFn& s, const Vector& x, double sigma, long samples, Rng& rng,
                            Index chunk = 10000);
/// Exact Tr ∇s at a single point.
double exact_trace(const TensorFn& s, const Vector& x);

struct InterchangeReport {
  double expectation_of_sum = 0.0;
  double sum_of_expectations = 0.0;
  double discrepancy = 0.0;
  /// Combined standard error of the two sides.
  double std_error = 0.0;
  bool common_random_numbers = true;
};

/// E[Σ_i ∂s_i/∂x_i(x')] against Σ_i E[∂s_i/∂x_i(x')]. With common random
/// numbers both sides use the same draws; otherwise component i has its own stream.
InterchangeReport interchange_check(const TensorFn& s, const Vector& x, double sigma, long samples, Rng& rng,
                                    bool common_random_numbers = true);

/// Mean over rows of ‖model(x) − oracle(x)‖².
double score_error(const ScoreFieldFn& model, const ScoreFieldFn& oracle, const Matrix& points);

/// Analytic score of a dataset, widened by `extra_var`; throws CapabilityError for Checkerboard.
ScoreFieldFn oracle_score(DatasetKind kind, double extra_var = 0.0);

struct GridBounds {
  double x_min = -4.0;
  double x_max = 4.0;
  double y_min = -4.0;
  double y_max = 4.0;
};

/// Row 0 is the top of the image (largest x2).
struct DensityGrid {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> counts;
  GridBounds bounds;

  /// Counts scaled so that the fullest cell is 255; all zero when empty.
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> image() const;
};

/// 2-D histogram of the first two columns; points outside the bounds are dropped.
DensityGrid density_grid(const Matrix& samples, const GridBounds& bounds, Index bins);
void write_pgm(const DensityGrid& grid, const std::filesystem::path& path);
/// "row,col,count" per cell.
void write_counts_csv(const DensityGrid& grid, const std::filesystem::path& path);

struct BenchReport {
  std::string method;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  /// Total steps run; the first 10% are warm-up and excluded from the statistics.
  long steps = 0;
  long warmup = 0;

  double cv() const { return mean_ms > 0 ? std_ms / mean_ms : 0.0; }
};

/// Times `steps` optimisation steps (forward, backward and update). Batches
/// are drawn outside the timed region.
BenchReport bench(const TrainerOptions& options, long steps, const std::string& method);

struct OrderingVerdict {
  bool vacuous = true;
  bool holds = true;
  std::string detail;
};

/// time(lcss) ≤ 1.1 time(dsm) < time(fdssm) < time(ssm), checked between
/// consecutive methods of that chain that are present.
OrderingVerdict bench_ordering(const std::vector<BenchReport>& reports);

/// "method,mean_ms,std_ms,steps".
void write_bench_csv(const std::vector<BenchReport>& reports, const std::filesystem::path& path);

}  // namespace scorelab
