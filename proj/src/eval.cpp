#include "scorelab/eval.hpp"

#include "scorelab/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

namespace scorelab {

namespace {

struct Moments {
  double sum = 0.0;
  double squares = 0.0;
  long count = 0;

  void add(double v) {
    sum += v;
    squares += v * v;
    ++count;
  }
  double mean() const { return count ? sum / count : 0.0; }
  double variance() const {
    if (count < 2) return 0.0;
    const double m = mean();
    return std::max(0.0, (squares - count * m * m) / (count - 1));
  }
  double std_error() const { return count ? std::sqrt(variance() / count) : 0.0; }
};

Matrix around(const Vector& x, double sigma, const Matrix& z) {
  return (sigma * z).rowwise() + x.transpose();
}

void require_point(const Vector& x) {
  if (x.size() < 1) throw DimensionError("evaluation point must be non-empty");
  if (x.size() > kMaxExactDim) throw CapabilityError("exact Jacobian traces need d <= 16");
}

Rng split(Rng& rng, std::uint64_t stream) {
  const std::uint64_t seed = (static_cast<std::uint64_t>(rng.bits()) << 32) | rng.bits();
  return Rng(seed, stream);
}

/// Diagonal of ∇s for every row of `points` (B x d).
Matrix jacobian_diagonal(const TensorFn& s, const Matrix& points) {
  Tape tape;
  const Tensor x = tape.leaf(points);
  const Tensor out = s(x);
  if (out.cols() != x.cols()) throw DimensionError("trace needs a square Jacobian");
  Matrix diag(points.rows(), points.cols());
  const Tensor wrt[] = {x};
  for (Index i = 0; i < x.cols(); ++i) {
    diag.col(i) = tape.backward(sum(slice(out, 1, i, 1)), wrt, false)[0].value().col(i);
  }
  return diag;
}

}  // namespace

Tensor jacobian_trace(Tape& tape, const TensorFn& f, const Tensor& x) {
  const Tensor input = x.on_tape() ? x : tape.leaf(x.value());
  const Tensor out = f(input);
  if (out.cols() != input.cols()) throw DimensionError("trace needs a square Jacobian");
  const Tensor wrt[] = {input};
  Tensor trace;
  for (Index i = 0; i < input.cols(); ++i) {
    const Tensor row = tape.backward(sum(slice(out, 1, i, 1)), wrt, tape.recording())[0];
    const Tensor diag = slice(row, 1, i, 1);
    trace = i == 0 ? diag : trace + diag;
  }
  return trace;
}

SteinCheckReport stein_check(const TensorFn& h, const Vector& mu, double sigma, long samples, Rng& rng, Index chunk) {
  if (samples < 100) throw ParameterError("stein_check needs at least 100 samples");
  if (!(sigma > 0.0)) throw ParameterError("stein_check: sigma must be > 0");
  if (chunk < 1) throw ParameterError("stein_check: chunk must be >= 1");
  const Index d = mu.size();
  std::vector<Moments> lhs, rhs, diff;
  Index outputs = -1;
  for (long done = 0; done < samples;) {
    const Index rows = static_cast<Index>(std::min<long>(chunk, samples - done));
    const Matrix z = around(mu, sigma, rng.normal_matrix(rows, d));
    Tape tape;
    const Tensor x = tape.leaf(z);
    const Tensor out = h(x);
    if (out.rows() != rows) throw DimensionError("stein_check: h must map rows to rows");
    if (outputs < 0) {
      outputs = out.cols();
      lhs.resize(static_cast<std::size_t>(outputs * d));
      rhs.resize(lhs.size());
      diff.resize(lhs.size());
    }
    const Matrix centred = (z.rowwise() - mu.transpose()) / (sigma * sigma);
    const Tensor wrt[] = {x};
    for (Index i = 0; i < outputs; ++i) {
      const Matrix grad = tape.backward(sum(slice(out, 1, i, 1)), wrt, false)[0].value();
      for (Index j = 0; j < d; ++j) {
        const std::size_t k = static_cast<std::size_t>(i * d + j);
        for (Index b = 0; b < rows; ++b) {
          const double a = out.value()(b, i) * centred(b, j);
          const double g = grad(b, j);
          lhs[k].add(a);
          rhs[k].add(g);
          diff[k].add(a - g);
        }
      }
    }
    done += rows;
  }
  SteinCheckReport report;
  report.samples = samples;
  report.lhs.resize(outputs, d);
  report.rhs.resize(outputs, d);
  report.lhs_error.resize(outputs, d);
  report.rhs_error.resize(outputs, d);
  report.discrepancy.resize(outputs, d);
  for (Index i = 0; i < outputs; ++i) {
    for (Index j = 0; j < d; ++j) {
      const std::size_t k = static_cast<std::size_t>(i * d + j);
      report.lhs(i, j) = lhs[k].mean();
      report.rhs(i, j) = rhs[k].mean();
      report.lhs_error(i, j) = lhs[k].std_error();
      report.rhs_error(i, j) = rhs[k].std_error();
      const double se = diff[k].std_error();
      const double gap = std::abs(diff[k].mean());
      report.discrepancy(i, j) = se > 0 ? gap / se : (gap == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    }
  }
  report.max_discrepancy = report.discrepancy.size() ? report.discrepancy.maxCoeff() : 0.0;
  return report;
}

MeanEstimate stein_trace_estimate(const ScoreFieldFn& s, const Vector& x, double sigma, long samples, Rng& rng,
                                  Index chunk) {
  if (samples < 1) throw ParameterError("need at least one sample");
  if (!(sigma > 0.0)) throw ParameterError("sigma must be > 0");
  Moments m;
  for (long done = 0; done < samples;) {
    const Index rows = static_cast<Index>(std::min<long>(chunk, samples - done));
    const Matrix x_prime = around(x, sigma, rng.normal_matrix(rows, x.size()));
    const Matrix offset = x_prime.rowwise() - x.transpose();
    const Matrix score = s(x_prime);
    if (score.rows() != rows || score.cols() != x.size()) throw DimensionError("score field shape mismatch");
    const Vector terms = score.cwiseProduct(offset).rowwise().sum() / (sigma * sigma);
    for (Index b = 0; b < rows; ++b) m.add(terms[b]);
    done += rows;
  }
  return {m.mean(), m.std_error(), samples};
}

TraceConvergenceReport lcss_trace_convergence(const ScoreFieldFn& s, const Vector& x, double sigma,
                                              const std::vector<long>& ns, int replicates, double reference,
                                              Rng& rng) {
  if (ns.empty()) throw ParameterError("lcss_trace_convergence: no sample sizes");
  if (replicates < 2) throw ParameterError("lcss_trace_convergence: need at least two replicates");
  TraceConvergenceReport report;
  report.reference = reference;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int points = 0;
  for (long n : ns) {
    TraceConvergenceRow row;
    row.samples = n;
    double squares = 0.0;
    for (int r = 0; r < replicates; ++r) {
      const MeanEstimate e = stein_trace_estimate(s, x, sigma, n, rng);
      if (r == 0) {
        row.estimate = e.mean;
        row.std_error = e.std_error;
      }
      squares += (e.mean - reference) * (e.mean - reference);
    }
    row.rms_error = std::sqrt(squares / replicates);
    report.rows.push_back(row);
    if (row.rms_error > 0) {
      const double lx = std::log(static_cast<double>(n));
      const double ly = std::log(row.rms_error);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++points;
    }
  }
  if (points >= 2) report.slope = (points * sxy - sx * sy) / (points * sxx - sx * sx);
  return report;
}

MeanEstimate smoothed_trace(const TensorFn& s, const Vector& x, double sigma, long samples, Rng& rng, Index chunk) {
  require_point(x);
  if (samples < 1) throw ParameterError("need at least one sample");
  Moments m;
  for (long done = 0; done < samples;) {
    const Index rows = static_cast<Index>(std::min<long>(chunk, samples - done));
    const Matrix diag = jacobian_diagonal(s, around(x, sigma, rng.normal_matrix(rows, x.size())));
    const Vector traces = diag.rowwise().sum();
    for (Index b = 0; b < rows; ++b) m.add(traces[b]);
    done += rows;
  }
  return {m.mean(), m.std_error(), samples};
}

double exact_trace(const TensorFn& s, const Vector& x) {
  require_point(x);
  return jacobian_diagonal(s, x.transpose()).sum();
}

InterchangeReport interchange_check(const TensorFn& s, const Vector& x, double sigma, long samples, Rng& rng,
                                    bool common_random_numbers) {
  require_point(x);
  if (samples < 2) throw ParameterError("interchange_check needs at least two samples");
  if (!(sigma >= 0.0)) throw ParameterError("sigma must be >= 0");
  const Index d = x.size();
  constexpr Index kChunk = 10000;
  InterchangeReport report;
  report.common_random_numbers = common_random_numbers;

  Moments total;
  std::vector<Moments> parts(static_cast<std::size_t>(d));
  std::vector<Rng> streams;
  if (!common_random_numbers) {
    for (Index i = 0; i < d; ++i) streams.push_back(split(rng, static_cast<std::uint64_t>(i) + 1));
  }
  for (long done = 0; done < samples;) {
    const Index rows = static_cast<Index>(std::min<long>(kChunk, samples - done));
    const Matrix diag = jacobian_diagonal(s, around(x, sigma, rng.normal_matrix(rows, d)));
    for (Index b = 0; b < rows; ++b) total.add(diag.row(b).sum());
    for (Index i = 0; i < d; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (common_random_numbers) {
        for (Index b = 0; b < rows; ++b) parts[k].add(diag(b, i));
      } else {
        const Matrix own = jacobian_diagonal(s, around(x, sigma, streams[k].normal_matrix(rows, d)));
        for (Index b = 0; b < rows; ++b) parts[k].add(own(b, i));
      }
    }
    done += rows;
  }
  report.expectation_of_sum = total.mean();
  double rhs_var = 0.0;
  for (const Moments& m : parts) {
    report.sum_of_expectations += m.mean();
    rhs_var += m.std_error() * m.std_error();
  }
  report.discrepancy = std::abs(report.expectation_of_sum - report.sum_of_expectations);
  report.std_error = std::sqrt(total.std_error() * total.std_error() + rhs_var);
  return report;
}

double score_error(const ScoreFieldFn& model, const ScoreFieldFn& oracle, const Matrix& points) {
  if (points.rows() == 0) throw ParameterError("score_error: no evaluation points");
  const Matrix a = model(points);
  const Matrix b = oracle(points);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("score_error: field shapes differ");
  return (a - b).rowwise().squaredNorm().mean();
}

ScoreFieldFn oracle_score(DatasetKind kind, double extra_var) {
  if (kind == DatasetKind::Checkerboard) {
    throw CapabilityError("checkerboard has no analytic score; use the on-support mass instead");
  }
  return [mix = GaussianMixture::ring(), extra_var](const Matrix& x) { return mix.score(x, extra_var); };
}

DensityGrid density_grid(const Matrix& samples, const GridBounds& bounds, Index bins) {
  if (bins < 2) throw ParameterError("density_grid: bins must be >= 2");
  if (!(bounds.x_max > bounds.x_min && bounds.y_max > bounds.y_min)) {
    throw ParameterError("density_grid: degenerate bounds");
  }
  if (samples.rows() > 0 && samples.cols() < 2) throw DimensionError("density_grid: need two columns");
  DensityGrid grid;
  grid.bounds = bounds;
  grid.counts.setZero(bins, bins);
  const double wx = (bounds.x_max - bounds.x_min) / static_cast<double>(bins);
  const double wy = (bounds.y_max - bounds.y_min) / static_cast<double>(bins);
  for (Index i = 0; i < samples.rows(); ++i) {
    const double x = samples(i, 0);
    const double y = samples(i, 1);
    if (!(x >= bounds.x_min && x <= bounds.x_max && y >= bounds.y_min && y <= bounds.y_max)) continue;
    const Index col = std::min<Index>(static_cast<Index>((x - bounds.x_min) / wx), bins - 1);
    const Index from_bottom = std::min<Index>(static_cast<Index>((y - bounds.y_min) / wy), bins - 1);
    ++grid.counts(bins - 1 - from_bottom, col);
  }
  return grid;
}

Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> DensityGrid::image() const {
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(counts.rows(), counts.cols());
  const std::int64_t top = counts.size() ? counts.maxCoeff() : 0;
  for (Index r = 0; r < counts.rows(); ++r) {
    for (Index c = 0; c < counts.cols(); ++c) {
      out(r, c) = top > 0 ? static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(counts(r, c)) /
                                                                   static_cast<double>(top)))
                          : 0;
    }
  }
  return out;
}

void write_pgm(const DensityGrid& grid, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  const auto pixels = grid.image();
  file << "P5\n" << pixels.cols() << ' ' << pixels.rows() << "\n255\n";
  file.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!file) throw IoError("write failed for " + path.string());
}

void write_counts_csv(const DensityGrid& grid, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file << "row,col,count\n";
  for (Index r = 0; r < grid.counts.rows(); ++r) {
    for (Index c = 0; c < grid.counts.cols(); ++c) file << r << ',' << c << ',' << grid.counts(r, c) << '\n';
  }
  if (!file) throw IoError("write failed for " + path.string());
}

BenchReport bench(const TrainerOptions& options, long steps, const std::string& method) {
  if (steps < 100) throw ParameterError("bench needs at least 100 steps");
  Trainer trainer(options);
  BenchReport report;
  report.method = method;
  report.steps = steps;
  report.warmup = (steps + 9) / 10;
  Moments timing;
  for (long i = 0; i < steps; ++i) {
    const Matrix batch = trainer.next_batch();
    const auto start = std::chrono::steady_clock::now();
    trainer.step(batch);
    const auto stop = std::chrono::steady_clock::now();
    if (i >= report.warmup) timing.add(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  report.mean_ms = timing.mean();
  report.std_ms = std::sqrt(timing.variance());
  return report;
}

OrderingVerdict bench_ordering(const std::vector<BenchReport>& reports) {
  static const char* const kChain[] = {"lcss", "dsm", "fdssm", "ssm"};
  std::map<std::string, double> times;
  for (const BenchReport& r : reports) times[r.method] = r.mean_ms;
  std::vector<std::pair<std::string, double>> present;
  for (const char* name : kChain) {
    if (auto it = times.find(name); it != times.end()) present.emplace_back(it->first, it->second);
  }
  OrderingVerdict verdict;
  char buffer[160];
  for (std::size_t i = 1; i < present.size(); ++i) {
    const auto& [a, ta] = present[i - 1];
    const auto& [b, tb] = present[i];
    const bool tolerant = a == "lcss" && b == "dsm";
    const bool ok = tolerant ? ta <= 1.1 * tb : ta < tb;
    std::snprintf(buffer, sizeof buffer, "%s%s %.2f %s %s%s %.2f: %s", verdict.detail.empty() ? "" : "; ",
                  a.c_str(), ta, tolerant ? "<=" : "<", tolerant ? "1.1*" : "", b.c_str(), tb, ok ? "ok" : "violated");
    verdict.detail += buffer;
    verdict.vacuous = false;
    verdict.holds = verdict.holds && ok;
  }
  if (verdict.vacuous) verdict.detail = "fewer than two comparable methods";
  return verdict;
}

void write_bench_csv(const std::vector<BenchReport>& reports, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file << "method,mean_ms,std_ms,steps\n";
  char buffer[128];
  for (const BenchReport& r : reports) {
    std::snprintf(buffer, sizeof buffer, "%s,%.6f,%.6f,%ld\n", r.method.c_str(), r.mean_ms, r.std_ms, r.steps);
    file << buffer;
  }
  if (!file) throw IoError("write failed for " + path.string());
}

}  // namespace scorelab
