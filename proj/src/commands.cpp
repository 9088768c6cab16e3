#include "scorelab/commands.hpp"

#include "scorelab/errors.hpp"
#include "scorelab/eval.hpp"
#include "scorelab/random.hpp"
#include "scorelab/sde.hpp"
#include "scorelab/training.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace scorelab {

namespace {

constexpr Index kSampleChunk = 10000;

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file << text;
  if (!file) throw IoError("write failed for " + path.string());
}

std::string real(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

void prepare_output(const RunConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(config.out, ec);
  if (ec) throw IoError("cannot create " + config.out.string() + ": " + ec.message());
}

void save_with_metadata(const ScoreNet& net, const RunConfig& config, long steps) {
  save_checkpoint(net, checkpoint_path(config));
  write_text(config.out / "checkpoint.meta", "rng = " + std::string(Philox4x32::kName) +
                                                 "\nseed = " + std::to_string(config.seed) +
                                                 "\nsteps = " + std::to_string(steps) + "\nmethod = " +
                                                 std::string(to_string(config.method)) + "\n");
}

ScoreNet load_model(const RunConfig& config, const std::filesystem::path& checkpoint) {
  return load_checkpoint(checkpoint, config.net_config(), config.net_mode());
}

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

std::filesystem::path checkpoint_path(const RunConfig& config) { return config.out / "checkpoint.smlb"; }

double dataset_bound(DatasetKind kind) { return kind == DatasetKind::Checkerboard ? 4.0 : 4.5; }

Matrix generate_samples(const RunConfig& config, const ScoreNet& net, long n, Rng& rng) {
  Matrix out(n, 2);
  const auto sde = config.schedule();
  const TimeScoreFn score = model_score(net, sde);
  const double bound = dataset_bound(config.dataset);
  for (long done = 0; done < n;) {
    const Index rows = static_cast<Index>(std::min<long>(kSampleChunk, n - done));
    Matrix x;
    if (sde) {
      x = reverse_em(*sde, score, sample_prior(*sde, rows, 2, rng), config.steps, rng);
    } else {
      x = langevin([&](const Matrix& y) { return score(y, 0.0); }, rng.uniform_matrix(rows, 2, -bound, bound),
                   config.langevin_eps, config.steps, rng);
    }
    out.middleRows(done, rows) = x;
    done += rows;
  }
  return out;
}

ScoreErrorSummary gmm_score_error(const ScoreNet& net, const std::optional<SdeSchedule>& sde, long points, Rng& rng) {
  const GaussianMixture mix = GaussianMixture::ring();
  const double sigma = sde ? sde->marginal_std(kTMin) : 0.0;
  const Matrix x = gmm_sample(mix, points, rng) + sigma * rng.normal_matrix(points, 2);
  const ScoreFieldFn oracle = oracle_score(DatasetKind::Gmm, sigma * sigma);
  const TimeScoreFn model = model_score(net, sde);
  ScoreErrorSummary summary;
  summary.model_error = score_error([&](const Matrix& y) { return model(y, kTMin); }, oracle, x);
  summary.zero_error = score_error([](const Matrix& y) { return Matrix(Matrix::Zero(y.rows(), y.cols())); }, oracle, x);
  return summary;
}

int cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  prepare_output(config);
  write_text(config.out / "config.txt", print_config(config));
  Trainer trainer(config.trainer_options());
  std::ofstream losses(config.out / "loss.csv", std::ios::binary);
  if (!losses) throw IoError("cannot open " + (config.out / "loss.csv").string());
  losses << "step,loss\n";
  save_with_metadata(trainer.net(), config, 0);
  for (long step = 1; step <= config.iters; ++step) {
    double loss = 0.0;
    try {
      loss = trainer.step();
    } catch (const NonFiniteError& e) {
      save_with_metadata(trainer.net(), config, step - 1);
      throw DivergedError("training diverged at step " + std::to_string(step) +
                              "; last good checkpoint kept at " + checkpoint_path(config).string(),
                          step);
    }
    losses << step << ',' << real(loss) << '\n';
    if (step % config.checkpoint_every == 0 || step == config.iters) save_with_metadata(trainer.net(), config, step);
    if (step % 1000 == 0 || step == config.iters) log << "step " << step << " loss " << loss << '\n';
  }
  if (!losses) throw IoError("write failed for loss.csv");
  log << "checkpoint written to " << checkpoint_path(config).string() << '\n';
  return kExitOk;
}

int cmd_sample(const RunConfig& config, const std::filesystem::path& checkpoint, std::ostream& log) {
  config.validate();
  prepare_output(config);
  const ScoreNet net = load_model(config, checkpoint);
  Rng rng(config.seed, kSampleStream);
  const Matrix x = generate_samples(config, net, config.samples, rng);
  write_samples_csv(x, config.out / "samples.csv");
  const double b = dataset_bound(config.dataset);
  const DensityGrid grid = density_grid(x, {-b, b, -b, b}, config.bins);
  write_pgm(grid, config.out / "density.pgm");
  write_counts_csv(grid, config.out / "density_counts.csv");
  log << "wrote " << x.rows() << " samples to " << (config.out / "samples.csv").string() << '\n';
  if (config.dataset == DatasetKind::Checkerboard && x.rows() > 0) {
    log << "on-support mass " << on_support_fraction(Checkerboard{}, x) << '\n';
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint, std::ostream& log) {
  config.validate();
  prepare_output(config);
  const ScoreNet net = load_model(config, checkpoint);
  Rng rng(config.seed, kEvalStream);
  std::string report = "dataset = " + std::string(to_string(config.dataset)) + "\n";
  if (config.dataset == DatasetKind::Gmm) {
    const ScoreErrorSummary s = gmm_score_error(net, config.schedule(), std::max<long>(config.samples, 1), rng);
    report += "score_error = " + real(s.model_error) + "\nzero_net_error = " + real(s.zero_error) +
              "\nratio = " + real(s.ratio()) + "\n";
  } else {
    const Matrix x = generate_samples(config, net, std::max<long>(config.samples, 1), rng);
    const auto shares = on_square_occupancy(Checkerboard{}, x);
    const auto [lo, hi] = std::minmax_element(shares.begin(), shares.end());
    report += "on_support = " + real(on_support_fraction(Checkerboard{}, x)) + "\nmin_square_share = " + real(*lo) +
              "\nmax_square_share = " + real(*hi) + "\nuniform_share = " + real(1.0 / shares.size()) + "\n";
  }
  write_text(config.out / "eval.txt", report);
  log << report;
  return kExitOk;
}

int cmd_bench(const RunConfig& config, std::ostream& log) {
  config.validate();
  if (config.bench_methods.empty()) throw ParameterError("bench needs at least one method");
  prepare_output(config);
  std::vector<BenchReport> reports;
  char line[160];
  log << "method      mean_ms    std_ms  steps   (timings exempt from determinism)\n";
  for (ObjectiveKind method : config.bench_methods) {
    RunConfig run = config;
    run.method = method;
    run.validate();
    reports.push_back(bench(run.trainer_options(), config.bench_steps, std::string(to_string(method))));
    const BenchReport& r = reports.back();
    std::snprintf(line, sizeof line, "%-10s %9.2f %9.2f %6ld\n", r.method.c_str(), r.mean_ms, r.std_ms, r.steps);
    log << line << std::flush;
    if (r.cv() > 0.25) log << "warning: " << r.method << " timing varies by " << r.cv() * 100 << "%\n";
  }
  write_bench_csv(reports, config.out / "bench.csv");
  const OrderingVerdict verdict = bench_ordering(reports);
  log << "ordering: " << (verdict.vacuous ? "vacuous" : verdict.holds ? "holds" : "violated") << " (" << verdict.detail
      << ")\n";
  return verdict.holds ? kExitOk : kExitCheckFailed;
}

}  // namespace scorelab
