#pragma once

#include "scorelab/config.hpp"
#include "scorelab/objectives.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <iosfwd>
#include <string>
#include <vector>

namespace scorelab {

/// Process exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitRuntime = 3 };

/// Keeps large temporaries on the heap free lists instead of returning them
/// to the kernel after every step (glibc only; a no-op elsewhere).
void tune_allocator();

std::filesystem::path checkpoint_path(const RunConfig& config);

/// Half-width of the square that holds the dataset (sampler start box and render bounds).
double dataset_bound(DatasetKind kind);

/// Langevin from the uniform box for nets without time conditioning, reverse
/// Euler-Maruyama from the prior otherwise. Chains run in chunks of 10k.
Matrix generate_samples(const RunConfig& config, const ScoreNet& net, long n, Rng& rng);

struct ScoreErrorSummary {
  double model_error = 0.0;
  /// Error of the zero field, i.e. the mean squared oracle score.
  double zero_error = 0.0;
  double ratio() const { return zero_error > 0 ? model_error / zero_error : 0.0; }
};

/// Score error on the ring mixture at t = t_min (or on the clean data without an SDE).
ScoreErrorSummary gmm_score_error(const ScoreNet& net, const std::optional<SdeSchedule>& sde, long points, Rng& rng);

/// Writes checkpoint.smlb, checkpoint.meta, loss.csv and config.txt under config.out.
int cmd_train(const RunConfig& config, std::ostream& log);
/// Writes samples.csv, density.pgm and density_counts.csv under config.out.
int cmd_sample(const RunConfig& config, const std::filesystem::path& checkpoint, std::ostream& log);
/// Quality report for a trained model, also written to eval.txt.
int cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint, std::ostream& log);
/// Timing table for config.bench_methods, written to bench.csv.
int cmd_bench(const RunConfig& config, std::ostream& log);

struct CheckResult {
  std::string name;
  bool passed = false;
  double statistic = 0.0;
  std::string detail;
};

/// Per-sample LCSS with explicit noise; replaceable for mutation testing.
using LcssFn = std::function<Tensor(Tape&, const ScoreFn&, const Matrix& x, const Matrix& z, double sigma)>;

struct ValidationOptions {
  std::uint64_t seed = 0;
  /// Substitute for the library LCSS inside the checks that exercise it.
  LcssFn lcss;
};

struct ValidationCheck {
  std::string name;
  std::function<CheckResult(const ValidationOptions&)> run;
};

const std::vector<ValidationCheck>& validation_checks();
std::vector<CheckResult> run_validation(const ValidationOptions& options);

/// One line per check: "<name> <PASS|FAIL> <statistic>". Non-zero exit on any failure.
int cmd_validate(const ValidationOptions& options, std::ostream& out);

}  // namespace scorelab
