#pragma once

#include "scorelab/datasets.hpp"
#include "scorelab/objectives.hpp"
#include "scorelab/random.hpp"
#include "scorelab/score_net.hpp"
#include "scorelab/sde.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace scorelab {

/// Stream ids under the run seed, so every consumer draws from its own sequence.
enum Stream : std::uint64_t {
  kInitStream = 0,
  kDataStream = 1,
  kNoiseStream = 2,
  kSampleStream = 3,
  kEvalStream = 4,
};

enum class DatasetKind { Checkerboard, Gmm };
std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset(std::string_view name);

/// Fresh training points for one step.
using DataSampler = std::function<Matrix(Index n, Rng& rng)>;
DataSampler make_sampler(DatasetKind kind);

struct TrainerOptions {
  ObjectiveSpec objective;
  /// With an SDE the net is time-conditional and trained on the time-integrated loss.
  std::optional<SdeSchedule> sde;
  MlpConfig net;
  NetMode mode = NetMode::Energy;
  DataSampler data;
  Index batch = 10000;
  double lr = 1e-3;
  double momentum = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Plain SGD training loop with one fresh minibatch per step.
class Trainer {
 public:
  explicit Trainer(TrainerOptions options);

  /// Next minibatch from the data stream (kept outside any timed region).
  Matrix next_batch();
  /// One optimisation step: forward, backward and the parameter update.
  /// Returns the loss before the update; throws NonFiniteError on a NaN loss.
  double step(const Matrix& batch);
  double step() { return step(next_batch()); }

  /// Loss of the current parameters on `batch`, without updating.
  double loss(const Matrix& batch);

  const ScoreNet& net() const { return net_; }
  ScoreNet& net() { return net_; }
  const TrainerOptions& options() const { return options_; }
  long steps_done() const { return steps_; }

 private:
  Tensor build_loss(const BoundNet& bound, const Matrix& batch);

  TrainerOptions options_;
  ScoreNet net_;
  Sgd optimizer_;
  Rng data_rng_;
  Rng noise_rng_;
  std::optional<TimeEmbedding> embedding_;
  long steps_ = 0;
};

/// Score field of a trained model at a fixed time (t ignored without an SDE).
/// Time-conditional nets see input_scale(σ_t) x and output σ_t s.
TimeScoreFn model_score(const ScoreNet& net, const std::optional<SdeSchedule>& sde);

}  // namespace scorelab
