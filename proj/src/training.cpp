#include "scorelab/training.hpp"

#include "scorelab/errors.hpp"

#include <cmath>
#include <string>

namespace scorelab {

std::string_view to_string(DatasetKind kind) { return kind == DatasetKind::Checkerboard ? "checkerboard" : "gmm"; }

DatasetKind parse_dataset(std::string_view name) {
  if (name == "checkerboard") return DatasetKind::Checkerboard;
  if (name == "gmm") return DatasetKind::Gmm;
  throw ParameterError("unknown dataset '" + std::string(name) + "'");
}

DataSampler make_sampler(DatasetKind kind) {
  if (kind == DatasetKind::Checkerboard) {
    return [](Index n, Rng& rng) { return checkerboard_sample(Checkerboard{}, n, rng); };
  }
  return [mix = GaussianMixture::ring()](Index n, Rng& rng) { return gmm_sample(mix, n, rng); };
}

void TrainerOptions::validate() const {
  objective.validate();
  net.validate();
  if (!data) throw ParameterError("trainer needs a data sampler");
  if (batch < 1) throw ParameterError("batch must be >= 1");
  if (!(lr >= 0.0)) throw ParameterError("lr must be >= 0");
  if (net.time_conditional != sde.has_value()) {
    throw ContractViolation("time conditioning must match the presence of an SDE");
  }
  if (sde) sde->validate();
}

Trainer::Trainer(TrainerOptions options)
    : options_(std::move(options)),
      net_(init(options_.net, options_.mode, options_.seed)),
      optimizer_(options_.lr, options_.momentum),
      data_rng_(options_.seed, kDataStream),
      noise_rng_(options_.seed, kNoiseStream) {
  options_.validate();
  if (options_.sde) embedding_.emplace(*options_.sde);
}

Matrix Trainer::next_batch() { return options_.data(options_.batch, data_rng_); }

Tensor Trainer::build_loss(const BoundNet& bound, const Matrix& batch) {
  if (options_.sde) return sdm_loss(bound, batch, *options_.sde, *embedding_, options_.objective, noise_rng_);
  return objective_loss(bound.tape(), score_fn(bound), batch, options_.objective, noise_rng_);
}

double Trainer::step(const Matrix& batch) {
  Tape tape;
  const BoundNet bound(net_, tape);
  const Tensor loss = build_loss(bound, batch);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NonFiniteError("non-finite loss at step " + std::to_string(steps_));
  }
  optimizer_.step(net_, bound.gradient(loss));
  ++steps_;
  return value;
}

double Trainer::loss(const Matrix& batch) {
  Tape tape;
  const BoundNet bound(net_, tape);
  return build_loss(bound, batch).item();
}

TimeScoreFn model_score(const ScoreNet& net, const std::optional<SdeSchedule>& sde) {
  if (!sde) {
    return [&net](const Matrix& x, double) { return evaluate_score(net, x); };
  }
  return [&net, sde = *sde, embedding = TimeEmbedding(*sde)](const Matrix& x, double t) {
    const double sigma = sde.marginal_std(t);
    const Matrix out = evaluate_score(net, input_scale(sigma) * x, Vector::Constant(x.rows(), embedding(t)));
    return Matrix(output_scale(sigma) * out);
  };
}

}  // namespace scorelab
