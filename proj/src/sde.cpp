#include "scorelab/sde.hpp"

#include <cmath>

namespace scorelab {

TimeEmbedding::TimeEmbedding(const SdeSchedule& sde) : sde_(sde) {
  sde_.validate();
  const double lo = kTMin;
  const double hi = sde_.horizon;
  const double first = level(lo);
  const double last = level(hi);
  range_ = last - first;
  // Composite Simpson for the mean of the level over [t_min, T].
  constexpr int kIntervals = 20000;
  const double h = (hi - lo) / kIntervals;
  double acc = first + last;
  for (int i = 1; i < kIntervals; ++i) acc += (i % 2 ? 4.0 : 2.0) * level(lo + i * h);
  offset_ = acc * h / 3.0 / (hi - lo);
}

double TimeEmbedding::level(double t) const {
  const double sigma = sde_.marginal_std(t);
  return 0.5 * std::log(sigma * sigma + kNoiseFloor * kNoiseFloor);
}

double TimeEmbedding::operator()(double t) const {
  return (level(t) - offset_) / range_;
}

Matrix TimeEmbedding::operator()(const Vector& t) const {
  Matrix out(t.size(), 1);
  for (Index i = 0; i < t.size(); ++i) out(i, 0) = (*this)(t[i]);
  return out;
}

Matrix perturb(const SdeSchedule& sde, const Matrix& x0, double t, Rng& rng) {
  const double sigma = sde.marginal_std(t);
  return x0 + sigma * rng.normal_matrix(x0.rows(), x0.cols());
}

Matrix perturb(const SdeSchedule& sde, const Matrix& x0, const Vector& t, Rng& rng) {
  if (t.size() != x0.rows()) throw DimensionError("perturb: one time per row required");
  Matrix out = rng.normal_matrix(x0.rows(), x0.cols());
  for (Index i = 0; i < x0.rows(); ++i) out.row(i) = x0.row(i) + sde.marginal_std(t[i]) * out.row(i);
  return out;
}

Matrix sample_prior(const SdeSchedule& sde, Index n, Index dim, Rng& rng) {
  return sde.prior_std() * rng.normal_matrix(n, dim);
}

Matrix reverse_em(const SdeSchedule& sde, const TimeScoreFn& score, Matrix x, int steps, Rng& rng,
                  const ReverseOptions& options) {
  if (steps < 1) throw ParameterError("reverse_em: steps must be >= 1");
  if (!(options.t_min > 0.0 && options.t_min < sde.horizon)) throw ParameterError("reverse_em: bad t_min");
  const double dt = (sde.horizon - options.t_min) / steps;
  for (int step = 0; step < steps; ++step) {
    const double t = sde.horizon - step * dt;
    const double g = options.diffusion_override ? *options.diffusion_override : sde.diffusion(t);
    const Matrix s = score(x, t);
    if (s.rows() != x.rows() || s.cols() != x.cols()) throw DimensionError("reverse_em: score shape mismatch");
    // Reverse-time step: x_{t - dt} = x_t - [f - g^2 s] dt + g sqrt(dt) z.
    x += (g * g * dt) * s - dt * sde.drift(x, t);
    if (g != 0.0) x += (g * std::sqrt(dt)) * rng.normal_matrix(x.rows(), x.cols());
    if (!x.allFinite()) throw DivergedError("reverse_em: state became non-finite", step);
  }
  return x;
}

Matrix langevin(const ScoreFieldFn& score, Matrix x, double eps, int steps, Rng& rng, const LangevinOptions& options) {
  if (!(eps >= 0.0)) throw ParameterError("langevin: eps must be >= 0");
  if (steps < 0) throw ParameterError("langevin: steps must be >= 0");
  const double noise = std::sqrt(eps);
  for (int step = 0; step < steps; ++step) {
    x += (0.5 * eps) * score(x);
    if (options.add_noise) x += noise * rng.normal_matrix(x.rows(), x.cols());
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > options.divergence_bound) {
      throw DivergedError("langevin: chain diverged", step);
    }
  }
  return x;
}

Matrix annealed_langevin(const NoiseScoreFn& score, Matrix x, const Vector& sigmas, int steps_per_level, double eps,
                         Rng& rng) {
  if (sigmas.size() == 0) throw ParameterError("annealed_langevin: no noise levels");
  const double last = sigmas[sigmas.size() - 1];
  for (Index level = 0; level < sigmas.size(); ++level) {
    const double sigma = sigmas[level];
    const double step = eps * (sigma * sigma) / (last * last);
    x = langevin([&](const Matrix& y) { return score(y, sigma); }, std::move(x), step, steps_per_level, rng);
  }
  return x;
}

}  // namespace scorelab
