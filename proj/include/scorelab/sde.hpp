#pragma once

#include "scorelab/errors.hpp"
#include "scorelab/random.hpp"
#include "scorelab/tensor.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>

namespace scorelab {

enum class SdeKind { VE, SubVP };

/// Lower time cutoff used for training draws and the end of reverse integration.
inline constexpr double kTMin = 1e-5;

/// Forward diffusion dx = f(x, t) dt + g(t) dw with affine drift.
///
/// VE:    f = 0,            g(t) = σ_min (σ_max/σ_min)^t sqrt(2 ln(σ_max/σ_min)),
///        σ_t = σ_min (σ_max/σ_min)^t.
/// SubVP: f = -β(t) x / 2,  g(t)^2 = β(t) (1 - e^{-2 B(t)}),
///        σ_t = 1 - e^{-B(t)}, with β linear in t and B(t) = ∫_0^t β.
template <typename Scalar>
struct BasicSdeSchedule {
  SdeKind kind = SdeKind::VE;
  Scalar sigma_min = Scalar(0.01);
  Scalar sigma_max = Scalar(50);
  Scalar beta_min = Scalar(0.1);
  Scalar beta_max = Scalar(20);
  Scalar horizon = Scalar(1);

  static BasicSdeSchedule ve(Scalar sigma_min = Scalar(0.01), Scalar sigma_max = Scalar(50)) {
    BasicSdeSchedule s;
    s.kind = SdeKind::VE;
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.validate();
    return s;
  }

  static BasicSdeSchedule subvp(Scalar beta_min = Scalar(0.1), Scalar beta_max = Scalar(20)) {
    BasicSdeSchedule s;
    s.kind = SdeKind::SubVP;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    s.validate();
    return s;
  }

  void validate() const {
    if (!(horizon > 0)) throw ParameterError("SDE horizon must be positive");
    if (kind == SdeKind::VE && !(sigma_max > sigma_min && sigma_min > 0)) {
      throw ParameterError("VE SDE needs sigma_max > sigma_min > 0");
    }
    if (kind == SdeKind::SubVP && !(beta_max > beta_min && beta_min > 0)) {
      throw ParameterError("subVP SDE needs beta_max > beta_min > 0");
    }
  }

  Scalar beta(Scalar t) const { return beta_min + t * (beta_max - beta_min); }
  Scalar beta_integral(Scalar t) const { return beta_min * t + Scalar(0.5) * t * t * (beta_max - beta_min); }

  /// Drift is coefficient(t) * x.
  Scalar drift_coefficient(Scalar t) const {
    check_time(t);
    return kind == SdeKind::VE ? Scalar(0) : Scalar(-0.5) * beta(t);
  }

  template <typename Derived>
  auto drift(const Eigen::MatrixBase<Derived>& x, Scalar t) const {
    return (drift_coefficient(t) * x).eval();
  }

  Scalar diffusion(Scalar t) const {
    check_time(t);
    using std::exp;
    using std::log;
    using std::pow;
    using std::sqrt;
    if (kind == SdeKind::VE) {
      return sigma_min * pow(sigma_max / sigma_min, t) * sqrt(Scalar(2) * log(sigma_max / sigma_min));
    }
    return sqrt(beta(t) * (Scalar(1) - exp(Scalar(-2) * beta_integral(t))));
  }

  Scalar marginal_std(Scalar t) const {
    if (!(t > 0)) throw ParameterError("marginal_std: t must be > 0 (clamp to t_min)");
    check_time(t);
    using std::exp;
    using std::pow;
    if (kind == SdeKind::VE) return sigma_min * pow(sigma_max / sigma_min, t);
    return Scalar(1) - exp(-beta_integral(t));
  }

  /// Standard deviation of the reverse-process starting distribution.
  Scalar prior_std() const { return kind == SdeKind::VE ? sigma_max : Scalar(1); }

  std::string name() const { return kind == SdeKind::VE ? "ve" : "subvp"; }

 private:
  void check_time(Scalar t) const {
    if (!(t >= 0 && t <= horizon)) {
      throw ParameterError("time " + std::to_string(static_cast<double>(t)) + " outside [0, T]");
    }
  }
};

using SdeSchedule = BasicSdeSchedule<double>;

/// Scalar conditioning feature fed to time-conditional nets: the noise level
/// ½ log(σ_t² + c²) with c = kNoiseFloor, standardised over [t_min, T] to
/// zero mean and unit range.
class TimeEmbedding {
 public:
  explicit TimeEmbedding(const SdeSchedule& sde);
  double operator()(double t) const;
  Matrix operator()(const Vector& t) const;

 private:
  double level(double t) const;

  SdeSchedule sde_;
  double offset_ = 0.0;
  double range_ = 1.0;
};

/// Factor applied to x_t before it enters a time-conditional net, keeping
/// inputs of order one across the noise range.
inline double input_scale(double sigma) { return 1.0 / std::sqrt(1.0 + sigma * sigma); }

/// Noise floor c of the time-conditional parameterisation. Below it the net's
/// input scale, time feature and output scale stop depending on σ_t, so
/// small-σ errors in the output are not amplified by 1/σ_t.
inline constexpr double kNoiseFloor = 0.2;

/// Time-conditional nets output o with s(x, t) = o · output_scale(σ_t).
inline double output_scale(double sigma) { return 1.0 / std::sqrt(sigma * sigma + kNoiseFloor * kNoiseFloor); }

/// x0 + σ_t z, z ~ N(0, I), one time for the whole batch.
Matrix perturb(const SdeSchedule& sde, const Matrix& x0, double t, Rng& rng);
/// Per-row times.
Matrix perturb(const SdeSchedule& sde, const Matrix& x0, const Vector& t, Rng& rng);

Matrix sample_prior(const SdeSchedule& sde, Index n, Index dim, Rng& rng);

/// Score of the time-marginal: (x, t) -> B x d.
using TimeScoreFn = std::function<Matrix(const Matrix& x, double t)>;
/// Time-free score field: x -> B x d.
using ScoreFieldFn = std::function<Matrix(const Matrix& x)>;

struct ReverseOptions {
  double t_min = kTMin;
  /// Replaces g(t) when set (a zero override gives deterministic dynamics).
  std::optional<double> diffusion_override;
};

/// Euler-Maruyama for dx = [f(x,t) - g(t)^2 s(x,t)] dt + g(t) dw̄, integrated
/// from T down to t_min with `steps` uniform steps.
Matrix reverse_em(const SdeSchedule& sde, const TimeScoreFn& score, Matrix x_T, int steps, Rng& rng,
                  const ReverseOptions& options = {});

struct LangevinOptions {
  bool add_noise = true;
  /// Any coordinate beyond this magnitude aborts the run.
  double divergence_bound = 1e6;
};

/// x <- x + (eps / 2) s(x) + z,  z ~ N(0, eps I), iterated `steps` times.
Matrix langevin(const ScoreFieldFn& score, Matrix x, double eps, int steps, Rng& rng,
                const LangevinOptions& options = {});

/// Noise-conditional score: (x, sigma) -> B x d.
using NoiseScoreFn = std::function<Matrix(const Matrix& x, double sigma)>;

/// Annealed Langevin dynamics over decreasing noise levels, with step size
/// eps * sigma_i^2 / sigma_last^2 at level i.
Matrix annealed_langevin(const NoiseScoreFn& score, Matrix x, const Vector& sigmas, int steps_per_level,
                         double eps, Rng& rng);

}  // namespace scorelab
