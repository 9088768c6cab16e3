#pragma once

#include "scorelab/random.hpp"
#include "scorelab/sde.hpp"
#include "scorelab/tensor.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace scorelab {

enum class ObjectiveKind { SM, SSM, FDSSM, DSM, LCS_EXACT, LCSS, LCSS_GAMMA };

std::string_view to_string(ObjectiveKind kind);
/// Accepts "sm", "ssm", "fdssm", "dsm", "lcs", "lcss", "lcss_gamma".
ObjectiveKind parse_objective(std::string_view name);

enum class ProjectionKind { Rademacher, Gaussian };

/// Random projections v with E[v v^T] = (epsilon^2 / d) I.
struct ProjectionSampler {
  ProjectionKind distribution = ProjectionKind::Rademacher;
  double epsilon = 1.0;

  double scale(Index dim) const;
  /// rows x dim draws.
  Matrix draw(Index rows, Index dim, Rng& rng) const;
};

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::LCSS;
  double sigma = 0.1;
  double epsilon = 0.1;
  double gamma = 1.0;
  int mc_samples = 1;
  ProjectionKind projection = ProjectionKind::Rademacher;

  void validate() const;
  ProjectionSampler sampler() const { return {projection, epsilon}; }
};

/// Largest dimension for which objectives needing the full Jacobian are allowed.
inline constexpr Index kMaxExactDim = 16;

/// s(x, t) for a batch; `t` is the conditioning column for time-conditional nets.
using ScoreFn = std::function<Tensor(const Tensor& x, const std::optional<Tensor>& t)>;

// Per-sample objectives. Each returns a (B x 1) tensor with one loss per row
// of the batch; the variants taking explicit noise are deterministic.

/// Tr(∇_x s(x)) + ½‖s(x)‖².
Tensor sm_exact(Tape& tape, const ScoreFn& score, const Tensor& x);

/// The two parts of a sliced objective: the projected-Jacobian term and the norm term.
struct SlicedTerms {
  Tensor projection;
  Tensor norm;
};

/// (1/ε²) vᵀ(∇_x s) v and (1/2d)‖s‖², the directional term taken as
/// v · ∇_x(s · v) without forming the Jacobian.
SlicedTerms ssm_terms(Tape& tape, const ScoreFn& score, const Tensor& x, const Matrix& v, double epsilon,
                      const std::optional<Tensor>& t = std::nullopt);
/// (1/2ε²)(vᵀs(x+v) − vᵀs(x−v)) and (1/8d)‖s(x+v) + s(x−v)‖².
SlicedTerms fd_ssm_terms(Tape& tape, const ScoreFn& score, const Tensor& x, const Matrix& v, double epsilon,
                         const std::optional<Tensor>& t = std::nullopt);

/// (1/ε²) vᵀ(∇_x s) v + (1/2d)‖s‖² for one projection per row.
Tensor ssm(Tape& tape, const ScoreFn& score, const Tensor& x, const Matrix& v, double epsilon,
           const std::optional<Tensor>& t = std::nullopt);
Tensor ssm(Tape& tape, const ScoreFn& score, const Tensor& x, const ProjectionSampler& sampler, int mc_samples,
           Rng& rng);

/// (1/2ε²)(vᵀs(x+v) − vᵀs(x−v)) + (1/8d)‖s(x+v) + s(x−v)‖², one network call.
Tensor fd_ssm(Tape& tape, const ScoreFn& score, const Tensor& x, const Matrix& v, double epsilon,
              const std::optional<Tensor>& t = std::nullopt);
Tensor fd_ssm(Tape& tape, const ScoreFn& score, const Tensor& x, const ProjectionSampler& sampler, int mc_samples,
              Rng& rng);

/// Score of the Gaussian perturbation kernel at x̃: (x0 − x̃)/σ².
Matrix dsm_target(const Matrix& x0, const Matrix& x_tilde, double sigma);

/// ½‖s(x̃) − (x0 − x̃)/σ²‖² with x̃ = x0 + σ z.
Tensor dsm(Tape& tape, const ScoreFn& score, const Matrix& x0, const Matrix& z, double sigma,
           const std::optional<Tensor>& t = std::nullopt);
Tensor dsm(Tape& tape, const ScoreFn& score, const Matrix& x0, double sigma, int mc_samples, Rng& rng);

/// sm_exact + ½σ²‖∇_x s(x)‖_F².
Tensor lcs_exact(Tape& tape, const ScoreFn& score, const Tensor& x, double sigma);

/// s(x')ᵀ(x' − x)/σ² + ½‖s(x')‖² with x' = x + σ z.
Tensor lcss(Tape& tape, const ScoreFn& score, const Matrix& x, const Matrix& z, double sigma,
            const std::optional<Tensor>& t = std::nullopt);
/// γ s(x')ᵀ(x' − x)/σ² + ½‖s(x')‖².
Tensor lcss_gamma(Tape& tape, const ScoreFn& score, const Matrix& x, const Matrix& z, double sigma, double gamma,
                  const std::optional<Tensor>& t = std::nullopt);
/// Average of `mc_samples` single-draw evaluations, drawn in order from `rng`
/// (summed, then scaled by 1/mc_samples). With `gamma` unset the γ-free form is used.
Tensor lcss(Tape& tape, const ScoreFn& score, const Matrix& x, double sigma, int mc_samples, Rng& rng,
            std::optional<double> gamma = std::nullopt);

/// Per-sample objective selected by `spec` (data-space, no time conditioning).
Tensor objective(Tape& tape, const ScoreFn& score, const Matrix& x, const ObjectiveSpec& spec, Rng& rng);

/// Batch-mean loss for `spec` without time conditioning.
Tensor objective_loss(Tape& tape, const ScoreFn& score, const Matrix& x, const ObjectiveSpec& spec, Rng& rng);

/// Noise for one evaluation of the time-integrated loss.
struct SdmDraw {
  Vector t;  // one time per row
  Matrix z;  // perturbation noise
  Matrix v;  // projections (SSM / FD-SSM only)
};

SdmDraw draw_sdm_noise(const SdeSchedule& sde, const ObjectiveSpec& spec, Index rows, Index dim, Rng& rng);

/// Batch mean of λ(t) J(θ, x0, t) with λ(t) = σ_t². The score function is
/// fed input_scale(σ_t) x_t and its output is read as σ_t s(x, t); the σ_t² factor of the DSM and LCSS terms is
/// folded in analytically, so nothing is divided by σ_t.
Tensor sdm_loss(Tape& tape, const ScoreFn& score, const Matrix& x0, const SdeSchedule& sde,
                const TimeEmbedding& embedding, const ObjectiveSpec& spec, const SdmDraw& draw);
Tensor sdm_loss(Tape& tape, const ScoreFn& score, const Matrix& x0, const SdeSchedule& sde,
                const TimeEmbedding& embedding, const ObjectiveSpec& spec, Rng& rng);

class BoundNet;
/// Same, for a bound network; throws ContractViolation unless it is time-conditional.
Tensor sdm_loss(const BoundNet& net, const Matrix& x0, const SdeSchedule& sde, const TimeEmbedding& embedding,
                const ObjectiveSpec& spec, const SdmDraw& draw);
Tensor sdm_loss(const BoundNet& net, const Matrix& x0, const SdeSchedule& sde, const TimeEmbedding& embedding,
                const ObjectiveSpec& spec, Rng& rng);

/// Adapts a bound network to the ScoreFn signature.
ScoreFn score_fn(const BoundNet& net);

struct HutchinsonReport {
  double frobenius = 0.0;
  double trace = 0.0;
  int probes = 0;
  int trials = 0;
  /// Share of trials with |Tr(A) − estimate| ≤ ‖A‖_F / sqrt(M).
  double fraction_within_bound = 0.0;
  double rms_error = 0.0;
  /// RMS error with 4M probes, and the log-log slope between the two.
  double rms_error_4m = 0.0;
  double slope = 0.0;
};

/// Empirical study of Hutchinson's estimator (1/M) Σ uᵀAu with unit-variance probes.
HutchinsonReport hutchinson_error_bound_check(const Matrix& a, int probes, int trials, Rng& rng,
                                              ProjectionKind distribution = ProjectionKind::Rademacher);

}  // namespace scorelab
