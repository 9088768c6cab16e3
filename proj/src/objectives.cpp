#include "scorelab/objectives.hpp"

#include "scorelab/errors.hpp"
#include "scorelab/score_net.hpp"

#include <cmath>
#include <string>

namespace scorelab {

namespace {

Tensor ensure_leaf(Tape& tape, const Tensor& x) { return x.on_tape() ? x : tape.leaf(x.value()); }

Tensor row_squared_norm(const Tensor& s) { return row_sum(mul(s, s)); }

void require_exact_dim(Index dim, const char* who) {
  if (dim > kMaxExactDim) {
    throw CapabilityError(std::string(who) + ": exact Jacobian needs d <= " + std::to_string(kMaxExactDim) +
                          " (got " + std::to_string(dim) + "); use lcss or ssm instead");
  }
}

void require_positive(double value, const char* what) {
  if (!(value > 0.0)) throw ParameterError(std::string(what) + " must be > 0");
}

void require_samples(int mc_samples) {
  if (mc_samples < 1) throw ParameterError("mc_samples must be >= 1");
}

Tensor average(const Tensor& total, int count) { return count == 1 ? total : scale(total, 1.0 / count); }

bool time_integrable(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::DSM:
    case ObjectiveKind::LCSS:
    case ObjectiveKind::LCSS_GAMMA:
    case ObjectiveKind::SSM:
    case ObjectiveKind::FDSSM:
      return true;
    default:
      return false;
  }
}

}  // namespace

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::SM: return "sm";
    case ObjectiveKind::SSM: return "ssm";
    case ObjectiveKind::FDSSM: return "fdssm";
    case ObjectiveKind::DSM: return "dsm";
    case ObjectiveKind::LCS_EXACT: return "lcs";
    case ObjectiveKind::LCSS: return "lcss";
    case ObjectiveKind::LCSS_GAMMA: return "lcss_gamma";
  }
  throw ContractViolation("unknown objective kind");
}

ObjectiveKind parse_objective(std::string_view name) {
  for (ObjectiveKind kind : {ObjectiveKind::SM, ObjectiveKind::SSM, ObjectiveKind::FDSSM, ObjectiveKind::DSM,
                             ObjectiveKind::LCS_EXACT, ObjectiveKind::LCSS, ObjectiveKind::LCSS_GAMMA}) {
    if (to_string(kind) == name) return kind;
  }
  throw ParameterError("unknown objective '" + std::string(name) + "'");
}

double ProjectionSampler::scale(Index dim) const { return epsilon / std::sqrt(static_cast<double>(dim)); }

Matrix ProjectionSampler::draw(Index rows, Index dim, Rng& rng) const {
  require_positive(epsilon, "projection epsilon");
  const Matrix base =
      distribution == ProjectionKind::Rademacher ? rng.sign_matrix(rows, dim) : rng.normal_matrix(rows, dim);
  return scale(dim) * base;
}

void ObjectiveSpec::validate() const {
  require_samples(mc_samples);
  if (!std::isfinite(gamma)) throw ParameterError("gamma must be finite");
  switch (kind) {
    case ObjectiveKind::SSM:
    case ObjectiveKind::FDSSM:
      require_positive(epsilon, "epsilon");
      break;
    case ObjectiveKind::DSM:
    case ObjectiveKind::LCSS:
    case ObjectiveKind::LCSS_GAMMA:
      require_positive(sigma, "sigma");
      break;
    case ObjectiveKind::LCS_EXACT:
      if (!(sigma >= 0.0)) throw ParameterError("sigma must be >= 0");
      break;
    case ObjectiveKind::SM:
      break;
  }
}

Tensor sm_exact(Tape& tape, const ScoreFn& score, const Tensor& x) {
  require_exact_dim(x.cols(), "sm_exact");
  const Tensor input = ensure_leaf(tape, x);
  const Tensor s = score(input, std::nullopt);
  Tensor trace;
  for (Index i = 0; i < input.cols(); ++i) {
    const Tensor diag = slice(jacobian_row(s, input, i), 1, i, 1);
    trace = i == 0 ? diag : trace + diag;
  }
  return trace + 0.5 * row_squared_norm(s);
}

SlicedTerms ssm_terms(Tape& tape, const ScoreFn& score, const Tensor& x, const Matrix& v, double epsilon,
                      const std::optional<Tensor>& t) {
  require_positive(epsilon, "epsilon");
  if (v.rows() != x.rows() || v.cols() != x.cols()) throw DimensionError("ssm: projection shape mismatch");
  const Tensor input = ensure_leaf(tape, x);
  const Tensor s = score(input, t);
  const Tensor proj(v);
  const Tensor wrt[] = {input};
  // Per row, the gradient of Σ_b s_b·v_b is (∇_x s_b)ᵀ v_b.
  const Tensor jv = tape.backward(inner(s, proj), wrt, tape.recording())[0];
  const double d = static_cast<double>(x.cols());
  return {scale(row_sum(mul(jv, proj)), 1.0 / (epsilon * epsilon)), scale(row_squared_norm(s), 1.0 / (2.0 * d))};
}

Tensor ssm(Tape& tape, const ScoreFn& score, const Tensor& x, const Matrix& v, double epsilon,
           const std::optional<Tensor>& t) {
  const SlicedTerms terms = ssm_terms(tape, score, x, v, epsilon, t);
  return terms.projection + terms.norm;
}

Tensor ssm(Tape& tape, const ScoreFn& score, const Tensor& x, const ProjectionSampler& sampler, int mc_samples,
           Rng& rng) {
  require_samples(mc_samples);
  const Tensor input = ensure_leaf(tape, x);
  Tensor total;
  for (int k = 0; k < mc_samples; ++k) {
    const Tensor one = ssm(tape, score, input, sampler.draw(x.rows(), x.cols(), rng), sampler.epsilon);
    total = k == 0 ? one : total + one;
  }
  return average(total, mc_samples);
}

SlicedTerms fd_ssm_terms(Tape& /*tape*/, const ScoreFn& score, const Tensor& x, const Matrix& v, double epsilon,
                         const std::optional<Tensor>& t) {
  require_positive(epsilon, "epsilon");
  if (v.rows() != x.rows() || v.cols() != x.cols()) throw DimensionError("fd_ssm: projection shape mismatch");
  const Index rows = x.rows();
  const Tensor proj(v);
  // Both evaluation points go through the network in a single call.
  const Tensor both = concat({x + proj, x - proj}, 0);
  std::optional<Tensor> tt;
  if (t) tt = concat({*t, *t}, 0);
  const Tensor s = score(both, tt);
  const Tensor s_plus = slice(s, 0, 0, rows);
  const Tensor s_minus = slice(s, 0, rows, rows);
  const double d = static_cast<double>(x.cols());
  return {scale(row_sum(mul(s_plus - s_minus, proj)), 1.0 / (2.0 * epsilon * epsilon)),
          scale(row_squared_norm(s_plus + s_minus), 1.0 / (8.0 * d))};
}

Tensor fd_ssm(Tape& tape, const ScoreFn& score, const Tensor& x, const Matrix& v, double epsilon,
              const std::optional<Tensor>& t) {
  const SlicedTerms terms = fd_ssm_terms(tape, score, x, v, epsilon, t);
  return terms.projection + terms.norm;
}

Tensor fd_ssm(Tape& tape, const ScoreFn& score, const Tensor& x, const ProjectionSampler& sampler, int mc_samples,
              Rng& rng) {
  require_samples(mc_samples);
  Tensor total;
  for (int k = 0; k < mc_samples; ++k) {
    const Tensor one = fd_ssm(tape, score, x, sampler.draw(x.rows(), x.cols(), rng), sampler.epsilon);
    total = k == 0 ? one : total + one;
  }
  return average(total, mc_samples);
}

Matrix dsm_target(const Matrix& x0, const Matrix& x_tilde, double sigma) {
  require_positive(sigma, "sigma");
  if (x0.rows() != x_tilde.rows() || x0.cols() != x_tilde.cols()) throw DimensionError("dsm_target: shape mismatch");
  return (x0 - x_tilde) / (sigma * sigma);
}

Tensor dsm(Tape& /*tape*/, const ScoreFn& score, const Matrix& x0, const Matrix& z, double sigma,
           const std::optional<Tensor>& t) {
  require_positive(sigma, "sigma");
  if (z.rows() != x0.rows() || z.cols() != x0.cols()) throw DimensionError("dsm: noise shape mismatch");
  const Matrix x_tilde = x0 + sigma * z;
  const Tensor residual = score(Tensor(x_tilde), t) - Tensor(dsm_target(x0, x_tilde, sigma));
  return 0.5 * row_squared_norm(residual);
}

Tensor dsm(Tape& tape, const ScoreFn& score, const Matrix& x0, double sigma, int mc_samples, Rng& rng) {
  require_samples(mc_samples);
  require_positive(sigma, "sigma");
  Tensor total;
  for (int k = 0; k < mc_samples; ++k) {
    const Tensor one = dsm(tape, score, x0, rng.normal_matrix(x0.rows(), x0.cols()), sigma);
    total = k == 0 ? one : total + one;
  }
  return average(total, mc_samples);
}

Tensor lcs_exact(Tape& tape, const ScoreFn& score, const Tensor& x, double sigma) {
  require_exact_dim(x.cols(), "lcs_exact");
  if (!(sigma >= 0.0)) throw ParameterError("sigma must be >= 0");
  const Tensor input = ensure_leaf(tape, x);
  const Tensor s = score(input, std::nullopt);
  Tensor trace;
  Tensor frobenius;
  for (Index i = 0; i < input.cols(); ++i) {
    const Tensor row = jacobian_row(s, input, i);
    const Tensor diag = slice(row, 1, i, 1);
    const Tensor row_norm = row_squared_norm(row);
    trace = i == 0 ? diag : trace + diag;
    frobenius = i == 0 ? row_norm : frobenius + row_norm;
  }
  return trace + 0.5 * row_squared_norm(s) + (0.5 * sigma * sigma) * frobenius;
}

namespace {

Tensor lcss_core(const ScoreFn& score, const Matrix& x, const Matrix& z, double sigma, std::optional<double> gamma,
                 const std::optional<Tensor>& t) {
  require_positive(sigma, "sigma");
  if (z.rows() != x.rows() || z.cols() != x.cols()) throw DimensionError("lcss: noise shape mismatch");
  const Matrix x_prime = x + sigma * z;
  const Matrix offset = x_prime - x;
  const Tensor s = score(Tensor(x_prime), t);
  Tensor stein = scale(row_sum(mul(s, Tensor(offset))), 1.0 / (sigma * sigma));
  if (gamma) stein = scale(stein, *gamma);
  return stein + 0.5 * row_squared_norm(s);
}

}  // namespace

Tensor lcss(Tape& /*tape*/, const ScoreFn& score, const Matrix& x, const Matrix& z, double sigma,
            const std::optional<Tensor>& t) {
  return lcss_core(score, x, z, sigma, std::nullopt, t);
}

Tensor lcss_gamma(Tape& /*tape*/, const ScoreFn& score, const Matrix& x, const Matrix& z, double sigma, double gamma,
                  const std::optional<Tensor>& t) {
  if (!std::isfinite(gamma)) throw ParameterError("gamma must be finite");
  return lcss_core(score, x, z, sigma, gamma, t);
}

Tensor lcss(Tape& /*tape*/, const ScoreFn& score, const Matrix& x, double sigma, int mc_samples, Rng& rng,
            std::optional<double> gamma) {
  require_samples(mc_samples);
  require_positive(sigma, "sigma");
  Tensor total;
  for (int k = 0; k < mc_samples; ++k) {
    const Tensor one = lcss_core(score, x, rng.normal_matrix(x.rows(), x.cols()), sigma, gamma, std::nullopt);
    total = k == 0 ? one : total + one;
  }
  return average(total, mc_samples);
}

Tensor objective(Tape& tape, const ScoreFn& score, const Matrix& x, const ObjectiveSpec& spec, Rng& rng) {
  spec.validate();
  switch (spec.kind) {
    case ObjectiveKind::SM:
      return sm_exact(tape, score, Tensor(x));
    case ObjectiveKind::SSM:
      return ssm(tape, score, Tensor(x), spec.sampler(), spec.mc_samples, rng);
    case ObjectiveKind::FDSSM:
      return fd_ssm(tape, score, Tensor(x), spec.sampler(), spec.mc_samples, rng);
    case ObjectiveKind::DSM:
      return dsm(tape, score, x, spec.sigma, spec.mc_samples, rng);
    case ObjectiveKind::LCS_EXACT:
      return lcs_exact(tape, score, Tensor(x), spec.sigma);
    case ObjectiveKind::LCSS:
      return lcss(tape, score, x, spec.sigma, spec.mc_samples, rng);
    case ObjectiveKind::LCSS_GAMMA:
      return lcss(tape, score, x, spec.sigma, spec.mc_samples, rng, spec.gamma);
  }
  throw ContractViolation("unknown objective kind");
}

Tensor objective_loss(Tape& tape, const ScoreFn& score, const Matrix& x, const ObjectiveSpec& spec, Rng& rng) {
  return mean(objective(tape, score, x, spec, rng));
}

SdmDraw draw_sdm_noise(const SdeSchedule& sde, const ObjectiveSpec& spec, Index rows, Index dim, Rng& rng) {
  SdmDraw draw;
  draw.t.resize(rows);
  for (Index i = 0; i < rows; ++i) draw.t[i] = rng.uniform(kTMin, sde.horizon);
  draw.z = rng.normal_matrix(rows, dim);
  if (spec.kind == ObjectiveKind::SSM || spec.kind == ObjectiveKind::FDSSM) {
    draw.v = spec.sampler().draw(rows, dim, rng);
  }
  return draw;
}

Tensor sdm_loss(Tape& tape, const ScoreFn& score, const Matrix& x0, const SdeSchedule& sde,
                const TimeEmbedding& embedding, const ObjectiveSpec& spec, const SdmDraw& draw) {
  spec.validate();
  if (!time_integrable(spec.kind)) {
    throw ContractViolation("sdm_loss: objective '" + std::string(to_string(spec.kind)) +
                            "' has no time-integrated form");
  }
  const Index rows = x0.rows();
  if (draw.t.size() != rows || draw.z.rows() != rows || draw.z.cols() != x0.cols()) {
    throw DimensionError("sdm_loss: noise draw does not match the batch");
  }
  Matrix sigma(rows, 1);
  for (Index i = 0; i < rows; ++i) sigma(i, 0) = sde.marginal_std(draw.t[i]);
  const Matrix x_t = x0 + (draw.z.array().colwise() * sigma.col(0).array()).matrix();
  const std::optional<Tensor> feature = Tensor(embedding(draw.t));
  const Tensor weight(sigma.array().square().matrix());  // λ(t) = σ_t²
  Matrix c_in(rows, 1);
  Matrix c_out(rows, 1);
  for (Index i = 0; i < rows; ++i) {
    c_in(i, 0) = input_scale(sigma(i, 0));
    c_out(i, 0) = output_scale(sigma(i, 0));
  }
  // r = σ_t · output_scale(σ_t) ≤ 1, so σ_t s = r o.
  const Matrix r = sigma.cwiseProduct(c_out);

  // The network sees c_in x_t and s = c_out o. Each weighted term is written in
  // r o = σ_t s, which keeps it O(1) and free of any division by σ_t. FD-SSM
  // evaluates a stacked batch, so per-row factors repeat per block.
  auto per_row = [rows](const Matrix& col, Index n) { return Tensor(Matrix(col.replicate(n / rows, 1))); };
  const ScoreFn net = [&](const Tensor& x, const std::optional<Tensor>& t) {
    return score(row_scale(x, per_row(c_in, x.rows())), t);
  };
  const Tensor r_col(r);

  Tensor per_sample;
  switch (spec.kind) {
    case ObjectiveKind::DSM: {
      // σ²·½‖s + z/σ‖² = ½‖σ s + z‖².
      const Tensor sigma_s = row_scale(net(Tensor(x_t), feature), r_col);
      per_sample = 0.5 * row_squared_norm(sigma_s + Tensor(draw.z));
      break;
    }
    case ObjectiveKind::LCSS:
    case ObjectiveKind::LCSS_GAMMA: {
      // σ²·(sᵀ(x' − x0)/σ² + ½‖s‖²) = (σ s)ᵀz + ½‖σ s‖².
      const Tensor sigma_s = row_scale(net(Tensor(x_t), feature), r_col);
      Tensor stein = row_sum(mul(sigma_s, Tensor(draw.z)));
      if (spec.kind == ObjectiveKind::LCSS_GAMMA) stein = scale(stein, spec.gamma);
      per_sample = stein + 0.5 * row_squared_norm(sigma_s);
      break;
    }
    case ObjectiveKind::SSM:
    case ObjectiveKind::FDSSM: {
      if (draw.v.rows() != rows || draw.v.cols() != x0.cols()) throw DimensionError("sdm_loss: projections missing");
      const ScoreFn s = [&](const Tensor& x, const std::optional<Tensor>& t) {
        return row_scale(net(x, t), per_row(c_out, x.rows()));
      };
      const SlicedTerms terms = spec.kind == ObjectiveKind::SSM
                                    ? ssm_terms(tape, s, Tensor(x_t), draw.v, spec.epsilon, feature)
                                    : fd_ssm_terms(tape, s, Tensor(x_t), draw.v, spec.epsilon, feature);
      per_sample = row_scale(terms.projection + terms.norm, weight);
      break;
    }
    default:
      break;
  }
  return mean(per_sample);
}

Tensor sdm_loss(Tape& tape, const ScoreFn& score, const Matrix& x0, const SdeSchedule& sde,
                const TimeEmbedding& embedding, const ObjectiveSpec& spec, Rng& rng) {
  const SdmDraw draw = draw_sdm_noise(sde, spec, x0.rows(), x0.cols(), rng);
  return sdm_loss(tape, score, x0, sde, embedding, spec, draw);
}

ScoreFn score_fn(const BoundNet& net) {
  return [&net](const Tensor& x, const std::optional<Tensor>& t) { return net.score(x, t); };
}

namespace {

void require_time_conditional(const BoundNet& net) {
  if (!net.net().config().time_conditional) throw ContractViolation("sdm_loss needs a time-conditional net");
}

}  // namespace

Tensor sdm_loss(const BoundNet& net, const Matrix& x0, const SdeSchedule& sde, const TimeEmbedding& embedding,
                const ObjectiveSpec& spec, const SdmDraw& draw) {
  require_time_conditional(net);
  return sdm_loss(net.tape(), score_fn(net), x0, sde, embedding, spec, draw);
}

Tensor sdm_loss(const BoundNet& net, const Matrix& x0, const SdeSchedule& sde, const TimeEmbedding& embedding,
                const ObjectiveSpec& spec, Rng& rng) {
  require_time_conditional(net);
  return sdm_loss(net.tape(), score_fn(net), x0, sde, embedding, spec, rng);
}

HutchinsonReport hutchinson_error_bound_check(const Matrix& a, int probes, int trials, Rng& rng,
                                              ProjectionKind distribution) {
  if (a.rows() != a.cols()) throw DimensionError("hutchinson: matrix must be square");
  require_exact_dim(a.rows(), "hutchinson");
  if (probes < 1 || trials < 1) throw ParameterError("hutchinson: probes and trials must be >= 1");
  HutchinsonReport report;
  report.frobenius = a.norm();
  report.trace = a.trace();
  report.probes = probes;
  report.trials = trials;
  const ProjectionSampler unit{distribution, std::sqrt(static_cast<double>(a.rows()))};
  const double bound = report.frobenius / std::sqrt(static_cast<double>(probes));

  auto run = [&](int m, long* within) {
    double squares = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      const Matrix u = unit.draw(m, a.rows(), rng);
      const double estimate = (u * a.transpose()).cwiseProduct(u).sum() / m;
      const double error = estimate - report.trace;
      squares += error * error;
      if (within && std::abs(error) <= bound) ++*within;
    }
    return std::sqrt(squares / trials);
  };

  long within = 0;
  report.rms_error = run(probes, &within);
  report.fraction_within_bound = static_cast<double>(within) / trials;
  report.rms_error_4m = run(4 * probes, nullptr);
  report.slope = report.rms_error > 0 && report.rms_error_4m > 0
                     ? std::log(report.rms_error_4m / report.rms_error) / std::log(4.0)
                     : 0.0;
  return report;
}

}  // namespace scorelab
