#include "scorelab/commands.hpp"
#include "scorelab/config.hpp"
#include "scorelab/datasets.hpp"
#include "scorelab/errors.hpp"
#include "scorelab/eval.hpp"
#include "scorelab/objectives.hpp"
#include "scorelab/score_net.hpp"
#include "scorelab/sde.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <ostream>

namespace scorelab {

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Matrix row2(double a, double b) {
  Matrix m(1, 2);
  m << a, b;
  return m;
}

ScoreFn linear_score(const Matrix& a) {
  return [a](const Tensor& x, const std::optional<Tensor>&) { return matmul(x, Tensor(a), false, true); };
}

TensorFn net_field(const ScoreNet& net) {
  return [&net](const Tensor& x) { return BoundNet(net, *x.tape(), false).score(x); };
}

double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max(1e-12, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

/// Central differences of `f` over the parameters of `net`.
Vector fd_params(ScoreNet net, const std::function<double(const ScoreNet&)>& f, double h = 1e-5) {
  const Vector theta = net.params();
  Vector grad(theta.size());
  for (Index i = 0; i < theta.size(); ++i) {
    Vector p = theta;
    p[i] += h;
    net.set_params(p);
    const double up = f(net);
    p[i] = theta[i] - h;
    net.set_params(p);
    const double down = f(net);
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

CheckResult result(const std::string& name, bool passed, double statistic, std::string detail = {}) {
  return {name, passed, statistic, std::move(detail)};
}

LcssFn lcss_under_test(const ValidationOptions& options) {
  if (options.lcss) return options.lcss;
  return [](Tape& tape, const ScoreFn& s, const Matrix& x, const Matrix& z, double sigma) {
    return lcss(tape, s, x, z, sigma);
  };
}

CheckResult check_fd_gradient(const ValidationOptions& o) {
  const ScoreNet net = init(MlpConfig::score(2, {8, 8}), NetMode::Score, o.seed + 11);
  Rng rng(o.seed, 21);
  const Matrix x = rng.normal_matrix(5, 2);
  auto loss = [&](const ScoreNet& n) {
    Tape tape;
    const BoundNet b(n, tape);
    return squared_norm(b.output(Tensor(x))).item();
  };
  Tape tape;
  const BoundNet b(net, tape);
  const Vector g = b.gradient(squared_norm(b.output(Tensor(x))));
  const double err = relative_error(g, fd_params(net, loss));
  return result("autodiff_fd_gradient", err < 1e-4, err);
}

CheckResult check_second_order(const ValidationOptions& o) {
  const ScoreNet net = init(MlpConfig::score(2, {8, 8}), NetMode::Score, o.seed + 12);
  Rng rng(o.seed, 22);
  const Matrix x = rng.normal_matrix(4, 2);
  const Matrix v = rng.sign_matrix(4, 2);
  auto directional = [&](const BoundNet& b) {
    Tape& tape = b.tape();
    const Tensor xl = tape.leaf(x);
    const Tensor wrt[] = {xl};
    const Tensor jv = tape.backward(inner(b.output(xl), Tensor(v)), wrt, true)[0];
    return inner(jv, Tensor(v));
  };
  auto value = [&](const ScoreNet& n) {
    Tape tape;
    return directional(BoundNet(n, tape)).item();
  };
  Tape tape;
  const BoundNet b(net, tape);
  const double err = relative_error(b.gradient(directional(b)), fd_params(net, value));
  return result("autodiff_second_order", err < 1e-3, err);
}

CheckResult check_sm_linear(const ValidationOptions&) {
  Tape tape;
  const double value = sm_exact(tape, linear_score(mat2(-1, 0, 0, -2)), Tensor(row2(0, 0))).item();
  const double value2 = sm_exact(tape, linear_score(mat2(-1, 0, 0, -1)), Tensor(row2(1, 1))).item();
  const double err = std::max(std::abs(value + 3.0), std::abs(value2 + 1.0));
  return result("sm_exact_linear", err < 1e-12, err);
}

CheckResult check_ssm_enumeration(const ValidationOptions&) {
  const Matrix a = mat2(-1.0, 0.7, 0.2, -2.0);
  const double epsilon = 0.3;
  double total = 0.0;
  for (double s1 : {-1.0, 1.0}) {
    for (double s2 : {-1.0, 1.0}) {
      Tape tape;
      const Matrix v = (epsilon / std::sqrt(2.0)) * row2(s1, s2);
      total += ssm(tape, linear_score(a), Tensor(row2(0, 0)), v, epsilon).item();
    }
  }
  Tape tape;
  const double exact = sm_exact(tape, linear_score(a), Tensor(row2(0, 0))).item();
  const double err = std::abs(total / 4.0 - exact / 2.0);
  return result("ssm_rademacher_enumeration", err < 1e-12, err);
}

CheckResult check_fd_ssm_linear(const ValidationOptions& o) {
  const Matrix a = mat2(-1.0, 0.4, -0.3, -2.0);
  Rng rng(o.seed, 23);
  const ProjectionSampler sampler{ProjectionKind::Rademacher, 0.1};
  const Matrix v = sampler.draw(64, 2, rng);
  const Matrix x = Matrix::Zero(64, 2);
  Tape tape;
  const Matrix fd = fd_ssm_terms(tape, linear_score(a), Tensor(x), v, 0.1).projection.value();
  const Matrix exact = ssm_terms(tape, linear_score(a), Tensor(x), v, 0.1).projection.value();
  const double err = (fd - exact).cwiseAbs().maxCoeff();
  return result("fd_ssm_linear_first_term", err < 1e-12, err);
}

CheckResult check_lcss_vs_lcs(const ValidationOptions& o) {
  const Matrix a = mat2(-1, 0, 0, -2);
  const double sigma = 0.5;
  const long n = 200000;
  Rng rng(o.seed, 24);
  const Matrix x = Matrix(Matrix::Ones(n, 2));
  Tape tape;
  Tape::PauseGuard pause(tape);
  const Matrix values = lcss_under_test(o)(tape, linear_score(a), x, rng.normal_matrix(n, 2), sigma).value();
  const double mean = values.mean();
  const double se = std::sqrt((values.array() - mean).square().sum() / (n - 1) / n);
  Tape exact_tape;
  const double exact = lcs_exact(exact_tape, linear_score(a), Tensor(row2(1, 1)), sigma).item();
  const double z = std::abs(mean - exact) / se;
  return result("lcss_vs_lcs_exact", z < kDiscrepancyBar, z);
}

CheckResult check_lcss_gamma(const ValidationOptions& o) {
  const ScoreNet net = init(MlpConfig::score(2, {16, 16}), NetMode::Score, o.seed + 13);
  Rng rng(o.seed, 25);
  const Matrix x = rng.normal_matrix(32, 2);
  const Matrix z = rng.normal_matrix(32, 2);
  Tape tape;
  const BoundNet b(net, tape);
  const Matrix plain = lcss(tape, score_fn(b), x, z, 0.1).value();
  const Matrix weighted = lcss_gamma(tape, score_fn(b), x, z, 0.1, 1.0).value();
  const bool same = std::memcmp(plain.data(), weighted.data(), sizeof(double) * plain.size()) == 0;
  return result("lcss_gamma_identity", same, same ? 0.0 : (plain - weighted).cwiseAbs().maxCoeff());
}

CheckResult check_dsm_target(const ValidationOptions&) {
  const Matrix target = dsm_target(row2(1, 0), row2(1.5, 0), 0.5);
  const double err = (target - row2(-2, 0)).cwiseAbs().maxCoeff();
  return result("dsm_target", err < 1e-15, err);
}

CheckResult check_stein_identity(const ValidationOptions& o) {
  Rng rng(o.seed, 26);
  Vector mu(2);
  mu << 0.5, -1.0;
  const SteinCheckReport r = stein_check([](const Tensor& z) { return z; }, mu, 0.7, 100000, rng);
  return result("stein_identity", r.passed(), r.max_discrepancy);
}

CheckResult check_stein_square(const ValidationOptions& o) {
  Rng rng(o.seed, 27);
  const Vector mu = Vector::Constant(1, 1.0);
  const SteinCheckReport r = stein_check([](const Tensor& z) { return mul(z, z); }, mu, 1.0, 100000, rng);
  return result("stein_square", r.passed(), r.max_discrepancy);
}

CheckResult check_trace_slope(const ValidationOptions& o) {
  const Matrix a = mat2(-1.0, 0.3, 0.1, -2.0);
  Rng rng(o.seed, 28);
  const Vector x = Vector::Ones(2);
  const auto report = lcss_trace_convergence([&a](const Matrix& y) { return Matrix(y * a.transpose()); }, x, 0.5,
                                             {100, 400, 1600, 6400}, 40, a.trace(), rng);
  const bool ok = report.slope >= -0.65 && report.slope <= -0.35;
  return result("lcss_trace_slope", ok, report.slope);
}

CheckResult check_interchange(const ValidationOptions& o) {
  const ScoreNet net = init(MlpConfig::energy(2, {16, 16}), NetMode::Energy, o.seed + 14);
  Rng rng(o.seed, 29);
  const InterchangeReport r = interchange_check(net_field(net), Vector::Ones(2), 0.2, 20000, rng, true);
  const double rel = r.discrepancy / std::max(1.0, std::abs(r.expectation_of_sum));
  return result("interchange_common_random_numbers", rel <= 1e-12, rel);
}

CheckResult check_hutchinson(const ValidationOptions& o) {
  Rng rng(o.seed, 30);
  const HutchinsonReport r = hutchinson_error_bound_check(Matrix::Identity(2, 2), 10, 200, rng);
  return result("hutchinson_identity_exact", r.rms_error == 0.0, r.rms_error);
}

CheckResult check_reverse_em(const ValidationOptions& o) {
  const SdeSchedule sde = SdeSchedule::ve();
  Rng rng(o.seed, 31);
  const TimeScoreFn score = [&sde](const Matrix& x, double t) {
    const double s = sde.marginal_std(t);
    return Matrix(-x / (1.0 + s * s));
  };
  const Matrix x = reverse_em(sde, score, sample_prior(sde, 10000, 2, rng), 500, rng);
  const double mean_err = x.colwise().mean().cwiseAbs().maxCoeff();
  const Matrix centred = x.rowwise() - x.colwise().mean();
  const double var_err = ((centred.array().square().colwise().sum() / (x.rows() - 1)) - 1.0).abs().maxCoeff();
  return result("reverse_em_gaussian_moments", mean_err < 0.05 && var_err < 0.1, std::max(mean_err, var_err));
}

CheckResult check_langevin(const ValidationOptions& o) {
  Rng rng(o.seed, 32);
  const double eps = 0.1;
  const Matrix x = langevin([](const Matrix& y) { return Matrix(-y); }, rng.uniform_matrix(10000, 2, -4, 4), eps, 1000,
                            rng);
  const Matrix centred = x.rowwise() - x.colwise().mean();
  const double var = centred.array().square().sum() / (2.0 * (x.rows() - 1));
  const double target = 1.0 / (1.0 - eps / 4.0);
  const double rel = std::abs(var - target) / target;
  return result("langevin_stationary_variance", rel < 0.1, rel);
}

CheckResult check_gmm_score(const ValidationOptions& o) {
  const GaussianMixture mix = GaussianMixture::ring();
  Rng rng(o.seed, 33);
  const Matrix x = 4.0 * rng.normal_matrix(50, 2);
  const double h = 1e-5;
  double worst = 0.0;
  for (double extra : {0.0, 0.25}) {
    const Matrix analytic = mix.score(x, extra);
    for (Index j = 0; j < 2; ++j) {
      Matrix up = x, down = x;
      up.col(j).array() += h;
      down.col(j).array() -= h;
      const Vector fd = (mix.log_density(up, extra) - mix.log_density(down, extra)) / (2 * h);
      worst = std::max(worst, relative_error(fd, analytic.col(j)));
    }
  }
  return result("gmm_score_fd", worst < 1e-6, worst);
}

CheckResult check_sdm_tmin(const ValidationOptions& o) {
  const SdeSchedule sde = SdeSchedule::ve();
  const TimeEmbedding embedding(sde);
  const ScoreNet net = init(MlpConfig::score(2, {16, 16}, true), NetMode::Score, o.seed + 15);
  Rng rng(o.seed, 34);
  double worst = 0.0;
  bool finite = true;
  for (ObjectiveKind kind : {ObjectiveKind::DSM, ObjectiveKind::LCSS}) {
    ObjectiveSpec spec;
    spec.kind = kind;
    SdmDraw draw;
    draw.t = Vector::Constant(64, kTMin);
    draw.z = rng.normal_matrix(64, 2);
    Tape tape;
    const BoundNet b(net, tape);
    const Tensor loss = sdm_loss(b, gmm_sample(GaussianMixture::ring(), 64, rng), sde, embedding, spec, draw);
    const Vector g = b.gradient(loss);
    finite = finite && std::isfinite(loss.item()) && g.allFinite();
    worst = std::max(worst, std::abs(loss.item()));
  }
  return result("sdm_loss_finite_at_tmin", finite, worst);
}

CheckResult check_checkpoint(const ValidationOptions& o) {
  const ScoreNet net = init(MlpConfig::score(2, {16, 16}, true), NetMode::Score, o.seed + 16);
  const ScoreNet back = decode_checkpoint(encode_checkpoint(net), net.config(), NetMode::Score);
  const Vector a = net.params();
  const Vector b = back.params();
  const bool same = std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
  return result("checkpoint_roundtrip", same, same ? 0.0 : 1.0);
}

CheckResult check_config(const ValidationOptions&) {
  RunConfig c;
  c.method = ObjectiveKind::DSM;
  c.sde = SdeChoice::SubVP;
  c.lr = 0.1 + 0.2;  // not exactly representable in short decimal
  c.hidden = {64, 32, 16};
  const std::string text = print_config(c);
  const RunConfig back = parse_config(text);
  const bool ok = back == c && print_config(back) == text;
  return result("config_roundtrip", ok, ok ? 0.0 : 1.0);
}

CheckResult check_marginal_monotone(const ValidationOptions&) {
  bool ok = true;
  for (const SdeSchedule& sde : {SdeSchedule::ve(), SdeSchedule::subvp()}) {
    double previous = 0.0;
    for (int i = 1; i <= 1000; ++i) {
      const double s = sde.marginal_std(i / 1000.0);
      ok = ok && s > previous;
      previous = s;
    }
  }
  return result("marginal_std_monotone", ok, ok ? 0.0 : 1.0);
}

}  // namespace

const std::vector<ValidationCheck>& validation_checks() {
  static const std::vector<ValidationCheck> checks = {
      {"autodiff_fd_gradient", check_fd_gradient},
      {"autodiff_second_order", check_second_order},
      {"sm_exact_linear", check_sm_linear},
      {"ssm_rademacher_enumeration", check_ssm_enumeration},
      {"fd_ssm_linear_first_term", check_fd_ssm_linear},
      {"lcss_vs_lcs_exact", check_lcss_vs_lcs},
      {"lcss_gamma_identity", check_lcss_gamma},
      {"dsm_target", check_dsm_target},
      {"stein_identity", check_stein_identity},
      {"stein_square", check_stein_square},
      {"lcss_trace_slope", check_trace_slope},
      {"interchange_common_random_numbers", check_interchange},
      {"hutchinson_identity_exact", check_hutchinson},
      {"reverse_em_gaussian_moments", check_reverse_em},
      {"langevin_stationary_variance", check_langevin},
      {"gmm_score_fd", check_gmm_score},
      {"sdm_loss_finite_at_tmin", check_sdm_tmin},
      {"checkpoint_roundtrip", check_checkpoint},
      {"config_roundtrip", check_config},
      {"marginal_std_monotone", check_marginal_monotone},
  };
  return checks;
}

std::vector<CheckResult> run_validation(const ValidationOptions& options) {
  std::vector<CheckResult> results;
  for (const ValidationCheck& check : validation_checks()) {
    try {
      results.push_back(check.run(options));
      results.back().name = check.name;
    } catch (const std::exception& e) {
      results.push_back({check.name, false, std::numeric_limits<double>::quiet_NaN(), e.what()});
    }
  }
  return results;
}

int cmd_validate(const ValidationOptions& options, std::ostream& out) {
  bool all = true;
  char statistic[32];
  for (const CheckResult& r : run_validation(options)) {
    std::snprintf(statistic, sizeof statistic, "%.6g", r.statistic);
    out << r.name << ' ' << (r.passed ? "PASS" : "FAIL") << ' ' << statistic;
    if (!r.detail.empty()) out << " # " << r.detail;
    out << '\n';
    all = all && r.passed;
  }
  return all ? kExitOk : kExitCheckFailed;
}

}  // namespace scorelab
