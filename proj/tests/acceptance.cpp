// Acceptance suite: one PASS/FAIL line per criterion. Run a single criterion
// with --criterion N, or all of them without it.

#include "scorelab/commands.hpp"
#include "scorelab/config.hpp"
#include "scorelab/datasets.hpp"
#include "scorelab/eval.hpp"
#include "scorelab/objectives.hpp"
#include "scorelab/score_net.hpp"
#include "scorelab/sde.hpp"
#include "scorelab/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

using namespace scorelab;

namespace {

struct Settings {
  std::uint64_t seed = 0;
  std::optional<long> iters;  // shortens the training criteria for exploration
};

struct Outcome {
  bool passed = false;
  std::string summary;
};

std::string fmt(const char* format, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof buffer, format, args...);
  return buffer;
}

void note(const std::string& line) {
  std::printf("  %s\n", line.c_str());
  std::fflush(stdout);
}

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

ScoreFn linear(const Matrix& a) {
  return [a](const Tensor& x, const std::optional<Tensor>&) { return matmul(x, Tensor(a), false, true); };
}

TensorFn net_field(const ScoreNet& net) {
  return [&net](const Tensor& x) { return BoundNet(net, *x.tape(), false).score(x); };
}

ScoreFieldFn net_values(const ScoreNet& net) {
  return [&net](const Matrix& x) { return evaluate_score(net, x); };
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// A smooth energy net fitted briefly to the ring mixture; used wherever a
/// "trained MLP" is needed.
ScoreNet trained_mlp(std::uint64_t seed) {
  TrainerOptions o;
  o.objective.kind = ObjectiveKind::DSM;
  o.objective.sigma = 0.3;
  o.net = MlpConfig::energy(2, {32, 32});
  o.mode = NetMode::Energy;
  o.data = make_sampler(DatasetKind::Gmm);
  o.batch = 256;
  o.lr = 1e-3;
  o.momentum = 0.9;
  o.seed = seed;
  Trainer trainer(o);
  for (int i = 0; i < 2000; ++i) trainer.step();
  return trainer.net();
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const Vector& v) {
  const double m = v.mean();
  const double var = (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
  return {m, std::sqrt(var / static_cast<double>(v.size()))};
}

/// Per-row Tr ∇s + ½‖s‖² at the given points.
Vector sm_values(const ScoreFn& s, const Matrix& x) {
  Vector out(x.rows());
  constexpr Index kChunk = 50000;
  for (Index begin = 0; begin < x.rows(); begin += kChunk) {
    const Index rows = std::min(kChunk, x.rows() - begin);
    Tape tape;
    out.segment(begin, rows) = sm_exact(tape, s, Tensor(Matrix(x.middleRows(begin, rows)))).value().col(0);
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome criterion_bench(const Settings& settings) {
  RunConfig config;  // 2x300 energy net, batch 10k, checkerboard
  config.seed = settings.seed;
  const long steps = 500;
  std::vector<BenchReport> reports;
  for (ObjectiveKind kind : {ObjectiveKind::SSM, ObjectiveKind::FDSSM, ObjectiveKind::DSM, ObjectiveKind::LCSS}) {
    config.method = kind;
    const BenchReport r = bench(config.trainer_options(), steps, std::string(to_string(kind)));
    note(fmt("%-6s mean %.2f ms  std %.2f ms  cv %.3f  (%ld steps, %ld warm-up)", r.method.c_str(), r.mean_ms,
             r.std_ms, r.cv(), r.steps, r.warmup));
    reports.push_back(r);
  }
  const OrderingVerdict verdict = bench_ordering(reports);
  return {!verdict.vacuous && verdict.holds, verdict.detail};
}

// Optimiser for the checkerboard runs: the prescribed lr with heavy-ball momentum.
constexpr double kCheckerboardLr = 1e-3;
constexpr double kCheckerboardMomentum = 0.9;

Outcome criterion_checkerboard(const Settings& settings) {
  const Checkerboard board;
  const double share = 1.0 / board.cell_count() * 2.0;  // uniform share of one on-square
  bool passed = true;
  std::string summary;
  for (ObjectiveKind kind : {ObjectiveKind::LCSS, ObjectiveKind::DSM, ObjectiveKind::SSM, ObjectiveKind::FDSSM}) {
    const bool gated = kind == ObjectiveKind::LCSS || kind == ObjectiveKind::DSM;
    RunConfig config;
    config.method = kind;
    config.batch = 1000;
    config.iters = settings.iters.value_or(20000);
    config.lr = kCheckerboardLr;
    config.momentum = kCheckerboardMomentum;
    config.steps = 1000;
    config.langevin_eps = 0.1;
    config.seed = settings.seed;
    const auto start = std::chrono::steady_clock::now();
    Trainer trainer(config.trainer_options());
    double last = 0.0;
    for (long i = 0; i < config.iters; ++i) last = trainer.step();
    Rng rng(config.seed, kSampleStream);
    const Matrix samples = generate_samples(config, trainer.net(), 10000, rng);
    const double mass = on_support_fraction(board, samples);
    const std::vector<double> occupancy = on_square_occupancy(board, samples);
    const auto [lo, hi] = std::minmax_element(occupancy.begin(), occupancy.end());
    const bool ok = mass >= 0.85 && *lo >= 0.5 * share && *hi <= 1.5 * share;
    note(fmt("%-6s on-support %.4f  occupancy [%.4f, %.4f] vs share %.4f  final loss %.4g  %.0f s  %s",
             std::string(to_string(kind)).c_str(), mass, *lo, *hi, share, last, seconds_since(start),
             gated ? (ok ? "ok" : "below bar") : "(reported only)"));
    {
      // Diagnostic only: the same model under a finer Langevin step.
      RunConfig fine = config;
      fine.langevin_eps = 0.01;
      Rng fine_rng(config.seed, kSampleStream);
      const double fine_mass = on_support_fraction(board, generate_samples(fine, trainer.net(), 10000, fine_rng));
      note(fmt("%-6s on-support %.4f with Langevin eps 0.01 (not gated)", std::string(to_string(kind)).c_str(),
               fine_mass));
    }
    if (gated) {
      passed = passed && ok;
      summary += fmt("%s%s mass %.3f occ [%.3f, %.3f]x", summary.empty() ? "" : "; ",
                     std::string(to_string(kind)).c_str(), mass, *lo / share, *hi / share);
    }
  }
  return {passed, summary};
}

Outcome criterion_lemma(const Settings& settings) {
  bool passed = true;
  std::string summary;
  {
    // Linear field: E[J_SM(x')] = lcs_exact(x) exactly.
    const Matrix a = mat2(-1, 0, 0, -2);
    const Matrix x = (Matrix(1, 2) << 1, 1).finished();
    const double sigma = 0.5;
    const long n = 1000000;
    Rng rng(settings.seed, 31);
    const Matrix xp = x.replicate(n, 1) + sigma * rng.normal_matrix(n, 2);
    const MeanSe mc = mean_se(sm_values(linear(a), xp));
    Tape tape;
    const double exact = lcs_exact(tape, linear(a), Tensor(x), sigma).item();
    const double z = std::abs(mc.mean - exact) / mc.se;
    note(fmt("linear: E[J_SM(x')] %.6f +- %.6f, lcs_exact %.6f, |z| %.2f", mc.mean, mc.se, exact, z));
    passed = passed && z < 3.0;
    summary += fmt("linear |z| %.2f", z);
  }
  {
    // Trained MLP: residual E[J_SM(x')] − lcs_exact(x) = O(σ²). Antithetic pairs
    // cancel the odd orders, so the Monte Carlo noise is O(σ²) as well.
    const ScoreNet net = trained_mlp(settings.seed + 1);
    const ScoreFn s = [&net](const Tensor& x, const std::optional<Tensor>&) {
      return BoundNet(net, *x.tape(), false).score(x);
    };
    const Matrix x = (Matrix(1, 2) << 1.2, -0.4).finished();
    const long n = 500000;
    std::vector<MeanSe> residuals;
    for (double sigma : {0.1, 0.05}) {
      Rng rng(settings.seed, 32);
      const Matrix z = rng.normal_matrix(n, 2);
      const Matrix base = x.replicate(n, 1);
      const Vector plus = sm_values(s, base + sigma * z);
      const Vector minus = sm_values(s, base - sigma * z);
      Tape tape;
      const double exact = lcs_exact(tape, s, Tensor(x), sigma).item();
      const MeanSe r = mean_se(((plus + minus) / 2).array() - exact);
      note(fmt("mlp sigma %.3f: residual %.6e +- %.1e", sigma, r.mean, r.se));
      residuals.push_back(r);
    }
    const double ratio = residuals[0].mean / residuals[1].mean;
    const bool resolved = std::abs(residuals[1].mean) > 3 * residuals[1].se;
    const bool ok = resolved && ratio > 3.0 && ratio < 5.0;
    note(fmt("mlp residual ratio %.3f (expected ~4)%s", ratio, resolved ? "" : ", small residual not resolved"));
    passed = passed && ok;
    summary += fmt("; mlp ratio %.2f", ratio);
  }
  return {passed, summary};
}

Outcome criterion_trace(const Settings& settings) {
  bool passed = true;
  std::string summary;
  const Vector x = (Vector(2) << 1.0, 1.0).finished();
  const double sigma = 0.5;
  const std::vector<long> ns{100, 1000, 10000};
  auto check = [&](const char* label, const ScoreFieldFn& s, double reference, double reference_se) {
    Rng rng(settings.seed, 41);
    const TraceConvergenceReport conv = lcss_trace_convergence(s, x, sigma, ns, 200, reference, rng);
    for (const TraceConvergenceRow& row : conv.rows) {
      note(fmt("%s N %ld: rms error %.4e", label, row.samples, row.rms_error));
    }
    const MeanEstimate big = stein_trace_estimate(s, x, sigma, 1000000, rng);
    const double se = std::hypot(big.std_error, reference_se);
    const double z = std::abs(big.mean - reference) / se;
    const bool ok = conv.slope >= -0.65 && conv.slope <= -0.35 && z < 3.0;
    note(fmt("%s slope %.3f, N=1e6 estimate %.6f vs %.6f (se %.2e), |z| %.2f", label, conv.slope, big.mean,
             reference, se, z));
    passed = passed && ok;
    summary += fmt("%s%s slope %.3f |z| %.2f", summary.empty() ? "" : "; ", label, conv.slope, z);
  };
  const Matrix a = mat2(-1, 0.5, 0.25, -2);
  check("linear", [a](const Matrix& y) -> Matrix { return y * a.transpose(); }, a.trace(), 0.0);

  const ScoreNet net = trained_mlp(settings.seed + 1);
  Rng ref_rng(settings.seed, 42);
  const MeanEstimate reference = smoothed_trace(net_field(net), x, sigma, 1000000, ref_rng);
  check("mlp", net_values(net), reference.mean, reference.std_error);
  return {passed, summary};
}

Outcome criterion_stein(const Settings& settings) {
  const ScoreNet net = trained_mlp(settings.seed + 1);
  const Vector mu = (Vector(2) << 0.5, -0.5).finished();
  const double sigma = 0.8;
  bool passed = true;
  std::string summary;
  const std::vector<std::pair<const char*, TensorFn>> fields{
      {"identity", [](const Tensor& z) { return z; }},
      {"square", [](const Tensor& z) { return mul(z, z); }},
      {"mlp", net_field(net)},
  };
  for (const auto& [name, h] : fields) {
    Rng rng(settings.seed, 51);
    const SteinCheckReport r = stein_check(h, mu, sigma, 1000000, rng);
    note(fmt("%-8s max standardised discrepancy %.3f", name, r.max_discrepancy));
    passed = passed && r.passed();
    summary += fmt("%s%s %.2f", summary.empty() ? "" : "; ", name, r.max_discrepancy);
  }
  return {passed, summary + fmt(" (bar %.0f)", kDiscrepancyBar)};
}

Outcome criterion_identities(const Settings& settings) {
  Rng rng(settings.seed, 61);
  bool passed = true;
  std::string summary;
  auto record = [&](const char* name, bool ok, double stat) {
    note(fmt("%-28s %s  %.3e", name, ok ? "ok" : "FAILED", stat));
    passed = passed && ok;
    summary += fmt("%s%s %s", summary.empty() ? "" : "; ", name, ok ? "ok" : "failed");
  };

  {
    // Enumeration over the four Rademacher sign vectors in d = 2.
    const Matrix a = rng.normal_matrix(2, 2);
    const Matrix x = rng.normal_matrix(1, 2);
    const double eps = 0.3;
    double total = 0.0;
    for (double p : {-1.0, 1.0}) {
      for (double q : {-1.0, 1.0}) {
        Tape tape;
        const Matrix v = (eps / std::sqrt(2.0)) * (Matrix(1, 2) << p, q).finished();
        total += ssm(tape, linear(a), Tensor(x), v, eps).item();
      }
    }
    Tape tape;
    const double exact = sm_exact(tape, linear(a), Tensor(x)).item() / 2.0;
    const double err = std::abs(total / 4 - exact) / std::max(1.0, std::abs(exact));
    record("E[ssm] = sm_exact/d", err < 1e-14, err);
  }
  {
    const Matrix a = rng.normal_matrix(2, 2);
    const Matrix x = rng.normal_matrix(1000, 2);
    const Matrix v = rng.normal_matrix(1000, 2);
    Tape tape;
    const Matrix fd = fd_ssm_terms(tape, linear(a), Tensor(x), v, 0.1).projection.value();
    const Matrix exact = ssm_terms(tape, linear(a), Tensor(x), v, 0.1).projection.value();
    const double err = (fd - exact).cwiseAbs().maxCoeff() / exact.cwiseAbs().maxCoeff();
    record("fd_ssm first term = ssm", err < 1e-12, err);
  }
  {
    const ScoreNet net = init(MlpConfig::score(2, {16, 16}), NetMode::Score, settings.seed + 2);
    const Matrix x = rng.normal_matrix(256, 2);
    const Matrix z = rng.normal_matrix(256, 2);
    Tape tape;
    const BoundNet bound(net, tape);
    const Matrix plain = lcss(tape, score_fn(bound), x, z, 0.1).value();
    const Matrix gamma = lcss_gamma(tape, score_fn(bound), x, z, 0.1, 1.0).value();
    const bool equal = plain == gamma;
    record("lcss(gamma=1) bit-equal", equal, (plain - gamma).cwiseAbs().maxCoeff());
  }
  {
    struct Case {
      double x0[2], xt[2], sigma, target[2];
    };
    const Case cases[] = {
        {{1, 0}, {1.5, 0}, 0.5, {-2, 0}},
        {{0, 0}, {0.1, -0.2}, 0.1, {-10, 20}},
        {{-1, 2}, {-1, 2}, 3.0, {0, 0}},
        {{2, 1}, {1, 3}, 2.0, {0.25, -0.5}},
    };
    double worst = 0.0;
    for (const Case& c : cases) {
      const Matrix got = dsm_target((Matrix(1, 2) << c.x0[0], c.x0[1]).finished(),
                                    (Matrix(1, 2) << c.xt[0], c.xt[1]).finished(), c.sigma);
      worst = std::max({worst, std::abs(got(0, 0) - c.target[0]), std::abs(got(0, 1) - c.target[1])});
    }
    record("dsm target hand cases", worst < 1e-12, worst);
  }
  return {passed, summary};
}

/// Relative error between the tape θ-gradient and central differences.
double gradient_error(const ScoreNet& net, const std::function<Tensor(Tape&, const BoundNet&)>& loss) {
  Tape tape;
  const BoundNet bound(net, tape);
  const Vector grad = bound.gradient(loss(tape, bound));
  ScoreNet probe = net;
  const Vector theta = net.params();
  Vector fd(theta.size());
  const double h = 1e-5;
  for (Index i = 0; i < theta.size(); ++i) {
    Vector p = theta;
    p[i] += h;
    probe.set_params(p);
    Tape up_tape;
    const double up = loss(up_tape, BoundNet(probe, up_tape, false)).item();
    p[i] = theta[i] - h;
    probe.set_params(p);
    Tape down_tape;
    const double down = loss(down_tape, BoundNet(probe, down_tape, false)).item();
    fd[i] = (up - down) / (2 * h);
  }
  return (grad - fd).norm() / std::max(fd.norm(), 1e-12);
}

Outcome criterion_gradients(const Settings& settings) {
  Rng rng(settings.seed, 71);
  const Matrix x = rng.normal_matrix(8, 2);
  const Matrix z = rng.normal_matrix(8, 2);
  const Matrix v = 0.5 / std::sqrt(2.0) * rng.sign_matrix(8, 2);
  const ScoreNet net = init(MlpConfig::score(2, {16, 16}), NetMode::Score, settings.seed + 3);
  using Loss = std::function<Tensor(Tape&, const BoundNet&)>;
  const std::vector<std::pair<const char*, Loss>> losses{
      {"sm", [&](Tape& t, const BoundNet& b) { return mean(sm_exact(t, score_fn(b), Tensor(x))); }},
      {"ssm", [&](Tape& t, const BoundNet& b) { return mean(ssm(t, score_fn(b), Tensor(x), v, 0.5)); }},
      {"fdssm", [&](Tape& t, const BoundNet& b) { return mean(fd_ssm(t, score_fn(b), Tensor(x), v, 0.5)); }},
      {"dsm", [&](Tape& t, const BoundNet& b) { return mean(dsm(t, score_fn(b), x, z, 0.2)); }},
      {"lcs", [&](Tape& t, const BoundNet& b) { return mean(lcs_exact(t, score_fn(b), Tensor(x), 0.2)); }},
      {"lcss", [&](Tape& t, const BoundNet& b) { return mean(lcss(t, score_fn(b), x, z, 0.2)); }},
      {"lcss_gamma", [&](Tape& t, const BoundNet& b) { return mean(lcss_gamma(t, score_fn(b), x, z, 0.2, 0.5)); }},
  };
  bool passed = true;
  std::string summary;
  double worst = 0.0;
  for (const auto& [name, loss] : losses) {
    const double err = gradient_error(net, loss);
    note(fmt("%-10s grad rel err %.2e", name, err));
    worst = std::max(worst, err);
    passed = passed && err < 1e-3;
  }
  summary = fmt("worst data-space grad err %.2e", worst);

  // Time-integrated losses on a time-conditional net of the same shape.
  const SdeSchedule sde = SdeSchedule::ve();
  const TimeEmbedding embedding(sde);
  const ScoreNet timed = init(MlpConfig::score(2, {16, 16}, true), NetMode::Score, settings.seed + 4);
  bool finite = true;
  for (ObjectiveKind kind : {ObjectiveKind::DSM, ObjectiveKind::LCSS, ObjectiveKind::LCSS_GAMMA, ObjectiveKind::SSM,
                             ObjectiveKind::FDSSM}) {
    ObjectiveSpec spec;
    spec.kind = kind;
    spec.gamma = 0.5;
    SdmDraw draw = draw_sdm_noise(sde, spec, 8, 2, rng);
    const Loss loss = [&](Tape&, const BoundNet& b) { return sdm_loss(b, x, sde, embedding, spec, draw); };
    const double err = gradient_error(timed, loss);
    draw.t.setConstant(kTMin);
    Tape tape;
    const BoundNet bound(timed, tape);
    const Tensor at_min = sdm_loss(bound, x, sde, embedding, spec, draw);
    const bool ok = std::isfinite(at_min.item()) && bound.gradient(at_min).allFinite();
    note(fmt("sdm %-10s grad rel err %.2e, loss at t_min %.6g (%s)", std::string(to_string(kind)).c_str(), err,
             at_min.item(), ok ? "finite" : "NOT finite"));
    worst = std::max(worst, err);
    passed = passed && err < 1e-3;
    finite = finite && ok;
  }
  return {passed && finite, fmt("worst grad err %.2e; sdm finite at t_min: %s", worst, finite ? "yes" : "no")};
}

Outcome criterion_samplers(const Settings& settings) {
  bool passed = true;
  std::string summary;
  const long n = 10000;
  const int steps = 1000;
  auto moments = [&](const char* label, const Matrix& x, const Vector& mean, const Vector& var) {
    const Vector m = x.colwise().mean().transpose();
    const Vector v = (x.rowwise() - m.transpose()).array().square().colwise().sum().transpose() / (n - 1);
    const double dm = (m - mean).cwiseAbs().maxCoeff();
    const double dv = (v - var).cwiseAbs().maxCoeff();
    const bool ok = dm <= 0.05 && dv <= 0.1;
    note(fmt("%-14s mean err %.4f  var err %.4f  %s", label, dm, dv, ok ? "ok" : "outside tolerance"));
    passed = passed && ok;
    summary += fmt("%s%s %s", summary.empty() ? "" : "; ", label, ok ? "ok" : "failed");
  };

  const Vector mu = (Vector(2) << 1.0, -0.5).finished();
  const double tau2 = 0.5;
  for (const SdeSchedule& sde : {SdeSchedule::ve(), SdeSchedule::subvp()}) {
    // x0 ~ N(mu, τ² I): x_t ~ N(a_t mu, a_t² τ² + σ_t²) with a_t the mean decay.
    const TimeScoreFn score = [&](const Matrix& x, double t) -> Matrix {
      const double decay = sde.kind == SdeKind::VE ? 1.0 : std::exp(-0.5 * sde.beta_integral(t));
      const double s = sde.marginal_std(t);
      const double var = decay * decay * tau2 + s * s;
      return -(x.rowwise() - decay * mu.transpose()) / var;
    };
    Rng rng(settings.seed, 81);
    const Matrix x = reverse_em(sde, score, sample_prior(sde, n, 2, rng), steps, rng);
    moments((sde.name() + " gaussian").c_str(), x, mu, Vector::Constant(2, tau2));
  }
  {
    const SdeSchedule sde = SdeSchedule::ve();
    const GaussianMixture mix = GaussianMixture::ring();
    const TimeScoreFn score = [&](const Matrix& x, double t) -> Matrix {
      const double s = sde.marginal_std(t);
      return gmm_score(mix, x, s * s);
    };
    Rng rng(settings.seed, 82);
    const Matrix x = reverse_em(sde, score, sample_prior(sde, n, 2, rng), steps, rng);
    // Ring of radius r with isotropic component noise s: per-axis variance r²/2 + s².
    const double r = mix.means.row(0).norm();
    const double s = mix.stds[0];
    moments("ve ring", x, Vector::Zero(2), Vector::Constant(2, r * r / 2 + s * s));
  }
  {
    const double eps = 0.1;
    Rng rng(settings.seed, 83);
    const Matrix x = langevin([](const Matrix& y) -> Matrix { return -y; }, Matrix::Zero(n, 2), eps, steps, rng);
    // Stationary variance of x <- (1 − ε/2) x + sqrt(ε) z.
    const double exact = eps / (1.0 - (1.0 - eps / 2) * (1.0 - eps / 2));
    const Vector v = x.array().square().colwise().mean().transpose();
    const double rel = (v.array() - exact).abs().maxCoeff() / exact;
    const bool ok = rel <= 0.1;
    note(fmt("langevin       variance %.4f, %.4f vs exact %.4f (rel %.3f)", v[0], v[1], exact, rel));
    passed = passed && ok;
    summary += fmt("; langevin rel %.3f", rel);
  }
  return {passed, summary};
}

// Optimiser for the mixture runs.
constexpr double kGmmLr = 1e-2;
constexpr double kGmmMomentum = 0.9;

Outcome criterion_gmm(const Settings& settings) {
  std::map<ObjectiveKind, ScoreErrorSummary> results;
  for (ObjectiveKind kind : {ObjectiveKind::LCSS, ObjectiveKind::DSM}) {
    RunConfig config;
    config.method = kind;
    config.sde = SdeChoice::VE;
    config.dataset = DatasetKind::Gmm;
    config.batch = 512;
    config.iters = settings.iters.value_or(20000);
    config.lr = kGmmLr;
    config.momentum = kGmmMomentum;
    config.seed = settings.seed;
    const auto start = std::chrono::steady_clock::now();
    Trainer trainer(config.trainer_options());
    double last = 0.0;
    for (long i = 0; i < config.iters; ++i) last = trainer.step();
    Rng rng(config.seed, kEvalStream);
    const ScoreErrorSummary s = gmm_score_error(trainer.net(), config.schedule(), 10000, rng);
    note(fmt("%-5s score_error %.4f  zero-net %.4f  ratio %.4f  final loss %.4g  %.0f s",
             std::string(to_string(kind)).c_str(), s.model_error, s.zero_error, s.ratio(), last,
             seconds_since(start)));
    results[kind] = s;
  }
  const ScoreErrorSummary& l = results[ObjectiveKind::LCSS];
  const ScoreErrorSummary& d = results[ObjectiveKind::DSM];
  const bool ok = l.ratio() < 0.1 && l.model_error <= 2.0 * d.model_error;
  return {ok, fmt("lcss ratio %.4f (bar 0.1), lcss/dsm error %.3f (bar 2)", l.ratio(), l.model_error / d.model_error)};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome(const Settings&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list{
      {1, "training-step timing ordering", criterion_bench},
      {2, "checkerboard density fit", criterion_checkerboard},
      {3, "smoothed score matching equivalence", criterion_lemma},
      {4, "Stein trace estimator convergence", criterion_trace},
      {5, "Stein identity", criterion_stein},
      {6, "objective cross-identities", criterion_identities},
      {7, "gradient integrity", criterion_gradients},
      {8, "sampler consistency", criterion_samplers},
      {9, "mixture score learning", criterion_gmm},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scorelab acceptance suite"};
  int only = 0;
  Settings settings;
  long iters = 0;
  app.add_option("--criterion", only, "run only this criterion (1-9)")->check(CLI::Range(0, 9));
  app.add_option("--seed", settings.seed, "base seed");
  app.add_option("--iters", iters, "override training steps (exploration only; not a passing run)");
  CLI11_PARSE(app, argc, argv);
  if (iters > 0) settings.iters = iters;
  tune_allocator();

  bool all_passed = true;
  for (const Criterion& c : criteria()) {
    if (only != 0 && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run(settings);
    } catch (const std::exception& e) {
      outcome = {false, std::string("error: ") + e.what()};
    }
    if (settings.iters && (c.id == 2 || c.id == 9)) {
      outcome.passed = false;
      outcome.summary += " [shortened run]";
    }
    std::printf("criterion %d %s: %s -- %s (%.1f s)\n", c.id, outcome.passed ? "PASS" : "FAIL", c.title,
                outcome.summary.c_str(), seconds_since(start));
    std::fflush(stdout);
    all_passed = all_passed && outcome.passed;
  }
  return all_passed ? 0 : 1;
}
