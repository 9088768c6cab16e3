#include "scorelab/datasets.hpp"
#include "scorelab/errors.hpp"
#include "scorelab/sde.hpp"

#include <doctest.h>

#include <cmath>

using namespace scorelab;

namespace {

Matrix row(double a, double b) {
  Matrix m(1, 2);
  m << a, b;
  return m;
}

double variance(const Matrix& x) {
  const Matrix c = x.rowwise() - x.colwise().mean();
  return c.array().square().sum() / static_cast<double>(x.size() - x.cols());
}

}  // namespace

TEST_CASE("drift values") {
  const SdeSchedule ve = SdeSchedule::ve();
  Rng rng(1);
  const Matrix x = rng.normal_matrix(3, 2);
  CHECK(ve.drift(x, 0.4).isZero(0.0));

  const SdeSchedule sub = SdeSchedule::subvp();
  // β(0) = β_min = 0.1
  const Matrix d = sub.drift(row(2, 0), 0.0);
  CHECK(d(0, 0) == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(d(0, 1) == 0.0);
}

TEST_CASE("drifts are affine") {
  Rng rng(2);
  const Matrix x = rng.normal_matrix(4, 2);
  const Matrix y = rng.normal_matrix(4, 2);
  for (const SdeSchedule& sde : {SdeSchedule::ve(), SdeSchedule::subvp()}) {
    for (double t : {0.0, 0.3, 1.0}) {
      const Matrix lhs = sde.drift(Matrix(2.5 * x + y), t);
      const Matrix rhs = 2.5 * sde.drift(x, t) + sde.drift(y, t);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("diffusion formulas") {
  const SdeSchedule ve = SdeSchedule::ve();
  CHECK(ve.diffusion(1.0) == doctest::Approx(50.0 * std::sqrt(2.0 * std::log(5000.0))));
  CHECK(ve.diffusion(0.0) == doctest::Approx(0.01 * std::sqrt(2.0 * std::log(5000.0))));
  const SdeSchedule sub = SdeSchedule::subvp();
  const double t = 0.5;
  const double integral = 0.1 * t + 0.5 * t * t * 19.9;
  CHECK(sub.diffusion(t) == doctest::Approx(std::sqrt((0.1 + t * 19.9) * (1 - std::exp(-2 * integral)))));
  CHECK_THROWS_AS(ve.diffusion(1.5), ParameterError);
  CHECK_THROWS_AS(ve.diffusion(-0.1), ParameterError);
}

TEST_CASE("marginal std endpoints, limits and monotonicity") {
  const SdeSchedule ve = SdeSchedule::ve();
  CHECK(ve.marginal_std(1.0) == doctest::Approx(50.0));
  const SdeSchedule sub = SdeSchedule::subvp();
  CHECK(sub.marginal_std(1.0) > 0.9999);
  BasicSdeSchedule<double> long_sub = sub;
  long_sub.horizon = 3.0;
  CHECK(long_sub.marginal_std(3.0) == doctest::Approx(1.0).epsilon(1e-12));
  for (const SdeSchedule& sde : {ve, sub}) {
    double previous = 0.0;
    for (int i = 1; i <= 1000; ++i) {
      const double s = sde.marginal_std(i / 1000.0);
      CHECK_UNARY(s > previous);
      previous = s;
    }
    CHECK_THROWS_AS(sde.marginal_std(0.0), ParameterError);
  }
}

TEST_CASE("schedule parameters are validated") {
  CHECK_THROWS_AS(SdeSchedule::ve(1.0, 0.5), ParameterError);
  CHECK_THROWS_AS(SdeSchedule::ve(0.0, 1.0), ParameterError);
  CHECK_THROWS_AS(SdeSchedule::subvp(2.0, 1.0), ParameterError);
}

TEST_CASE("float schedule agrees with double") {
  const auto f = BasicSdeSchedule<float>::ve();
  const auto d = SdeSchedule::ve();
  CHECK(static_cast<double>(f.marginal_std(0.5f)) == doctest::Approx(d.marginal_std(0.5)).epsilon(1e-5));
}

TEST_CASE("time embedding spans a unit range around zero") {
  for (const SdeSchedule& sde : {SdeSchedule::ve(), SdeSchedule::subvp()}) {
    const TimeEmbedding embed(sde);
    CHECK(embed(1.0) - embed(kTMin) == doctest::Approx(1.0));
    // Mean of the feature over [t_min, T] is zero (trapezoid check).
    const int n = 200000;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double t = kTMin + (1.0 - kTMin) * i / n;
      acc += (i == 0 || i == n ? 0.5 : 1.0) * embed(t);
    }
    CHECK(std::abs(acc / n) < 1e-3);
  }
  // Affine in the floored noise level ½ log(σ² + c²).
  const SdeSchedule sde = SdeSchedule::ve();
  const TimeEmbedding ve(sde);
  auto level = [&](double t) {
    const double s = sde.marginal_std(t);
    return 0.5 * std::log(s * s + kNoiseFloor * kNoiseFloor);
  };
  const double range = level(1.0) - level(kTMin);
  for (double t : {0.2, 0.5, 0.9}) {
    CHECK(ve(t) - ve(kTMin) == doctest::Approx((level(t) - level(kTMin)) / range));
  }
  // Far below the floor the feature no longer moves.
  CHECK(std::abs(ve(2 * kTMin) - ve(kTMin)) < 1e-6);
}

TEST_CASE("perturb") {
  const SdeSchedule sde = SdeSchedule::ve();
  Rng a(3), b(3);
  const Matrix x0 = Matrix::Ones(5, 2);
  CHECK(perturb(sde, x0, 0.5, a) == perturb(sde, x0, 0.5, b));

  Rng rng(4);
  const double t = 0.3;
  const Matrix x = perturb(sde, Matrix::Zero(100000, 1), t, rng);
  CHECK(std::sqrt(variance(x)) == doctest::Approx(sde.marginal_std(t)).epsilon(0.01));

  Rng per_row(5);
  const Vector times = Vector::LinSpaced(4, 0.1, 0.9);
  Rng expect_rng(5);
  const Matrix z = expect_rng.normal_matrix(4, 2);
  const Matrix x4 = x0.topRows(4);
  const Matrix xt = perturb(sde, x4, times, per_row);
  for (Index i = 0; i < 4; ++i) {
    CHECK((xt.row(i) - (x4.row(i) + sde.marginal_std(times[i]) * z.row(i))).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("reverse_em recovers a standard normal with the exact score") {
  const SdeSchedule sde = SdeSchedule::ve();
  auto score = [&](const Matrix& x, double t) {
    const double s = sde.marginal_std(t);
    return Matrix(-x / (1.0 + s * s));
  };
  Rng rng(6);
  const Matrix x = reverse_em(sde, score, sample_prior(sde, 10000, 2, rng), 500, rng);
  CHECK(x.colwise().mean().cwiseAbs().maxCoeff() < 0.05);
  CHECK(std::abs(variance(x) - 1.0) < 0.1);
}

TEST_CASE("reverse_em recovers a Gaussian target under subVP") {
  // Target N(0, τ² I); under the subVP marginal convention x_t = x0 + σ_t z.
  const SdeSchedule sde = SdeSchedule::subvp();
  const double tau2 = 0.25;
  auto score = [&](const Matrix& x, double t) {
    const double s = sde.marginal_std(t);
    const double decay = std::exp(-0.5 * sde.beta_integral(t));
    return Matrix(-x / (decay * decay * tau2 + s * s));
  };
  Rng rng(7);
  const Matrix x = reverse_em(sde, score, sample_prior(sde, 10000, 2, rng), 500, rng);
  CHECK(x.colwise().mean().cwiseAbs().maxCoeff() < 0.05);
  CHECK(std::abs(variance(x) - tau2) < 0.1);
}

TEST_CASE("reverse_em with zero score and zero diffusion is the identity") {
  const SdeSchedule sde = SdeSchedule::ve();
  Rng rng(8);
  const Matrix start = rng.normal_matrix(10, 2);
  ReverseOptions options;
  options.diffusion_override = 0.0;
  const Matrix end = reverse_em(sde, [](const Matrix& x, double) { return Matrix(Matrix::Zero(x.rows(), x.cols())); },
                                start, 50, rng, options);
  CHECK(end == start);
}

TEST_CASE("reverse_em step refinement is within Monte Carlo error") {
  const SdeSchedule sde = SdeSchedule::ve();
  const Vector mu = Vector::Constant(2, 1.0);
  auto score = [&](const Matrix& x, double t) {
    const double s = sde.marginal_std(t);
    return Matrix((-(x.rowwise() - mu.transpose())) / (1.0 + s * s));
  };
  Rng a(9), b(10);
  const Matrix coarse = reverse_em(sde, score, sample_prior(sde, 10000, 2, a), 250, a);
  const Matrix fine = reverse_em(sde, score, sample_prior(sde, 10000, 2, b), 500, b);
  const double se = std::sqrt(2.0 / 10000.0);
  CHECK((coarse.colwise().mean() - fine.colwise().mean()).cwiseAbs().maxCoeff() < 3.0 * se);
}

TEST_CASE("reverse_em reports the diverging step") {
  const SdeSchedule sde = SdeSchedule::ve();
  Rng rng(11);
  auto bad = [](const Matrix& x, double) { return Matrix(Matrix::Constant(x.rows(), x.cols(), std::nan(""))); };
  try {
    reverse_em(sde, bad, sample_prior(sde, 4, 2, rng), 10, rng);
    FAIL("expected divergence");
  } catch (const DivergedError& e) {
    CHECK(e.step() == 0);
  }
}

TEST_CASE("langevin on a standard normal reaches the discretised stationary variance") {
  Rng rng(12);
  const double eps = 0.1;
  const Matrix x = langevin([](const Matrix& y) { return Matrix(-y); }, rng.uniform_matrix(10000, 2, -4, 4), eps, 1000,
                            rng);
  const double target = 1.0 / (1.0 - eps / 4.0);
  CHECK(std::abs(variance(x) - target) / target < 0.1);
}

TEST_CASE("langevin with zero score is a random walk") {
  Rng rng(13);
  const double eps = 0.1;
  const int steps = 200;
  const Matrix x = langevin([](const Matrix& y) { return Matrix(Matrix::Zero(y.rows(), y.cols())); },
                            Matrix::Zero(20000, 2), eps, steps, rng);
  CHECK(variance(x) == doctest::Approx(eps * steps).epsilon(0.05));
}

TEST_CASE("langevin with eps zero and no noise stays put") {
  Rng rng(14);
  const Matrix start = rng.normal_matrix(5, 2);
  LangevinOptions quiet;
  quiet.add_noise = false;
  CHECK(langevin([](const Matrix& y) { return Matrix(-y); }, start, 0.0, 100, rng, quiet) == start);
  CHECK(langevin([](const Matrix& y) { return Matrix(-y); }, start, 0.0, 100, rng) == start);
  CHECK_THROWS_AS(langevin([](const Matrix& y) { return y; }, start, -1.0, 1, rng), ParameterError);
}

TEST_CASE("langevin divergence is reported") {
  Rng rng(15);
  try {
    langevin([](const Matrix& y) { return Matrix(100.0 * y); }, Matrix::Ones(3, 2), 0.1, 100, rng);
    FAIL("expected divergence");
  } catch (const DivergedError& e) {
    CHECK(e.step() > 0);
    CHECK(e.step() < 100);
  }
}

TEST_CASE("annealed langevin ends near the last level") {
  Rng rng(16);
  Vector sigmas(3);
  sigmas << 2.0, 1.0, 0.5;
  // Score of N(0, (1 + σ²) I).
  const Matrix x = annealed_langevin([](const Matrix& y, double s) { return Matrix(-y / (1.0 + s * s)); },
                                     rng.uniform_matrix(5000, 2, -4, 4), sigmas, 300, 0.05, rng);
  CHECK(variance(x) == doctest::Approx(1.25 / (1.0 - 0.05 / (4.0 * 1.25))).epsilon(0.1));
}

TEST_CASE("perturbed mixture score is the gradient of the perturbed log density") {
  const GaussianMixture mix = GaussianMixture::ring();
  const SdeSchedule sde = SdeSchedule::ve();
  Rng rng(17);
  const double t = 0.2;
  const double s2 = std::pow(sde.marginal_std(t), 2);
  const Matrix x = perturb(sde, gmm_sample(mix, 20, rng), t, rng);
  const Matrix analytic = mix.score(x, s2);
  const double h = 1e-5;
  for (Index j = 0; j < 2; ++j) {
    Matrix up = x, down = x;
    up.col(j).array() += h;
    down.col(j).array() -= h;
    const Vector fd = (mix.log_density(up, s2) - mix.log_density(down, s2)) / (2 * h);
    CHECK((fd - analytic.col(j)).cwiseAbs().maxCoeff() / analytic.cwiseAbs().maxCoeff() < 1e-4);
  }
}
