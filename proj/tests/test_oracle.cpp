#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "abc/oracle.hpp"

using namespace abc;
using cplx = std::complex<double>;

namespace {

constexpr cplx kI{0.0, 1.0};

ModelSpec linear_model(DispersionLaw disp, int d, double lambda, double width = 1.0) {
  ModelSpec spec;
  spec.family = InteractionFamily::LinearSolvable;
  spec.d = d;
  spec.n = 1;
  spec.dispersion = disp;
  spec.form_factor.kind = FormFactorKind::IsotropicGaussian;
  spec.form_factor.amplitude = 1.0;
  spec.form_factor.width = width;
  spec.lambda = lambda;
  return spec;
}

// Richardson-extrapolated trapezoid of the outer time integral; the inner
// integral is closed-form.
cplx ordered_reference(double t, double E) {
  auto inner = [&](double t1) { return (1.0 - std::exp(-kI * t1 * E)) / (kI * E); };
  auto trap = [&](int n) {
    cplx acc = 0.5 * (inner(0.0) + inner(t));
    for (int i = 1; i < n; ++i) acc += inner(t * i / n);
    return acc * (t / n);
  };
  const cplx t1 = trap(40'000), t2 = trap(80'000);
  return (4.0 * t2 - t1) / 3.0;
}

}  // namespace

TEST_CASE("ordered double time integral against a trapezoid reference") {
  CHECK(std::abs(ordered_exp_integral(0.0, 3.0)) == 0.0);
  for (double E : {0.5, 3.7, 10.0}) {
    for (double t : {2.0, 20.0}) {
      const cplx closed = ordered_exp_integral(t, E);
      const cplx ref = ordered_reference(t, E);
      CHECK(std::abs(closed - ref) < 1e-10 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST_CASE("ordered double time integral is smooth through small energies") {
  // series branch against the closed form on both sides of the switchover
  const double t = 1.0;
  for (double E : {5e-4, 2e-3, 1e-2}) {
    const cplx series = [&] {
      cplx acc = 0.0, pw = 1.0;
      double fact = 1.0;
      for (int k = 0; k <= 20; ++k) {
        if (k > 0) {
          pw *= -kI * E;
          fact *= k + 1;
        }
        acc += pw * std::pow(t, k + 2) / ((k + 2) * fact);
      }
      return acc;
    }();
    CHECK(std::abs(ordered_exp_integral(t, E) - series) < 1e-13);
  }
  CHECK(std::abs(ordered_exp_integral(2.0, 1e-9) - cplx(2.0)) < 1e-8);
}

TEST_CASE("second-order coefficient for a flat band has the closed form") {
  ModelSpec spec;
  spec.family = InteractionFamily::PairCreation;
  spec.d = 1;
  spec.n = 2;
  spec.dispersion = DispersionLaw::constant(1.0);
  spec.form_factor.kind = FormFactorKind::IsotropicGaussian;
  spec.lambda = 1.0;
  QuadratureSettings settings;

  const IntegralResult norm_v = integrate_momentum(
      spec, [&](std::span<const double> p) -> cplx { return std::norm(eval_form_factor(spec, p)); },
      settings);

  CHECK(std::abs(dyson_second_order(spec, 0.0, settings)) < 1e-14);
  for (double t : {0.7, 3.0, 12.0}) {
    const cplx got = dyson_second_order(spec, t, settings);
    const cplx per_unit = kI * t / 2.0 - 0.25 + std::exp(-2.0 * kI * t) / 4.0;
    CHECK(std::abs(got - norm_v.value * per_unit) < 1e-10 * std::abs(norm_v.value));
  }

  ModelSpec tri = spec;
  tri.family = InteractionFamily::TranslationInvariantTrilinear;
  tri.d = 3;
  tri.n = 1;
  CHECK_THROWS_AS(dyson_second_order(tri, 1.0, settings), std::invalid_argument);
}

TEST_CASE("solvable model basics") {
  QuadratureSettings settings;
  ModelSpec spec = linear_model(DispersionLaw::relativistic(1.0), 3, 0.2);

  SUBCASE("zero coupling gives unity") {
    spec.lambda = 0.0;
    CHECK(std::abs(solvable_model_exact(spec, 7.3, settings) - 1.0) < 1e-15);
  }
  SUBCASE("t = 0 gives exactly unity") {
    CHECK(std::abs(solvable_model_exact(spec, 0.0, settings) - 1.0) < 1e-15);
  }
  SUBCASE("structure of the pieces") {
    const SolvableABC abc = solvable_abc(spec, 4.0, settings);
    CHECK(std::abs(abc.A.real()) < 1e-12);  // i * (real integral)
    CHECK(abc.A.imag() > 0);
    CHECK(abc.B.real() < 0);
    CHECK(std::abs(abc.B.imag()) < 1e-12);
    CHECK(std::abs(abc.C) <= -abc.B.real() * (1.0 + 1e-12));
  }
  SUBCASE("decay dispersion is rejected") {
    ModelSpec decay = linear_model(DispersionLaw::nonrel_shifted(1.0), 3, 0.1);
    CHECK_THROWS_AS(solvable_model_exact(decay, 1.0, settings), std::invalid_argument);
  }
}

TEST_CASE("matrix exponential fundamentals") {
  const Eigen::MatrixXcd zero = Eigen::MatrixXcd::Zero(5, 5);
  CHECK((matrix_exponential(zero) - Eigen::MatrixXcd::Identity(5, 5)).norm() < 1e-14);

  // small-norm case against the plain Taylor series
  Eigen::MatrixXcd a(3, 3);
  a << cplx(0.1, 0.02), cplx(-0.3, 0.0), cplx(0.05, 0.11), cplx(0.0, 0.21), cplx(0.07, -0.3),
      cplx(0.2, 0.0), cplx(-0.15, 0.04), cplx(0.0, -0.12), cplx(0.09, 0.25);
  Eigen::MatrixXcd series = Eigen::MatrixXcd::Identity(3, 3);
  Eigen::MatrixXcd term = Eigen::MatrixXcd::Identity(3, 3);
  for (int k = 1; k <= 30; ++k) {
    term = term * a / static_cast<double>(k);
    series += term;
  }
  CHECK((matrix_exponential(a) - series).norm() < 1e-13);

  // hermitian generator with a large step against the spectral route
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Random(8, 8);
  h = (h + h.adjoint()).eval();
  const double t = 13.7;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  Eigen::VectorXcd phases(8);
  for (int i = 0; i < 8; ++i) phases(i) = std::exp(-kI * t * es.eigenvalues()(i));
  const Eigen::MatrixXcd spectral =
      es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
  CHECK((matrix_exponential(-kI * t * h) - spectral).norm() < 1e-11);
}

TEST_CASE("single-mode evolution has the displaced-oscillator closed form") {
  const ModelSpec spec = linear_model(DispersionLaw::constant(1.0), 1, 0.1);
  FockDiscretization disc;
  disc.mode_momenta = {{0.0}};
  disc.weights = {1.0};
  disc.per_mode_truncation = 24;
  for (double t : {1.0, 5.0, 20.0}) {
    const cplx got = fock_evolve(disc, spec, t, 0.1);
    const cplx expected = std::exp(0.01 * (kI * t - 1.0 + std::exp(-kI * t)));
    CHECK(std::abs(got - expected) < 1e-10);
  }
  CHECK(std::abs(fock_evolve(disc, spec, 3.0, 0.0) - 1.0) < 1e-13);
}

TEST_CASE("fock evolution truncation and unitarity guards") {
  const ModelSpec spec = linear_model(DispersionLaw::constant(1.0), 1, 0.4);
  FockDiscretization tight;
  tight.mode_momenta = {{0.0}};
  tight.weights = {1.0};
  tight.per_mode_truncation = 4;
  CHECK_THROWS_AS(fock_evolve(tight, spec, 3.0, 0.4), NumericError);

  const ModelSpec mild = linear_model(DispersionLaw::relativistic(1.0), 3, 0.2);
  const FockDiscretization disc = radial_fock_discretization(mild, 96, 12);
  for (double t : {0.5, 4.0, 11.0}) {
    const cplx u = fock_evolve(disc, mild, t, 0.2);
    CHECK(std::abs(u) <= 1.0 + 1e-12);
  }
}

TEST_CASE("radial mode set reproduces the kernel norm") {
  const ModelSpec spec = linear_model(DispersionLaw::relativistic(1.0), 3, 0.2);
  const FockDiscretization disc = radial_fock_discretization(spec, 160, 12);
  double acc = 0.0;
  for (std::size_t j = 0; j < disc.weights.size(); ++j) {
    const auto& k = disc.mode_momenta[j];
    acc += disc.weights[j] * std::norm(eval_form_factor(spec, {k.data(), k.size()}));
  }
  CHECK(acc == doctest::Approx(std::pow(std::numbers::pi, 1.5)).epsilon(1e-10));
}

TEST_CASE("mode product order does not matter") {
  const ModelSpec spec = linear_model(DispersionLaw::relativistic(1.0), 3, 0.2);
  FockDiscretization disc = radial_fock_discretization(spec, 40, 12);
  const cplx forward = fock_evolve(disc, spec, 6.0, 0.2);
  std::reverse(disc.mode_momenta.begin(), disc.mode_momenta.end());
  std::reverse(disc.weights.begin(), disc.weights.end());
  const cplx backward = fock_evolve(disc, spec, 6.0, 0.2);
  CHECK(std::abs(forward - backward) < 1e-12);
}

TEST_CASE("truncation sweep is cauchy") {
  // coupling small enough that even the 4-level truncation passes the
  // top-amplitude guard
  const ModelSpec spec = linear_model(DispersionLaw::constant(1.0), 1, 2e-4);
  FockDiscretization disc;
  disc.mode_momenta = {{0.0}};
  disc.weights = {1.0};
  std::vector<cplx> vals;
  for (int n : {4, 8, 16}) {
    disc.per_mode_truncation = n;
    vals.push_back(fock_evolve(disc, spec, 2.0, 2e-4));
  }
  const double d1 = std::abs(vals[1] - vals[0]);
  const double d2 = std::abs(vals[2] - vals[1]);
  // shrink by 10x, or already at the floating-point floor
  CHECK((d2 <= 0.1 * d1 || (d1 < 1e-13 && d2 < 1e-13)));
}

TEST_CASE("solvable model agrees with the fock reference") {
  const ModelSpec spec = linear_model(DispersionLaw::relativistic(1.0), 3, 0.2);
  QuadratureSettings settings;
  const FockDiscretization disc = radial_fock_discretization(spec, 160, 12);
  for (double t : {2.0, 10.0}) {
    const cplx exact = solvable_model_exact(spec, t, settings);
    const cplx fock = fock_evolve(disc, spec, t, spec.lambda);
    CHECK(std::abs(exact - fock) < 1e-6);
  }
}

TEST_CASE("dyson coefficient matches the log of the fock amplitude") {
  ModelSpec spec = linear_model(DispersionLaw::relativistic(1.0), 3, 1.0);
  QuadratureSettings settings;
  const double t = 5.0;
  const cplx dyson = dyson_second_order(spec, t, settings);

  const FockDiscretization disc = radial_fock_discretization(spec, 160, 14);
  auto log_over_l2 = [&](double lambda) {
    const cplx u = fock_evolve(disc, spec, t, lambda);
    return std::log(u) / (lambda * lambda);
  };
  const cplx rich = (4.0 * log_over_l2(0.05) - log_over_l2(0.1)) / 3.0;
  CHECK(std::abs(dyson - rich) < 1e-6 * std::max(1.0, std::abs(dyson)));
}

TEST_CASE("decay-route solvable model") {
  const ModelSpec spec = linear_model(DispersionLaw::nonrel_shifted(1.0), 3, 0.1);
  QuadratureSettings settings;

  CHECK(std::abs(solvable_model_decay(spec, 0.0, settings) - 1.0) == 0.0);

  double prev = 1.0;
  for (double t : {5.0, 12.0, 20.0, 33.0, 50.0}) {
    const double mod = std::abs(solvable_model_decay(spec, t, settings));
    CHECK(mod < prev);
    prev = mod;
  }

  // asymptotic slope of log U approaches lambda^2 A2(inf); d(log U)/dt equals
  // lambda^2 A2(t) identically, so the decay rate comes from |U| at one point
  // and the rotation rate from a short-baseline phase difference (which never
  // wraps).
  std::vector<double> grid;
  for (int j = 0; j <= 8000; ++j) grid.push_back(0.05 * j);
  const SigmaAutocorrelation F = autocorrelation_F(spec, grid, settings);
  const TimeMoments lim = time_moment_integrals(F, kInfiniteTime);
  const cplx target = 0.01 * lim.A2;
  const cplx u200 = solvable_model_decay(spec, 200.0, settings);
  const cplx u195 = solvable_model_decay(spec, 195.0, settings);
  const double rate = std::log(std::abs(u200)) / 200.0;
  const double rotation = std::arg(u200 / u195) / 5.0;
  CHECK(std::abs(rate - target.real()) < 0.02 * std::abs(target));
  CHECK(std::abs(rotation - target.imag()) < 0.02 * std::abs(target));

  const ModelSpec gapped = linear_model(DispersionLaw::relativistic(1.0), 3, 0.1);
  CHECK_THROWS_AS(solvable_model_decay(gapped, 1.0, settings), std::invalid_argument);
}

TEST_CASE("abc residual extraction") {
  const cplx A(0.0, 0.35), B(-0.2, 0.0);

  SUBCASE("pure exponential leaves no residue") {
    std::vector<double> t;
    std::vector<cplx> series;
    for (int j = 0; j <= 50; ++j) {
      t.push_back(0.2 * j);
      series.push_back(std::exp(A * t.back() + B));
    }
    const auto c = abc_residual(t, series, A, B);
    for (const cplx& v : c) CHECK(std::abs(v) < 1e-13);
  }

  SUBCASE("flat-band solvable model recovers its oscillating tail") {
    const ModelSpec spec = linear_model(DispersionLaw::constant(2.0), 1, 0.1);
    QuadratureSettings settings;
    std::vector<double> t;
    std::vector<cplx> series;
    for (int j = 0; j <= 60; ++j) {
      t.push_back(0.1 * j);
      series.push_back(solvable_model_exact(spec, t.back(), settings));
    }
    const SolvableABC abc = solvable_abc(spec, 0.0, settings);
    const auto c = abc_residual(t, series, abc.A, abc.B);
    const double norm_v = std::sqrt(std::numbers::pi);  // gaussian kernel, d = 1
    for (std::size_t j = 0; j < t.size(); ++j) {
      const cplx expected = 0.01 * norm_v * std::exp(-2.0 * kI * t[j]) / 4.0;
      CHECK(std::abs(c[j] - expected) < 1e-8);
    }
  }

  SUBCASE("guards") {
    CHECK_THROWS_AS(abc_residual({0.0, 1.0}, {cplx(1.0), cplx(1e-15)}, A, B), NumericError);
    CHECK_THROWS_AS(abc_residual({0.0, 1.0}, {cplx(1.0), std::exp(cplx(0.0, 2.0))}, A, B),
                    NumericError);
    CHECK_THROWS_AS(abc_residual({0.0}, {cplx(1.0), cplx(1.0)}, A, B), std::invalid_argument);
  }
}
