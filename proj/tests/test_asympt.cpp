#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "abc/abc2.hpp"
#include "abc/asympt.hpp"
#include "abc/model.hpp"
#include "abc/oracle.hpp"
#include "abc/quad.hpp"

using namespace abc;

namespace {

constexpr double kPi = 3.14159265358979323846;

ModelSpec solvable_gaussian(int d, DispersionLaw disp, double lambda, double amplitude = 1.0,
                            double width = 1.0) {
  ModelSpec spec;
  spec.family = InteractionFamily::LinearSolvable;
  spec.d = d;
  spec.n = 1;
  spec.dispersion = disp;
  spec.form_factor.kind = FormFactorKind::IsotropicGaussian;
  spec.form_factor.amplitude = amplitude;
  spec.form_factor.width = width;
  spec.lambda = lambda;
  return spec;
}

ModelSpec pair_gaussian(int d, int n, DispersionLaw disp, double lambda) {
  ModelSpec spec;
  spec.family = InteractionFamily::PairCreation;
  spec.d = d;
  spec.n = n;
  spec.dispersion = disp;
  spec.form_factor.kind = FormFactorKind::IsotropicGaussian;
  spec.form_factor.amplitude = 1.0;
  spec.form_factor.width = 1.0;
  spec.lambda = lambda;
  return spec;
}

// Closed-form F(sigma) for the parabolic law with an isotropic Gaussian
// kernel: each of the dn axes contributes a one-dimensional Gaussian-Fresnel
// factor, and the shift contributes e^{+i sigma n omega0}.
std::complex<double> gaussian_autocorrelation(double amplitude, double width, double omega0,
                                              int dn, int arity, double sigma) {
  const std::complex<double> denom(1.0 / (width * width), 0.5 * sigma);
  const std::complex<double> base = std::pow(kPi / denom, 0.5 * dn);
  return amplitude * amplitude * std::exp(std::complex<double>(0.0, sigma * arity * omega0)) *
         base;
}

}  // namespace

TEST_CASE("critical point search finds the quadratic minimum exactly") {
  const auto search = find_critical_points(DispersionLaw::nonrel_shifted(1.0), 3, 5.0, 5);
  REQUIRE(search.points.size() == 1);
  CHECK(search.diagnostics.empty());
  const CriticalPoint& cp = search.points[0];
  CHECK(cp.k0.norm() == 0.0);
  CHECK(cp.grad_norm == 0.0);
  CHECK((cp.hessian - Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);
  CHECK(cp.signature == 3);
  CHECK_FALSE(cp.degenerate);
}

TEST_CASE("relativistic mass sets the curvature at the minimum") {
  const auto search = find_critical_points(DispersionLaw::relativistic(2.0), 3, 6.0, 5);
  REQUIRE(search.points.size() == 1);
  const CriticalPoint& cp = search.points[0];
  CHECK(cp.k0.norm() <= 1e-10);
  CHECK(cp.grad_norm <= 1e-10);
  CHECK((cp.hessian - 0.5 * Eigen::MatrixXd::Identity(3, 3)).norm() <= 1e-8);
  CHECK(cp.signature == 3);
  CHECK_FALSE(cp.degenerate);

  const auto line = find_critical_points(DispersionLaw::relativistic(1.0), 1, 6.5, 7);
  REQUIRE(line.points.size() == 1);
  CHECK(std::abs(line.points[0].hessian(0, 0) - 1.0) <= 1e-10);
  CHECK(line.points[0].signature == 1);
}

TEST_CASE("flat dispersion reports every seed as degenerate") {
  const auto search = find_critical_points(DispersionLaw::constant(1.0), 2, 3.0, 5);
  CHECK(search.points.size() == 25);
  for (const auto& cp : search.points) {
    CHECK(cp.degenerate);
    CHECK(cp.signature == 0);
    CHECK(cp.grad_norm == 0.0);
  }
}

TEST_CASE("kinked quasiparticle law yields the interior maximum") {
  const auto search = find_critical_points(DispersionLaw::fermi_quasi(1.0, 1.0), 2, 4.0, 6);
  REQUIRE(search.points.size() == 1);
  const CriticalPoint& cp = search.points[0];
  CHECK(cp.k0.norm() <= 1e-12);
  CHECK(cp.signature == -2);
  CHECK_FALSE(cp.degenerate);
  CHECK((cp.hessian + Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-12);
}

TEST_CASE("conical dispersion defeats the search") {
  // No seed lies on the cone tip: nothing converges, and the failure is
  // reported instead of silently returning an empty list.
  const auto even = find_critical_points(DispersionLaw::bogoliubov(1.0, 1.0), 2, 4.0, 6);
  CHECK(even.points.empty());
  CHECK_FALSE(even.diagnostics.empty());

  // A seed exactly on the tip sees the a.e. zero gradient and the zero
  // Hessian, so the tip comes back flagged degenerate.
  const auto odd = find_critical_points(DispersionLaw::bogoliubov(1.0, 1.0), 2, 4.0, 5);
  REQUIRE(odd.points.size() == 1);
  CHECK(odd.points[0].degenerate);
  CHECK(odd.points[0].signature == 0);
}

TEST_CASE("stationary phase coefficient matches the closed form modulus") {
  // v(0) = 1, omega(0) = 1, unit Hessian: modulus is exactly (2 pi / t)^{3/2}.
  const auto spec = solvable_gaussian(3, DispersionLaw::relativistic(1.0), 1.0);
  const double t = 37.5;
  const std::complex<double> val = stationary_phase_C(spec, t);
  CHECK(std::abs(std::abs(val) - std::pow(2.0 * kPi / t, 1.5)) <=
        1e-12 * std::pow(2.0 * kPi / t, 1.5));

  // Heavier mass: omega(0) = m, Hessian = I/m, so the modulus picks up
  // m^{d/2} / m^2 relative to the unit case.
  const auto heavy = solvable_gaussian(1, DispersionLaw::relativistic(2.0), 0.3);
  const double expect =
      0.09 * std::pow(2.0 * kPi / t, 0.5) * std::sqrt(2.0) / 4.0;
  CHECK(std::abs(std::abs(stationary_phase_C(heavy, t)) - expect) <= 1e-10 * expect);
}

TEST_CASE("stationary phase carries the quarter phase of the extremum") {
  const double t = 12.25;
  // Minimum of omega: each of the d directions contributes e^{-i pi/4}.
  const auto line = solvable_gaussian(1, DispersionLaw::relativistic(1.0), 1.0);
  const std::complex<double> rot1 =
      stationary_phase_C(line, t) * std::exp(std::complex<double>(0.0, t));
  CHECK(std::abs(std::arg(rot1) + kPi / 4.0) <= 1e-12);

  const auto bulk = solvable_gaussian(3, DispersionLaw::relativistic(1.0), 1.0);
  const std::complex<double> rot3 =
      stationary_phase_C(bulk, t) * std::exp(std::complex<double>(0.0, t));
  CHECK(std::abs(std::arg(rot3) + 3.0 * kPi / 4.0) <= 1e-12);

  // Interior maximum (kinked law at k = 0): conjugate quarter phase.
  const auto quasi = solvable_gaussian(1, DispersionLaw::fermi_quasi(1.0, 1.0), 1.0);
  const std::complex<double> rotq =
      stationary_phase_C(quasi, t) * std::exp(std::complex<double>(0.0, t));
  CHECK(std::abs(std::arg(rotq) - kPi / 4.0) <= 1e-12);
}

TEST_CASE("stationary phase value is periodic up to amplitude drift") {
  const auto spec = solvable_gaussian(3, DispersionLaw::relativistic(1.0), 0.5);
  const double t1 = 50.0;
  const double t2 = t1 + 2.0 * kPi;  // omega(k0) = 1
  const std::complex<double> ratio =
      stationary_phase_C(spec, t2) / stationary_phase_C(spec, t1);
  CHECK(std::abs(std::arg(ratio * std::pow(t2 / t1, 1.5))) <= 1e-12);
}

TEST_CASE("stationary phase approaches direct quadrature as t grows") {
  const auto spec = solvable_gaussian(1, DispersionLaw::relativistic(1.0), 1.0);
  QuadratureSettings settings;
  const std::vector<double> times = {25.0, 50.0, 100.0, 200.0};
  std::vector<double> rel;
  for (double t : times) {
    const std::complex<double> ref = solvable_abc(spec, t, settings).C;
    const std::complex<double> asym = stationary_phase_C(spec, t);
    rel.push_back(std::abs(asym - ref) / std::abs(ref));
  }
  CHECK(rel[2] <= 0.05);
  CHECK(rel[3] <= 0.03);
  int drops = 0;
  for (int i = 0; i + 1 < 4; ++i)
    if (rel[i + 1] < rel[i]) ++drops;
  CHECK(drops >= 2);
  CHECK(rel[3] < rel[0]);
}

TEST_CASE("parabolic autocorrelation law matches the exact gaussian transform") {
  const auto spec = pair_gaussian(3, 1, DispersionLaw::nonrel_shifted(1.0), 0.1);
  const double sigma = 200.0;
  const std::complex<double> asym = stationary_phase_F(spec, sigma);
  const std::complex<double> exact = gaussian_autocorrelation(1.0, 1.0, 1.0, 3, 1, sigma);
  CHECK(std::abs(asym - exact) <= 0.03 * std::abs(exact));

  QuadratureSettings settings;
  const std::complex<double> numeric = autocorrelation_value(spec, sigma, settings);
  CHECK(std::abs(asym - numeric) <= 0.03 * std::abs(numeric));

  // Modulus and sigma-doubling laws are exact properties of the formula.
  const double law = std::pow(2.0 * kPi / sigma, 1.5);
  CHECK(std::abs(std::abs(asym) - law) <= 1e-14 * law);
  const double half = std::abs(stationary_phase_F(spec, 2.0 * sigma)) / std::abs(asym);
  CHECK(std::abs(half - std::pow(2.0, -1.5)) <= 1e-12);
}

TEST_CASE("asymptotic phase advances at the shifted gap rate") {
  const auto spec = pair_gaussian(2, 2, DispersionLaw::nonrel_shifted(0.7), 0.1);
  // E(0) = -n omega0, so arg F advances by +n omega0 per unit sigma.
  const double sigma = 120.0, delta = 0.25;
  const std::complex<double> ratio =
      stationary_phase_F(spec, sigma + delta) / stationary_phase_F(spec, sigma);
  double adv = std::arg(ratio);
  const double expect = 2.0 * 0.7 * delta;
  CHECK(std::abs(adv - expect) <= 1e-12 + 2e-3 * expect);

  // Numeric phase slope over a short window agrees with n omega0 within 1%.
  const auto scalar = pair_gaussian(3, 1, DispersionLaw::nonrel_shifted(1.0), 0.1);
  QuadratureSettings settings;
  std::vector<double> s_grid, phases;
  for (int j = 0; j <= 20; ++j) s_grid.push_back(100.0 + 0.5 * j);
  double prev = 0.0, unwrapped = 0.0;
  for (std::size_t j = 0; j < s_grid.size(); ++j) {
    const double raw = std::arg(autocorrelation_value(scalar, s_grid[j], settings));
    if (j == 0) {
      unwrapped = raw;
    } else {
      double step = raw - prev;
      while (step > kPi) step -= 2.0 * kPi;
      while (step < -kPi) step += 2.0 * kPi;
      unwrapped += step;
    }
    prev = raw;
    phases.push_back(unwrapped);
  }
  const double n = static_cast<double>(s_grid.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t j = 0; j < s_grid.size(); ++j) {
    sx += s_grid[j];
    sy += phases[j];
    sxx += s_grid[j] * s_grid[j];
    sxy += s_grid[j] * phases[j];
  }
  const double slope = (sxy - sx * sy / n) / (sxx - sx * sx / n);
  CHECK(std::abs(slope - 1.0) <= 0.01);
}

TEST_CASE("power law fit recovers an exact power") {
  std::vector<double> t;
  std::vector<std::complex<double>> c;
  for (int j = 0; j <= 396; ++j) {
    const double tj = 1.0 + 0.25 * j;
    t.push_back(tj);
    c.push_back(std::pow(tj, -2.0));
  }
  const PowerLawFit fit = fit_power_law(t, c, 1.0, 100.0);
  CHECK(std::abs(fit.alpha - 2.0) <= 1e-9);
  CHECK(std::abs(fit.f_bound - 1.0) <= 1e-9);
  CHECK(fit.residual <= 1e-12);
  CHECK(fit.alpha_stderr <= 1e-12);
  CHECK(fit.points_used == 397);
  CHECK(fit.window[0] == 1.0);
  CHECK(fit.window[1] == 100.0);
}

TEST_CASE("envelope fitting strips oscillation nulls") {
  std::vector<double> t;
  std::vector<std::complex<double>> c;
  for (int j = 0; j <= 1800; ++j) {
    const double tj = 10.0 + 0.05 * j;
    t.push_back(tj);
    c.push_back(std::cos(5.0 * tj) * std::pow(tj, -1.5) *
                std::exp(std::complex<double>(0.0, 0.3 * tj)));
  }
  const PowerLawFit fit = fit_power_law(t, c, 10.0, 100.0);
  CHECK(std::abs(fit.alpha - 1.5) <= 0.02);
  CHECK(fit.points_used >= 100);  // one peak per pi/5 of time
  CHECK(std::abs(fit.f_bound - 1.0) <= 0.02);
}

TEST_CASE("power law fit is scale equivariant") {
  std::vector<double> t;
  std::vector<std::complex<double>> c, c5;
  for (int j = 0; j <= 500; ++j) {
    const double tj = 5.0 + 0.1 * j;
    t.push_back(tj);
    const std::complex<double> v = std::cos(4.0 * tj) * std::pow(tj, -0.8);
    c.push_back(v);
    c5.push_back(5.0 * v);
  }
  const PowerLawFit base = fit_power_law(t, c, 5.0, 55.0);
  const PowerLawFit scaled = fit_power_law(t, c5, 5.0, 55.0);
  CHECK(std::abs(base.alpha - scaled.alpha) <= 1e-12);
  CHECK(std::abs(scaled.f_bound - 5.0 * base.f_bound) <= 1e-10 * scaled.f_bound);
  CHECK(std::abs(base.residual - scaled.residual) <= 1e-12);
}

TEST_CASE("power law fit rejects bad windows and vanishing data") {
  std::vector<double> t;
  std::vector<std::complex<double>> c, zeros, few;
  for (int j = 0; j <= 950; ++j) {
    const double tj = 1.0 + 0.02 * j;
    t.push_back(tj);
    c.push_back(std::pow(tj, -1.0));
    zeros.push_back(0.0);
    few.push_back(std::cos(1.0 * tj) / tj);  // ~6 peaks over the full span
  }
  CHECK_THROWS_AS(fit_power_law(t, c, 0.0, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(fit_power_law(t, c, 1.0, 30.0), std::invalid_argument);
  CHECK_THROWS_AS(fit_power_law(t, zeros, 1.0, 10.0), NumericError);
  CHECK_THROWS_WITH_AS(fit_power_law(t, few, 1.0, 20.0),
                       doctest::Contains("envelope"), NumericError);

  std::vector<double> bad_t = {1.0, 2.0, 2.0, 3.0};
  std::vector<std::complex<double>> bad_c(4, 1.0);
  CHECK_THROWS_AS(fit_power_law(bad_t, bad_c, 1.0, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(fit_power_law(bad_t, bad_c, 3.0, 1.0), std::invalid_argument);
  std::vector<std::complex<double>> short_c(3, 1.0);
  CHECK_THROWS_AS(fit_power_law(bad_t, short_c, 1.0, 3.0), std::invalid_argument);
}

TEST_CASE("fit report serializes the fit and its window") {
  std::vector<double> t;
  std::vector<std::complex<double>> c;
  for (int j = 0; j <= 100; ++j) {
    const double tj = 2.0 + 0.5 * j;
    t.push_back(tj);
    c.push_back(3.0 * std::pow(tj, -1.25));
  }
  const PowerLawFit fit = fit_power_law(t, c, 2.0, 52.0);
  const nlohmann::json j = nlohmann::json::parse(fit_report_json(fit));
  CHECK(std::abs(j.at("alpha").get<double>() - 1.25) <= 1e-9);
  CHECK(j.at("alpha_stderr").get<double>() <= 1e-10);
  CHECK(std::abs(j.at("f_bound").get<double>() - 3.0) <= 1e-9);
  REQUIRE(j.at("window").size() == 2);
  CHECK(j.at("window")[0].get<double>() == 2.0);
  CHECK(j.at("window")[1].get<double>() == 52.0);
}

TEST_CASE("solvable model decays at the physical rate") {
  QuadratureSettings settings;
  std::vector<double> t;
  for (int j = 0; j <= 360; ++j) t.push_back(20.0 + 0.5 * j);

  const auto bulk = solvable_gaussian(3, DispersionLaw::relativistic(1.0), 0.3);
  std::vector<std::complex<double>> c3;
  for (double tj : t) c3.push_back(solvable_abc(bulk, tj, settings).C);
  const PowerLawFit fit3 = fit_power_law(t, c3, 20.0, 200.0);
  CHECK(std::abs(fit3.alpha - 1.5) <= 0.1);

  const auto line = solvable_gaussian(1, DispersionLaw::relativistic(1.0), 0.3);
  std::vector<std::complex<double>> c1;
  for (double tj : t) c1.push_back(solvable_abc(line, tj, settings).C);
  const PowerLawFit fit1 = fit_power_law(t, c1, 20.0, 200.0);
  CHECK(std::abs(fit1.alpha - 0.5) <= 0.1);
}

TEST_CASE("pair remainder decays with a positive fitted exponent") {
  const auto spec = pair_gaussian(1, 2, DispersionLaw::relativistic(1.0), 0.1);
  // The joint phase t*E needs a few nodes per period out to t = 40, far more
  // than the default axis count; 320 brings the C error to ~1e-6.
  QuadratureSettings settings;
  settings.points_per_axis = 320;
  std::vector<double> t;
  for (int j = 0; j <= 160; ++j) t.push_back(0.25 * j);
  const ABCDecomposition dec = abc_second_order(spec, t, settings);
  const PowerLawFit fit = fit_power_law(dec.t, dec.C, 10.0, 40.0);
  CHECK(fit.alpha > 0.0);
  CHECK(fit.alpha > 0.8);  // two joint axes: the remainder falls like 1/t
  CHECK(fit.alpha < 1.2);
}

TEST_CASE("stationary phase preconditions") {
  const auto pair = pair_gaussian(1, 2, DispersionLaw::relativistic(1.0), 0.1);
  CHECK_THROWS_AS(stationary_phase_C(pair, 10.0), std::invalid_argument);
  const auto spec = solvable_gaussian(1, DispersionLaw::relativistic(1.0), 0.1);
  CHECK_THROWS_AS(stationary_phase_C(spec, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(stationary_phase_C(spec, -3.0), std::invalid_argument);

  // Flat dispersion: every candidate is degenerate and the asymptotic is
  // refused rather than evaluated on a meaningless Hessian.
  const auto flat = solvable_gaussian(2, DispersionLaw::constant(1.0), 0.1);
  CHECK_THROWS_AS(stationary_phase_C(flat, 10.0), NumericError);
  const auto cone = solvable_gaussian(2, DispersionLaw::bogoliubov(1.0, 1.0), 0.1);
  CHECK_THROWS_AS(stationary_phase_C(cone, 10.0), NumericError);

  CHECK_THROWS_AS(stationary_phase_F(solvable_gaussian(1, DispersionLaw::relativistic(1.0), 0.1),
                                     50.0),
                  std::invalid_argument);
  const auto para = pair_gaussian(3, 1, DispersionLaw::nonrel_shifted(1.0), 0.1);
  CHECK_THROWS_AS(stationary_phase_F(para, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(stationary_phase_F(para, -1.0), std::invalid_argument);
}
