#include "abc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace abc {

namespace {

constexpr std::complex<double> kI{0.0, 1.0};

bool has_decay(const ModelSpec& spec) { return validate_model(spec).decay; }

}  // namespace

std::complex<double> ordered_exp_integral(double t, double E) {
  const double phase = E * t;
  if (std::abs(phase) < 2e-2) {
    // Series in (-iE): sum_k (-iE)^k t^{k+2} / ((k+2) (k+1)!), safe from the
    // 1/E^2 cancellation of the closed form.
    std::complex<double> acc = 0.0;
    std::complex<double> pw = 1.0;  // (-iE)^k
    double fact = 1.0;              // (k+1)!
    for (int k = 0; k <= 8; ++k) {
      if (k > 0) {
        pw *= -kI * E;
        fact *= k + 1;
      }
      acc += pw * std::pow(t, k + 2) / ((k + 2) * fact);
    }
    return acc;
  }
  const std::complex<double> osc = std::exp(-kI * phase);
  return -kI * t / E + 1.0 / (E * E) - osc / (E * E);
}

std::complex<double> dyson_second_order(const ModelSpec& spec, double t,
                                        const QuadratureSettings& settings) {
  if (spec.family == InteractionFamily::TranslationInvariantTrilinear)
    throw std::invalid_argument(
        "dyson_second_order: defined for the pair-creation and linear families");
  const bool decay = has_decay(spec);
  const IntegralResult r = integrate_momentum(
      spec,
      [&](std::span<const double> p) -> std::complex<double> {
        const double E = energy_total(spec, p);
        if (!decay && std::abs(E) < 1e-12)
          throw NumericError("dyson_second_order: vanishing energy in a gapped model");
        return std::norm(eval_form_factor(spec, p)) * ordered_exp_integral(t, E);
      },
      settings);
  const double lambda = spec.lambda;
  return -lambda * lambda * r.value;
}

SolvableABC solvable_abc(const ModelSpec& spec, double t, const QuadratureSettings& settings) {
  if (spec.family != InteractionFamily::LinearSolvable)
    throw std::invalid_argument("solvable_abc: linear family required");
  if (has_decay(spec))
    throw std::invalid_argument("solvable_abc: dispersion admits decay; use the decay route");

  const double l2 = spec.lambda * spec.lambda;
  SolvableABC out;

  // Isotropic kernels go through one radial panelization shared by all three
  // integrals, which keeps C(0) + B = 0 exact.
  const double R = settings.momentum_cutoff > 0 ? settings.momentum_cutoff
                                                : default_cutoff(spec, settings.rel_tol);
  struct Radial {
    bool ok;
    std::function<double(double)> h;
  } radial{false, {}};
  if (spec.form_factor.kind == FormFactorKind::IsotropicGaussian) {
    const double w2 = spec.form_factor.width * spec.form_factor.width;
    radial = {true, [w2](double r) { return std::exp(-r * r / w2); }};
  } else if (spec.form_factor.kind == FormFactorKind::CompactBump) {
    const double r2max = spec.form_factor.radius * spec.form_factor.radius;
    radial = {true, [r2max](double r) {
                const double s = r * r / r2max;
                if (s >= 1.0) return 0.0;
                const double b = std::exp(1.0 - 1.0 / (1.0 - s));
                return b * b;
              }};
  }

  if (radial.ok) {
    const double a2 = spec.form_factor.amplitude * spec.form_factor.amplitude;
    const RadialPanels panels =
        build_radial_panels(spec.dispersion, R, std::max(std::abs(t), 1.0), 16);
    const double area = sphere_area(spec.d);
    std::complex<double> intA = 0.0, intB = 0.0, intC = 0.0;
    for (std::size_t i = 0; i < panels.nodes.size(); ++i) {
      const double r = panels.nodes[i];
      const double om = omega_radial(spec.dispersion, r);
      const double base = area * panels.weights[i] * std::pow(r, spec.d - 1) * radial.h(r);
      intA += base / om;
      intB += base / (om * om);
      intC += base / (om * om) * std::exp(-kI * t * om);
    }
    out.A = kI * l2 * a2 * intA;
    out.B = -l2 * a2 * intB;
    out.C = l2 * a2 * intC;
    return out;
  }

  const MomentumRule rule = momentum_rule(spec, settings);
  auto integral = [&](auto&& f) {
    return integrate_with_rule(rule, [&](std::span<const double> p) -> std::complex<double> {
             return f(p);
           }).value;
  };
  out.A = kI * l2 * integral([&](std::span<const double> p) {
    return std::norm(eval_form_factor(spec, p)) / energy_total(spec, p);
  });
  out.B = -l2 * integral([&](std::span<const double> p) {
    const double om = energy_total(spec, p);
    return std::norm(eval_form_factor(spec, p)) / (om * om);
  });
  out.C = l2 * integral([&](std::span<const double> p) -> std::complex<double> {
    const double om = energy_total(spec, p);
    return std::norm(eval_form_factor(spec, p)) / (om * om) * std::exp(-kI * t * om);
  });
  return out;
}

std::complex<double> solvable_model_exact(const ModelSpec& spec, double t,
                                          const QuadratureSettings& settings) {
  const SolvableABC abc = solvable_abc(spec, t, settings);
  return std::exp(abc.A * t + abc.B + abc.C);
}

std::complex<double> solvable_model_decay(const ModelSpec& spec, double t,
                                          const QuadratureSettings& settings) {
  if (spec.family != InteractionFamily::LinearSolvable)
    throw std::invalid_argument("solvable_model_decay: linear family required");
  if (!has_decay(spec))
    throw std::invalid_argument("solvable_model_decay: dispersion has no decay; use the exact route");
  if (t == 0.0) return 1.0;

  const double sigma_max = std::min(std::max(1.5 * t, 60.0), 400.0);
  const double step = 0.05;
  std::vector<double> grid;
  for (double s = 0.0; s < sigma_max + 0.5 * step; s += step) grid.push_back(s);
  const SigmaAutocorrelation F = autocorrelation_F(spec, grid, settings);
  const TimeMoments m = time_moment_integrals(F, t);
  const double l2 = spec.lambda * spec.lambda;
  return std::exp(l2 * (t * m.A2 + m.B2));
}

FockDiscretization radial_fock_discretization(const ModelSpec& spec, int modes,
                                              int per_mode_truncation) {
  if (modes < 1) throw std::invalid_argument("radial_fock_discretization: modes must be >= 1");
  if (per_mode_truncation < 4)
    throw std::invalid_argument("radial_fock_discretization: per-mode truncation must be >= 4");
  FockDiscretization disc;
  disc.per_mode_truncation = per_mode_truncation;
  const double R = default_cutoff(spec, 1e-9);
  std::vector<double> x, w;
  gauss_legendre(modes, x, w);
  const double area = sphere_area(spec.d);
  for (int j = 0; j < modes; ++j) {
    const double r = 0.5 * R * (x[j] + 1.0);
    const double dr = 0.5 * R * w[j];
    std::vector<double> k(spec.d, 0.0);
    k[0] = r;
    disc.mode_momenta.push_back(std::move(k));
    disc.weights.push_back(area * std::pow(r, spec.d - 1) * dr);
  }
  return disc;
}

Eigen::MatrixXcd matrix_exponential(const Eigen::MatrixXcd& a) {
  // Pade order-13 coefficients (numerator b13..b1 odd, denominator even).
  static const double b[14] = {64764752532480000.0,
                               32382376266240000.0,
                               7771770303897600.0,
                               1187353796428800.0,
                               129060195264000.0,
                               10559470521600.0,
                               670442572800.0,
                               33522128640.0,
                               1323241920.0,
                               40840800.0,
                               960960.0,
                               16380.0,
                               182.0,
                               1.0};
  const double theta13 = 5.371920351148152;
  const Eigen::Index n = a.rows();
  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > theta13) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
    if (squarings > 60) throw NumericError("matrix_exponential: norm too large");
  }
  const Eigen::MatrixXcd as = a / std::pow(2.0, squarings);
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(n, n);
  const Eigen::MatrixXcd a2 = as * as;
  const Eigen::MatrixXcd a4 = a2 * a2;
  const Eigen::MatrixXcd a6 = a2 * a4;
  const Eigen::MatrixXcd u =
      as * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 +
            b[1] * id);
  const Eigen::MatrixXcd v =
      a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
  Eigen::MatrixXcd f = (v - u).partialPivLu().solve(v + u);
  for (int s = 0; s < squarings; ++s) f = f * f;
  return f;
}

std::complex<double> fock_evolve(const FockDiscretization& disc, const ModelSpec& spec, double t,
                                 double lambda) {
  if (spec.family != InteractionFamily::LinearSolvable)
    throw std::invalid_argument("fock_evolve: linear family required");
  if (disc.per_mode_truncation < 4)
    throw std::invalid_argument("fock_evolve: per-mode truncation must be >= 4");
  if (disc.mode_momenta.size() != disc.weights.size())
    throw std::invalid_argument("fock_evolve: momenta/weights size mismatch");

  const int N = disc.per_mode_truncation;
  std::complex<double> product = 1.0;
  for (std::size_t j = 0; j < disc.mode_momenta.size(); ++j) {
    const auto& k = disc.mode_momenta[j];
    if (static_cast<int>(k.size()) != spec.d)
      throw std::invalid_argument("fock_evolve: mode momentum dimension mismatch");
    const double om = energy_total(spec, std::span<const double>(k.data(), k.size()));
    const std::complex<double> v = eval_form_factor(spec, std::span<const double>(k.data(), k.size()));
    const std::complex<double> g = lambda * std::sqrt(disc.weights[j]) * v;

    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(N, N);
    for (int m = 0; m < N; ++m) h(m, m) = om * m;
    for (int m = 0; m + 1 < N; ++m) {
      const double root = std::sqrt(m + 1.0);
      h(m, m + 1) = std::conj(g) * root;  // annihilator column
      h(m + 1, m) = g * root;             // creator column
    }
    const Eigen::MatrixXcd evo = matrix_exponential(std::complex<double>(0.0, -t) * h);

    // e^{itH0} acts trivially on the vacuum row, so the amplitude is the
    // vacuum-to-vacuum entry; the top occupation amplitude gauges truncation.
    const double top = std::abs(evo(N - 1, 0));
    if (top > 1e-10) {
      std::ostringstream msg;
      msg << "fock_evolve: truncation too small (top occupation amplitude " << top << " at mode "
          << j << ")";
      throw NumericError(msg.str());
    }
    product *= evo(0, 0);
  }
  return product;
}

std::vector<std::complex<double>> abc_residual(const std::vector<double>& t_grid,
                                               const std::vector<std::complex<double>>& series,
                                               std::complex<double> A, std::complex<double> B) {
  if (t_grid.size() != series.size())
    throw std::invalid_argument("abc_residual: grid/series size mismatch");
  std::vector<std::complex<double>> c(series.size());
  double prev_phase = 0.0;
  for (std::size_t j = 0; j < series.size(); ++j) {
    const double mod = std::abs(series[j]);
    if (mod < 1e-14) throw NumericError("abc_residual: sample modulus below 1e-14");
    double phase = std::arg(series[j]);
    if (j > 0) {
      const double two_pi = 2.0 * std::numbers::pi;
      phase += two_pi * std::round((prev_phase - phase) / two_pi);
      if (std::abs(phase - prev_phase) > 0.5 * std::numbers::pi)
        throw NumericError("abc_residual: phase jump above pi/2; refine the time grid");
    }
    prev_phase = phase;
    const std::complex<double> log_u(std::log(mod), phase);
    c[j] = log_u - A * t_grid[j] - B;
  }
  return c;
}

}  // namespace abc
