#include "abc/quad.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include "abc/io.hpp"

namespace abc {

namespace {

constexpr double kPi = std::numbers::pi;

void gauss_legendre_compute(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
}

// splitmix64 finalizer; the counter stream is mix(seed, counter) with distinct
// counters per (sample, axis, member), giving a reproducible thread-free RNG.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Uniform in (0, 1); never returns 0, so logs are safe.
double uniform01(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t bits = mix64(seed ^ mix64(counter));
  return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

double normal01(std::uint64_t seed, std::uint64_t counter) {
  const double u1 = uniform01(seed, 2 * counter);
  const double u2 = uniform01(seed, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

int joint_dim(const ModelSpec& spec) { return kernel_arity(spec) * spec.d; }

// Importance-sampling proposal: axis-wise normal matched to the form factor.
struct Proposal {
  std::vector<double> center;  // per joint axis
  double sigma = 1.0;
  double log_norm = 0.0;  // log of (2 pi sigma^2)^{-D/2}

  double density(std::span<const double> x) const {
    double q = 0.0;
    for (std::size_t a = 0; a < x.size(); ++a) {
      const double z = (x[a] - center[a]) / sigma;
      q -= 0.5 * z * z;
    }
    return std::exp(q + log_norm);
  }
};

Proposal make_proposal(const ModelSpec& spec) {
  const int D = joint_dim(spec);
  Proposal prop;
  prop.center.assign(D, 0.0);
  switch (spec.form_factor.kind) {
    case FormFactorKind::IsotropicGaussian:
      prop.sigma = spec.form_factor.width / std::sqrt(2.0);
      break;
    case FormFactorKind::ShiftedGaussian:
      prop.sigma = spec.form_factor.width / std::sqrt(2.0);
      for (int a = 0; a < D; ++a) prop.center[a] = spec.form_factor.center[a % spec.d];
      break;
    case FormFactorKind::CompactBump:
      prop.sigma = spec.form_factor.radius / 2.0;
      break;
  }
  prop.log_norm = -0.5 * D * std::log(2.0 * kPi * prop.sigma * prop.sigma);
  return prop;
}

void check_settings(const QuadratureSettings& s) {
  if (s.points_per_axis < 16)
    throw std::invalid_argument("quadrature: points_per_axis must be >= 16");
  if (s.mc_samples < 100000)
    throw std::invalid_argument("quadrature: mc_samples must be >= 100000");
  if (!(s.rel_tol > 0) || s.rel_tol >= 1)
    throw std::invalid_argument("quadrature: rel_tol must lie in (0, 1)");
}

[[noreturn]] void throw_nonfinite(std::span<const double> point) {
  std::ostringstream msg;
  msg << "integrand returned a non-finite value at (";
  for (std::size_t i = 0; i < point.size(); ++i) msg << (i ? ", " : "") << point[i];
  msg << ")";
  throw NumericError(msg.str());
}

// Visits every node of one tensor face (odometer order, last axis fastest).
template <typename Cb>
void visit_tensor(const std::vector<std::vector<double>>& axis_nodes,
                  const std::vector<std::vector<double>>& axis_weights, Cb&& cb) {
  const int D = static_cast<int>(axis_nodes.size());
  std::vector<std::size_t> idx(D, 0);
  std::vector<double> point(D);
  for (;;) {
    double w = 1.0;
    for (int a = 0; a < D; ++a) {
      point[a] = axis_nodes[a][idx[a]];
      w *= axis_weights[a][idx[a]];
    }
    cb(std::span<const double>(point), w);
    int a = D - 1;
    while (a >= 0 && ++idx[a] == axis_nodes[a].size()) idx[a--] = 0;
    if (a < 0) break;
  }
}

}  // namespace

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  static std::map<int, std::pair<std::vector<double>, std::vector<double>>> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) {
    std::pair<std::vector<double>, std::vector<double>> rule;
    gauss_legendre_compute(n, rule.first, rule.second);
    it = cache.emplace(n, std::move(rule)).first;
  }
  nodes = it->second.first;
  weights = it->second.second;
}

double default_cutoff(const ModelSpec& spec, double rel_tol) {
  switch (spec.form_factor.kind) {
    case FormFactorKind::CompactBump:
      return spec.form_factor.radius;
    case FormFactorKind::IsotropicGaussian:
    case FormFactorKind::ShiftedGaussian: {
      const double tol = std::clamp(rel_tol, 1e-300, 0.5);
      return 1.25 * spec.form_factor.width * std::sqrt(2.0 * std::log(1.0 / tol));
    }
  }
  throw std::logic_error("unreachable form factor kind");
}

MomentumRule momentum_rule(const ModelSpec& spec, const QuadratureSettings& settings) {
  check_settings(settings);
  const int D = joint_dim(spec);
  MomentumRule rule;
  rule.dim = D;

  auto mode = settings.mode;
  if (mode == QuadratureSettings::Mode::Auto)
    mode = D <= 4 ? QuadratureSettings::Mode::TensorGauss : QuadratureSettings::Mode::MonteCarlo;

  const double cutoff = settings.momentum_cutoff > 0 ? settings.momentum_cutoff
                                                     : default_cutoff(spec, settings.rel_tol);
  const Proposal prop = make_proposal(spec);

  if (mode == QuadratureSettings::Mode::TensorGauss) {
    if (D > 6) throw std::invalid_argument("TensorGauss mode is capped at joint dimension 6");
    std::vector<double> gl_x, gl_w;
    auto build_axes = [&](int per_axis, std::vector<std::vector<double>>& nodes_out,
                          std::vector<std::vector<double>>& weights_out) {
      gauss_legendre(per_axis, gl_x, gl_w);
      nodes_out.assign(D, {});
      weights_out.assign(D, {});
      for (int a = 0; a < D; ++a) {
        nodes_out[a].resize(per_axis);
        weights_out[a].resize(per_axis);
        const double c = prop.center[a];
        for (int i = 0; i < per_axis; ++i) {
          nodes_out[a][i] = c + cutoff * gl_x[i];
          weights_out[a][i] = cutoff * gl_w[i];
        }
      }
    };
    build_axes(settings.points_per_axis, rule.axis_nodes, rule.axis_weights);
    build_axes(settings.points_per_axis / 2, rule.coarse_axis_nodes, rule.coarse_axis_weights);
    return rule;
  }

  rule.monte_carlo = true;
  rule.mc_count = settings.mc_samples;
  rule.mc_nodes.resize(static_cast<std::size_t>(rule.mc_count) * D);
  rule.mc_q.resize(static_cast<std::size_t>(rule.mc_count));
  std::vector<double> point(D);
  for (long long i = 0; i < rule.mc_count; ++i) {
    for (int a = 0; a < D; ++a) {
      const std::uint64_t counter = static_cast<std::uint64_t>(i) * D + a;
      point[a] = prop.center[a] + prop.sigma * normal01(settings.seed, counter);
      rule.mc_nodes[static_cast<std::size_t>(i) * D + a] = point[a];
    }
    rule.mc_q[static_cast<std::size_t>(i)] = prop.density(point);
  }
  return rule;
}

std::size_t MomentumRule::size() const {
  if (monte_carlo) return static_cast<std::size_t>(mc_count);
  std::size_t n = 1;
  for (const auto& axis : axis_nodes) n *= axis.size();
  return n;
}

void for_each_node(const MomentumRule& rule,
                   const std::function<void(std::span<const double>, double)>& cb) {
  if (rule.monte_carlo) {
    const double inv_n = 1.0 / static_cast<double>(rule.mc_count);
    for (long long i = 0; i < rule.mc_count; ++i) {
      std::span<const double> point(rule.mc_nodes.data() + static_cast<std::size_t>(i) * rule.dim,
                                    static_cast<std::size_t>(rule.dim));
      cb(point, inv_n / rule.mc_q[static_cast<std::size_t>(i)]);
    }
    return;
  }
  visit_tensor(rule.axis_nodes, rule.axis_weights, cb);
}

void for_each_coarse_node(const MomentumRule& rule,
                          const std::function<void(std::span<const double>, double)>& cb) {
  if (rule.monte_carlo) return;  // MC rules carry the error in the samples themselves
  visit_tensor(rule.coarse_axis_nodes, rule.coarse_axis_weights, cb);
}

IntegralResult integrate_with_rule(const MomentumRule& rule, const Integrand& f) {
  IntegralResult out;
  if (rule.monte_carlo) {
    // weights are 1/(N q_i); g_i = f_i / q_i = f_i * w_i * N is the
    // importance-corrected sample whose spread gives the standard error.
    const double n = static_cast<double>(rule.mc_count);
    std::complex<double> sum = 0.0;
    double sum_sq = 0.0;
    for_each_node(rule, [&](std::span<const double> point, double w) {
      const std::complex<double> fv = f(point);
      if (!std::isfinite(fv.real()) || !std::isfinite(fv.imag())) throw_nonfinite(point);
      const std::complex<double> g = fv * (w * n);
      sum += g;
      sum_sq += std::norm(g);
    });
    out.value = sum / n;
    const double var = std::max(0.0, sum_sq / n - std::norm(out.value));
    out.err = std::sqrt(var / n);
    return out;
  }
  std::complex<double> fine = 0.0, coarse = 0.0;
  for_each_node(rule, [&](std::span<const double> point, double w) {
    const std::complex<double> fv = f(point);
    if (!std::isfinite(fv.real()) || !std::isfinite(fv.imag())) throw_nonfinite(point);
    fine += w * fv;
  });
  for_each_coarse_node(rule, [&](std::span<const double> point, double w) {
    const std::complex<double> fv = f(point);
    if (!std::isfinite(fv.real()) || !std::isfinite(fv.imag())) throw_nonfinite(point);
    coarse += w * fv;
  });
  out.value = fine;
  out.err = std::abs(fine - coarse);
  return out;
}

IntegralResult integrate_momentum(const ModelSpec& spec, const Integrand& f,
                                  const QuadratureSettings& settings) {
  return integrate_with_rule(momentum_rule(spec, settings), f);
}

double sphere_area(int d) {
  if (d < 1) throw std::invalid_argument("sphere_area: d must be >= 1");
  return 2.0 * std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d);
}

RadialPanels build_radial_panels(const DispersionLaw& disp, double R, double tau_max,
                                 int pts_per_panel) {
  if (!(R > 0)) throw std::invalid_argument("build_radial_panels: R must be > 0");
  if (pts_per_panel < 2) throw std::invalid_argument("build_radial_panels: need >= 2 points");

  // Segment boundaries include the dispersion's non-smooth radii.
  std::vector<double> breaks{0.0, R};
  if (disp.kind == DispersionKind::FermiQuasi) {
    const double rf = std::sqrt(2.0 * disp.m * disp.mu);
    if (rf > 0 && rf < R) breaks.push_back(rf);
  }
  std::sort(breaks.begin(), breaks.end());

  RadialPanels panels;
  std::vector<double> gl_x, gl_w;
  gauss_legendre(pts_per_panel, gl_x, gl_w);

  std::size_t total_panels = 0;
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double a = breaks[s], b = breaks[s + 1];
    // Total variation of omega over the segment bounds the oscillation count.
    double tv = 0.0;
    const int kScan = 512;
    double prev = omega_radial(disp, a);
    for (int i = 1; i <= kScan; ++i) {
      const double cur = omega_radial(disp, a + (b - a) * i / kScan);
      tv += std::abs(cur - prev);
      prev = cur;
    }
    const double oscillations = std::abs(tau_max) * tv / (2.0 * kPi);
    std::size_t n_panels = static_cast<std::size_t>(std::ceil(oscillations)) + 4;
    n_panels = std::max<std::size_t>(n_panels, 8);
    total_panels += n_panels;
    if (total_panels * static_cast<std::size_t>(pts_per_panel) > 4'000'000)
      throw NumericError("radial oscillatory quadrature: panel budget exceeded (tau too large)");
    for (std::size_t p = 0; p < n_panels; ++p) {
      const double lo = a + (b - a) * static_cast<double>(p) / static_cast<double>(n_panels);
      const double hi = a + (b - a) * static_cast<double>(p + 1) / static_cast<double>(n_panels);
      const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
      for (int i = 0; i < pts_per_panel; ++i) {
        panels.nodes.push_back(mid + half * gl_x[i]);
        panels.weights.push_back(half * gl_w[i]);
      }
    }
  }
  return panels;
}

namespace {

std::complex<double> radial_sum(const RadialPanels& panels, const DispersionLaw& disp,
                                const std::function<double(double)>& g, int d, double tau) {
  std::complex<double> acc = 0.0;
  for (std::size_t i = 0; i < panels.nodes.size(); ++i) {
    const double r = panels.nodes[i];
    const double amp = panels.weights[i] * std::pow(r, d - 1) * g(r);
    const double phase = -tau * omega_radial(disp, r);
    acc += amp * std::complex<double>(std::cos(phase), std::sin(phase));
  }
  return acc * sphere_area(d);
}

}  // namespace

std::complex<double> radial_oscillatory_integral(const DispersionLaw& disp,
                                                 const std::function<double(double)>& g, int d,
                                                 double R, double tau, double* err,
                                                 int pts_per_panel) {
  const RadialPanels fine = build_radial_panels(disp, R, tau, pts_per_panel);
  const std::complex<double> value = radial_sum(fine, disp, g, d, tau);
  if (err) {
    const RadialPanels coarse = build_radial_panels(disp, R, tau, std::max(2, pts_per_panel / 2));
    *err = std::abs(value - radial_sum(coarse, disp, g, d, tau));
  }
  return value;
}

namespace {

// Radial profile h(r) with |v(p_1..p_n)|^2 = a^2 prod_i h(|p_i|) when the
// form factor factorizes over kernel slots.
struct RadialFactorization {
  bool ok = false;
  int n_eff = 1;
  std::function<double(double)> h;
};

RadialFactorization radial_factorization(const ModelSpec& spec) {
  RadialFactorization fac;
  if (spec.family == InteractionFamily::TranslationInvariantTrilinear) return fac;
  fac.n_eff = kernel_arity(spec);
  const FormFactor& ff = spec.form_factor;
  if (ff.kind == FormFactorKind::IsotropicGaussian) {
    const double w2 = ff.width * ff.width;
    fac.ok = true;
    fac.h = [w2](double r) { return std::exp(-r * r / w2); };
  } else if (ff.kind == FormFactorKind::CompactBump && fac.n_eff == 1) {
    const double r2max = ff.radius * ff.radius;
    fac.ok = true;
    fac.h = [r2max](double r) {
      const double s = r * r / r2max;
      if (s >= 1.0) return 0.0;
      const double b = std::exp(1.0 - 1.0 / (1.0 - s));
      return b * b;
    };
  }
  return fac;
}

TailModel fit_tail(const ModelSpec& spec, const std::vector<double>& sigma,
                   const std::vector<std::complex<double>>& values, int n_eff) {
  TailModel tail;
  const auto kind = spec.dispersion.kind;
  if (kind != DispersionKind::Relativistic && kind != DispersionKind::NonRelShifted) return tail;
  if (sigma.empty() || sigma.back() <= 0) return tail;

  tail.exponent = 0.5 * spec.d * n_eff;
  tail.freq = -n_eff * omega_radial(spec.dispersion, 0.0);  // 0 for massless laws

  // Least squares on the de-rotated samples z_j = F_j sigma_j^q e^{-i freq s}:
  // z = A + B / sigma.  The 1/sigma column absorbs the first correction so
  // that A is the genuine leading coefficient.
  const double lo = sigma.back() / 10.0;
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  std::complex<double> t0 = 0.0, t1 = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < sigma.size(); ++j) {
    if (sigma[j] < lo || sigma[j] <= 0) continue;
    const std::complex<double> rot =
        std::exp(std::complex<double>(0.0, -tail.freq * sigma[j]));
    const std::complex<double> z = values[j] * std::pow(sigma[j], tail.exponent) * rot;
    const double u = 1.0 / sigma[j];
    s0 += 1.0;
    s1 += u;
    s2 += u * u;
    t0 += z;
    t1 += z * u;
    ++count;
  }
  if (count < 6) return tail;
  const double det = s0 * s2 - s1 * s1;
  if (det > 1e-14 * s0 * s2) {
    tail.amplitude = (s2 * t0 - s1 * t1) / det;
    tail.amplitude_sub = (s0 * t1 - s1 * t0) / det;
  } else {
    tail.amplitude = t0 / s0;
    tail.amplitude_sub = 0.0;
  }

  double misfit = 0.0, scale = 0.0;
  for (std::size_t j = 0; j < sigma.size(); ++j) {
    if (sigma[j] < lo || sigma[j] <= 0) continue;
    const std::complex<double> phase =
        std::exp(std::complex<double>(0.0, tail.freq * sigma[j]));
    const std::complex<double> model =
        (tail.amplitude + tail.amplitude_sub / sigma[j]) *
        std::pow(sigma[j], -tail.exponent) * phase;
    misfit += std::norm(values[j] - model);
    scale += std::norm(values[j]);
  }
  tail.residual = scale > 0 ? std::sqrt(misfit / scale) : 1.0;
  tail.valid = std::isfinite(std::abs(tail.amplitude)) &&
               std::isfinite(std::abs(tail.amplitude_sub)) && tail.residual < 0.5;
  return tail;
}

std::complex<double> full_kernel_sq(const ModelSpec& spec, std::span<const double> p,
                                    double sigma) {
  const std::complex<double> v = eval_form_factor(spec, p);
  const double E = energy_total(spec, p);
  return std::norm(v) * std::exp(std::complex<double>(0.0, -sigma * E));
}

}  // namespace

SigmaAutocorrelation autocorrelation_F(const ModelSpec& spec,
                                       const std::vector<double>& sigma_grid,
                                       const QuadratureSettings& settings) {
  if (spec.family == InteractionFamily::TranslationInvariantTrilinear)
    throw std::invalid_argument(
        "autocorrelation_F: defined for the pair-creation and linear families only");
  if (sigma_grid.empty() || sigma_grid.front() != 0.0)
    throw std::invalid_argument("autocorrelation_F: sigma grid must start at 0");
  for (std::size_t j = 1; j < sigma_grid.size(); ++j)
    if (!(sigma_grid[j] > sigma_grid[j - 1]))
      throw std::invalid_argument("autocorrelation_F: sigma grid must be strictly increasing");

  SigmaAutocorrelation out;
  out.sigma = sigma_grid;
  out.values.resize(sigma_grid.size());
  out.err.resize(sigma_grid.size());

  const RadialFactorization fac = radial_factorization(spec);
  out.dn = spec.d * (fac.ok ? fac.n_eff : kernel_arity(spec));

  if (fac.ok) {
    const double R = settings.momentum_cutoff > 0 ? settings.momentum_cutoff
                                                  : default_cutoff(spec, settings.rel_tol);
    const double a2 = spec.form_factor.amplitude * spec.form_factor.amplitude;
    const double sigma_max = sigma_grid.back();
    const RadialPanels fine = build_radial_panels(spec.dispersion, R, sigma_max, 16);
    const RadialPanels coarse = build_radial_panels(spec.dispersion, R, sigma_max, 8);
    const double area = sphere_area(spec.d);

    auto precompute = [&](const RadialPanels& panels, std::vector<double>& amp,
                          std::vector<double>& om) {
      amp.resize(panels.nodes.size());
      om.resize(panels.nodes.size());
      for (std::size_t i = 0; i < panels.nodes.size(); ++i) {
        const double r = panels.nodes[i];
        amp[i] = area * panels.weights[i] * std::pow(r, spec.d - 1) * fac.h(r);
        om[i] = omega_radial(spec.dispersion, r);
      }
    };
    std::vector<double> amp_f, om_f, amp_c, om_c;
    precompute(fine, amp_f, om_f);
    precompute(coarse, amp_c, om_c);

    auto g_of = [&](const std::vector<double>& amp, const std::vector<double>& om, double s) {
      std::complex<double> g = 0.0;
      for (std::size_t i = 0; i < amp.size(); ++i) {
        const double phase = -s * om[i];
        g += amp[i] * std::complex<double>(std::cos(phase), std::sin(phase));
      }
      return g;
    };
    for (std::size_t j = 0; j < sigma_grid.size(); ++j) {
      const std::complex<double> Ff = a2 * std::pow(g_of(amp_f, om_f, sigma_grid[j]), fac.n_eff);
      const std::complex<double> Fc = a2 * std::pow(g_of(amp_c, om_c, sigma_grid[j]), fac.n_eff);
      out.values[j] = Ff;
      out.err[j] = std::abs(Ff - Fc);
    }
  } else {
    const MomentumRule rule = momentum_rule(spec, settings);
    for (std::size_t j = 0; j < sigma_grid.size(); ++j) {
      const double s = sigma_grid[j];
      const IntegralResult r = integrate_with_rule(
          rule, [&](std::span<const double> p) { return full_kernel_sq(spec, p, s); });
      out.values[j] = r.value;
      out.err[j] = r.err;
    }
  }

  out.tail = fit_tail(spec, out.sigma, out.values, fac.ok ? fac.n_eff : kernel_arity(spec));
  return out;
}

std::complex<double> autocorrelation_value(const ModelSpec& spec, double sigma,
                                           const QuadratureSettings& settings) {
  const RadialFactorization fac = radial_factorization(spec);
  if (fac.ok) {
    const double R = settings.momentum_cutoff > 0 ? settings.momentum_cutoff
                                                  : default_cutoff(spec, settings.rel_tol);
    const double a2 = spec.form_factor.amplitude * spec.form_factor.amplitude;
    const std::complex<double> g =
        radial_oscillatory_integral(spec.dispersion, fac.h, spec.d, R, sigma);
    return a2 * std::pow(g, fac.n_eff);
  }
  return integrate_momentum(
             spec, [&](std::span<const double> p) { return full_kernel_sq(spec, p, sigma); },
             settings)
      .value;
}

std::string SigmaAutocorrelation::to_csv() const {
  std::ostringstream out;
  out << "sigma,re_F,im_F,err\n";
  for (std::size_t j = 0; j < sigma.size(); ++j)
    out << format_full(sigma[j]) << "," << format_full(values[j].real()) << ","
        << format_full(values[j].imag()) << "," << format_full(err[j]) << "\n";
  return out.str();
}

namespace {

// Integral over [a, b] of the quadratic interpolant through (x0..x2, y0..y2).
std::complex<double> quad_interp_integral(const double xs[3], const std::complex<double> ys[3],
                                          double a, double b) {
  std::complex<double> acc = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double xk = xs[k];
    const double x1 = xs[(k + 1) % 3], x2 = xs[(k + 2) % 3];
    const double denom = (xk - x1) * (xk - x2);
    // integral of (x-x1)(x-x2) = x^3/3 - (x1+x2)x^2/2 + x1 x2 x
    auto prim = [&](double x) {
      return x * x * x / 3.0 - 0.5 * (x1 + x2) * x * x + x1 * x2 * x;
    };
    acc += ys[k] * (prim(b) - prim(a)) / denom;
  }
  return acc;
}

// Cumulative integral of samples (x_j, y_j): piecewise quadratic, averaging
// the two three-point stencils that cover each interval.
std::vector<std::complex<double>> cumulative_quadratic(const std::vector<double>& x,
                                                       const std::vector<std::complex<double>>& y) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> cum(n, 0.0);
  if (n < 2) return cum;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    std::complex<double> piece = 0.0;
    int used = 0;
    if (j >= 1) {
      const double xs[3] = {x[j - 1], x[j], x[j + 1]};
      const std::complex<double> ys[3] = {y[j - 1], y[j], y[j + 1]};
      piece += quad_interp_integral(xs, ys, x[j], x[j + 1]);
      ++used;
    }
    if (j + 2 < n) {
      const double xs[3] = {x[j], x[j + 1], x[j + 2]};
      const std::complex<double> ys[3] = {y[j], y[j + 1], y[j + 2]};
      piece += quad_interp_integral(xs, ys, x[j], x[j + 1]);
      ++used;
    }
    if (used == 0) {
      piece = 0.5 * (y[j] + y[j + 1]) * (x[j + 1] - x[j]);
      used = 1;
    }
    cum[j + 1] = cum[j] + piece / static_cast<double>(used);
  }
  return cum;
}

// Partial integral from x_j to t (t inside [x_j, x_{j+1}]) using the local
// three-point stencil.
std::complex<double> partial_segment(const std::vector<double>& x,
                                     const std::vector<std::complex<double>>& y, std::size_t j,
                                     double t) {
  const std::size_t n = x.size();
  if (n < 3) {
    const double frac = (t - x[j]) / (x[j + 1] - x[j]);
    const std::complex<double> yt = y[j] + frac * (y[j + 1] - y[j]);
    return 0.5 * (y[j] + yt) * (t - x[j]);
  }
  std::size_t base = j;
  if (base + 2 >= n) base = n - 3;
  const double xs[3] = {x[base], x[base + 1], x[base + 2]};
  const std::complex<double> ys[3] = {y[base], y[base + 1], y[base + 2]};
  return quad_interp_integral(xs, ys, x[j], t);
}

// Two-term integration by parts of amp * sigma^{-q} e^{i freq sigma} over
// [a, b].  b may be +inf whenever q > 0: the boundary values vanish there and
// the dropped remainder integral is absolutely convergent, so for q in (0, 1]
// the result is the conditionally convergent (oscillation-damped) value.
// *err_out receives the size of the dropped third term.
std::complex<double> power_phase_integral(std::complex<double> amp, double freq, double q,
                                          double a, double b, double* err_out) {
  const std::complex<double> i_freq(0.0, freq);
  if (freq == 0.0) {
    // No oscillation to damp the tail: a pure power law, exact in closed form
    // and integrable up to infinity only when q > 1.
    if (err_out) *err_out = 0.0;
    if (std::isinf(b)) {
      if (!(q > 1.0)) {
        if (err_out) *err_out = std::numeric_limits<double>::infinity();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {nan, nan};
      }
      return amp * std::pow(a, 1.0 - q) / (q - 1.0);
    }
    if (q == 1.0) return amp * std::log(b / a);
    return amp * (std::pow(b, 1.0 - q) - std::pow(a, 1.0 - q)) / (1.0 - q);
  }
  auto boundary = [&](double s, double qq) {
    return amp * std::pow(s, -qq) * std::exp(std::complex<double>(0.0, freq * s)) / i_freq;
  };
  std::complex<double> term1, term2;
  if (std::isinf(b)) {
    if (!(q > 0.0)) {
      // Divergent moment (the integrand does not decay); report NaN so the
      // caller can flag the regime.
      if (err_out) *err_out = std::numeric_limits<double>::infinity();
      const double nan = std::numeric_limits<double>::quiet_NaN();
      return {nan, nan};
    }
    term1 = -boundary(a, q);
    term2 = -(q / i_freq) * (-boundary(a, q + 1.0));
  } else {
    term1 = boundary(b, q) - boundary(a, q);
    term2 = (q / i_freq) * (boundary(b, q + 1.0) - boundary(a, q + 1.0));
  }
  if (err_out)
    *err_out = std::abs(amp) * q * (q + 1.0) / std::pow(std::abs(freq), 3.0) *
               std::pow(a, -q - 2.0);
  return term1 + term2;
}

// Tail contribution to integral of sigma^s F(sigma) over [a, b] for s = 0, 1,
// using the fitted leading and subleading coefficients.
std::complex<double> tail_integral(const TailModel& tail, double q, double a, double b,
                                   double* err_out) {
  double e1 = 0.0, e2 = 0.0;
  const std::complex<double> lead = power_phase_integral(tail.amplitude, tail.freq, q, a, b, &e1);
  const std::complex<double> sub =
      power_phase_integral(tail.amplitude_sub, tail.freq, q + 1.0, a, b, &e2);
  if (err_out) {
    const double lead_scale = tail.freq != 0.0
                                  ? std::abs(tail.amplitude) * std::pow(a, -q) / std::abs(tail.freq)
                                  : std::abs(lead);
    *err_out = e1 + e2 + tail.residual * lead_scale;
  }
  return lead + sub;
}

}  // namespace

TimeMoments time_moment_integrals(const SigmaAutocorrelation& F, double t) {
  if (!(t >= 0)) throw std::invalid_argument("time_moment_integrals: t must be >= 0");
  TimeMoments out;
  if (t == 0.0 || F.sigma.size() < 2) return out;

  std::vector<std::complex<double>> sigmaF(F.values.size());
  for (std::size_t j = 0; j < F.values.size(); ++j) sigmaF[j] = F.sigma[j] * F.values[j];
  const auto cumF = cumulative_quadratic(F.sigma, F.values);
  const auto cumSF = cumulative_quadratic(F.sigma, sigmaF);

  const double sigma_end = F.sigma.back();
  std::complex<double> intF, intSF;
  double errF = 0.0, errSF = 0.0;

  const double t_grid = std::min(t, sigma_end);
  const auto it = std::upper_bound(F.sigma.begin(), F.sigma.end(), t_grid);
  std::size_t j = static_cast<std::size_t>(it - F.sigma.begin());
  if (j > 0) --j;
  if (j + 1 >= F.sigma.size()) j = F.sigma.size() - 2;
  if (F.sigma[j + 1] <= t_grid + 1e-15 * std::max(1.0, t_grid)) {
    intF = cumF[j + 1];
    intSF = cumSF[j + 1];
  } else {
    intF = cumF[j] + partial_segment(F.sigma, F.values, j, t_grid);
    intSF = cumSF[j] + partial_segment(F.sigma, sigmaF, j, t_grid);
  }
  // Propagate per-point quadrature errors through the sigma integral.
  for (std::size_t k = 0; k + 1 < F.sigma.size() && F.sigma[k] < t_grid; ++k) {
    const double h = std::min(F.sigma[k + 1], t_grid) - F.sigma[k];
    errF += 0.5 * (F.err[k] + F.err[k + 1]) * h;
    errSF += 0.5 * (F.err[k] * F.sigma[k] + F.err[k + 1] * F.sigma[k + 1]) * h;
  }

  if (t > sigma_end) {
    if (!F.tail.valid)
      throw NumericError("time_moment_integrals: t beyond the sigma grid and no valid tail model");
    double e1 = 0.0, e2 = 0.0;
    intF += tail_integral(F.tail, F.tail.exponent, sigma_end, t, &e1);
    intSF += tail_integral(F.tail, F.tail.exponent - 1.0, sigma_end, t, &e2);
    errF += e1;
    errSF += e2;
  }

  out.A2 = -intF;
  out.B2 = intSF;
  out.A2_err = errF;
  out.B2_err = errSF;
  return out;
}

}  // namespace abc
