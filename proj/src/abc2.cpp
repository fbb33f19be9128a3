#include "abc/abc2.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "abc/io.hpp"
#include "abc/oracle.hpp"

namespace abc {

namespace {

constexpr std::complex<double> kI(0.0, 1.0);

// Per-node (total energy, weighted |v|^2) arrays flattened out of a momentum
// rule.  Every integral that reuses one NodeArrays instance is evaluated on
// literally the same nodes in the same order, which is what makes identities
// like C(0) = -B exact.  Tensor rules carry the half-resolution companion for
// refinement-delta error estimates; Monte Carlo rules keep the sample count so
// standard errors can be formed (amp already includes the 1/(N q) weight).
struct NodeArrays {
  bool monte_carlo = false;
  long long mc_count = 0;
  std::vector<double> energy, amp;
  std::vector<double> energy_c, amp_c;
};

NodeArrays collect_node_arrays(const ModelSpec& spec, const QuadratureSettings& settings) {
  const MomentumRule rule = momentum_rule(spec, settings);
  if (!rule.monte_carlo && rule.size() > std::size_t{20'000'000})
    throw NumericError(
        "second-order node collection: tensor rule exceeds 2e7 nodes; switch to MonteCarlo mode");
  NodeArrays out;
  out.monte_carlo = rule.monte_carlo;
  out.mc_count = rule.mc_count;
  out.energy.reserve(rule.size());
  out.amp.reserve(rule.size());
  const auto absorb_into = [&spec](std::vector<double>& energies, std::vector<double>& amps) {
    return [&spec, &energies, &amps](std::span<const double> p, double w) {
      energies.push_back(energy_total(spec, p));
      amps.push_back(w * std::norm(eval_form_factor(spec, p)));
    };
  };
  for_each_node(rule, absorb_into(out.energy, out.amp));
  for_each_coarse_node(rule, absorb_into(out.energy_c, out.amp_c));
  return out;
}

struct Reduction {
  std::complex<double> value{};
  double err = 0.0;
};

// Sum of amp * f(E) in array order.  The error estimate is the refinement
// delta for tensor rules and the standard error for Monte Carlo rules.
template <typename F>
Reduction reduce_nodes(const NodeArrays& nodes, F&& f) {
  Reduction out;
  if (nodes.monte_carlo) {
    const double n = static_cast<double>(nodes.mc_count);
    std::complex<double> sum{};
    double sumsq = 0.0;
    for (std::size_t i = 0; i < nodes.energy.size(); ++i) {
      const std::complex<double> g = nodes.amp[i] * n * f(nodes.energy[i]);
      sum += g;
      sumsq += std::norm(g);
    }
    out.value = sum / n;
    const double var = std::max(0.0, sumsq / n - std::norm(out.value));
    out.err = std::sqrt(var / n);
  } else {
    std::complex<double> fine{}, coarse{};
    for (std::size_t i = 0; i < nodes.energy.size(); ++i) fine += nodes.amp[i] * f(nodes.energy[i]);
    for (std::size_t i = 0; i < nodes.energy_c.size(); ++i)
      coarse += nodes.amp_c[i] * f(nodes.energy_c[i]);
    out.value = fine;
    out.err = std::abs(fine - coarse);
  }
  return out;
}

}  // namespace

std::string ABCDecomposition::to_csv() const {
  std::ostringstream out;
  out << "t,re_C,im_C\n";
  for (std::size_t j = 0; j < t.size(); ++j)
    out << format_full(t[j]) << "," << format_full(C[j].real()) << "," << format_full(C[j].imag())
        << "\n";
  return out.str();
}

std::string summary_json(const ABCDecomposition& dec, double alpha_fit) {
  nlohmann::json j;
  j["A"] = {dec.A.real(), dec.A.imag()};
  j["B"] = {dec.B.real(), dec.B.imag()};
  if (std::isfinite(alpha_fit))
    j["alpha_fit"] = alpha_fit;
  else
    j["alpha_fit"] = nullptr;
  j["err"] = std::max({dec.A_err, dec.B_err, dec.C_err});
  return j.dump(2);
}

ABCDecomposition abc_second_order(const ModelSpec& spec, const std::vector<double>& t_grid,
                                  const QuadratureSettings& settings) {
  if (spec.family != InteractionFamily::PairCreation)
    throw std::invalid_argument(
        "abc_second_order: closed second-order coefficients exist for the pair-creation family "
        "only");
  for (double t : t_grid)
    if (!std::isfinite(t)) throw std::invalid_argument("abc_second_order: time grid must be finite");
  const ValidationReport report = validate_model(spec);
  if (report.decay)
    throw std::invalid_argument(
        "abc_second_order: the dispersion reaches zero total energy (decay case); use "
        "abc_second_order_decay instead");

  ABCDecomposition out;
  out.t = t_grid;
  out.C.assign(t_grid.size(), std::complex<double>{});
  const double l2 = spec.lambda * spec.lambda;
  if (l2 == 0.0) return out;

  const NodeArrays nodes = collect_node_arrays(spec, settings);
  for (double E : nodes.energy)
    if (std::abs(E) < 1e-12)
      throw NumericError(
          "abc_second_order: near-zero total energy at a quadrature node contradicts the "
          "no-decay classification");

  const Reduction inv_e =
      reduce_nodes(nodes, [](double E) { return std::complex<double>(1.0 / E, 0.0); });
  const Reduction inv_e2 =
      reduce_nodes(nodes, [](double E) { return std::complex<double>(1.0 / (E * E), 0.0); });
  out.A = kI * (l2 * inv_e.value);
  out.B = -(l2 * inv_e2.value);
  out.A_err = l2 * inv_e.err;
  out.B_err = l2 * inv_e2.err;

  for (std::size_t j = 0; j < t_grid.size(); ++j) {
    const double t = t_grid[j];
    // At t = 0 the node sum reproduces inv_e2 term for term, so B + C(0)
    // cancels exactly in both quadrature modes.
    const Reduction osc = reduce_nodes(
        nodes, [t](double E) { return std::exp(std::complex<double>(0.0, -t * E)) / (E * E); });
    out.C[j] = l2 * osc.value;
    out.C_err = std::max(out.C_err, l2 * osc.err);
  }
  return out;
}

DecayMomentSeries abc_second_order_decay(const ModelSpec& spec, const std::vector<double>& t_list,
                                         const QuadratureSettings& settings) {
  if (spec.family == InteractionFamily::TranslationInvariantTrilinear)
    throw std::invalid_argument(
        "abc_second_order_decay: the trilinear family has no vacuum autocorrelation route");
  const ValidationReport report = validate_model(spec);
  if (!report.decay)
    throw std::invalid_argument(
        "abc_second_order_decay: the dispersion is gapped (no decay); use abc_second_order");
  double t_max = 0.0;
  for (double t : t_list) {
    if (!(t >= 0.0) || !std::isfinite(t))
      throw std::invalid_argument("abc_second_order_decay: times must be finite and >= 0");
    t_max = std::max(t_max, t);
  }

  DecayMomentSeries out;
  out.dn = report.dn_product;
  out.t = t_list;

  // One autocorrelation grid serves every requested time; times beyond the
  // grid end are handled by the fitted tail inside time_moment_integrals.
  const double step = 0.05;
  const double sigma_max = std::min(std::max(60.0, 1.5 * t_max), 400.0);
  const long long m = std::llround(std::ceil(sigma_max / step));
  std::vector<double> grid(static_cast<std::size_t>(m) + 1);
  for (long long j = 0; j <= m; ++j) grid[static_cast<std::size_t>(j)] = step * static_cast<double>(j);
  const SigmaAutocorrelation F = autocorrelation_F(spec, grid, settings);

  if (!F.tail.valid && t_max > grid.back())
    throw NumericError(
        "abc_second_order_decay: requested time exceeds the sigma grid and no asymptotic tail "
        "model is available for this dispersion");

  out.A2_t.reserve(t_list.size());
  out.B2_t.reserve(t_list.size());
  for (double t : t_list) {
    const TimeMoments m_t = time_moment_integrals(F, t);
    out.A2_t.push_back(m_t.A2);
    out.B2_t.push_back(m_t.B2);
    out.A2_err = std::max(out.A2_err, m_t.A2_err);
    out.B2_err = std::max(out.B2_err, m_t.B2_err);
  }

  if (out.dn < 3) {
    out.warnings.push_back(
        "d*n < 3: the time moments do not converge; A2/B2 limits reported unavailable");
  } else if (!F.tail.valid) {
    out.warnings.push_back(
        "no asymptotic tail model for this dispersion; A2/B2 limits reported unavailable");
  } else {
    const TimeMoments lim = time_moment_integrals(F, kInfiniteTime);
    out.A2_limit = lim.A2;
    out.B2_limit = lim.B2;
    out.A2_limit_valid = std::isfinite(lim.A2.real()) && std::isfinite(lim.A2.imag());
    out.B2_limit_valid = std::isfinite(lim.B2.real()) && std::isfinite(lim.B2.imag());
    if (out.A2_limit_valid) out.A2_err = std::max(out.A2_err, lim.A2_err);
    if (out.B2_limit_valid) out.B2_err = std::max(out.B2_err, lim.B2_err);
    if (out.dn < 5) {
      if (out.B2_limit_valid) {
        out.unproven_regime = true;
        out.warnings.push_back(
            "d*n in {3, 4}: the B2 limit is the conditionally convergent value, outside the "
            "proven-convergence regime");
      } else {
        out.warnings.push_back(
            "d*n in {3, 4} with a non-oscillating tail: the B2 limit diverges");
      }
    }
  }
  return out;
}

namespace {

// Mesh on [0, R] for the resolvent integrands 1/(omega - i eps)^k: composite
// Gauss-Legendre panels geometrically refined toward every zero of the radial
// dispersion so the eps-scale structure is resolved.
std::vector<double> resolvent_breaks(const DispersionLaw& disp, double R, double eps) {
  std::vector<double> breaks;
  const int base = 32;
  for (int j = 0; j <= base; ++j) breaks.push_back(R * j / base);

  std::vector<double> zeros;
  if (disp.kind == DispersionKind::FermiQuasi) {
    const double kink = std::sqrt(2.0 * disp.m * disp.mu);  // omega touches zero here
    if (kink < R) zeros.push_back(kink);
  }
  const int scan = 8192;
  double prev = omega_radial(disp, 0.0);
  if (prev == 0.0) zeros.push_back(0.0);
  for (int j = 1; j <= scan; ++j) {
    const double r = R * j / scan;
    const double cur = omega_radial(disp, r);
    if (cur == 0.0) {
      zeros.push_back(r);
    } else if (prev != 0.0 && (prev < 0.0) != (cur < 0.0)) {
      double lo = R * (j - 1) / scan, hi = r;
      const bool lo_neg = omega_radial(disp, lo) < 0.0;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        ((omega_radial(disp, mid) < 0.0) == lo_neg ? lo : hi) = mid;
      }
      zeros.push_back(0.5 * (lo + hi));
    }
    prev = cur;
  }

  for (double z : zeros) {
    const double h = std::max(1e-6 * R, 1e-9);
    const double left = omega_radial(disp, std::max(z - h, 0.0));
    const double right = omega_radial(disp, std::min(z + h, R));
    const double slope = std::max(std::abs(right - left) / (2.0 * h), 1e-12);
    breaks.push_back(std::clamp(z, 0.0, R));
    for (double w = std::max(eps / slope, 1e-9 * R) / 8.0; w < R; w *= 2.0) {
      if (z - w > 0.0) breaks.push_back(z - w);
      if (z + w < R) breaks.push_back(z + w);
    }
  }

  std::sort(breaks.begin(), breaks.end());
  std::vector<double> unique;
  for (double b : breaks)
    if (unique.empty() || b - unique.back() > 1e-12 * R) unique.push_back(b);
  if (unique.back() < R) unique.push_back(R);
  return unique;
}

struct ResolventMoments {
  std::complex<double> s1{}, s2{};  // int |v|^2/(E - i eps), int |v|^2/(E - i eps)^2
  double err1 = 0.0, err2 = 0.0;
};

// Radial fast path for one-momentum isotropic kernels: both resolvent moments
// on one deterministic refined mesh, with half-order companions for the error.
ResolventMoments radial_resolvent_moments(const ModelSpec& spec, double eps,
                                          const QuadratureSettings& settings) {
  const double R = default_cutoff(spec, settings.rel_tol);
  const std::vector<double> breaks = resolvent_breaks(spec.dispersion, R, eps);
  const double area = sphere_area(spec.d);
  std::vector<double> point(static_cast<std::size_t>(spec.d), 0.0);

  const auto accumulate = [&](int pts, std::complex<double>& s1, std::complex<double>& s2) {
    std::vector<double> gl_x, gl_w;
    gauss_legendre(pts, gl_x, gl_w);
    for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
      const double mid = 0.5 * (breaks[p] + breaks[p + 1]);
      const double half = 0.5 * (breaks[p + 1] - breaks[p]);
      for (int j = 0; j < pts; ++j) {
        const double r = mid + half * gl_x[j];
        point[0] = r;
        const double u = area * std::pow(r, spec.d - 1) * std::norm(eval_form_factor(spec, point));
        const std::complex<double> den(omega_radial(spec.dispersion, r), -eps);
        const double w = half * gl_w[j];
        s1 += w * u / den;
        s2 += w * u / (den * den);
      }
    }
  };

  ResolventMoments out;
  std::complex<double> c1{}, c2{};
  accumulate(16, out.s1, out.s2);
  accumulate(8, c1, c2);
  out.err1 = std::abs(out.s1 - c1);
  out.err2 = std::abs(out.s2 - c2);
  return out;
}

}  // namespace

IEpsExtrapolation a2_b2_ieps(const ModelSpec& spec, const std::vector<double>& eps_schedule,
                             const QuadratureSettings& settings) {
  if (spec.family == InteractionFamily::TranslationInvariantTrilinear)
    throw std::invalid_argument("a2_b2_ieps: the trilinear family is not supported");
  const ValidationReport report = validate_model(spec);
  IEpsExtrapolation out;

  if (!report.decay) {
    // Gapped: the resolvent is regular on the whole support, eps = 0 is legal
    // and no extrapolation is needed.
    const NodeArrays nodes = collect_node_arrays(spec, settings);
    const Reduction r1 =
        reduce_nodes(nodes, [](double E) { return 1.0 / std::complex<double>(E, 0.0); });
    const Reduction r2 = reduce_nodes(nodes, [](double E) {
      const std::complex<double> den(E, 0.0);
      return 1.0 / (den * den);
    });
    out.A2 = kI * r1.value;
    out.B2 = -r2.value;
    out.eps = {0.0};
    out.A2_at_eps = {out.A2};
    out.B2_at_eps = {out.B2};
    out.A2_err = r1.err;
    out.B2_err = r2.err;
    out.B2_available = true;
    return out;
  }

  if (report.dn_product < 3)
    throw std::invalid_argument("a2_b2_ieps: d*n < 3, the eps -> 0 limit of A2 does not exist");
  if (eps_schedule.size() < 2)
    throw std::invalid_argument("a2_b2_ieps: need at least two epsilon values to extrapolate");
  for (std::size_t k = 0; k < eps_schedule.size(); ++k) {
    if (!(eps_schedule[k] > 0.0) || !std::isfinite(eps_schedule[k]))
      throw std::invalid_argument("a2_b2_ieps: epsilon values must be finite and > 0");
    if (k > 0 && !(eps_schedule[k] < eps_schedule[k - 1]))
      throw std::invalid_argument("a2_b2_ieps: epsilon schedule must be strictly decreasing");
  }

  const bool radial = kernel_arity(spec) == 1 &&
                      spec.form_factor.kind != FormFactorKind::ShiftedGaussian;
  // The joint-rule fallback shares one node set across the whole schedule
  // (common random numbers), so differences between epsilons are unpolluted
  // by sampling noise.
  NodeArrays nodes;
  if (!radial) nodes = collect_node_arrays(spec, settings);

  out.eps = eps_schedule;
  double quad_err1 = 0.0, quad_err2 = 0.0;
  for (double eps : eps_schedule) {
    if (radial) {
      const ResolventMoments m = radial_resolvent_moments(spec, eps, settings);
      out.A2_at_eps.push_back(kI * m.s1);
      out.B2_at_eps.push_back(-m.s2);
      quad_err1 = m.err1;
      quad_err2 = m.err2;
    } else {
      const std::complex<double> shift(0.0, -eps);
      const Reduction r1 = reduce_nodes(nodes, [shift](double E) { return 1.0 / (E + shift); });
      const Reduction r2 = reduce_nodes(nodes, [shift](double E) {
        const std::complex<double> den = E + shift;
        return 1.0 / (den * den);
      });
      out.A2_at_eps.push_back(kI * r1.value);
      out.B2_at_eps.push_back(-r2.value);
      quad_err1 = r1.err;
      quad_err2 = r2.err;
    }
  }

  // Two-point Richardson on the last pair: the resolvent moments are analytic
  // in eps near 0 off the critical set, so the leading error is linear.
  const std::size_t last = eps_schedule.size() - 1;
  const double r = eps_schedule[last - 1] / eps_schedule[last];
  const auto richardson = [r](std::complex<double> f_prev, std::complex<double> f_last) {
    return (r * f_last - f_prev) / (r - 1.0);
  };
  out.A2 = richardson(out.A2_at_eps[last - 1], out.A2_at_eps[last]);
  out.A2_err = std::abs(out.A2 - out.A2_at_eps[last]) + quad_err1;

  out.B2_available = report.dn_product >= 5;
  if (out.B2_available) {
    out.B2 = richardson(out.B2_at_eps[last - 1], out.B2_at_eps[last]);
    out.B2_err = std::abs(out.B2 - out.B2_at_eps[last]) + quad_err2;
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.B2 = {nan, nan};
    out.B2_err = std::numeric_limits<double>::infinity();
  }
  return out;
}

StochasticProfile stochastic_limit_profile(const ModelSpec& spec,
                                           const std::vector<double>& lambda_list,
                                           const std::vector<double>& t_grid,
                                           const QuadratureSettings& settings) {
  if (spec.family == InteractionFamily::TranslationInvariantTrilinear)
    throw std::invalid_argument(
        "stochastic_limit_profile: no closed-form oracle for the trilinear family");
  if (t_grid.empty())
    throw std::invalid_argument("stochastic_limit_profile: the time grid must be non-empty");
  for (double t : t_grid)
    if (!(t >= 0.0) || !std::isfinite(t))
      throw std::invalid_argument("stochastic_limit_profile: times must be finite and >= 0");
  for (double lam : lambda_list)
    if (!std::isfinite(lam))
      throw std::invalid_argument("stochastic_limit_profile: lambda values must be finite");
  const ValidationReport report = validate_model(spec);

  StochasticProfile out;
  out.lambda = lambda_list;
  out.deviation.reserve(lambda_list.size());
  out.normalized.reserve(lambda_list.size());

  for (double lam : lambda_list) {
    const double l2 = lam * lam;
    if (l2 == 0.0) {
      out.deviation.push_back(0.0);
      out.normalized.push_back(0.0);
      continue;
    }
    ModelSpec scaled = spec;
    scaled.lambda = lam;
    std::vector<double> micro(t_grid.size());
    for (std::size_t j = 0; j < t_grid.size(); ++j) micro[j] = t_grid[j] / l2;

    double dev = 0.0;
    if (!report.decay) {
      if (spec.family == InteractionFamily::LinearSolvable) {
        // Exact oracle: log<U(tau)> = A tau + B + C(tau), so the deviation
        // from the linear-in-t part is |B + C(t/lambda^2)| with no unwrap.
        for (double tau : micro) {
          const SolvableABC oracle = solvable_abc(scaled, tau, settings);
          dev = std::max(dev, std::abs(oracle.B + oracle.C));
        }
      } else {
        const ABCDecomposition dec = abc_second_order(scaled, micro, settings);
        for (const std::complex<double>& c : dec.C) dev = std::max(dev, std::abs(dec.B + c));
      }
    } else {
      // Decay: log<U(tau)> = lambda^2 (tau A2(tau) + B2(tau)); subtracting
      // A2_limit * t leaves t (A2(tau) - A2_limit) + lambda^2 B2(tau).
      const DecayMomentSeries series = abc_second_order_decay(scaled, micro, settings);
      if (!series.A2_limit_valid)
        throw NumericError(
            "stochastic_limit_profile: the A2 limit is unavailable for this model, no linear "
            "part to compare against");
      for (std::size_t j = 0; j < micro.size(); ++j) {
        const std::complex<double> log_u = l2 * (micro[j] * series.A2_t[j] + series.B2_t[j]);
        dev = std::max(dev, std::abs(log_u - series.A2_limit * t_grid[j]));
      }
    }
    out.deviation.push_back(dev);
    out.normalized.push_back(dev / l2);
  }
  return out;
}

}  // namespace abc
