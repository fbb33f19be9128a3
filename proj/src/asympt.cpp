#include "abc/asympt.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "abc/quad.hpp"

namespace abc {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMergeRadius = 1e-8;

Eigen::VectorXd grad_at(const DispersionLaw& disp, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  omega_grad(disp, std::span<const double>(x.data(), x.size()),
             std::span<double>(g.data(), g.size()));
  return g;
}

Eigen::MatrixXd hessian_at(const DispersionLaw& disp, const Eigen::VectorXd& x) {
  const auto d = x.size();
  std::vector<double> buf(static_cast<std::size_t>(d) * d);
  omega_hessian(disp, std::span<const double>(x.data(), x.size()),
                std::span<double>(buf.data(), buf.size()));
  Eigen::MatrixXd h(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) h(i, j) = buf[static_cast<std::size_t>(i * d + j)];
  return h;
}

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

}  // namespace

CriticalPointSearch find_critical_points(const DispersionLaw& disp, int d, double box,
                                         int grid_n) {
  if (d < 1 || d > 16) throw std::invalid_argument("find_critical_points: d out of range");
  if (!(box > 0.0) || !std::isfinite(box))
    throw std::invalid_argument("find_critical_points: box must be positive and finite");
  if (grid_n < 1) throw std::invalid_argument("find_critical_points: grid_n must be >= 1");
  double seed_count = 1;
  for (int i = 0; i < d; ++i) seed_count *= grid_n;
  if (seed_count > 2e6)
    throw std::invalid_argument("find_critical_points: seed lattice too large; reduce grid_n");

  // Seed lattice and the gradient scale against which convergence is judged.
  std::vector<Eigen::VectorXd> seeds;
  seeds.reserve(static_cast<std::size_t>(seed_count));
  std::vector<int> odo(d, 0);
  for (;;) {
    Eigen::VectorXd s(d);
    for (int i = 0; i < d; ++i)
      s[i] = grid_n == 1 ? 0.0 : -box + 2.0 * box * odo[i] / (grid_n - 1);
    seeds.push_back(std::move(s));
    int axis = d - 1;
    while (axis >= 0 && ++odo[axis] == grid_n) odo[axis--] = 0;
    if (axis < 0) break;
  }
  double grad_scale = 0.0;
  for (const auto& s : seeds) grad_scale = std::max(grad_scale, grad_at(disp, s).norm());
  const double tol = 1e-12 * std::max(1.0, grad_scale);
  const double step_cap = std::max(1.0, 0.1 * box);

  CriticalPointSearch out;
  std::vector<Eigen::VectorXd> found;
  std::vector<double> found_gnorm;
  int stalled = 0, left_box = 0;
  double worst_residual = 0.0;

  for (const auto& seed : seeds) {
    Eigen::VectorXd x = seed;
    bool converged = false, abandoned = false;
    double gn = grad_at(disp, x).norm();
    for (int iter = 0; iter < 80 && !converged && !abandoned; ++iter) {
      const Eigen::VectorXd g = grad_at(disp, x);
      gn = g.norm();
      if (gn <= tol) {
        converged = true;
        break;
      }
      const Eigen::MatrixXd h = hessian_at(disp, x);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
      if (!lu.isInvertible()) {
        abandoned = true;  // flat or conical curvature away from a zero gradient
        break;
      }
      Eigen::VectorXd step = lu.solve(-g);
      if (!step.allFinite()) {
        abandoned = true;
        break;
      }
      const double len = step.norm();
      if (len > step_cap) step *= step_cap / len;
      double alpha = 1.0;
      bool improved = false;
      for (int bt = 0; bt < 40; ++bt, alpha *= 0.5) {
        const Eigen::VectorXd trial = x + alpha * step;
        if (grad_at(disp, trial).norm() < gn) {
          x = trial;
          improved = true;
          break;
        }
      }
      if (!improved) {
        abandoned = true;
        break;
      }
      if (x.lpNorm<Eigen::Infinity>() > 1.5 * box + 1.0) {
        ++left_box;
        abandoned = true;
        x = seed;  // mark as non-reporting
        gn = std::numeric_limits<double>::infinity();
      }
    }
    if (!converged) {
      if (std::isfinite(gn)) {
        ++stalled;
        worst_residual = std::max(worst_residual, gn);
      }
      continue;
    }
    // Polish: undamped Newton steps while they strictly improve the residual.
    for (int polish = 0; polish < 4; ++polish) {
      const Eigen::VectorXd g = grad_at(disp, x);
      const Eigen::MatrixXd h = hessian_at(disp, x);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
      if (!lu.isInvertible()) break;
      const Eigen::VectorXd trial = x + lu.solve(-g);
      if (!trial.allFinite() || grad_at(disp, trial).norm() >= g.norm()) break;
      x = trial;
    }
    gn = grad_at(disp, x).norm();
    bool merged = false;
    for (std::size_t i = 0; i < found.size(); ++i) {
      if ((found[i] - x).norm() <= kMergeRadius) {
        if (gn < found_gnorm[i]) {
          found[i] = x;
          found_gnorm[i] = gn;
        }
        merged = true;
        break;
      }
    }
    if (!merged) {
      found.push_back(x);
      found_gnorm.push_back(gn);
    }
  }

  std::vector<std::size_t> order(found.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return lex_less(found[a], found[b]); });

  for (std::size_t oi : order) {
    CriticalPoint cp;
    cp.k0 = found[oi];
    cp.grad_norm = found_gnorm[oi];
    cp.hessian = hessian_at(disp, cp.k0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cp.hessian);
    const Eigen::VectorXd ev = eig.eigenvalues();
    const double emax = ev.cwiseAbs().maxCoeff();
    const double eig_tol = 1e-7 * std::max(1.0, emax);
    int pos = 0, neg = 0;
    double emin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      emin = std::min(emin, std::abs(ev[i]));
      if (ev[i] > eig_tol) ++pos;
      if (ev[i] < -eig_tol) ++neg;
    }
    cp.signature = pos - neg;
    cp.degenerate = emin <= eig_tol;
    out.points.push_back(std::move(cp));
  }

  if (stalled > 0) {
    std::ostringstream note;
    note << stalled << " of " << seeds.size()
         << " seeds did not converge (best stalled |grad| = " << worst_residual << ")";
    out.diagnostics.push_back(note.str());
  }
  if (left_box > 0) {
    std::ostringstream note;
    note << left_box << " seeds left the search box";
    out.diagnostics.push_back(note.str());
  }
  return out;
}

std::complex<double> stationary_phase_C(const ModelSpec& spec, double t) {
  if (spec.family != InteractionFamily::LinearSolvable)
    throw std::invalid_argument("stationary_phase_C: linear (solvable) model required");
  if (!(t > 0.0) || !std::isfinite(t))
    throw std::invalid_argument("stationary_phase_C: t must be positive and finite");
  const double box = default_cutoff(spec, 1e-9);
  const int grid_n = spec.d <= 3 ? 7 : 5;
  const CriticalPointSearch search = find_critical_points(spec.dispersion, spec.d, box, grid_n);
  std::vector<const CriticalPoint*> usable;
  for (const auto& cp : search.points)
    if (!cp.degenerate) usable.push_back(&cp);
  if (usable.empty()) {
    std::string why = "stationary_phase_C: no nondegenerate critical point in the support";
    for (const auto& note : search.diagnostics) why += "; " + note;
    throw NumericError(why);
  }
  if (usable.size() > 1)
    throw NumericError("stationary_phase_C: " + std::to_string(usable.size()) +
                       " nondegenerate critical points; the single-point asymptotic does not "
                       "apply");
  const CriticalPoint& cp = *usable.front();
  const double w0 =
      omega(spec.dispersion, std::span<const double>(cp.k0.data(), cp.k0.size()));
  if (std::abs(w0) < 1e-12)
    throw NumericError("stationary_phase_C: omega vanishes at the critical point");
  const double det_h = cp.hessian.determinant();
  const double v2 =
      std::norm(eval_form_factor(spec, std::span<const double>(cp.k0.data(), cp.k0.size())));
  const double lam2 = spec.lambda * spec.lambda;
  const double amp = lam2 * std::pow(2.0 * kPi / t, 0.5 * spec.d) / std::sqrt(std::abs(det_h)) *
                     v2 / (w0 * w0);
  const double phase = -0.25 * kPi * cp.signature - w0 * t;
  return amp * std::exp(std::complex<double>(0.0, phase));
}

std::complex<double> stationary_phase_F(const ModelSpec& spec, double sigma) {
  if (spec.dispersion.kind != DispersionKind::NonRelShifted)
    throw std::invalid_argument(
        "stationary_phase_F: parabolic dispersion required (joint Hessian must be the identity)");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("stationary_phase_F: sigma must be positive and finite");
  const int nd = kernel_arity(spec) * spec.d;
  const double e0 = kernel_arity(spec) * omega_radial(spec.dispersion, 0.0);
  const std::vector<double> zero(static_cast<std::size_t>(nd), 0.0);
  const double v2 = std::norm(eval_form_factor(spec, zero));
  const double amp = v2 * std::pow(2.0 * kPi / sigma, 0.5 * nd);
  const double phase = -0.25 * kPi * nd - sigma * e0;
  return amp * std::exp(std::complex<double>(0.0, phase));
}

PowerLawFit fit_power_law(const std::vector<double>& t, const std::vector<std::complex<double>>& C,
                          double t0, double t1) {
  if (t.size() != C.size()) throw std::invalid_argument("fit_power_law: size mismatch");
  if (t.size() < 2) throw std::invalid_argument("fit_power_law: too few samples");
  for (std::size_t j = 0; j + 1 < t.size(); ++j)
    if (!(t[j] < t[j + 1]))
      throw std::invalid_argument("fit_power_law: time grid must be strictly increasing");
  if (!(t0 > 0.0) || !(t0 < t1))
    throw std::invalid_argument("fit_power_law: window must satisfy 0 < t0 < t1");
  if (t0 < t.front() - 1e-12 || t1 > t.back() + 1e-12)
    throw std::invalid_argument("fit_power_law: window extends outside the sampled grid");

  std::vector<std::size_t> win;
  for (std::size_t j = 0; j < t.size(); ++j)
    if (t[j] >= t0 && t[j] <= t1) win.push_back(j);

  std::vector<double> a(win.size());
  double amax = 0.0;
  for (std::size_t i = 0; i < win.size(); ++i) {
    a[i] = std::abs(C[win[i]]);
    if (!std::isfinite(a[i])) throw std::invalid_argument("fit_power_law: non-finite sample");
    amax = std::max(amax, a[i]);
  }
  if (amax == 0.0) throw NumericError("fit_power_law: |C| vanishes on the window");

  // Envelope: strict local maxima of |C|; right-hand ties keep plateau edges
  // from double counting.  No interior maximum at all means the modulus does
  // not oscillate and is its own envelope.
  std::vector<std::size_t> env;
  for (std::size_t i = 1; i + 1 < win.size(); ++i)
    if (a[i] > 0.0 && a[i] > a[i - 1] && a[i] >= a[i + 1]) env.push_back(i);
  if (env.size() <= 1) {
    env.clear();
    for (std::size_t i = 0; i < win.size(); ++i)
      if (a[i] > 0.0) env.push_back(i);
  }
  if (env.size() < 10)
    throw NumericError("fit_power_law: fewer than 10 envelope points in the window; widen the "
                       "window or sample more densely");

  const double n = static_cast<double>(env.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i : env) {
    const double x = std::log(t[win[i]]);
    const double y = std::log(a[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double sxx_c = sxx - sx * sx / n;
  if (!(sxx_c > 0.0)) throw NumericError("fit_power_law: degenerate abscissa spread");
  const double slope = (sxy - sx * sy / n) / sxx_c;
  const double intercept = (sy - slope * sx) / n;

  double ssr = 0.0;
  for (std::size_t i : env) {
    const double r = std::log(a[i]) - (intercept + slope * std::log(t[win[i]]));
    ssr += r * r;
  }

  PowerLawFit fit;
  fit.alpha = -slope;
  fit.alpha_stderr = env.size() > 2 ? std::sqrt(ssr / (n - 2.0) / sxx_c) : 0.0;
  fit.residual = std::sqrt(ssr / n);
  fit.points_used = static_cast<int>(env.size());
  fit.window[0] = t0;
  fit.window[1] = t1;
  for (std::size_t i = 0; i < win.size(); ++i)
    if (a[i] > 0.0) fit.f_bound = std::max(fit.f_bound, a[i] * std::pow(t[win[i]], fit.alpha));
  return fit;
}

std::string fit_report_json(const PowerLawFit& fit) {
  nlohmann::json j;
  j["alpha"] = fit.alpha;
  j["alpha_stderr"] = fit.alpha_stderr;
  j["f_bound"] = fit.f_bound;
  j["window"] = {fit.window[0], fit.window[1]};
  return j.dump(2);
}

}  // namespace abc
