#include "abc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "abc/model_json.hpp"

namespace abc {

DispersionLaw DispersionLaw::relativistic(double m) {
  if (!(m > 0)) throw std::invalid_argument("relativistic dispersion requires m > 0");
  DispersionLaw law;
  law.kind = DispersionKind::Relativistic;
  law.m = m;
  return law;
}

DispersionLaw DispersionLaw::nonrel_shifted(double omega0) {
  if (!(omega0 >= 0)) throw std::invalid_argument("shifted parabola requires omega0 >= 0");
  DispersionLaw law;
  law.kind = DispersionKind::NonRelShifted;
  law.omega0 = omega0;
  return law;
}

DispersionLaw DispersionLaw::bogoliubov(double b, double v0) {
  if (!(b > 0) || !(v0 >= 0)) throw std::invalid_argument("bogoliubov dispersion requires b > 0, v0 >= 0");
  DispersionLaw law;
  law.kind = DispersionKind::Bogoliubov;
  law.b = b;
  law.v0 = v0;
  return law;
}

DispersionLaw DispersionLaw::fermi_quasi(double m, double mu) {
  if (!(m > 0) || !(mu > 0)) throw std::invalid_argument("quasiparticle dispersion requires m > 0, mu > 0");
  DispersionLaw law;
  law.kind = DispersionKind::FermiQuasi;
  law.m = m;
  law.mu = mu;
  return law;
}

DispersionLaw DispersionLaw::constant(double omega0) {
  if (!(omega0 > 0)) throw std::invalid_argument("constant dispersion requires omega0 > 0");
  DispersionLaw law;
  law.kind = DispersionKind::Constant;
  law.omega0 = omega0;
  return law;
}

namespace {

double norm2(std::span<const double> k) {
  double s = 0;
  for (double x : k) s += x * x;
  return s;
}

}  // namespace

double omega_radial(const DispersionLaw& law, double r) {
  const double r2 = r * r;
  switch (law.kind) {
    case DispersionKind::Relativistic:
      return std::sqrt(r2 + law.m * law.m);
    case DispersionKind::NonRelShifted:
      return 0.5 * r2 - law.omega0;
    case DispersionKind::Bogoliubov:
      return std::sqrt(law.b * r2 * r2 + law.v0 * r2);
    case DispersionKind::FermiQuasi:
      return std::abs(0.5 * r2 / law.m - law.mu);
    case DispersionKind::Constant:
      return law.omega0;
  }
  throw std::logic_error("unreachable dispersion kind");
}

double omega(const DispersionLaw& law, std::span<const double> k) {
  return omega_radial(law, std::sqrt(norm2(k)));
}

void omega_grad(const DispersionLaw& law, std::span<const double> k, std::span<double> grad) {
  if (grad.size() != k.size()) throw std::invalid_argument("omega_grad: output size mismatch");
  const double r2 = norm2(k);
  double scale = 0;  // grad = scale * k for every (radial) kind
  switch (law.kind) {
    case DispersionKind::Relativistic:
      scale = 1.0 / std::sqrt(r2 + law.m * law.m);
      break;
    case DispersionKind::NonRelShifted:
      scale = 1.0;
      break;
    case DispersionKind::Bogoliubov: {
      const double w = std::sqrt(law.b * r2 * r2 + law.v0 * r2);
      scale = w > 0 ? (2.0 * law.b * r2 + law.v0) / w : 0.0;
      break;
    }
    case DispersionKind::FermiQuasi: {
      const double s = 0.5 * r2 / law.m - law.mu;
      scale = (s >= 0 ? 1.0 : -1.0) / law.m;
      break;
    }
    case DispersionKind::Constant:
      scale = 0.0;
      break;
  }
  for (size_t i = 0; i < k.size(); ++i) grad[i] = scale * k[i];
}

void omega_hessian(const DispersionLaw& law, std::span<const double> k, std::span<double> hess) {
  const size_t d = k.size();
  if (hess.size() != d * d) throw std::invalid_argument("omega_hessian: output size mismatch");
  const double r2 = norm2(k);
  // Radial laws give H = c1 * I + c2 * k k^T.
  double c1 = 0, c2 = 0;
  switch (law.kind) {
    case DispersionKind::Relativistic: {
      const double w = std::sqrt(r2 + law.m * law.m);
      c1 = 1.0 / w;
      c2 = -1.0 / (w * w * w);
      break;
    }
    case DispersionKind::NonRelShifted:
      c1 = 1.0;
      c2 = 0.0;
      break;
    case DispersionKind::Bogoliubov: {
      const double w2 = law.b * r2 * r2 + law.v0 * r2;
      if (w2 > 0) {
        const double w = std::sqrt(w2);
        const double g = 2.0 * law.b * r2 + law.v0;  // d(w^2)/d(r^2)
        c1 = g / w;
        c2 = 2.0 * (2.0 * law.b - g * g / (2.0 * w2)) / w;
      } else {
        c1 = c2 = 0.0;  // conical point; Hessian undefined, report zero
      }
      break;
    }
    case DispersionKind::FermiQuasi: {
      const double s = 0.5 * r2 / law.m - law.mu;
      c1 = (s >= 0 ? 1.0 : -1.0) / law.m;
      c2 = 0.0;
      break;
    }
    case DispersionKind::Constant:
      c1 = c2 = 0.0;
      break;
  }
  for (size_t i = 0; i < d; ++i)
    for (size_t j = 0; j < d; ++j) hess[i * d + j] = c2 * k[i] * k[j] + (i == j ? c1 : 0.0);
}

int kernel_arity(const ModelSpec& spec) {
  switch (spec.family) {
    case InteractionFamily::PairCreation:
      return spec.n;
    case InteractionFamily::LinearSolvable:
      return 1;
    case InteractionFamily::TranslationInvariantTrilinear:
      return 3;
  }
  throw std::logic_error("unreachable family");
}

double energy_total(const ModelSpec& spec, std::span<const double> momenta) {
  const size_t arity = static_cast<size_t>(kernel_arity(spec));
  const size_t d = static_cast<size_t>(spec.d);
  if (momenta.size() != arity * d) {
    std::ostringstream msg;
    msg << "energy_total: expected " << arity << " momenta in R^" << d << " (" << arity * d
        << " doubles), got " << momenta.size();
    throw std::invalid_argument(msg.str());
  }
  double e = 0;
  for (size_t i = 0; i < arity; ++i) e += omega(spec.dispersion, momenta.subspan(i * d, d));
  return e;
}

std::complex<double> eval_form_factor(const ModelSpec& spec, std::span<const double> momenta) {
  const size_t arity = static_cast<size_t>(kernel_arity(spec));
  const size_t d = static_cast<size_t>(spec.d);
  if (momenta.size() != arity * d) {
    std::ostringstream msg;
    msg << "eval_form_factor: expected " << arity * d << " doubles, got " << momenta.size();
    throw std::invalid_argument(msg.str());
  }
  const FormFactor& ff = spec.form_factor;
  switch (ff.kind) {
    case FormFactorKind::IsotropicGaussian: {
      const double w2 = ff.width * ff.width;
      return ff.amplitude * std::exp(-0.5 * norm2(momenta) / w2);
    }
    case FormFactorKind::ShiftedGaussian: {
      if (ff.center.size() != d)
        throw std::invalid_argument("eval_form_factor: shifted gaussian center must lie in R^d");
      const double w2 = ff.width * ff.width;
      double s = 0;
      for (size_t i = 0; i < arity; ++i)
        for (size_t a = 0; a < d; ++a) {
          const double x = momenta[i * d + a] - ff.center[a];
          s += x * x;
        }
      return ff.amplitude * std::exp(-0.5 * s / w2);
    }
    case FormFactorKind::CompactBump: {
      const double s = norm2(momenta) / (ff.radius * ff.radius);
      if (s >= 1.0) return 0.0;
      return ff.amplitude * std::exp(1.0 - 1.0 / (1.0 - s));
    }
  }
  throw std::logic_error("unreachable form factor kind");
}

namespace {

// Minimum of the radial profile w(r) over [0, rmax]: coarse scan plus golden
// section refinement around the best sample.
double radial_min(const DispersionLaw& law, double rmax) {
  const int kScan = 512;
  double best_r = 0, best = omega_radial(law, 0);
  for (int i = 1; i <= kScan; ++i) {
    const double r = rmax * i / kScan;
    const double w = omega_radial(law, r);
    if (w < best) {
      best = w;
      best_r = r;
    }
  }
  double lo = std::max(0.0, best_r - rmax / kScan);
  double hi = std::min(rmax, best_r + rmax / kScan);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = omega_radial(law, x1), f2 = omega_radial(law, x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = omega_radial(law, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = omega_radial(law, x2);
    }
  }
  return std::min(std::min(f1, f2), best);
}

// Effective search radius covering the kernel support (exact for the bump,
// a negligible-mass cutoff for Gaussians).
double support_radius(const FormFactor& ff) {
  switch (ff.kind) {
    case FormFactorKind::CompactBump:
      return ff.radius;
    case FormFactorKind::IsotropicGaussian:
    case FormFactorKind::ShiftedGaussian: {
      double shift = 0;
      for (double c : ff.center) shift += c * c;
      return ff.width * 8.0 + std::sqrt(shift);
    }
  }
  return 8.0;
}

// Minimum of sum_i w(r_i) subject to sum r_i^2 <= R^2 (the bump support ball
// in the joint space).  Candidates put j momenta at the unconstrained radial
// minimizer (budget permitting) and are polished with a coordinate search.
double constrained_energy_min(const DispersionLaw& law, int arity, double R) {
  const int kScan = 512;
  double rstar = 0, wstar = omega_radial(law, 0);
  for (int i = 1; i <= kScan; ++i) {
    const double r = R * i / kScan;
    const double w = omega_radial(law, r);
    if (w < wstar) {
      wstar = w;
      rstar = r;
    }
  }
  std::vector<double> radii(arity, 0.0);
  auto energy = [&](const std::vector<double>& rs) {
    double e = 0;
    for (double r : rs) e += omega_radial(law, r);
    return e;
  };
  double best = energy(radii);
  std::vector<double> best_radii = radii;
  for (int j = 1; j <= arity; ++j) {
    std::vector<double> cand(arity, 0.0);
    const double budget_r = std::min(rstar, R / std::sqrt(static_cast<double>(j)));
    for (int i = 0; i < j; ++i) cand[i] = budget_r;
    const double e = energy(cand);
    if (e < best) {
      best = e;
      best_radii = cand;
    }
  }
  // Coordinate descent with shrinking step, projected onto the ball.
  double step = R / 8;
  for (int round = 0; round < 48; ++round) {
    for (int i = 0; i < arity; ++i) {
      for (double delta : {step, -step}) {
        std::vector<double> cand = best_radii;
        cand[i] = std::max(0.0, cand[i] + delta);
        double sq = 0;
        for (double r : cand) sq += r * r;
        if (sq > R * R) continue;
        const double e = energy(cand);
        if (e < best) {
          best = e;
          best_radii = cand;
        }
      }
    }
    step *= 0.75;
  }
  return best;
}

}  // namespace

ValidationReport validate_model(const ModelSpec& spec) {
  if (spec.d < 1) throw std::invalid_argument("validate_model: d must be >= 1");
  if (spec.n < 1) throw std::invalid_argument("validate_model: n must be >= 1");
  if (!(spec.form_factor.amplitude > 0)) throw std::invalid_argument("validate_model: amplitude must be > 0");

  const int arity = kernel_arity(spec);
  ValidationReport report;
  report.dn_product = spec.d * spec.n;

  // Analytic infimum of w per kind; the numeric scan below is a guard against
  // parameter regimes that move the minimizer.
  double inf_omega;
  switch (spec.dispersion.kind) {
    case DispersionKind::Relativistic:
      inf_omega = spec.dispersion.m;
      break;
    case DispersionKind::NonRelShifted:
      inf_omega = -spec.dispersion.omega0;
      break;
    case DispersionKind::Bogoliubov:
    case DispersionKind::FermiQuasi:
      inf_omega = 0.0;
      break;
    case DispersionKind::Constant:
      inf_omega = spec.dispersion.omega0;
      break;
    default:
      throw std::logic_error("unreachable");
  }
  const double R = support_radius(spec.form_factor);
  inf_omega = std::min(inf_omega, radial_min(spec.dispersion, R));

  if (spec.form_factor.kind == FormFactorKind::CompactBump) {
    report.inf_energy = constrained_energy_min(spec.dispersion, arity, spec.form_factor.radius);
  } else {
    report.inf_energy = arity * inf_omega;
  }
  report.decay = report.inf_energy <= 1e-12;

  if (report.decay && report.dn_product < 3)
    report.warnings.push_back("decay model with d*n < 3: long-time limits of the moment integrals are not guaranteed");
  if (spec.dispersion.kind == DispersionKind::FermiQuasi)
    report.warnings.push_back("quasiparticle dispersion is non-smooth on the Fermi sphere; stationary-phase asymptotics unavailable");
  if (spec.family == InteractionFamily::PairCreation && arity != spec.n)
    report.warnings.push_back("pair-creation kernel arity differs from n");
  if (spec.family == InteractionFamily::LinearSolvable && spec.n != 1)
    report.warnings.push_back("linear model should have n = 1; n is ignored by its operations");
  return report;
}

// ---------------------------------------------------------------------------
// JSON binding
// ---------------------------------------------------------------------------

namespace strict {

namespace {

size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      const size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::string closest(const std::string& word, const std::vector<std::string>& candidates) {
  size_t best_dist = 3;
  std::string best;
  for (const auto& cand : candidates) {
    const size_t dist = edit_distance(word, cand);
    if (dist < best_dist) {
      best_dist = dist;
      best = cand;
    }
  }
  return best;
}

void check_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                        const std::string& path, std::vector<std::string>& errors) {
  if (!j.is_object()) return;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) != allowed.end()) continue;
    std::string msg = path + ": unknown key \"" + it.key() + "\"";
    const std::string best = closest(it.key(), allowed);
    if (!best.empty()) msg += " (did you mean \"" + best + "\"?)";
    errors.push_back(msg);
  }
}

double require_number(const nlohmann::json& j, const std::string& key, const std::string& path,
                      std::vector<std::string>& errors, bool* ok) {
  if (ok) *ok = false;
  if (!j.contains(key)) {
    errors.push_back(path + ": missing key \"" + key + "\"");
    return 0;
  }
  if (!j.at(key).is_number()) {
    errors.push_back(path + "." + key + ": expected a number");
    return 0;
  }
  if (ok) *ok = true;
  return j.at(key).get<double>();
}

long long require_integer(const nlohmann::json& j, const std::string& key, const std::string& path,
                          std::vector<std::string>& errors, bool* ok) {
  if (ok) *ok = false;
  if (!j.contains(key)) {
    errors.push_back(path + ": missing key \"" + key + "\"");
    return 0;
  }
  if (!j.at(key).is_number_integer()) {
    errors.push_back(path + "." + key + ": expected an integer");
    return 0;
  }
  if (ok) *ok = true;
  return j.at(key).get<long long>();
}

std::string require_string(const nlohmann::json& j, const std::string& key, const std::string& path,
                           std::vector<std::string>& errors, bool* ok) {
  if (ok) *ok = false;
  if (!j.contains(key)) {
    errors.push_back(path + ": missing key \"" + key + "\"");
    return {};
  }
  if (!j.at(key).is_string()) {
    errors.push_back(path + "." + key + ": expected a string");
    return {};
  }
  if (ok) *ok = true;
  return j.at(key).get<std::string>();
}

}  // namespace strict

namespace {

const char* dispersion_name(DispersionKind kind) {
  switch (kind) {
    case DispersionKind::Relativistic: return "Relativistic";
    case DispersionKind::NonRelShifted: return "NonRelShifted";
    case DispersionKind::Bogoliubov: return "Bogoliubov";
    case DispersionKind::FermiQuasi: return "FermiQuasi";
    case DispersionKind::Constant: return "Constant";
  }
  return "?";
}

const char* form_factor_name(FormFactorKind kind) {
  switch (kind) {
    case FormFactorKind::IsotropicGaussian: return "IsotropicGaussian";
    case FormFactorKind::ShiftedGaussian: return "ShiftedGaussian";
    case FormFactorKind::CompactBump: return "CompactBump";
  }
  return "?";
}

const char* family_name(InteractionFamily family) {
  switch (family) {
    case InteractionFamily::PairCreation: return "PairCreation";
    case InteractionFamily::LinearSolvable: return "LinearSolvable";
    case InteractionFamily::TranslationInvariantTrilinear: return "TranslationInvariantTrilinear";
  }
  return "?";
}

}  // namespace

ModelSpec model_from_json(const nlohmann::json& j, const std::string& path,
                          std::vector<std::string>& errors) {
  ModelSpec spec;
  if (!j.is_object()) {
    errors.push_back(path + ": expected an object");
    return spec;
  }
  strict::check_unknown_keys(j, {"family", "d", "n", "dispersion", "form_factor", "lambda"}, path, errors);

  bool ok = false;
  const std::string family = strict::require_string(j, "family", path, errors, &ok);
  if (ok) {
    if (family == "PairCreation") spec.family = InteractionFamily::PairCreation;
    else if (family == "LinearSolvable") spec.family = InteractionFamily::LinearSolvable;
    else if (family == "TranslationInvariantTrilinear") spec.family = InteractionFamily::TranslationInvariantTrilinear;
    else errors.push_back(path + ".family: unknown family \"" + family + "\"");
  }

  const long long d = strict::require_integer(j, "d", path, errors, &ok);
  if (ok) {
    if (d < 1 || d > 16) errors.push_back(path + ".d: must be in [1, 16]");
    else spec.d = static_cast<int>(d);
  }
  const long long n = strict::require_integer(j, "n", path, errors, &ok);
  if (ok) {
    if (n < 1 || n > 8) errors.push_back(path + ".n: must be in [1, 8]");
    else spec.n = static_cast<int>(n);
  }
  spec.lambda = strict::require_number(j, "lambda", path, errors, &ok);

  if (j.contains("dispersion")) {
    const auto& dj = j.at("dispersion");
    const std::string dpath = path + ".dispersion";
    if (!dj.is_object()) {
      errors.push_back(dpath + ": expected an object");
    } else {
      strict::check_unknown_keys(dj, {"kind", "params"}, dpath, errors);
      const std::string kind = strict::require_string(dj, "kind", dpath, errors, &ok);
      nlohmann::json params = dj.contains("params") ? dj.at("params") : nlohmann::json::object();
      if (!params.is_object()) {
        errors.push_back(dpath + ".params: expected an object");
        params = nlohmann::json::object();
      }
      const std::string ppath = dpath + ".params";
      if (kind == "Relativistic") {
        strict::check_unknown_keys(params, {"m"}, ppath, errors);
        const double m = strict::require_number(params, "m", ppath, errors, &ok);
        if (ok && m > 0) spec.dispersion = DispersionLaw::relativistic(m);
        else if (ok) errors.push_back(ppath + ".m: must be > 0");
      } else if (kind == "NonRelShifted") {
        strict::check_unknown_keys(params, {"omega0"}, ppath, errors);
        const double w0 = strict::require_number(params, "omega0", ppath, errors, &ok);
        if (ok && w0 >= 0) spec.dispersion = DispersionLaw::nonrel_shifted(w0);
        else if (ok) errors.push_back(ppath + ".omega0: must be >= 0");
      } else if (kind == "Bogoliubov") {
        strict::check_unknown_keys(params, {"b", "v0"}, ppath, errors);
        bool ok2 = false;
        const double b = strict::require_number(params, "b", ppath, errors, &ok);
        const double v0 = strict::require_number(params, "v0", ppath, errors, &ok2);
        if (ok && ok2 && b > 0 && v0 >= 0) spec.dispersion = DispersionLaw::bogoliubov(b, v0);
        else if (ok && ok2) errors.push_back(ppath + ": requires b > 0 and v0 >= 0");
      } else if (kind == "FermiQuasi") {
        strict::check_unknown_keys(params, {"m", "mu"}, ppath, errors);
        bool ok2 = false;
        const double m = strict::require_number(params, "m", ppath, errors, &ok);
        const double mu = strict::require_number(params, "mu", ppath, errors, &ok2);
        if (ok && ok2 && m > 0 && mu > 0) spec.dispersion = DispersionLaw::fermi_quasi(m, mu);
        else if (ok && ok2) errors.push_back(ppath + ": requires m > 0 and mu > 0");
      } else if (kind == "Constant") {
        strict::check_unknown_keys(params, {"omega0"}, ppath, errors);
        const double w0 = strict::require_number(params, "omega0", ppath, errors, &ok);
        if (ok && w0 > 0) spec.dispersion = DispersionLaw::constant(w0);
        else if (ok) errors.push_back(ppath + ".omega0: must be > 0");
      } else if (!kind.empty()) {
        errors.push_back(dpath + ".kind: unknown dispersion kind \"" + kind + "\"");
      }
    }
  } else {
    errors.push_back(path + ": missing key \"dispersion\"");
  }

  if (j.contains("form_factor")) {
    const auto& fj = j.at("form_factor");
    const std::string fpath = path + ".form_factor";
    if (!fj.is_object()) {
      errors.push_back(fpath + ": expected an object");
    } else {
      strict::check_unknown_keys(fj, {"kind", "params"}, fpath, errors);
      const std::string kind = strict::require_string(fj, "kind", fpath, errors, &ok);
      nlohmann::json params = fj.contains("params") ? fj.at("params") : nlohmann::json::object();
      if (!params.is_object()) {
        errors.push_back(fpath + ".params: expected an object");
        params = nlohmann::json::object();
      }
      const std::string ppath = fpath + ".params";
      if (kind == "IsotropicGaussian" || kind == "ShiftedGaussian") {
        std::vector<std::string> allowed = {"amplitude", "width"};
        if (kind == "ShiftedGaussian") allowed.push_back("center");
        strict::check_unknown_keys(params, allowed, ppath, errors);
        bool ok2 = false;
        const double a = strict::require_number(params, "amplitude", ppath, errors, &ok);
        const double w = strict::require_number(params, "width", ppath, errors, &ok2);
        if (ok && !(a > 0)) errors.push_back(ppath + ".amplitude: must be > 0");
        if (ok2 && !(w > 0)) errors.push_back(ppath + ".width: must be > 0");
        spec.form_factor.kind = kind == "IsotropicGaussian" ? FormFactorKind::IsotropicGaussian
                                                            : FormFactorKind::ShiftedGaussian;
        if (ok) spec.form_factor.amplitude = a;
        if (ok2) spec.form_factor.width = w;
        if (kind == "ShiftedGaussian") {
          if (!params.contains("center") || !params.at("center").is_array()) {
            errors.push_back(ppath + ".center: expected an array of d numbers");
          } else {
            for (const auto& x : params.at("center")) {
              if (!x.is_number()) {
                errors.push_back(ppath + ".center: expected an array of numbers");
                break;
              }
              spec.form_factor.center.push_back(x.get<double>());
            }
            if (spec.form_factor.center.size() != static_cast<size_t>(spec.d))
              errors.push_back(ppath + ".center: length must equal d");
          }
        }
      } else if (kind == "CompactBump") {
        strict::check_unknown_keys(params, {"amplitude", "radius"}, ppath, errors);
        bool ok2 = false;
        const double a = strict::require_number(params, "amplitude", ppath, errors, &ok);
        const double r = strict::require_number(params, "radius", ppath, errors, &ok2);
        if (ok && !(a > 0)) errors.push_back(ppath + ".amplitude: must be > 0");
        if (ok2 && !(r > 0)) errors.push_back(ppath + ".radius: must be > 0");
        spec.form_factor.kind = FormFactorKind::CompactBump;
        if (ok) spec.form_factor.amplitude = a;
        if (ok2) spec.form_factor.radius = r;
      } else if (!kind.empty()) {
        errors.push_back(fpath + ".kind: unknown form factor kind \"" + kind + "\"");
      }
    }
  } else {
    errors.push_back(path + ": missing key \"form_factor\"");
  }
  return spec;
}

nlohmann::json model_to_json(const ModelSpec& spec) {
  nlohmann::json dparams;
  switch (spec.dispersion.kind) {
    case DispersionKind::Relativistic:
      dparams["m"] = spec.dispersion.m;
      break;
    case DispersionKind::NonRelShifted:
      dparams["omega0"] = spec.dispersion.omega0;
      break;
    case DispersionKind::Bogoliubov:
      dparams["b"] = spec.dispersion.b;
      dparams["v0"] = spec.dispersion.v0;
      break;
    case DispersionKind::FermiQuasi:
      dparams["m"] = spec.dispersion.m;
      dparams["mu"] = spec.dispersion.mu;
      break;
    case DispersionKind::Constant:
      dparams["omega0"] = spec.dispersion.omega0;
      break;
  }
  nlohmann::json fparams;
  fparams["amplitude"] = spec.form_factor.amplitude;
  switch (spec.form_factor.kind) {
    case FormFactorKind::IsotropicGaussian:
      fparams["width"] = spec.form_factor.width;
      break;
    case FormFactorKind::ShiftedGaussian:
      fparams["width"] = spec.form_factor.width;
      fparams["center"] = spec.form_factor.center;
      break;
    case FormFactorKind::CompactBump:
      fparams["radius"] = spec.form_factor.radius;
      break;
  }
  return nlohmann::json{
      {"family", family_name(spec.family)},
      {"d", spec.d},
      {"n", spec.n},
      {"dispersion", {{"kind", dispersion_name(spec.dispersion.kind)}, {"params", dparams}}},
      {"form_factor", {{"kind", form_factor_name(spec.form_factor.kind)}, {"params", fparams}}},
      {"lambda", spec.lambda},
  };
}

ModelSpec model_from_json_text(const std::string& text, std::vector<std::string>& errors) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    errors.push_back(std::string("model: JSON parse error: ") + e.what());
    return {};
  }
  return model_from_json(j, "model", errors);
}

std::string model_to_json_text(const ModelSpec& spec) { return model_to_json(spec).dump(2); }

}  // namespace abc
