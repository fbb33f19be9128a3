#include "abc/jobs.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "abc/abc2.hpp"
#include "abc/asympt.hpp"
#include "abc/diagrams.hpp"
#include "abc/io.hpp"
#include "abc/model_json.hpp"
#include "abc/oracle.hpp"

namespace abc {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using cplx = std::complex<double>;

// Distinguishes filesystem problems from operation failures in run_job.
struct IoFailure {
  std::string message;
};

constexpr std::pair<JobKind, const char*> kJobNames[] = {
    {JobKind::Abc2, "abc2"},
    {JobKind::Abc2Decay, "abc2_decay"},
    {JobKind::IEps, "ieps"},
    {JobKind::Stochastic, "stochastic"},
    {JobKind::Solvable, "solvable"},
    {JobKind::FockOracle, "fock_oracle"},
    {JobKind::Asymptotics, "asymptotics"},
    {JobKind::Recursion, "recursion"},
    {JobKind::OneParticle, "one_particle"},
    {JobKind::Baker, "baker"},
    {JobKind::Compare, "compare"},
};

// Which top-level inputs a job accepts; everything else is an unknown key.
struct JobShape {
  bool model = false;
  bool quadrature = false;
  bool times = false;
  bool eps = false;
  bool lambdas = false;
  bool momentum = false;
  bool order = false;
  bool fock = false;
  bool baker = false;
  bool compare = false;
};

JobShape job_shape(JobKind kind) {
  JobShape s;
  switch (kind) {
    case JobKind::Abc2:
    case JobKind::Abc2Decay:
    case JobKind::Solvable:
    case JobKind::Asymptotics:
      s.model = s.quadrature = s.times = true;
      break;
    case JobKind::IEps:
      s.model = s.quadrature = s.eps = true;
      break;
    case JobKind::Stochastic:
      s.model = s.quadrature = s.times = s.lambdas = true;
      break;
    case JobKind::FockOracle:
      s.model = s.times = s.fock = true;
      break;
    case JobKind::Recursion:
      s.order = true;
      break;
    case JobKind::OneParticle:
      s.model = s.quadrature = s.times = s.momentum = true;
      break;
    case JobKind::Baker:
      s.baker = true;
      break;
    case JobKind::Compare:
      s.compare = true;
      break;
  }
  return s;
}

const char* mode_name(QuadratureSettings::Mode mode) {
  switch (mode) {
    case QuadratureSettings::Mode::Auto: return "Auto";
    case QuadratureSettings::Mode::TensorGauss: return "TensorGauss";
    case QuadratureSettings::Mode::MonteCarlo: return "MonteCarlo";
  }
  return "?";
}

const char* convention_name(BakerConvention convention) {
  return convention == BakerConvention::Integer ? "Integer" : "HalfInteger";
}

std::vector<double> parse_number_list(const json& arr, const std::string& path,
                                      std::vector<std::string>& errors) {
  std::vector<double> out;
  if (!arr.is_array() || arr.empty()) {
    errors.push_back(path + ": expected a nonempty array of numbers");
    return out;
  }
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number() || !std::isfinite(arr[i].get<double>())) {
      errors.push_back(path + "[" + std::to_string(i) + "]: expected a finite number");
      return {};
    }
    out.push_back(arr[i].get<double>());
  }
  return out;
}

std::vector<double> parse_times(const json& j, std::vector<std::string>& errors) {
  const bool has_grid = j.contains("time_grid");
  const bool has_list = j.contains("t_list");
  if (has_grid && has_list) {
    errors.push_back("config: give either \"time_grid\" or \"t_list\", not both");
    return {};
  }
  if (!has_grid && !has_list) {
    errors.push_back("config: a time grid is required (\"time_grid\" {t0, t1, steps} or \"t_list\")");
    return {};
  }
  std::vector<double> t;
  if (has_list) {
    t = parse_number_list(j.at("t_list"), "config.t_list", errors);
  } else {
    const auto& g = j.at("time_grid");
    if (!g.is_object()) {
      errors.push_back("config.time_grid: expected an object {t0, t1, steps}");
      return {};
    }
    strict::check_unknown_keys(g, {"t0", "t1", "steps"}, "config.time_grid", errors);
    bool ok0 = false, ok1 = false, oks = false;
    const double t0 = strict::require_number(g, "t0", "config.time_grid", errors, &ok0);
    const double t1 = strict::require_number(g, "t1", "config.time_grid", errors, &ok1);
    const long long steps = strict::require_integer(g, "steps", "config.time_grid", errors, &oks);
    if (!(ok0 && ok1 && oks)) return {};
    if (!(std::isfinite(t0) && std::isfinite(t1))) {
      errors.push_back("config.time_grid: t0 and t1 must be finite");
      return {};
    }
    if (steps < 2 || steps > 1'000'000) {
      errors.push_back("config.time_grid.steps: must be in [2, 1000000]");
      return {};
    }
    if (!(t1 > t0)) {
      errors.push_back("config.time_grid: t1 must exceed t0");
      return {};
    }
    for (long long i = 0; i < steps; ++i)
      t.push_back(t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(steps - 1));
  }
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    if (!(t[i] < t[i + 1])) {
      errors.push_back("config.t_list: times must be strictly increasing");
      return {};
    }
  return t;
}

QuadratureSettings parse_quadrature(const json& j, std::vector<std::string>& errors) {
  QuadratureSettings q;
  if (!j.is_object()) {
    errors.push_back("config.quadrature: expected an object");
    return q;
  }
  strict::check_unknown_keys(
      j, {"mode", "points_per_axis", "mc_samples", "seed", "momentum_cutoff", "rel_tol"},
      "config.quadrature", errors);
  if (j.contains("mode")) {
    if (!j.at("mode").is_string()) {
      errors.push_back("config.quadrature.mode: expected a string");
    } else {
      const std::string m = j.at("mode").get<std::string>();
      if (m == "Auto") q.mode = QuadratureSettings::Mode::Auto;
      else if (m == "TensorGauss") q.mode = QuadratureSettings::Mode::TensorGauss;
      else if (m == "MonteCarlo") q.mode = QuadratureSettings::Mode::MonteCarlo;
      else {
        std::string msg = "config.quadrature.mode: unknown mode \"" + m + "\"";
        const std::string best = strict::closest(m, {"Auto", "TensorGauss", "MonteCarlo"});
        if (!best.empty()) msg += " (did you mean \"" + best + "\"?)";
        errors.push_back(msg);
      }
    }
  }
  if (j.contains("points_per_axis")) {
    if (!j.at("points_per_axis").is_number_integer())
      errors.push_back("config.quadrature.points_per_axis: expected an integer");
    else {
      const long long v = j.at("points_per_axis").get<long long>();
      if (v < 2 || v > 100'000)
        errors.push_back("config.quadrature.points_per_axis: must be in [2, 100000]");
      else
        q.points_per_axis = static_cast<int>(v);
    }
  }
  if (j.contains("mc_samples")) {
    if (!j.at("mc_samples").is_number_integer())
      errors.push_back("config.quadrature.mc_samples: expected an integer");
    else {
      const long long v = j.at("mc_samples").get<long long>();
      if (v < 100) errors.push_back("config.quadrature.mc_samples: must be >= 100");
      else q.mc_samples = v;
    }
  }
  if (j.contains("seed")) {
    const auto& s = j.at("seed");
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() &&
                                   s.get<long long>() < 0))
      errors.push_back("config.quadrature.seed: expected a nonnegative integer");
    else
      q.seed = s.get<std::uint64_t>();
  }
  if (j.contains("momentum_cutoff")) {
    if (!j.at("momentum_cutoff").is_number() ||
        !std::isfinite(j.at("momentum_cutoff").get<double>()))
      errors.push_back("config.quadrature.momentum_cutoff: expected a finite number");
    else
      q.momentum_cutoff = j.at("momentum_cutoff").get<double>();
  }
  if (j.contains("rel_tol")) {
    if (!j.at("rel_tol").is_number() || !(j.at("rel_tol").get<double>() > 0))
      errors.push_back("config.quadrature.rel_tol: expected a positive number");
    else
      q.rel_tol = j.at("rel_tol").get<double>();
  }
  return q;
}

BakerJobParams parse_baker(const json& j, std::vector<std::string>& errors) {
  BakerJobParams b;
  if (!j.is_object()) {
    errors.push_back("config.baker: expected an object {N, q, p, T, convention}");
    return b;
  }
  strict::check_unknown_keys(j, {"N", "q", "p", "T", "convention"}, "config.baker", errors);
  bool ok = false;
  const long long n = strict::require_integer(j, "N", "config.baker", errors, &ok);
  if (ok) {
    if (n < 2 || n % 2 != 0 || n > 65536)
      errors.push_back("config.baker.N: must be an even integer in [2, 65536]");
    else
      b.N = static_cast<int>(n);
  }
  const double q = strict::require_number(j, "q", "config.baker", errors, &ok);
  if (ok) {
    if (!(q >= 0.0 && q < 1.0)) errors.push_back("config.baker.q: must lie in [0, 1)");
    else b.q = q;
  }
  const double p = strict::require_number(j, "p", "config.baker", errors, &ok);
  if (ok) {
    if (!(p >= 0.0 && p < 1.0)) errors.push_back("config.baker.p: must lie in [0, 1)");
    else b.p = p;
  }
  const long long t = strict::require_integer(j, "T", "config.baker", errors, &ok);
  if (ok) {
    if (t < 1 || t > 100'000) errors.push_back("config.baker.T: must be in [1, 100000]");
    else b.T = static_cast<int>(t);
  }
  if (j.contains("convention")) {
    if (!j.at("convention").is_string()) {
      errors.push_back("config.baker.convention: expected a string");
    } else {
      const std::string c = j.at("convention").get<std::string>();
      if (c == "Integer") b.convention = BakerConvention::Integer;
      else if (c == "HalfInteger") b.convention = BakerConvention::HalfInteger;
      else {
        std::string msg = "config.baker.convention: unknown convention \"" + c + "\"";
        const std::string best = strict::closest(c, {"Integer", "HalfInteger"});
        if (!best.empty()) msg += " (did you mean \"" + best + "\"?)";
        errors.push_back(msg);
      }
    }
  }
  return b;
}

CompareJobParams parse_compare(const json& j, std::vector<std::string>& errors) {
  CompareJobParams c;
  if (!j.is_object()) {
    errors.push_back("config.compare: expected an object {first_csv, second_csv}");
    return c;
  }
  strict::check_unknown_keys(j, {"first_csv", "second_csv", "first_label", "second_label"},
                             "config.compare", errors);
  bool ok = false;
  c.first_csv = strict::require_string(j, "first_csv", "config.compare", errors, &ok);
  if (ok && c.first_csv.empty()) errors.push_back("config.compare.first_csv: must be nonempty");
  c.second_csv = strict::require_string(j, "second_csv", "config.compare", errors, &ok);
  if (ok && c.second_csv.empty()) errors.push_back("config.compare.second_csv: must be nonempty");

  auto label = [&](const char* key, const std::string& csv, const char* fallback) {
    if (j.contains(key)) {
      if (!j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
        errors.push_back(std::string("config.compare.") + key + ": expected a nonempty string");
        return std::string(fallback);
      }
      return j.at(key).get<std::string>();
    }
    const std::string stem = fs::path(csv).stem().string();
    return stem.empty() ? std::string(fallback) : stem;
  };
  c.first_label = label("first_label", c.first_csv, "first");
  c.second_label = label("second_label", c.second_csv, "second");
  return c;
}

FockJobParams parse_fock(const json& j, std::vector<std::string>& errors) {
  FockJobParams f;
  if (!j.is_object()) {
    errors.push_back("config.fock: expected an object {modes, truncation}");
    return f;
  }
  strict::check_unknown_keys(j, {"modes", "truncation"}, "config.fock", errors);
  if (j.contains("modes")) {
    if (!j.at("modes").is_number_integer())
      errors.push_back("config.fock.modes: expected an integer");
    else {
      const long long v = j.at("modes").get<long long>();
      if (v < 1 || v > 512) errors.push_back("config.fock.modes: must be in [1, 512]");
      else f.modes = static_cast<int>(v);
    }
  }
  if (j.contains("truncation")) {
    if (!j.at("truncation").is_number_integer())
      errors.push_back("config.fock.truncation: expected an integer");
    else {
      const long long v = j.at("truncation").get<long long>();
      if (v < 4 || v > 64) errors.push_back("config.fock.truncation: must be in [4, 64]");
      else f.truncation = static_cast<int>(v);
    }
  }
  return f;
}

json quadrature_json(const QuadratureSettings& q) {
  json j;
  j["mode"] = mode_name(q.mode);
  j["points_per_axis"] = q.points_per_axis;
  j["mc_samples"] = q.mc_samples;
  j["seed"] = q.seed;
  j["momentum_cutoff"] = q.momentum_cutoff;
  j["rel_tol"] = q.rel_tol;
  return j;
}

json canonical_json(const JobConfig& config) {
  const JobShape shape = job_shape(config.job);
  json out;
  out["job"] = job_name(config.job);
  out["output_dir"] = config.output_dir;
  if (shape.model && config.model) out["model"] = model_to_json(*config.model);
  if (shape.quadrature) out["quadrature"] = quadrature_json(config.quadrature);
  if (shape.times) out["t_list"] = config.time_grid;
  if (shape.eps) out["eps_schedule"] = config.eps_schedule;
  if (shape.lambdas) out["lambda_list"] = config.lambda_list;
  if (shape.momentum) out["momentum"] = config.momentum;
  if (shape.order) out["order"] = config.recursion_order;
  if (shape.fock) out["fock"] = json{{"modes", config.fock.modes}, {"truncation", config.fock.truncation}};
  if (shape.baker && config.baker)
    out["baker"] = json{{"N", config.baker->N},
                        {"q", config.baker->q},
                        {"p", config.baker->p},
                        {"T", config.baker->T},
                        {"convention", convention_name(config.baker->convention)}};
  if (shape.compare && config.compare)
    out["compare"] = json{{"first_csv", config.compare->first_csv},
                          {"second_csv", config.compare->second_csv},
                          {"first_label", config.compare->first_label},
                          {"second_label", config.compare->second_label}};
  return out;
}

json complex_json(cplx z) { return json{{"re", z.real()}, {"im", z.imag()}}; }

// --- artifacts ---

void write_artifact(const fs::path& dir, const std::string& name, std::string text,
                    std::vector<std::string>& artifacts) {
  if (text.empty() || text.back() != '\n') text += '\n';
  const fs::path path = dir / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure{"cannot open " + path.string() + " for writing"};
  out << text;
  out.flush();
  if (!out) throw IoFailure{"write failed: " + path.string()};
  artifacts.push_back(path.string());
}

void run_abc2(const JobConfig& config, const fs::path& dir, std::vector<std::string>& artifacts) {
  const ABCDecomposition dec =
      abc_second_order(*config.model, config.time_grid, config.quadrature);
  write_artifact(dir, "abc.csv", dec.to_csv(), artifacts);
  double alpha = std::numeric_limits<double>::quiet_NaN();
  if (dec.t.size() >= 10 && dec.t.front() > 0.0) {
    const PowerLawFit fit = fit_power_law(dec.t, dec.C, dec.t[dec.t.size() / 2], dec.t.back());
    alpha = fit.alpha;
  }
  write_artifact(dir, "summary.json", summary_json(dec, alpha), artifacts);
}

void run_abc2_decay(const JobConfig& config, const fs::path& dir,
                    std::vector<std::string>& artifacts) {
  const DecayMomentSeries dm =
      abc_second_order_decay(*config.model, config.time_grid, config.quadrature);
  CsvWriter csv({"t", "re_A2", "im_A2", "re_B2", "im_B2"});
  for (std::size_t i = 0; i < dm.t.size(); ++i)
    csv.add_row({dm.t[i], dm.A2_t[i].real(), dm.A2_t[i].imag(), dm.B2_t[i].real(),
                 dm.B2_t[i].imag()});
  write_artifact(dir, "decay.csv", csv.str(), artifacts);

  json j;
  j["A2_limit"] = complex_json(dm.A2_limit);
  j["B2_limit"] = complex_json(dm.B2_limit);
  j["A2_limit_valid"] = dm.A2_limit_valid;
  j["B2_limit_valid"] = dm.B2_limit_valid;
  j["A2_err"] = dm.A2_err;
  j["B2_err"] = dm.B2_err;
  j["dn"] = dm.dn;
  j["unproven_regime"] = dm.unproven_regime;
  j["warnings"] = dm.warnings;
  write_artifact(dir, "decay.json", j.dump(2), artifacts);
}

void run_ieps(const JobConfig& config, const fs::path& dir, std::vector<std::string>& artifacts) {
  const IEpsExtrapolation r = a2_b2_ieps(*config.model, config.eps_schedule, config.quadrature);
  CsvWriter csv({"eps", "re_A2", "im_A2", "re_B2", "im_B2"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < r.eps.size(); ++i) {
    const cplx b = i < r.B2_at_eps.size() ? r.B2_at_eps[i] : cplx(nan, nan);
    csv.add_row({r.eps[i], r.A2_at_eps[i].real(), r.A2_at_eps[i].imag(), b.real(), b.imag()});
  }
  write_artifact(dir, "ieps.csv", csv.str(), artifacts);

  json j;
  j["A2"] = complex_json(r.A2);
  j["A2_err"] = r.A2_err;
  j["B2_available"] = r.B2_available;
  if (r.B2_available) {
    j["B2"] = complex_json(r.B2);
    j["B2_err"] = r.B2_err;
  } else {
    j["B2"] = nullptr;
  }
  j["eps_schedule"] = r.eps;
  write_artifact(dir, "ieps.json", j.dump(2), artifacts);
}

void run_stochastic(const JobConfig& config, const fs::path& dir,
                    std::vector<std::string>& artifacts) {
  const StochasticProfile prof = stochastic_limit_profile(*config.model, config.lambda_list,
                                                          config.time_grid, config.quadrature);
  CsvWriter csv({"lambda", "deviation", "normalized"});
  for (std::size_t i = 0; i < prof.lambda.size(); ++i)
    csv.add_row({prof.lambda[i], prof.deviation[i], prof.normalized[i]});
  write_artifact(dir, "stochastic.csv", csv.str(), artifacts);
}

void run_solvable(const JobConfig& config, const fs::path& dir,
                  std::vector<std::string>& artifacts) {
  CsvWriter csv({"t", "re_C", "im_C"});
  cplx a{}, b{};
  for (std::size_t i = 0; i < config.time_grid.size(); ++i) {
    const SolvableABC abc = solvable_abc(*config.model, config.time_grid[i], config.quadrature);
    if (i == 0) {
      a = abc.A;
      b = abc.B;
    }
    csv.add_row({config.time_grid[i], abc.C.real(), abc.C.imag()});
  }
  write_artifact(dir, "solvable.csv", csv.str(), artifacts);

  json j;
  j["A"] = complex_json(a);
  j["B"] = complex_json(b);
  write_artifact(dir, "solvable.json", j.dump(2), artifacts);
}

void run_fock(const JobConfig& config, const fs::path& dir, std::vector<std::string>& artifacts) {
  const FockDiscretization disc =
      radial_fock_discretization(*config.model, config.fock.modes, config.fock.truncation);
  CsvWriter csv({"t", "re_U", "im_U"});
  for (const double t : config.time_grid) {
    const cplx u = fock_evolve(disc, *config.model, t, config.model->lambda);
    csv.add_row({t, u.real(), u.imag()});
  }
  write_artifact(dir, "fock.csv", csv.str(), artifacts);
}

void run_asymptotics(const JobConfig& config, const fs::path& dir,
                     std::vector<std::string>& artifacts) {
  std::vector<cplx> C;
  CsvWriter csv({"t", "re_C", "im_C", "re_C_stat", "im_C_stat"});
  for (double t : config.time_grid) {
    const cplx c = solvable_abc(*config.model, t, config.quadrature).C;
    const cplx sp = stationary_phase_C(*config.model, t);
    C.push_back(c);
    csv.add_row({t, c.real(), c.imag(), sp.real(), sp.imag()});
  }
  write_artifact(dir, "asymptotics.csv", csv.str(), artifacts);

  const PowerLawFit fit =
      fit_power_law(config.time_grid, C, config.time_grid.front(), config.time_grid.back());
  write_artifact(dir, "fit.json", fit_report_json(fit), artifacts);
}

void run_recursion(const JobConfig& config, const fs::path& dir,
                   std::vector<std::string>& artifacts) {
  const RecursionLadder ladder = solve_recursion(config.recursion_order);
  std::ostringstream text;
  std::vector<bool> residual_empty;
  for (int k = 1; k <= config.recursion_order; ++k) {
    text << "Q" << k << ":\n" << ladder.Q[k].to_text();
    if (k % 2 == 0) text << "M" << k << ":\n" << ladder.M[k].to_text();
    residual_empty.push_back(recursion_residual(ladder, k).terms.empty());
  }
  write_artifact(dir, "recursion.txt", text.str(), artifacts);

  json j;
  j["order"] = config.recursion_order;
  j["residual_empty"] = residual_empty;
  write_artifact(dir, "recursion.json", j.dump(2), artifacts);
}

void run_one_particle(const JobConfig& config, const fs::path& dir,
                      std::vector<std::string>& artifacts) {
  CsvWriter csv({"t", "re_U", "im_U", "abs_U"});
  for (const double t : config.time_grid) {
    const cplx u = one_particle_U(*config.model, config.momentum, t, config.quadrature);
    csv.add_row({t, u.real(), u.imag(), std::abs(u)});
  }
  write_artifact(dir, "one_particle.csv", csv.str(), artifacts);
}

void run_baker(const JobConfig& config, const fs::path& dir,
               std::vector<std::string>& artifacts) {
  const BakerJobParams& bp = *config.baker;
  const BakerUnitary b = baker_matrix(bp.N, bp.convention);
  const AutocorrSeries s =
      autocorrelation(b, coherent_state(bp.N, bp.q, bp.p, bp.convention), bp.T);
  write_artifact(dir, "baker.csv", s.to_csv(), artifacts);

  json j;
  j["N"] = bp.N;
  j["q"] = bp.q;
  j["p"] = bp.p;
  j["T"] = bp.T;
  j["convention"] = convention_name(bp.convention);
  j["fit"] = json{{"decay_rate", s.fit.decay_rate},
                  {"residual", s.fit.residual},
                  {"points_used", s.fit.points_used},
                  {"window", {s.fit.window[0], s.fit.window[1]}}};
  write_artifact(dir, "baker.json", j.dump(2), artifacts);
}

// Reads a series CSV: column 0 is t; the first re_*/im_* column pair forms
// the complex values.  Both the C(t) layout (t,re_C,im_C) and the baker
// layout (t,re_F,im_F,abs_F) qualify.
SampledSeries read_series_csv(const std::string& path, const std::string& label) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure{"cannot read input series: " + path};
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty series file: " + path);

  std::vector<std::string> cols;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) cols.push_back(cell);
  }
  int re_col = -1, im_col = -1;
  for (std::size_t i = 1; i < cols.size(); ++i) {
    if (re_col < 0 && cols[i].rfind("re_", 0) == 0) re_col = static_cast<int>(i);
    if (im_col < 0 && cols[i].rfind("im_", 0) == 0) im_col = static_cast<int>(i);
  }
  if (cols.empty() || cols[0] != "t" || re_col < 0 || im_col < 0)
    throw std::runtime_error("series file " + path +
                             ": header must be t followed by re_*/im_* columns");

  SampledSeries s;
  s.label = label;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("series file " + path + ": bad number at line " +
                                 std::to_string(lineno));
      }
    }
    if (row.size() != cols.size())
      throw std::runtime_error("series file " + path + ": wrong column count at line " +
                               std::to_string(lineno));
    s.t.push_back(row[0]);
    s.values.emplace_back(row[re_col], row[im_col]);
  }
  return s;
}

void run_compare(const JobConfig& config, const fs::path& dir,
                 std::vector<std::string>& artifacts) {
  const CompareJobParams& cp = *config.compare;
  const SampledSeries a = read_series_csv(cp.first_csv, cp.first_label);
  const SampledSeries b = read_series_csv(cp.second_csv, cp.second_label);
  const ComparisonReport report = compare_decay(a, b);
  write_artifact(dir, "comparison.json", report.to_json(), artifacts);
}

}  // namespace

const char* job_name(JobKind kind) {
  for (const auto& [k, name] : kJobNames)
    if (k == kind) return name;
  return "?";
}

std::string JobConfig::canonical_text() const { return canonical_json(*this).dump(2) + "\n"; }

JobConfig validate_config(const std::string& text, std::vector<std::string>& errors) {
  JobConfig config;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    errors.push_back(std::string("config: JSON parse error: ") + e.what());
    return config;
  }
  if (!j.is_object()) {
    errors.push_back("config: expected a JSON object");
    return config;
  }

  bool ok = false;
  const std::string job = strict::require_string(j, "job", "config", errors, &ok);
  bool job_known = false;
  if (ok) {
    for (const auto& [kind, name] : kJobNames) {
      if (job == name) {
        config.job = kind;
        job_known = true;
        break;
      }
    }
    if (!job_known) {
      std::string msg = "config.job: unknown job \"" + job + "\"";
      std::vector<std::string> names;
      for (const auto& [kind, name] : kJobNames) names.emplace_back(name);
      const std::string best = strict::closest(job, names);
      if (!best.empty()) msg += " (did you mean \"" + best + "\"?)";
      errors.push_back(msg);
    }
  }

  config.output_dir = strict::require_string(j, "output_dir", "config", errors, &ok);
  if (ok && config.output_dir.empty())
    errors.push_back("config.output_dir: must be a nonempty path");

  if (!job_known) return config;

  const JobShape shape = job_shape(config.job);
  std::vector<std::string> allowed = {"job", "output_dir"};
  if (shape.model) allowed.push_back("model");
  if (shape.quadrature) allowed.push_back("quadrature");
  if (shape.times) {
    allowed.push_back("time_grid");
    allowed.push_back("t_list");
  }
  if (shape.eps) allowed.push_back("eps_schedule");
  if (shape.lambdas) allowed.push_back("lambda_list");
  if (shape.momentum) allowed.push_back("momentum");
  if (shape.order) allowed.push_back("order");
  if (shape.fock) allowed.push_back("fock");
  if (shape.baker) allowed.push_back("baker");
  if (shape.compare) allowed.push_back("compare");
  strict::check_unknown_keys(j, allowed, "config", errors);

  bool model_clean = false;
  if (shape.model) {
    if (!j.contains("model")) {
      errors.push_back("config: missing key \"model\"");
    } else {
      const std::size_t before = errors.size();
      config.model = model_from_json(j.at("model"), "config.model", errors);
      model_clean = errors.size() == before;
    }
  }
  if (shape.quadrature && j.contains("quadrature"))
    config.quadrature = parse_quadrature(j.at("quadrature"), errors);
  if (shape.times) config.time_grid = parse_times(j, errors);

  if (shape.eps) {
    if (j.contains("eps_schedule")) {
      config.eps_schedule = parse_number_list(j.at("eps_schedule"), "config.eps_schedule", errors);
      if (!config.eps_schedule.empty()) {
        if (config.eps_schedule.size() < 2)
          errors.push_back("config.eps_schedule: needs at least two entries");
        bool decreasing = true, positive = true;
        for (std::size_t i = 0; i < config.eps_schedule.size(); ++i) {
          positive = positive && config.eps_schedule[i] > 0;
          if (i > 0) decreasing = decreasing && config.eps_schedule[i] < config.eps_schedule[i - 1];
        }
        if (!positive) errors.push_back("config.eps_schedule: entries must be positive");
        if (!decreasing) errors.push_back("config.eps_schedule: entries must strictly decrease");
      }
    } else {
      config.eps_schedule = {0.8, 0.4, 0.2, 0.1, 0.05};
    }
  }

  if (shape.lambdas) {
    if (j.contains("lambda_list")) {
      config.lambda_list = parse_number_list(j.at("lambda_list"), "config.lambda_list", errors);
      for (const double lam : config.lambda_list)
        if (!(lam > 0 && lam <= 10)) {
          errors.push_back("config.lambda_list: couplings must lie in (0, 10]");
          break;
        }
    } else {
      config.lambda_list = {0.1, 0.2};
    }
  }

  if (shape.momentum) {
    if (!j.contains("momentum")) {
      errors.push_back("config: missing key \"momentum\" (external momentum, length d)");
    } else {
      config.momentum = parse_number_list(j.at("momentum"), "config.momentum", errors);
    }
  }

  if (shape.order && j.contains("order")) {
    const long long v = strict::require_integer(j, "order", "config", errors, &ok);
    if (ok) {
      if (v < 1 || v > 4) errors.push_back("config.order: must be in [1, 4]");
      else config.recursion_order = static_cast<int>(v);
    }
  }

  if (shape.fock && j.contains("fock")) config.fock = parse_fock(j.at("fock"), errors);

  if (shape.baker) {
    if (!j.contains("baker"))
      errors.push_back("config: missing key \"baker\" ({N, q, p, T, convention})");
    else
      config.baker = parse_baker(j.at("baker"), errors);
  }

  if (shape.compare) {
    if (!j.contains("compare"))
      errors.push_back("config: missing key \"compare\" ({first_csv, second_csv})");
    else
      config.compare = parse_compare(j.at("compare"), errors);
  }

  // Cross-field checks against the parsed model.
  if (shape.model && config.model && model_clean) {
    const ModelSpec& spec = *config.model;
    const bool trilinear = spec.family == InteractionFamily::TranslationInvariantTrilinear;
    switch (config.job) {
      case JobKind::Abc2:
      case JobKind::Abc2Decay:
      case JobKind::IEps:
      case JobKind::Stochastic:
        if (trilinear)
          errors.push_back(
              "config.model.family: the trilinear family has no vacuum amplitude at second "
              "order; use job \"one_particle\"");
        break;
      case JobKind::Solvable:
      case JobKind::FockOracle:
      case JobKind::Asymptotics:
        if (spec.family != InteractionFamily::LinearSolvable)
          errors.push_back("config.model.family: this job requires \"LinearSolvable\"");
        break;
      case JobKind::OneParticle:
        if (!trilinear)
          errors.push_back(
              "config.model.family: this job requires \"TranslationInvariantTrilinear\"");
        break;
      default:
        break;
    }

    if (!trilinear || config.job == JobKind::OneParticle) {
      try {
        const ValidationReport report = validate_model(spec);
        if (config.job == JobKind::IEps && report.decay && report.dn_product < 5)
          errors.push_back("config.model: the B2 epsilon-extrapolation in the decay case "
                           "requires dn >= 5 (model has d*n = " +
                           std::to_string(report.dn_product) + ")");
      } catch (const std::exception& e) {
        errors.push_back(std::string("config.model: ") + e.what());
      }
    }

    if (config.job == JobKind::OneParticle && !config.momentum.empty() &&
        static_cast<int>(config.momentum.size()) != spec.d)
      errors.push_back("config.momentum: length must equal the model dimension d = " +
                       std::to_string(spec.d));
    if (config.job == JobKind::Asymptotics && !config.time_grid.empty() &&
        config.time_grid.front() <= 0.0)
      errors.push_back("config: asymptotics requires strictly positive times");
  }

  return config;
}

JobOutcome run_job(const JobConfig& config) {
  JobOutcome outcome;
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = config.output_dir;
  try {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoFailure{"cannot create output directory " + dir.string() + ": " + ec.message()};

    switch (config.job) {
      case JobKind::Abc2: run_abc2(config, dir, outcome.artifacts); break;
      case JobKind::Abc2Decay: run_abc2_decay(config, dir, outcome.artifacts); break;
      case JobKind::IEps: run_ieps(config, dir, outcome.artifacts); break;
      case JobKind::Stochastic: run_stochastic(config, dir, outcome.artifacts); break;
      case JobKind::Solvable: run_solvable(config, dir, outcome.artifacts); break;
      case JobKind::FockOracle: run_fock(config, dir, outcome.artifacts); break;
      case JobKind::Asymptotics: run_asymptotics(config, dir, outcome.artifacts); break;
      case JobKind::Recursion: run_recursion(config, dir, outcome.artifacts); break;
      case JobKind::OneParticle: run_one_particle(config, dir, outcome.artifacts); break;
      case JobKind::Baker: run_baker(config, dir, outcome.artifacts); break;
      case JobKind::Compare: run_compare(config, dir, outcome.artifacts); break;
    }

    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    json manifest;
    manifest["config"] = canonical_json(config);
    manifest["seed"] = config.quadrature.seed;
    manifest["tool_version"] = kToolVersion;
    manifest["wall_time_ms"] = wall_ms;
    json names = json::array();
    for (const auto& a : outcome.artifacts) names.push_back(fs::path(a).filename().string());
    manifest["artifacts"] = names;
    write_artifact(dir, "manifest.json", manifest.dump(2), outcome.artifacts);
  } catch (const IoFailure& f) {
    outcome.exit_code = 1;
    outcome.diagnostic = std::string("job ") + job_name(config.job) + ": " + f.message;
  } catch (const std::exception& e) {
    outcome.exit_code = 3;
    outcome.diagnostic = std::string("job ") + job_name(config.job) + ": " + e.what();
  }
  return outcome;
}

}  // namespace abc
