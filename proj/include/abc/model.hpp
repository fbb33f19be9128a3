#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace abc {

// Raised when an operation fails for numerical reasons (non-finite integrand,
// unreachable tolerance, truncation overflow).  Distinct from invalid_argument
// so callers can map the two onto different process exit codes.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

enum class DispersionKind { Relativistic, NonRelShifted, Bogoliubov, FermiQuasi, Constant };

// One-particle dispersion law w(k), radially symmetric for every supported kind.
struct DispersionLaw {
  DispersionKind kind = DispersionKind::Relativistic;
  double m = 1.0;       // Relativistic / FermiQuasi mass, > 0
  double omega0 = 0.0;  // NonRelShifted shift (>= 0) or Constant level (> 0)
  double b = 1.0;       // Bogoliubov quartic coefficient, > 0
  double v0 = 1.0;      // Bogoliubov quadratic coefficient, >= 0
  double mu = 1.0;      // FermiQuasi chemical potential, > 0

  static DispersionLaw relativistic(double m);
  static DispersionLaw nonrel_shifted(double omega0);
  static DispersionLaw bogoliubov(double b, double v0);
  static DispersionLaw fermi_quasi(double m, double mu);
  static DispersionLaw constant(double omega0);
};

// w(k) for a single momentum k in R^d (d = k.size()).
double omega(const DispersionLaw& law, std::span<const double> k);

// Radial profile w(r) with r = |k|; every supported kind is isotropic.
double omega_radial(const DispersionLaw& law, double r);

// Gradient and Hessian of w at k; analytic per kind.  FermiQuasi is only
// piecewise smooth (the Fermi sphere is excluded) and Bogoliubov with v0 > 0
// has a conical point at k = 0; both return the one-sided/a.e. values there.
void omega_grad(const DispersionLaw& law, std::span<const double> k, std::span<double> grad);
void omega_hessian(const DispersionLaw& law, std::span<const double> k, std::span<double> hess_row_major);

enum class FormFactorKind { IsotropicGaussian, ShiftedGaussian, CompactBump };

// Interaction kernel v(p_1..p_n), a scalar function of n momenta in R^d.
// All families are real-valued; eval returns complex for interface stability.
struct FormFactor {
  FormFactorKind kind = FormFactorKind::IsotropicGaussian;
  double amplitude = 1.0;
  double width = 1.0;          // Gaussian width parameter
  double radius = 1.0;         // CompactBump support radius in the joint norm
  std::vector<double> center;  // ShiftedGaussian center in R^d, applied per momentum
};

enum class InteractionFamily { PairCreation, LinearSolvable, TranslationInvariantTrilinear };

struct ModelSpec {
  InteractionFamily family = InteractionFamily::PairCreation;
  int d = 1;  // spatial dimension, >= 1
  int n = 1;  // creation-leg count of the interaction monomial, >= 1
  DispersionLaw dispersion;
  FormFactor form_factor;
  double lambda = 0.1;
};

// Number of momentum arguments the model's kernel takes: n for PairCreation,
// 1 for LinearSolvable, 3 for the trilinear family.
int kernel_arity(const ModelSpec& spec);

// Sum of w(p_i) over the kernel's momentum arguments.  `momenta` is the flat
// concatenation (arity * d doubles); rejects size mismatches.
double energy_total(const ModelSpec& spec, std::span<const double> momenta);

// Kernel value at the given momenta (flat, arity * d doubles).
std::complex<double> eval_form_factor(const ModelSpec& spec, std::span<const double> momenta);

struct ValidationReport {
  bool decay = false;        // true iff min E over the kernel support <= 0
  double inf_energy = 0.0;   // infimum of E(p_1..p_n) over the support
  int dn_product = 0;        // d * n, the dimension controlling time decay rates
  std::vector<std::string> warnings;
};

// Classifies the model (decay vs no-decay) by per-kind analysis confirmed with
// a numeric search over the kernel support.  Report-only: never throws for a
// merely unusual model, but does reject malformed parameters.
ValidationReport validate_model(const ModelSpec& spec);

// Strict JSON (de)serialization.  Keys: family, d, n, dispersion{kind,params},
// form_factor{kind,params}, lambda.  Unknown or missing keys are collected
// into `errors` with their JSON paths; returns default spec when invalid.
ModelSpec model_from_json_text(const std::string& text, std::vector<std::string>& errors);
std::string model_to_json_text(const ModelSpec& spec);

}  // namespace abc
