#pragma once

#include <complex>
#include <string>
#include <vector>

#include "abc/model.hpp"
#include "abc/quad.hpp"

namespace abc {

// Second-order pieces of log<U(t)> = A t + B + C(t) for gapped models.
// A carries 1/time units, B is dimensionless, C is sampled on the time grid.
// One momentum node set is shared by A, B and every C(t_j), so C(0) = -B
// holds exactly and the t = 0 value of the formula is exactly 1.
struct ABCDecomposition {
  std::complex<double> A{};
  std::complex<double> B{};
  std::vector<double> t;
  std::vector<std::complex<double>> C;
  int order = 2;
  double A_err = 0.0;
  double B_err = 0.0;
  double C_err = 0.0;  // max over the grid

  std::string to_csv() const;  // columns: t, re_C, im_C
};

// JSON summary {A: [re, im], B: [re, im], alpha_fit, err}; alpha_fit is the
// fitted decay exponent of |C| (supplied by the caller, NaN when not fitted)
// and err is the worst per-field quadrature estimate.
std::string summary_json(const ABCDecomposition& dec, double alpha_fit);

// Theorem-level second order for the pair model without decay:
// A = i lambda^2 int |v|^2 / E, B = -lambda^2 int |v|^2 / E^2,
// C(t_j) = lambda^2 int |v|^2 / E^2 e^{-i t_j E}.
ABCDecomposition abc_second_order(const ModelSpec& spec, const std::vector<double>& t_grid,
                                  const QuadratureSettings& settings);

// Decay-case moments A2(t) = -int_0^t F, B2(t) = int_0^t sigma F and their
// t -> infinity limits (grid plus analytic tail).  Limits are reported as
// unavailable below dn = 3; the B2 limit in dn = 3, 4 is the conditional
// (oscillation-damped) value and is flagged as outside the proven regime.
struct DecayMomentSeries {
  std::vector<double> t;
  std::vector<std::complex<double>> A2_t;
  std::vector<std::complex<double>> B2_t;
  std::complex<double> A2_limit{};
  std::complex<double> B2_limit{};
  bool A2_limit_valid = false;
  bool B2_limit_valid = false;
  bool unproven_regime = false;  // dn in {3, 4}: B2 limit beyond the proven range
  double A2_err = 0.0;
  double B2_err = 0.0;
  int dn = 0;
  std::vector<std::string> warnings;
};

DecayMomentSeries abc_second_order_decay(const ModelSpec& spec, const std::vector<double>& t_list,
                                         const QuadratureSettings& settings);

// Resolvent-regularized route: A2 = i int |v|^2/(E - i eps),
// B2 = -int |v|^2/(E - i eps)^2 on a decreasing epsilon schedule, Richardson
// extrapolated to eps = 0 with one shared node set (common random numbers).
// Gapped models evaluate at eps = 0 directly.  B2 requires dn >= 5 for decay
// models and is reported unavailable below that.
struct IEpsExtrapolation {
  std::complex<double> A2{};
  std::complex<double> B2{};
  std::vector<double> eps;
  std::vector<std::complex<double>> A2_at_eps;
  std::vector<std::complex<double>> B2_at_eps;
  double A2_err = 0.0;
  double B2_err = 0.0;
  bool B2_available = false;
};

IEpsExtrapolation a2_b2_ieps(const ModelSpec& spec, const std::vector<double>& eps_schedule,
                             const QuadratureSettings& settings);

// Rescaling profile: D(lambda) = sup over the macroscopic grid of
// |log<U(t/lambda^2)> - A2 t|, evaluated structurally from the second-order
// pieces (= |B + C(t/lambda^2)|), so no phase unwrapping enters.
struct StochasticProfile {
  std::vector<double> lambda;
  std::vector<double> deviation;   // D(lambda)
  std::vector<double> normalized;  // D(lambda) / lambda^2
};

StochasticProfile stochastic_limit_profile(const ModelSpec& spec,
                                           const std::vector<double>& lambda_list,
                                           const std::vector<double>& t_grid,
                                           const QuadratureSettings& settings);

}  // namespace abc
