#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "abc/model.hpp"
#include "abc/quad.hpp"

namespace abc {

// Exact ordered double time integral over 0 <= t2 <= t1 <= t of
// e^{i(t2-t1)E}; equals -it/E + 1/E^2 - e^{-itE}/E^2 for E != 0, with a
// series branch near E = 0 to avoid cancellation.
std::complex<double> ordered_exp_integral(double t, double E);

// Second-order coefficient of the vacuum persistence amplitude: the momentum
// integral of |v|^2 times the ordered double time integral, scaled by
// (-i lambda)^2.  The time integration is closed-form per node, so momentum
// quadrature is the only error source.  Families with a quadratic kernel (the
// pair model and the linear model) are accepted.
std::complex<double> dyson_second_order(const ModelSpec& spec, double t,
                                        const QuadratureSettings& settings);

// The three pieces of log<U(t)> for the linear model without decay:
// A = i lambda^2 int |v|^2/omega, B = -lambda^2 int |v|^2/omega^2,
// C(t) = lambda^2 int |v|^2/omega^2 e^{-i t omega}.  B and C share one node
// set, so C(0) + B = 0 holds exactly.
struct SolvableABC {
  std::complex<double> A{};
  std::complex<double> B{};
  std::complex<double> C{};
};

SolvableABC solvable_abc(const ModelSpec& spec, double t, const QuadratureSettings& settings);

// exp(A t + B + C(t)) for the linear model; rejects decay dispersions.
std::complex<double> solvable_model_exact(const ModelSpec& spec, double t,
                                          const QuadratureSettings& settings);

// Linear model with a decay dispersion: exp(lambda^2 (t A2(t) + B2(t))) with
// the moments taken over the sigma-autocorrelation (arity 1).
std::complex<double> solvable_model_decay(const ModelSpec& spec, double t,
                                          const QuadratureSettings& settings);

// Discretized single-excitation mode set replacing the continuum: mode j
// carries momentum k_j and weight w_j with sum_j w_j |v(k_j)|^2 approximating
// the |v|^2 integral.
struct FockDiscretization {
  std::vector<std::vector<double>> mode_momenta;
  std::vector<double> weights;
  int per_mode_truncation = 16;  // occupation levels kept per mode, >= 4
};

// Radial Gauss-Legendre mode set (isotropic reduction, weights
// S_{d-1} r^{d-1} dr) for the linear model.
FockDiscretization radial_fock_discretization(const ModelSpec& spec, int modes,
                                              int per_mode_truncation);

// Nonperturbative vacuum amplitude for the discretized linear model: per mode
// the truncated occupation-basis evolution <0| e^{itH0} e^{-itH} |0>, then the
// product over modes in index order.  Raises when the top occupation level is
// reached beyond 1e-10.
std::complex<double> fock_evolve(const FockDiscretization& disc, const ModelSpec& spec, double t,
                                 double lambda);

// Scaling-and-squaring matrix exponential (Pade order 13, backward error
// target ~1e-13).
Eigen::MatrixXcd matrix_exponential(const Eigen::MatrixXcd& a);

// C(t_j) = unwrapped log series_j - A t_j - B.  Rejects samples with modulus
// below 1e-14 and phase jumps above pi/2 between neighbours.
std::vector<std::complex<double>> abc_residual(const std::vector<double>& t_grid,
                                               const std::vector<std::complex<double>>& series,
                                               std::complex<double> A, std::complex<double> B);

}  // namespace abc
