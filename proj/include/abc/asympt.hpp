#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

#include "abc/model.hpp"

namespace abc {

// A zero of grad omega with its local curvature data.  `signature` counts
// positive minus negative Hessian eigenvalues; `degenerate` is set when the
// smallest |eigenvalue| falls below 1e-7 * max(1, largest |eigenvalue|), in
// which case the point must not feed a stationary-phase coefficient.
struct CriticalPoint {
  Eigen::VectorXd k0;
  double grad_norm = 0.0;
  Eigen::MatrixXd hessian;
  int signature = 0;
  bool degenerate = false;
};

struct CriticalPointSearch {
  std::vector<CriticalPoint> points;
  // One note per seed group that failed to converge (kept short); empty when
  // every seed either converged or left the search box.
  std::vector<std::string> diagnostics;
};

// Damped-Newton search for zeros of grad omega, seeded on a grid_n^d lattice
// over [-box, box]^d.  Converged points are merged within radius 1e-8 and
// reported with analytic Hessians.  Kinds with kinks or conical points report
// the a.e. gradient, so a seed landing exactly on such a point returns it
// flagged degenerate rather than erroring.
CriticalPointSearch find_critical_points(const DispersionLaw& disp, int d, double box, int grid_n);

// Leading large-t term of C(t) = lambda^2 int |v(k)|^2 omega(k)^{-2}
// e^{-i t omega(k)} d^dk for the linear model:
//
//   lambda^2 (2 pi / t)^{d/2} |det H|^{-1/2} e^{-i pi sig/4}
//            |v(k0)|^2 omega(k0)^{-2} e^{-i omega(k0) t}
//
// with H = Hess omega(k0) and sig its signature.  The oscillation enters as
// e^{-i t omega}, so a minimum of omega (sig = d) carries phase e^{-i pi d/4}
// and a maximum the conjugate.  Requires exactly one nondegenerate critical
// point inside the form factor's effective support and omega(k0) != 0.
std::complex<double> stationary_phase_C(const ModelSpec& spec, double t);

// Leading large-sigma law of F(sigma) = int |v|^2 e^{-i sigma E} dp for the
// parabolic dispersion (NonRelShifted; joint Hessian of E is the identity):
//
//   |v(0)|^2 (2 pi / sigma)^{dn/2} e^{-i pi dn/4} e^{-i sigma E(0)}
//
// where E(0) = arity * omega(0) = -arity * omega0, so the phase advances at
// rate +arity*omega0.  Only the critical-point term is kept.
std::complex<double> stationary_phase_F(const ModelSpec& spec, double sigma);

// Least-squares power law |C(t)| ~ f / t^alpha on a log-log scale over
// [t0, t1].  Oscillating moduli are fitted on their envelope (strict local
// maxima of |C|) to keep near-nulls out of the regression; a modulus with at
// most one interior maximum is treated as its own envelope.  Exact zeros are
// dropped.  Requires at least 10 envelope points.
struct PowerLawFit {
  double alpha = 0.0;
  double alpha_stderr = 0.0;
  double f_bound = 0.0;   // max over the window of |C(t)| t^alpha
  double residual = 0.0;  // rms log-log misfit over the envelope points
  double window[2] = {0.0, 0.0};
  int points_used = 0;
};

PowerLawFit fit_power_law(const std::vector<double>& t, const std::vector<std::complex<double>>& C,
                          double t0, double t1);

// JSON report {alpha, alpha_stderr, f_bound, window: [t0, t1]}.
std::string fit_report_json(const PowerLawFit& fit);

}  // namespace abc
