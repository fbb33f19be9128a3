#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "abc/model.hpp"

namespace abc {

struct QuadratureSettings {
  enum class Mode { Auto, TensorGauss, MonteCarlo };
  Mode mode = Mode::Auto;  // Auto: TensorGauss for joint dim <= 4, MonteCarlo above
  int points_per_axis = 64;
  long long mc_samples = 1'000'000;
  std::uint64_t seed = 20240901ull;
  double momentum_cutoff = 0.0;  // <= 0: derived from the form factor and rel_tol
  double rel_tol = 1e-9;
};

struct IntegralResult {
  std::complex<double> value{};
  double err = 0.0;
};

// Gauss-Legendre rule of order n on [-1, 1]; results are cached per order.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

// Cutoff radius enclosing all but ~rel_tol of the form-factor mass per slot.
double default_cutoff(const ModelSpec& spec, double rel_tol);

// Deterministic node set over the kernel's joint momentum space (dim = arity*d)
// with Lebesgue weights.  A coarser companion set provides the grid-refinement
// error estimate in tensor mode; Monte Carlo rules estimate a standard error
// from the samples instead.  Two calls with equal spec/settings produce
// bit-identical rules, which is how independent computations share nodes.
struct MomentumRule {
  int dim = 0;
  bool monte_carlo = false;

  // Tensor mode: per-axis nodes/weights; the full rule is their product grid.
  std::vector<std::vector<double>> axis_nodes;
  std::vector<std::vector<double>> axis_weights;
  std::vector<std::vector<double>> coarse_axis_nodes;
  std::vector<std::vector<double>> coarse_axis_weights;

  // Monte Carlo mode: mc_count rows of dim coordinates plus the proposal
  // density at each row (the node weight is 1 / (mc_count * mc_q[i])).
  std::vector<double> mc_nodes;
  std::vector<double> mc_q;
  long long mc_count = 0;

  std::size_t size() const;
};

MomentumRule momentum_rule(const ModelSpec& spec, const QuadratureSettings& settings);

// Visits (point, weight) for every node in a fixed deterministic order: tensor
// rules in row-major odometer order (last axis fastest), Monte Carlo rules in
// sample order.  The point span is only valid during the callback.
void for_each_node(const MomentumRule& rule,
                   const std::function<void(std::span<const double>, double)>& cb);

// Same for the coarse companion grid; no-op for Monte Carlo rules.
void for_each_coarse_node(const MomentumRule& rule,
                          const std::function<void(std::span<const double>, double)>& cb);

using Integrand = std::function<std::complex<double>(std::span<const double>)>;

// Applies the rule to f; rejects non-finite samples with the offending point.
IntegralResult integrate_with_rule(const MomentumRule& rule, const Integrand& f);

// One-call form: builds the rule for spec/settings and applies it.
IntegralResult integrate_momentum(const ModelSpec& spec, const Integrand& f,
                                  const QuadratureSettings& settings);

// ---------------------------------------------------------------------------
// Radial oscillatory engine
// ---------------------------------------------------------------------------

// Composite Gauss-Legendre panels on [0, R], sized so that the phase
// tau_max * omega(r) varies by at most ~2*pi per panel; panel boundaries
// include the dispersion's non-smooth radii.  Reusing one panelization for a
// whole tau grid keeps per-point results deterministic and lets amplitude
// values be cached.
struct RadialPanels {
  std::vector<double> nodes;
  std::vector<double> weights;
};

RadialPanels build_radial_panels(const DispersionLaw& disp, double R, double tau_max,
                                 int pts_per_panel);

// integral over R^d of g(|k|) e^{-i tau omega(|k|)} d^dk, for radial g
// supported in [0, R].  err (optional) is a half-resolution refinement delta.
std::complex<double> radial_oscillatory_integral(const DispersionLaw& disp,
                                                 const std::function<double(double)>& g, int d,
                                                 double R, double tau, double* err = nullptr,
                                                 int pts_per_panel = 16);

// Surface area of the unit (d-1)-sphere.
double sphere_area(int d);

// ---------------------------------------------------------------------------
// sigma-autocorrelation F(sigma) and its time moments
// ---------------------------------------------------------------------------

// Asymptotic model F(sigma) ~ amplitude * sigma^{-exponent} * e^{i freq sigma},
// fitted on the last decade of the grid.  amplitude is complex (it carries the
// stationary-phase constant phase); exponent and freq are pinned analytically
// (d*n/2 and -n*omega(k0)) rather than fitted.
struct TailModel {
  std::complex<double> amplitude{};
  double exponent = 0.0;
  double freq = 0.0;
  double residual = 0.0;  // relative rms misfit over the window
  bool valid = false;

  // Subleading coefficient of sigma^{-exponent-1} e^{i freq sigma}; it keeps
  // the leading amplitude unbiased and sharpens tail integrals.
  std::complex<double> amplitude_sub{};
};

struct SigmaAutocorrelation {
  std::vector<double> sigma;
  std::vector<std::complex<double>> values;
  std::vector<double> err;
  TailModel tail;
  int dn = 0;

  std::string to_csv() const;  // columns: sigma, re_F, im_F, err
};

// F(sigma_j) = integral |v(p_1..p_n)|^2 e^{-i sigma_j E(p_1..p_n)} dp for every
// grid point (grid must be increasing and start at 0).  Isotropic models take
// a radial fast path with the F = a^2 G(sigma)^n factorization; other models
// fall back to integrate_momentum per point.
SigmaAutocorrelation autocorrelation_F(const ModelSpec& spec, const std::vector<double>& sigma_grid,
                                       const QuadratureSettings& settings);

// Single-point evaluation (sigma of either sign), used by property tests.
std::complex<double> autocorrelation_value(const ModelSpec& spec, double sigma,
                                           const QuadratureSettings& settings);

struct TimeMoments {
  std::complex<double> A2{};  // -integral_0^t F(sigma) dsigma
  std::complex<double> B2{};  // +integral_0^t sigma F(sigma) dsigma
  double A2_err = 0.0;
  double B2_err = 0.0;
};

// t may exceed the grid end (or be +infinity) only when F.tail.valid; the tail
// is then integrated in closed form by two-term integration by parts.
TimeMoments time_moment_integrals(const SigmaAutocorrelation& F, double t);

inline constexpr double kInfiniteTime = std::numeric_limits<double>::infinity();

}  // namespace abc
