#pragma once

#include <complex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "abc/model.hpp"
#include "abc/quad.hpp"

namespace abc {

// Exact rational coefficient of a Wick term.
struct Rational {
  long long num = 0;
  long long den = 1;

  static Rational of(long long n, long long d = 1);
  Rational operator*(const Rational& o) const;
  Rational operator+(const Rational& o) const;
  Rational operator-() const;
  bool operator==(const Rational& o) const = default;
  bool is_zero() const { return num == 0; }
  std::string str() const;
};

// A momentum as an integer combination of term-local base labels, sorted by
// label with no zero coefficients.  Label -1 is reserved for the external
// (pinned) momentum during numeric compilation.
using Momentum = std::vector<std::pair<int, int>>;

// One reference to the interaction kernel: v(left | right), conjugated when
// flagged.  momentum_conserving kernels carry delta(sum left - sum right);
// the contraction engine resolves those deltas by eliminating base labels, so
// momenta of dependent legs are stored as combinations of the independent
// ones and never as separate labels.
struct KernelFactor {
  bool conjugated = false;
  std::vector<Momentum> left_args;
  std::vector<Momentum> right_args;
  bool momentum_conserving = false;
};

// coeff * w(arg), summed; one such sum per Friedrichs-Gamma application.
struct EnergyEntry {
  Momentum arg;
  int coeff = 1;
};
using EnergySum = std::vector<EnergyEntry>;

// A normal-ordered Wick monomial: creation legs, annihilation legs, a product
// of kernel references, stacked energy denominators, and a rational
// coefficient.  All operators are bosonic; creator and annihilator lists are
// multisets.  `connected` marks terms whose kernel factors form a single
// component through shared base labels.
struct WickTerm {
  std::vector<Momentum> creators;
  std::vector<Momentum> annihilators;
  std::vector<KernelFactor> kernel;
  std::vector<EnergySum> denominators;
  Rational sign_coeff = Rational::of(1);
  bool connected = false;
};

// A sum of Wick terms at a fixed power of the coupling.  Every public
// operation returns the canonical form: labels renamed to the minimizing
// permutation, structure sorted, equal terms merged, zero terms dropped.
struct DiagramExpression {
  std::vector<WickTerm> terms;
  int order = 0;

  // Deterministic one-term-per-line serialization ("0" for the empty sum).
  std::string to_text() const;
};

DiagramExpression canonical(const DiagramExpression& expr);
DiagramExpression expr_add(const DiagramExpression& a, const DiagramExpression& b);
DiagramExpression expr_scale(const DiagramExpression& a, const Rational& c);
DiagramExpression adjoint(const DiagramExpression& a);

// Terms with exactly the given number of free creator/annihilator legs.
DiagramExpression leg_part(const DiagramExpression& a, int creators, int annihilators);

// Interaction builders (order 1 in the coupling).  The pair interaction is
// v(k_1..k_n) a*(k_1)..a*(k_n) + h.c. with independent labels; the trilinear
// one is the momentum-conserving 2 <-> 1 vertex v(k_0,k_1|k_0+k_1) a*a*a + h.c.
// (no vacuum-polarization or 1 <-> 1 parts).
DiagramExpression pair_interaction(int n);
DiagramExpression trilinear_interaction();

// Friedrichs Gamma: each term gains one denominator equal to its signed
// free-leg energy sum(creators) - sum(annihilators), with unit coefficient
// factor (the +1/Delta convention reproduces the oracle-verified vacuum rate
// when the machinery is run on the pair model).  A term whose energy sum
// cancels symbolically (after the momentum deltas are resolved) is secular
// and rejected.
DiagramExpression gamma_op(const DiagramExpression& expr);

// Gamma applied after removing the one-to-one part: gamma_op on expr minus
// its (1,1) legs, the combination that keeps secular terms out.
DiagramExpression gamma_r(const DiagramExpression& expr);

enum class WickMode {
  AllConnected,  // all contraction sets whose merged term is connected
  OneLine,       // exactly one contracted line
};

// Wick product of a and b (contractions pair a's annihilators with b's
// creators; bosonic, so no reordering signs).  Every pairing is enumerated
// explicitly, so combinatorial multiplicities accumulate in the coefficients
// of the merged canonical terms.
DiagramExpression wick_connect(const DiagramExpression& a, const DiagramExpression& b,
                               WickMode mode);

// Normal-ordered product :a b:, no contractions; components stay disjoint.
DiagramExpression normal_product(const DiagramExpression& a, const DiagramExpression& b);

// Order-by-order solution of the dressing recursion for the trilinear
// translation-invariant interaction: Q[k], M[k] for k = 1..max_order
// (max_order <= 4), with M = (V pair-all-components T)_{1,1} and
// Q_k = -[V ~ T]_k + ([V ~ T]_k)_{1,1} - [Gamma(Q) one-line M]_k.
// M at odd orders is empty.
struct RecursionLadder {
  std::vector<DiagramExpression> Q;  // index = order; [0] unused
  std::vector<DiagramExpression> M;
};

RecursionLadder solve_recursion(int max_order);

// Left side of the defining equation at `order`, rebuilt from the ladder
// alone; the empty expression when the ladder solves it.
DiagramExpression recursion_residual(const RecursionLadder& ladder, int order);

// Compiles the one-particle part of M at order 2 into a numeric integrand
// over one internal momentum and evaluates it at external momentum p.  The
// value is the lambda-free kernel m2(p) (the energy shift is lambda^2 times
// it); real up to quadrature error and negative for no-decay models.
std::complex<double> evaluate_M2(const ModelSpec& spec, std::span<const double> p,
                                 const QuadratureSettings& settings);

// One-particle amplitude at second order: exp(-i lambda^2 m2(p) t) *
// (1 - lambda^2 b2(p)) * (1 + lambda^2 c2(p,t)), with b2 and c2 compiled from
// the dressing transformation's second-order contraction on one shared node
// set (so c2(p,0) = b2(p) exactly).
std::complex<double> one_particle_U(const ModelSpec& spec, std::span<const double> p, double t,
                                    const QuadratureSettings& settings);

}  // namespace abc
