#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

namespace abc {

// Discrete Fourier phase convention.  Integer indexes the kernel by (j, k);
// HalfInteger by (j + 1/2, k + 1/2), the parity-symmetric quantization in
// which the map commutes with the coordinate reflection j -> N-1-j.
enum class BakerConvention { Integer, HalfInteger };

// Quantized baker's map B = F_N^-1 diag(F_{N/2}, F_{N/2}) on an N-dimensional
// Hilbert space (N even).  `matrix` is the dense form built from explicit
// Fourier kernels; `apply` evaluates the same operator through FFTs in
// O(N log N) and shares no code with the dense path.
struct BakerUnitary {
  int N = 0;
  BakerConvention convention = BakerConvention::HalfInteger;
  Eigen::MatrixXcd matrix;

  Eigen::VectorXcd apply(const Eigen::VectorXcd& psi) const;
};

BakerUnitary baker_matrix(int N, BakerConvention convention = BakerConvention::HalfInteger);

// Wrapped-Gaussian coherent state on the unit torus, centered at (q, p),
// sampled on the position grid x_j = (j + offset)/N of the convention:
// amplitudes sum exp(-pi N (x_j - q + w)^2 + 2 pi i N p (x_j + w)) over
// windings |w| <= 3, then normalize.  The winding phase keeps the family
// exactly covariant under the discrete translation q -> q + 1/N.
Eigen::VectorXcd coherent_state(int N, double q, double p,
                                BakerConvention convention = BakerConvention::HalfInteger);

struct AutocorrFit {
  double decay_rate = 0.0;  // least-squares slope of log|F| per unit t
  double window[2] = {0.0, 0.0};
  double residual = 0.0;  // rms misfit of the line on the fitted points
  int points_used = 0;
};

// Autocorrelation F(t) = <psi|B^t|psi> on integer times 0..T, with the
// dimension and convention recorded so every report declares them.
struct AutocorrSeries {
  std::vector<int> t_values;
  std::vector<std::complex<double>> F;
  AutocorrFit fit;
  int N = 0;
  BakerConvention convention = BakerConvention::HalfInteger;

  std::string to_csv() const;  // columns: t, re_F, im_F, abs_F
};

// Iterated application of B (never a matrix power); the stored fit covers the
// whole series, restricted to |F| above 10x the inner-product noise floor.
AutocorrSeries autocorrelation(const BakerUnitary& B, const Eigen::VectorXcd& psi, int T);

// Least-squares line through log|F(t)| for t in [t0, t1], skipping points at
// or below the noise floor.
AutocorrFit fit_log_abs(const AutocorrSeries& series, int t0, int t1);

// A sampled modulus-bearing series from any source (baker autocorrelation,
// field-theoretic C(t), CSV columns).
struct SampledSeries {
  std::string label;
  std::vector<double> t;
  std::vector<std::complex<double>> values;
};

SampledSeries as_samples(const AutocorrSeries& series);

enum class DecayClass { Exponential, PowerLaw };

// Both candidate fits on the series envelope and the class chosen by the
// lower rms residual (exponential on a tie).
struct SeriesClassification {
  std::string label;
  DecayClass decay_class = DecayClass::Exponential;
  double exp_rate = 0.0;        // slope of log|v| vs t
  double exp_residual = 0.0;
  double power_alpha = 0.0;     // negative slope of log|v| vs log t
  double power_residual = 0.0;
  int envelope_points = 0;
};

// Decay-shape comparison of two series: per-series classification plus the
// envelope tables used.  Descriptive only; the two shapes are reported side
// by side and no equivalence between them is claimed.
struct ComparisonReport {
  SeriesClassification first;
  SeriesClassification second;
  std::vector<std::pair<double, double>> first_envelope;   // (t, |value|)
  std::vector<std::pair<double, double>> second_envelope;

  std::string to_json() const;
};

ComparisonReport compare_decay(const SampledSeries& a, const SampledSeries& b);

}  // namespace abc
