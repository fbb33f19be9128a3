#include "abc/baker.hpp"

#include <unsupported/Eigen/FFT>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <vector>

#include "abc/io.hpp"

namespace abc {
namespace {

using cplx = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

double index_offset(BakerConvention convention) {
  return convention == BakerConvention::HalfInteger ? 0.5 : 0.0;
}

// Unitary M-point Fourier matrix with kernel exp(-2 pi i (j+o)(k+o)/M).
Eigen::MatrixXcd dense_fourier(int M, BakerConvention convention) {
  const double o = index_offset(convention);
  Eigen::MatrixXcd F(M, M);
  const double scale = 1.0 / std::sqrt(static_cast<double>(M));
  for (int j = 0; j < M; ++j)
    for (int k = 0; k < M; ++k) {
      const double phase = -2.0 * kPi * (j + o) * (k + o) / M;
      F(j, k) = scale * cplx(std::cos(phase), std::sin(phase));
    }
  return F;
}

// Unitary forward transform via FFT; the half-integer kernel factorizes into
// integer-index FFT plus diagonal twiddles:
// (j+1/2)(k+1/2) = jk + j/2 + k/2 + 1/4.
void fft_forward(const std::vector<cplx>& in, std::vector<cplx>& out,
                 BakerConvention convention) {
  const int M = static_cast<int>(in.size());
  Eigen::FFT<double> fft;
  const double scale = 1.0 / std::sqrt(static_cast<double>(M));
  if (convention == BakerConvention::Integer) {
    fft.fwd(out, in);
    for (auto& x : out) x *= scale;
    return;
  }
  std::vector<cplx> pre(in.size());
  for (int k = 0; k < M; ++k) pre[k] = in[k] * std::polar(1.0, -kPi * k / M);
  fft.fwd(out, pre);
  const cplx corner = std::polar(1.0, -kPi / (2.0 * M));
  for (int j = 0; j < M; ++j) out[j] *= scale * corner * std::polar(1.0, -kPi * j / M);
}

// Unitary inverse transform (adjoint kernel) via FFT.
void fft_inverse(const std::vector<cplx>& in, std::vector<cplx>& out,
                 BakerConvention convention) {
  const int M = static_cast<int>(in.size());
  Eigen::FFT<double> fft;
  const double scale = std::sqrt(static_cast<double>(M));
  if (convention == BakerConvention::Integer) {
    fft.inv(out, in);
    for (auto& x : out) x *= scale;
    return;
  }
  std::vector<cplx> pre(in.size());
  for (int k = 0; k < M; ++k) pre[k] = in[k] * std::polar(1.0, kPi * k / M);
  fft.inv(out, pre);
  const cplx corner = std::polar(1.0, kPi / (2.0 * M));
  for (int j = 0; j < M; ++j) out[j] *= scale * corner * std::polar(1.0, kPi * j / M);
}

double noise_floor(int N) {
  return 10.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(N);
}

struct LineFit {
  double slope = 0.0;
  double residual = 0.0;
};

LineFit least_squares_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  LineFit fit;
  fit.slope = det != 0.0 ? (n * sxy - sx * sy) / det : 0.0;
  const double intercept = (sy - fit.slope * sx) / n;
  double ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (intercept + fit.slope * x[i]);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

// Envelope of |values| over t > 0: strict-left/nonstrict-right local maxima;
// a sequence with at most one interior maximum is its own envelope.  Matches
// the envelope rule of the power-law fitter so the two classifiers see
// comparable point sets.
std::vector<std::pair<double, double>> envelope_points(const SampledSeries& s) {
  std::vector<std::pair<double, double>> usable;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    const double a = std::abs(s.values[i]);
    if (s.t[i] > 0.0 && a > 0.0) usable.emplace_back(s.t[i], a);
  }
  std::vector<std::pair<double, double>> peaks;
  for (std::size_t i = 1; i + 1 < usable.size(); ++i)
    if (usable[i].second > usable[i - 1].second && usable[i].second >= usable[i + 1].second)
      peaks.push_back(usable[i]);
  if (peaks.size() <= 1) return usable;
  return peaks;
}

SeriesClassification classify(const SampledSeries& s,
                              std::vector<std::pair<double, double>>* envelope_out) {
  const auto env = envelope_points(s);
  if (env.size() < 2)
    throw std::invalid_argument("compare_decay: series '" + s.label +
                                "' has fewer than two usable points at t > 0");
  std::vector<double> t, logt, logv;
  for (const auto& [tt, vv] : env) {
    t.push_back(tt);
    logt.push_back(std::log(tt));
    logv.push_back(std::log(vv));
  }
  const LineFit exp_fit = least_squares_line(t, logv);
  const LineFit pow_fit = least_squares_line(logt, logv);

  SeriesClassification c;
  c.label = s.label;
  c.exp_rate = exp_fit.slope;
  c.exp_residual = exp_fit.residual;
  c.power_alpha = -pow_fit.slope;
  c.power_residual = pow_fit.residual;
  c.envelope_points = static_cast<int>(env.size());
  c.decay_class =
      exp_fit.residual <= pow_fit.residual ? DecayClass::Exponential : DecayClass::PowerLaw;
  if (envelope_out) *envelope_out = env;
  return c;
}

const char* class_name(DecayClass c) {
  return c == DecayClass::Exponential ? "exponential" : "power_law";
}

nlohmann::json classification_json(const SeriesClassification& c) {
  nlohmann::json j;
  j["label"] = c.label;
  j["decay_class"] = class_name(c.decay_class);
  j["exp_rate"] = c.exp_rate;
  j["exp_residual"] = c.exp_residual;
  j["power_alpha"] = c.power_alpha;
  j["power_residual"] = c.power_residual;
  j["envelope_points"] = c.envelope_points;
  return j;
}

nlohmann::json envelope_json(const std::vector<std::pair<double, double>>& env) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [t, a] : env) rows.push_back({t, a});
  return rows;
}

}  // namespace

Eigen::VectorXcd BakerUnitary::apply(const Eigen::VectorXcd& psi) const {
  if (psi.size() != N) throw std::invalid_argument("BakerUnitary::apply: dimension mismatch");
  const int M = N / 2;
  std::vector<cplx> half(M), out_half(M), mixed(N), out(N);
  for (int j = 0; j < M; ++j) half[j] = psi[j];
  fft_forward(half, out_half, convention);
  for (int j = 0; j < M; ++j) mixed[j] = out_half[j];
  for (int j = 0; j < M; ++j) half[j] = psi[M + j];
  fft_forward(half, out_half, convention);
  for (int j = 0; j < M; ++j) mixed[M + j] = out_half[j];
  fft_inverse(mixed, out, convention);
  Eigen::VectorXcd result(N);
  for (int j = 0; j < N; ++j) result[j] = out[j];
  return result;
}

BakerUnitary baker_matrix(int N, BakerConvention convention) {
  if (N < 2 || N % 2 != 0)
    throw std::invalid_argument("baker_matrix: dimension must be even and >= 2");
  BakerUnitary b;
  b.N = N;
  b.convention = convention;
  const Eigen::MatrixXcd big = dense_fourier(N, convention);
  const Eigen::MatrixXcd half = dense_fourier(N / 2, convention);
  Eigen::MatrixXcd block = Eigen::MatrixXcd::Zero(N, N);
  block.topLeftCorner(N / 2, N / 2) = half;
  block.bottomRightCorner(N / 2, N / 2) = half;
  b.matrix = big.adjoint() * block;
  return b;
}

Eigen::VectorXcd coherent_state(int N, double q, double p, BakerConvention convention) {
  if (N < 1) throw std::invalid_argument("coherent_state: dimension must be positive");
  const double o = index_offset(convention);
  Eigen::VectorXcd psi(N);
  for (int j = 0; j < N; ++j) {
    const double x = (j + o) / N;
    cplx amp(0.0, 0.0);
    for (int w = -3; w <= 3; ++w) {
      const double dx = x - q + w;
      const double phase = 2.0 * kPi * N * p * (x + w);
      amp += std::exp(-kPi * N * dx * dx) * cplx(std::cos(phase), std::sin(phase));
    }
    psi[j] = amp;
  }
  psi.normalize();
  return psi;
}

std::string AutocorrSeries::to_csv() const {
  std::ostringstream out;
  out << "t,re_F,im_F,abs_F\n";
  for (std::size_t j = 0; j < t_values.size(); ++j)
    out << t_values[j] << "," << format_full(F[j].real()) << "," << format_full(F[j].imag())
        << "," << format_full(std::abs(F[j])) << "\n";
  return out.str();
}

AutocorrSeries autocorrelation(const BakerUnitary& B, const Eigen::VectorXcd& psi, int T) {
  if (T < 1) throw std::invalid_argument("autocorrelation: need T >= 1");
  if (psi.size() != B.N)
    throw std::invalid_argument("autocorrelation: state dimension does not match the map");
  if (std::abs(psi.norm() - 1.0) > 1e-8)
    throw std::invalid_argument("autocorrelation: state must be normalized");

  AutocorrSeries series;
  series.N = B.N;
  series.convention = B.convention;
  Eigen::VectorXcd phi = psi;
  series.t_values.push_back(0);
  series.F.push_back(psi.dot(phi));
  for (int t = 1; t <= T; ++t) {
    phi = B.apply(phi);
    series.t_values.push_back(t);
    series.F.push_back(psi.dot(phi));
  }
  series.fit = fit_log_abs(series, 0, T);
  return series;
}

AutocorrFit fit_log_abs(const AutocorrSeries& series, int t0, int t1) {
  const double floor = noise_floor(series.N);
  std::vector<double> t, logf;
  for (std::size_t j = 0; j < series.t_values.size(); ++j) {
    const int tt = series.t_values[j];
    const double a = std::abs(series.F[j]);
    if (tt < t0 || tt > t1 || a <= floor) continue;
    t.push_back(static_cast<double>(tt));
    logf.push_back(std::log(a));
  }
  AutocorrFit fit;
  if (t.size() < 2) return fit;
  const LineFit line = least_squares_line(t, logf);
  fit.decay_rate = line.slope;
  fit.residual = line.residual;
  fit.window[0] = t.front();
  fit.window[1] = t.back();
  fit.points_used = static_cast<int>(t.size());
  return fit;
}

SampledSeries as_samples(const AutocorrSeries& series) {
  SampledSeries s;
  s.label = "baker_N" + std::to_string(series.N);
  for (std::size_t j = 0; j < series.t_values.size(); ++j) {
    s.t.push_back(static_cast<double>(series.t_values[j]));
    s.values.push_back(series.F[j]);
  }
  return s;
}

std::string ComparisonReport::to_json() const {
  nlohmann::json j;
  j["first"] = classification_json(first);
  j["second"] = classification_json(second);
  j["first_envelope"] = envelope_json(first_envelope);
  j["second_envelope"] = envelope_json(second_envelope);
  return j.dump(2);
}

ComparisonReport compare_decay(const SampledSeries& a, const SampledSeries& b) {
  if (a.t.size() != a.values.size() || b.t.size() != b.values.size())
    throw std::invalid_argument("compare_decay: series lengths are inconsistent");
  if (a.t.empty() || b.t.empty())
    throw std::invalid_argument("compare_decay: series must be nonempty");
  ComparisonReport report;
  report.first = classify(a, &report.first_envelope);
  report.second = classify(b, &report.second_envelope);
  return report;
}

}  // namespace abc
