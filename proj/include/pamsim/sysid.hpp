#pragma once

// Nonparametric frequency-domain identification with random-phase
// multisines: period-averaged spectra, per-realization FRF, best linear
// approximation and the nonlinearity variance around it.

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pamsim/error.hpp"

namespace pamsim::sysid {

using Complex = std::complex<double>;

struct ExcitationDesign {
  std::vector<double> lines;  // Hz
  // Per-line amplitude of the pressure-difference input, bar.
  double amplitude = 0.0;
  std::size_t realizations = 10;
  std::size_t periods = 10;
  std::size_t discard = 2;
  // realizations × lines, radians.
  std::vector<std::vector<double>> phases;
  double sample_rate = 500.0;
  std::size_t period_samples = 5000;

  // 0.1 Hz … 10 Hz in 0.1 Hz steps; per-line amplitude chosen so the summed
  // pressure difference has an RMS of 0.5 bar.
  static ExcitationDesign standard() {
    ExcitationDesign d;
    for (int k = 1; k <= 100; ++k) d.lines.push_back(k / 10.0);
    d.amplitude = 0.5 / std::sqrt(d.lines.size() / 2.0);
    return d;
  }

  std::size_t averaged_periods() const { return periods - discard; }
  std::size_t total_samples() const { return periods * period_samples; }

  // DFT bin of every line; throws if a line is not bin-aligned.
  std::vector<std::size_t> bins() const {
    if (period_samples == 0 || !(sample_rate > 0)) throw Error(ErrorKind::Design, "empty period");
    std::vector<std::size_t> out;
    out.reserve(lines.size());
    for (double f : lines) {
      const double exact = f * static_cast<double>(period_samples) / sample_rate;
      const double rounded = std::round(exact);
      if (rounded < 1 || std::abs(exact - rounded) > 1e-9 * std::max(1.0, rounded) ||
          rounded >= static_cast<double>(period_samples) / 2.0) {
        throw Error(ErrorKind::Design, "line " + std::to_string(f) + " Hz is not on a DFT bin below Nyquist");
      }
      out.push_back(static_cast<std::size_t>(rounded));
    }
    return out;
  }

  void validate() const {
    if (lines.empty()) throw Error(ErrorKind::Design, "no excited lines");
    (void)bins();
    if (realizations == 0) throw Error(ErrorKind::Design, "no realizations");
    if (discard >= periods) throw Error(ErrorKind::Design, "discard must be smaller than periods");
    if (phases.size() != realizations) throw Error(ErrorKind::Design, "phase table does not match realizations");
    for (const auto& row : phases) {
      if (row.size() != lines.size()) throw Error(ErrorKind::Design, "phase table does not match lines");
    }
  }

  // Uniform [0, 2π) phases from a 64-bit Mersenne twister. The mapping from
  // raw draws to radians is fixed so signals are identical across toolchains.
  void draw_phases(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    phases.assign(realizations, std::vector<double>(lines.size()));
    for (auto& row : phases) {
      for (double& phi : row) phi = 2.0 * std::numbers::pi * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    }
  }
};

// One period of realization `l` sampled `oversample` times faster than the
// design rate.
inline std::vector<double> multisine_period(const ExcitationDesign& design, std::size_t l, std::size_t oversample) {
  const auto bins = design.bins();
  const std::size_t m = design.period_samples * oversample;
  std::vector<double> cos_table(m), sin_table(m), out(m, 0.0);
  for (std::size_t n = 0; n < m; ++n) {
    const double arg = 2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(m);
    cos_table[n] = std::cos(arg);
    sin_table[n] = std::sin(arg);
  }
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const double c = std::cos(design.phases[l][k]);
    const double s = std::sin(design.phases[l][k]);
    std::size_t idx = 0;
    for (std::size_t n = 0; n < m; ++n) {
      out[n] += cos_table[idx] * c - sin_table[idx] * s;
      idx += bins[k];
      if (idx >= m) idx -= m;
    }
  }
  for (double& v : out) v *= design.amplitude;
  return out;
}

// periods × period_samples samples per realization. Cosine arguments are
// reduced modulo one period in integer arithmetic, so every period is
// bit-identical.
inline std::vector<std::vector<double>> design_multisine(const ExcitationDesign& design) {
  design.validate();
  std::vector<std::vector<double>> out(design.realizations);
  for (std::size_t l = 0; l < design.realizations; ++l) {
    const auto one = multisine_period(design, l, 1);
    auto& signal = out[l];
    signal.reserve(design.total_samples());
    for (std::size_t p = 0; p < design.periods; ++p) signal.insert(signal.end(), one.begin(), one.end());
  }
  return out;
}

inline std::vector<std::vector<double>> design_multisine(ExcitationDesign& design, std::uint64_t seed) {
  design.draw_phases(seed);
  return design_multisine(static_cast<const ExcitationDesign&>(design));
}

// Continuous-time value of realization `l` at time t (s).
inline double multisine_value(const ExcitationDesign& design, std::size_t l, double t) {
  double sum = 0.0;
  for (std::size_t k = 0; k < design.lines.size(); ++k) {
    sum += std::cos(2.0 * std::numbers::pi * design.lines[k] * t + design.phases[l][k]);
  }
  return design.amplitude * sum;
}

// Forward unnormalized DFT Σ x[n]·e^{−j2πkn/N}, evaluated only at `bins`.
class BinDft {
 public:
  explicit BinDft(std::size_t n) : n_(n), cos_(n), sin_(n) {
    for (std::size_t i = 0; i < n; ++i) {
      const double arg = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
      cos_[i] = std::cos(arg);
      sin_[i] = std::sin(arg);
    }
  }

  std::size_t size() const { return n_; }

  std::vector<Complex> operator()(std::span<const double> x, std::span<const std::size_t> bins) const {
    if (x.size() != n_) throw Error(ErrorKind::Domain, "DFT length mismatch");
    std::vector<Complex> out;
    out.reserve(bins.size());
    for (std::size_t k : bins) {
      double re = 0.0, im = 0.0;
      std::size_t idx = 0;
      const std::size_t step = k % n_;
      for (std::size_t i = 0; i < n_; ++i) {
        re += x[i] * cos_[idx];
        im -= x[i] * sin_[idx];
        idx += step;
        if (idx >= n_) idx -= n_;
      }
      out.emplace_back(re, im);
    }
    return out;
  }

 private:
  std::size_t n_;
  std::vector<double> cos_, sin_;
};

struct FrfEstimate {
  std::vector<Complex> g;
  std::vector<Complex> y_avg;
  std::vector<Complex> u_avg;
};

// Averages the period spectra first, then divides per line. `u` and `y` hold
// p whole periods back to back (transients already discarded).
inline FrfEstimate estimate_frf(std::span<const double> u, std::span<const double> y, std::size_t period_samples,
                                std::span<const std::size_t> bins) {
  if (period_samples == 0 || u.size() != y.size() || u.size() % period_samples != 0) {
    throw Error(ErrorKind::Domain, "estimate_frf: input and output must hold the same whole number of periods");
  }
  const std::size_t p = u.size() / period_samples;
  if (p < 2) throw Error(ErrorKind::Domain, "estimate_frf: need at least two periods");
  const BinDft dft(period_samples);
  FrfEstimate est;
  est.u_avg.assign(bins.size(), Complex{});
  est.y_avg.assign(bins.size(), Complex{});
  for (std::size_t i = 0; i < p; ++i) {
    const auto uu = dft(u.subspan(i * period_samples, period_samples), bins);
    const auto yy = dft(y.subspan(i * period_samples, period_samples), bins);
    for (std::size_t k = 0; k < bins.size(); ++k) {
      est.u_avg[k] += uu[k];
      est.y_avg[k] += yy[k];
    }
  }
  est.g.resize(bins.size());
  for (std::size_t k = 0; k < bins.size(); ++k) {
    est.u_avg[k] /= static_cast<double>(p);
    est.y_avg[k] /= static_cast<double>(p);
    if (std::abs(est.u_avg[k]) < 1e-12) {
      throw Error(ErrorKind::DegenerateExcitation, "no input power on bin " + std::to_string(bins[k]));
    }
    est.g[k] = est.y_avg[k] / est.u_avg[k];
  }
  return est;
}

struct BlaResult {
  std::vector<Complex> g_bla;
  std::vector<double> sigma2_nl;
  std::vector<double> sigma_nl;
  // +inf where sigma_nl is zero.
  std::vector<double> snlr;
};

inline BlaResult estimate_bla(std::span<const std::vector<Complex>> frfs) {
  const std::size_t m = frfs.size();
  if (m < 2) throw Error(ErrorKind::InsufficientRealizations, "need at least two realizations");
  const std::size_t lines = frfs[0].size();
  for (const auto& f : frfs) {
    if (f.size() != lines) throw Error(ErrorKind::Domain, "realizations have different line counts");
  }
  BlaResult r;
  r.g_bla.assign(lines, Complex{});
  r.sigma2_nl.assign(lines, 0.0);
  r.sigma_nl.resize(lines);
  r.snlr.resize(lines);
  for (const auto& f : frfs) {
    for (std::size_t k = 0; k < lines; ++k) r.g_bla[k] += f[k];
  }
  for (auto& g : r.g_bla) g /= static_cast<double>(m);
  for (const auto& f : frfs) {
    for (std::size_t k = 0; k < lines; ++k) r.sigma2_nl[k] += std::norm(f[k] - r.g_bla[k]);
  }
  const double norm = 1.0 / (static_cast<double>(m) * static_cast<double>(m - 1));
  for (std::size_t k = 0; k < lines; ++k) {
    r.sigma2_nl[k] *= norm;
    r.sigma_nl[k] = std::sqrt(r.sigma2_nl[k]);
    r.snlr[k] = r.sigma2_nl[k] > 0.0 ? std::norm(r.g_bla[k]) / r.sigma2_nl[k]
                                     : std::numeric_limits<double>::infinity();
  }
  return r;
}

inline BlaResult estimate_bla(std::span<const FrfEstimate> frfs) {
  std::vector<std::vector<Complex>> g;
  g.reserve(frfs.size());
  for (const auto& f : frfs) g.push_back(f.g);
  return estimate_bla(std::span<const std::vector<Complex>>(g));
}

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_summary_csv(const std::string& path, std::span<const double> lines, const BlaResult& r) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "freq,abs_g_bla,arg_g_bla,sigma_nl,snlr\n";
  for (std::size_t k = 0; k < lines.size(); ++k) {
    out << format_number(lines[k]) << ',' << format_number(std::abs(r.g_bla[k])) << ','
        << format_number(std::arg(r.g_bla[k])) << ',' << format_number(r.sigma_nl[k]) << ','
        << format_number(r.snlr[k]) << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write to " + path + " failed");
}

// Analytic second-order low-pass ω_n²/(s² + 2ζω_n s + ω_n²), used as the
// linear reference plant.
struct SecondOrderPlant {
  double natural_frequency = 2.0 * std::numbers::pi * 3.0;  // rad/s
  double damping = 0.2;

  Complex response(double hz) const {
    const Complex s(0.0, 2.0 * std::numbers::pi * hz);
    const double wn = natural_frequency;
    return wn * wn / (s * s + 2.0 * damping * wn * s + wn * wn);
  }

  // Integrates from rest with classical RK4, `substeps` per sample, driven
  // by the continuous multisine of realization `l`; returns the output at
  // the input's sample instants.
  std::vector<double> simulate(const ExcitationDesign& design, std::size_t l, int substeps = 10) const {
    const std::size_t n = design.total_samples();
    const std::size_t oversample = 2 * static_cast<std::size_t>(substeps);
    const auto u = multisine_period(design, l, oversample);
    const std::size_t m = u.size();
    const double h = 1.0 / (design.sample_rate * substeps);
    const double wn = natural_frequency;
    auto accel = [&](double x, double v, double in) { return wn * wn * (in - x) - 2.0 * damping * wn * v; };
    std::vector<double> y;
    y.reserve(n);
    double x = 0.0, v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y.push_back(x);
      for (int s = 0; s < substeps; ++s) {
        const std::size_t base = (i * oversample + 2 * static_cast<std::size_t>(s)) % m;
        const double u0 = u[base], um = u[(base + 1) % m], u1 = u[(base + 2) % m];
        const double k1x = v, k1v = accel(x, v, u0);
        const double k2x = v + 0.5 * h * k1v, k2v = accel(x + 0.5 * h * k1x, v + 0.5 * h * k1v, um);
        const double k3x = v + 0.5 * h * k2v, k3v = accel(x + 0.5 * h * k2x, v + 0.5 * h * k2v, um);
        const double k4x = v + h * k3v, k4v = accel(x + h * k3x, v + h * k3v, u1);
        x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
        v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
      }
    }
    return y;
  }
};

}  // namespace pamsim::sysid
