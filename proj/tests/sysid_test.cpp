#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "pamsim/sysid.hpp"
#include "pamsim/sysid_session.hpp"

namespace pamsim::sysid {
namespace {

constexpr double kPi = std::numbers::pi;

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::InvalidState;
}

// Textbook DFT bin, independent of BinDft's tables.
Complex naive_dft(std::span<const double> x, std::size_t k) {
  const std::size_t n = x.size();
  long double re = 0, im = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double arg = -2.0L * static_cast<long double>(kPi) * static_cast<long double>((k * i) % n) / n;
    re += x[i] * std::cos(arg);
    im += x[i] * std::sin(arg);
  }
  return {static_cast<double>(re), static_cast<double>(im)};
}

ExcitationDesign small_design(std::size_t lines, std::size_t realizations, std::uint64_t seed) {
  ExcitationDesign d;
  for (std::size_t k = 1; k <= lines; ++k) d.lines.push_back(0.1 * static_cast<double>(k));
  d.amplitude = 0.1;
  d.realizations = realizations;
  d.draw_phases(seed);
  return d;
}

std::vector<double> repeat(const std::vector<double>& one, std::size_t periods) {
  std::vector<double> out;
  for (std::size_t p = 0; p < periods; ++p) out.insert(out.end(), one.begin(), one.end());
  return out;
}

TEST(Design, StandardGrid) {
  const auto d = ExcitationDesign::standard();
  ASSERT_EQ(d.lines.size(), 100u);
  EXPECT_DOUBLE_EQ(d.lines.front(), 0.1);
  EXPECT_DOUBLE_EQ(d.lines.back(), 10.0);
  const auto bins = d.bins();
  for (std::size_t k = 0; k < bins.size(); ++k) EXPECT_EQ(bins[k], k + 1);
  EXPECT_EQ(d.period_samples, 5000u);
  EXPECT_EQ(d.realizations, 10u);
  EXPECT_EQ(d.periods, 10u);
  EXPECT_EQ(d.discard, 2u);
}

TEST(Design, MisalignedLineRejected) {
  ExcitationDesign d;
  d.lines = {0.123};
  EXPECT_EQ(kind_of([&] { d.bins(); }), ErrorKind::Design);
  d.lines = {250.0};
  EXPECT_EQ(kind_of([&] { d.bins(); }), ErrorKind::Design);
  d.lines = {0.0};
  EXPECT_EQ(kind_of([&] { d.bins(); }), ErrorKind::Design);
}

TEST(Design, PhasesDeterministicAndInRange) {
  ExcitationDesign a = ExcitationDesign::standard(), b = ExcitationDesign::standard();
  a.draw_phases(11);
  b.draw_phases(11);
  EXPECT_EQ(a.phases, b.phases);
  for (const auto& row : a.phases) {
    for (double p : row) {
      EXPECT_GE(p, 0.0);
      EXPECT_LT(p, 2 * kPi);
    }
  }
  b.draw_phases(12);
  EXPECT_NE(a.phases, b.phases);
}

TEST(Multisine, PeriodsAreBitIdentical) {
  ExcitationDesign d = small_design(20, 1, 3);
  d.periods = 3;
  d.discard = 1;
  const auto s = design_multisine(d)[0];
  ASSERT_EQ(s.size(), 15000u);
  EXPECT_EQ(std::memcmp(s.data(), s.data() + 5000, 5000 * sizeof(double)), 0);
  EXPECT_EQ(std::memcmp(s.data(), s.data() + 10000, 5000 * sizeof(double)), 0);
  for (std::size_t n : {0u, 17u, 4999u}) EXPECT_NEAR(s[n], multisine_value(d, 0, n / 500.0), 1e-12);
}

TEST(Multisine, SingleCosineSpectrum) {
  ExcitationDesign d;
  d.lines = {1.0};
  d.amplitude = 1.0;
  d.realizations = 1;
  d.phases = {{0.3}};
  const auto x = multisine_period(d, 0, 1);
  const BinDft dft(5000);
  const std::vector<std::size_t> bins{10, 11};
  const auto X = dft(x, bins);
  EXPECT_NEAR(std::abs(X[0]), 2500.0, 1e-8);
  EXPECT_NEAR(std::arg(X[0]), 0.3, 1e-12);
  EXPECT_LT(std::abs(X[1]), 1e-8);
}

TEST(Multisine, FullSpectrumHasNoLeakage) {
  ExcitationDesign d = ExcitationDesign::standard();
  d.draw_phases(2026);
  const auto x = multisine_period(d, 3, 1);
  const double peak = d.amplitude * 5000 / 2.0;
  for (std::size_t k = 0; k <= 2500; ++k) {
    const Complex X = naive_dft(x, k);
    if (k >= 1 && k <= 100) {
      ASSERT_NEAR(std::abs(X), peak, 1e-9 * peak) << k;
      ASSERT_NEAR(std::abs(std::remainder(std::arg(X) - d.phases[3][k - 1], 2 * kPi)), 0.0, 1e-9) << k;
    } else {
      ASSERT_LE(std::abs(X), 1e-9 * peak) << k;
    }
  }
}

TEST(BinDftTest, MatchesNaiveDft) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> x(997);
  for (double& v : x) v = u(rng);
  const BinDft dft(x.size());
  const std::vector<std::size_t> bins{0, 1, 5, 300, 996};
  const auto X = dft(x, bins);
  for (std::size_t i = 0; i < bins.size(); ++i) EXPECT_LT(std::abs(X[i] - naive_dft(x, bins[i])), 1e-10);
}

TEST(Frf, ZeroInputIsDegenerate) {
  const std::vector<double> u(10000, 0.0), y(10000, 0.0);
  const std::vector<std::size_t> bins{1};
  EXPECT_EQ(kind_of([&] { estimate_frf(u, y, 5000, bins); }), ErrorKind::DegenerateExcitation);
}

TEST(Frf, StaticGain) {
  const ExcitationDesign d = small_design(100, 1, 5);
  const auto u = repeat(multisine_period(d, 0, 1), 4);
  std::vector<double> y(u);
  for (double& v : y) v *= 2.0;
  const auto est = estimate_frf(u, y, 5000, d.bins());
  for (const auto& g : est.g) EXPECT_LT(std::abs(g - Complex(2.0, 0.0)), 1e-12);
}

TEST(Frf, OneSampleDelay) {
  const ExcitationDesign d = small_design(100, 1, 6);
  const auto one = multisine_period(d, 0, 1);
  std::vector<double> delayed(one.size());
  for (std::size_t n = 0; n < one.size(); ++n) delayed[n] = one[(n + one.size() - 1) % one.size()];
  const auto est = estimate_frf(repeat(one, 3), repeat(delayed, 3), 5000, d.bins());
  const auto bins = d.bins();
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const Complex expected = std::polar(1.0, -2.0 * kPi * static_cast<double>(bins[k]) / 5000.0);
    EXPECT_LT(std::abs(est.g[k] - expected), 1e-10) << k;
  }
}

TEST(Frf, PeriodPermutationInvariance) {
  const ExcitationDesign d = small_design(30, 1, 7);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 0.01);
  const auto one = multisine_period(d, 0, 1);
  std::vector<double> u = repeat(one, 4), y(u.size());
  for (std::size_t n = 0; n < u.size(); ++n) y[n] = 0.5 * u[n] + noise(rng);
  std::vector<double> pu, py;
  for (std::size_t p : {2u, 0u, 3u, 1u}) {
    pu.insert(pu.end(), u.begin() + p * 5000, u.begin() + (p + 1) * 5000);
    py.insert(py.end(), y.begin() + p * 5000, y.begin() + (p + 1) * 5000);
  }
  const auto a = estimate_frf(u, y, 5000, d.bins());
  const auto b = estimate_frf(pu, py, 5000, d.bins());
  for (std::size_t k = 0; k < a.g.size(); ++k) EXPECT_LT(std::abs(a.g[k] - b.g[k]), 1e-12 * std::abs(a.g[k]));
}

TEST(Frf, RequiresWholePeriods) {
  const std::vector<double> u(7500, 1.0);
  const std::vector<std::size_t> bins{1};
  EXPECT_THROW(estimate_frf(u, u, 5000, bins), Error);
}

TEST(Bla, TwoRealizationHandCheck) {
  const std::vector<std::vector<Complex>> g{{Complex(1, 1)}, {Complex(3, -1)}};
  const BlaResult r = estimate_bla(std::span<const std::vector<Complex>>(g));
  EXPECT_EQ(r.g_bla[0], Complex(2, 0));
  EXPECT_DOUBLE_EQ(r.sigma2_nl[0], 2.0);
  EXPECT_DOUBLE_EQ(r.sigma_nl[0], std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(r.snlr[0], 2.0);
}

TEST(Bla, RealValuedPairHandCheck) {
  const std::vector<std::vector<Complex>> g{{Complex(1, 0)}, {Complex(3, 0)}};
  const BlaResult r = estimate_bla(std::span<const std::vector<Complex>>(g));
  EXPECT_EQ(r.g_bla[0], Complex(2, 0));
  EXPECT_EQ(r.sigma2_nl[0], 1.0);
  EXPECT_EQ(r.snlr[0], 4.0);
}

TEST(Bla, IdenticalRealizationsGiveInfiniteSnlr) {
  const std::vector<std::vector<Complex>> g(5, {Complex(0.3, -0.2), Complex(1, 0)});
  const BlaResult r = estimate_bla(std::span<const std::vector<Complex>>(g));
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(r.sigma_nl[k], 0.0);
    EXPECT_TRUE(std::isinf(r.snlr[k]));
  }
}

TEST(Bla, SingleRealizationRejected) {
  const std::vector<std::vector<Complex>> g(1, {Complex(1, 0)});
  EXPECT_EQ(kind_of([&] { estimate_bla(std::span<const std::vector<Complex>>(g)); }),
            ErrorKind::InsufficientRealizations);
}

TEST(Bla, ScaleInvariance) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 1);
  std::vector<std::vector<Complex>> g(6, std::vector<Complex>(8));
  for (auto& row : g) {
    for (auto& v : row) v = Complex(n(rng), n(rng));
  }
  auto scaled = g;
  for (auto& row : scaled) {
    for (auto& v : row) v *= 3.5;
  }
  const BlaResult a = estimate_bla(std::span<const std::vector<Complex>>(g));
  const BlaResult b = estimate_bla(std::span<const std::vector<Complex>>(scaled));
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_LT(std::abs(b.g_bla[k] - 3.5 * a.g_bla[k]), 1e-12);
    EXPECT_NEAR(b.sigma_nl[k], 3.5 * a.sigma_nl[k], 1e-12);
    EXPECT_NEAR(b.snlr[k] / a.snlr[k], 1.0, 1e-12);
  }
}

// Closed-form response of ω²/(s² + 2ζωs + ω²), written out independently.
Complex second_order(double hz, double wn, double zeta) {
  const double w = 2 * kPi * hz;
  const double re = wn * wn - w * w, im = 2 * zeta * wn * w;
  const double den = re * re + im * im;
  return {wn * wn * re / den, -wn * wn * im / den};
}

TEST(Reference, LinearPlantRecoveredWithinOnePercent) {
  ExcitationDesign d = ExcitationDesign::standard();
  d.draw_phases(1);
  const SecondOrderPlant plant;
  const auto t0 = std::chrono::steady_clock::now();
  const SessionResult r = run_reference_session(plant, d);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 60.0);
  for (std::size_t k = 0; k < d.lines.size(); ++k) {
    const Complex truth = second_order(d.lines[k], 2 * kPi * 3.0, 0.2);
    const Complex g = r.bla.g_bla[k];
    EXPECT_LT(std::abs(std::abs(g) / std::abs(truth) - 1.0), 0.01) << d.lines[k];
    EXPECT_LT(std::abs(std::arg(g / truth)) * 180.0 / kPi, 1.0) << d.lines[k];
    EXPECT_LE(r.bla.sigma_nl[k], 1e-9 * std::abs(g)) << d.lines[k];
  }
}

ExcitationDesign quick_design() {
  ExcitationDesign d = ExcitationDesign::standard();
  d.realizations = 3;
  d.periods = 4;
  d.discard = 1;
  d.draw_phases(99);
  return d;
}

TEST(Session, InProcessAndUdpAgreeExactly) {
  const ExcitationDesign d = quick_design();
  SessionOptions a;
  a.dof = 1;
  SessionOptions b = a;
  b.transport = Transport::Udp;
  const SessionResult ra = run_sysid_session(a, d);
  const SessionResult rb = run_sysid_session(b, d);
  ASSERT_EQ(ra.bla.g_bla.size(), rb.bla.g_bla.size());
  for (std::size_t k = 0; k < ra.bla.g_bla.size(); ++k) {
    ASSERT_EQ(ra.bla.g_bla[k], rb.bla.g_bla[k]);
    ASSERT_EQ(ra.bla.sigma2_nl[k], rb.bla.sigma2_nl[k]);
  }
  for (std::size_t l = 0; l < ra.logs.size(); ++l) ASSERT_EQ(ra.logs[l].records, rb.logs[l].records);
}

TEST(Session, AppliedInputMatchesDesign) {
  const ExcitationDesign d = quick_design();
  SessionOptions opt;
  const SessionResult r = run_sysid_session(opt, d);
  const auto signals = design_multisine(d);
  for (std::size_t n = 0; n < 1000; ++n) ASSERT_NEAR(r.logs[0].u[n], signals[0][n], 1e-12);
}

TEST(Session, BadDofRejected) {
  SessionOptions opt;
  opt.dof = 4;
  EXPECT_THROW(run_sysid_session(opt, quick_design()), Error);
}

TEST(Session, LinearizedMuscleIsMoreLinear) {
  ExcitationDesign d = ExcitationDesign::standard();
  d.draw_phases(5);
  SessionOptions nonlinear;
  SessionOptions linear;
  linear.sim.muscle.force_law = ForceLaw::Linearized;
  const SessionResult rn = run_sysid_session(nonlinear, d);
  const SessionResult rl = run_sysid_session(linear, d);
  std::size_t better = 0;
  for (std::size_t k = 0; k < d.lines.size(); ++k) better += rl.bla.snlr[k] >= rn.bla.snlr[k] ? 1 : 0;
  EXPECT_GE(better, 90u);
}

TEST(Summary, CsvFormat) {
  const auto path = (std::filesystem::temp_directory_path() / "pamsim_bla_test.csv").string();
  BlaResult r;
  r.g_bla = {Complex(0, 1), Complex(2, 0)};
  r.sigma_nl = {0.5, 0.0};
  r.sigma2_nl = {0.25, 0.0};
  r.snlr = {4.0, std::numeric_limits<double>::infinity()};
  const std::vector<double> lines{0.1, 0.2};
  write_summary_csv(path, lines, r);
  std::ifstream in(path);
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_EQ(header, "freq,abs_g_bla,arg_g_bla,sigma_nl,snlr");
  EXPECT_EQ(row1, "0.10000000000000001,1,1.5707963267948966,0.5,4");
  EXPECT_EQ(row2, "0.20000000000000001,2,0,0,inf");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace pamsim::sysid
