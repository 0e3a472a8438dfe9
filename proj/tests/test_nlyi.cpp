#include "mfy/harness/config.hpp"
#include "mfy/harness/studies.hpp"
#include "mfy/nlyi.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace mfy;

namespace {

// Gamma_{0,t}(x) = t * f(x), sampled on the grid
template<class F>
AveragedField
time_linear(SpatialGrid sg, TimeGrid tg, std::size_t comps, F f)
{
  return AveragedField::from_function(sg, tg, comps, [&](double t, std::span<const double> x, std::span<double> out) {
    f(x, out);
    for (double& v : out)
      v *= t;
  });
}

AveragedField
constant_drift(SpatialGrid sg, TimeGrid tg, std::vector<double> b)
{
  return time_linear(sg, tg, b.size(), [&](std::span<const double>, std::span<double> out) {
    std::copy(b.begin(), b.end(), out.begin());
  });
}

AveragedField
fbm_field(std::uint64_t seed, std::size_t n_steps, double sigma = -0.5)
{
  const auto z = gen_noise(NoiseSpec::fbm(0.1), 1, TimeGrid(1.0, n_steps), seed);
  return averaged_field_direct(Kernel::power_law(sigma, 0.05, 1), z, SpatialGrid(4.0, 256, 1),
                               TimeGrid(1.0, n_steps));
}

SamplePath
smooth_path(const TimeGrid& g, double amp, double freq, double phase)
{
  SamplePath p(g, 1);
  for (std::size_t k = 0; k < g.size(); ++k)
    p.values()[k] = amp * std::sin(freq * g.time(k) + phase);
  return p;
}

EmpiricalMeasureFlow
smooth_flow(const TimeGrid& g)
{
  const std::vector<SamplePath> atoms{ smooth_path(g, 0.3, 2.0, 0.1), smooth_path(g, 0.5, -1.0, 1.0),
                                       smooth_path(g, 0.2, 3.0, 2.0) };
  return EmpiricalMeasureFlow::from_paths(atoms);
}

} // namespace

TEST(ConvEval, DiracAtOriginGivesGamma)
{
  const auto g = fbm_field(1, 64);
  const std::vector<double> origin{ 0.0 };
  for (double x : { -1.3, 0.0, 0.77 }) {
    const std::vector<double> q{ x };
    EXPECT_EQ(conv_eval(g, origin, 3, 40, q), g.increment(3, 40, q));
  }
}

TEST(ConvEval, ZeroFieldGivesZero)
{
  const auto g = constant_drift(SpatialGrid(2.0, 32, 2), TimeGrid(1.0, 8), { 0.0, 0.0 });
  const std::vector<double> atoms{ 0.1, 0.2, -0.3, 0.4 };
  for (double v : conv_eval(g, atoms, 0, 8, std::vector<double>{ 0.5, 0.5 }))
    EXPECT_EQ(v, 0.0);
}

TEST(ConvEval, ThreeAtomsMatchHandExpandedSum)
{
  // Gamma_{0,t}(x) = t (2x + 1) is reproduced exactly by linear interpolation
  const auto g = time_linear(SpatialGrid(4.0, 256, 1), TimeGrid(1.0, 16), 1,
                             [](std::span<const double> x, std::span<double> out) { out[0] = 2 * x[0] + 1; });
  const std::vector<double> atoms{ 0.3, -0.7, 1.1 };
  const double x = 0.45, tau = 5.0 / 16.0;
  const double want =
    (tau * (2 * (x - 0.3) + 1) + tau * (2 * (x + 0.7) + 1) + tau * (2 * (x - 1.1) + 1)) / 3.0;
  EXPECT_NEAR(conv_eval(g, atoms, 2, 7, std::vector<double>{ x })[0], want, 1e-12);

  // smooth non-polynomial field against three explicit interpolated evaluations
  const auto h = fbm_field(2, 64);
  const double direct = (h.increment(5, 9, std::vector<double>{ x - 0.3 })[0] +
                         h.increment(5, 9, std::vector<double>{ x + 0.7 })[0] +
                         h.increment(5, 9, std::vector<double>{ x - 1.1 })[0]) /
                        3.0;
  EXPECT_NEAR(conv_eval(h, atoms, 5, 9, std::vector<double>{ x })[0], direct, 1e-12);
}

TEST(ConvEval, AtomOrderDoesNotMatter)
{
  const auto g = fbm_field(3, 64);
  std::vector<double> atoms{ 0.3, -0.7, 1.1, 0.01, -2.2, 0.5, 0.3 };
  const auto ref = conv_eval(g, atoms, 0, 64, std::vector<double>{ 0.2 });
  std::reverse(atoms.begin(), atoms.end());
  EXPECT_EQ(conv_eval(g, atoms, 0, 64, std::vector<double>{ 0.2 }), ref);
  std::rotate(atoms.begin(), atoms.begin() + 3, atoms.end());
  EXPECT_EQ(conv_eval(g, atoms, 0, 64, std::vector<double>{ 0.2 }), ref);
}

TEST(NlyIntegral, ZeroFieldAtEveryLevel)
{
  const TimeGrid tg(1.0, 64);
  const auto g = constant_drift(SpatialGrid(2.0, 32, 1), tg, { 0.0 });
  for (std::size_t level = 0; level <= 6; ++level)
    EXPECT_EQ(nly_integral(g, smooth_path(tg, 0.5, 1.0, 0.0), smooth_flow(tg), 0, 64, level)[0], 0.0);
}

TEST(NlyIntegral, ConstantDriftTelescopes)
{
  const TimeGrid tg(1.0, 64);
  const auto g = constant_drift(SpatialGrid(2.0, 32, 2), tg, { 0.75, -1.5 });
  SamplePath y(tg, 2);
  const auto mu = EmpiricalMeasureFlow::constant(tg, std::vector<double>{ 0.1, 0.2, 0.3, -0.4 }, 2);
  for (std::size_t level = 0; level <= 5; ++level) {
    const auto v = nly_integral(g, y, mu, 16, 48, level);
    EXPECT_NEAR(v[0], 0.5 * 0.75, 1e-15);
    EXPECT_NEAR(v[1], 0.5 * -1.5, 1e-15);
  }
}

TEST(NlyIntegral, LevelBeyondGridIsRejected)
{
  const TimeGrid tg(1.0, 64);
  const auto g = constant_drift(SpatialGrid(2.0, 32, 1), tg, { 1.0 });
  const auto mu = smooth_flow(tg);
  const auto y = smooth_path(tg, 0.5, 1.0, 0.0);
  EXPECT_NO_THROW(nly_integral(g, y, mu, 0, 64, 6));
  EXPECT_THROW(nly_integral(g, y, mu, 0, 64, 7), InvalidInput);
  EXPECT_THROW(nly_integral(g, y, mu, 0, 48, 5), InvalidInput);
  EXPECT_THROW(nly_integral(g, y, EmpiricalMeasureFlow::constant(TimeGrid(1.0, 32), std::vector<double>{ 0.0 }, 1), 0,
                            64, 2),
               InvalidInput);
}

TEST(NlyIntegral, ConvergesToClassicalIntegral)
{
  // Z = 0 gives Gamma_t = t K with K a smooth Gaussian bump
  const double eps = 0.5;
  const auto k = Kernel::dirac(eps, 1);
  const std::size_t n = 1 << 10;
  const TimeGrid tg(1.0, n);
  const auto g = averaged_field_direct(k, SamplePath(tg, 1), SpatialGrid(4.0, 1024, 1), tg, false);
  const auto y = smooth_path(tg, 0.5, 1.5, 0.3);
  const auto mu = smooth_flow(tg);
  const double got = nly_integral(g, y, mu, 0, n, 10)[0];

  // trapezoidal quadrature of r -> (K * mu_r)(Y_r) with closed-form K on a 16x finer grid
  auto integrand = [&](double r) {
    const double yr = 0.5 * std::sin(1.5 * r + 0.3);
    const double a[3] = { 0.3 * std::sin(2.0 * r + 0.1), 0.5 * std::sin(-1.0 * r + 1.0),
                          0.2 * std::sin(3.0 * r + 2.0) };
    double acc = 0.0;
    for (double aj : a)
      acc += k(std::vector<double>{ yr - aj })[0];
    return acc / 3.0;
  };
  const std::size_t m = 16 * n;
  double ref = 0.0;
  for (std::size_t j = 0; j < m; ++j)
    ref += 0.5 / m * (integrand(double(j) / m) + integrand(double(j + 1) / m));
  EXPECT_LE(std::abs(got - ref) / std::abs(ref), 1e-3);
}

TEST(NlyIntegral, AdditiveInTime)
{
  const auto g = fbm_field(4, 256);
  const TimeGrid& tg = g.time_grid();
  const auto y = smooth_path(tg, 0.5, 1.0, 0.0);
  const auto mu = smooth_flow(tg);
  // stride 4 on all three windows
  const auto a = nly_integral(g, y, mu, 0, 128, 5);
  const auto b = nly_integral(g, y, mu, 128, 256, 5);
  const auto c = nly_integral(g, y, mu, 0, 256, 6);
  EXPECT_NEAR(a[0] + b[0], c[0], 1e-12 * (1 + std::abs(c[0])));
}

TEST(NlyIntegral, DiracAtZeroPathReducesToPlainIntegral)
{
  const auto g = fbm_field(5, 128);
  const TimeGrid& tg = g.time_grid();
  const auto y = smooth_path(tg, 0.5, 2.0, 0.0);
  const auto mu = EmpiricalMeasureFlow::constant(tg, std::vector<double>{ 0.0 }, 1);
  for (std::size_t level : { 3, 7 }) {
    const std::size_t stride = 128 >> level;
    double plain = 0.0;
    for (std::size_t u = 0; u < 128; u += stride)
      plain += g.increment(u, u + stride, y.at(u))[0];
    EXPECT_EQ(nly_integral(g, y, mu, 0, 128, level)[0], plain);
  }
}

TEST(NlyIntegral, ConstantPartOfGammaCancelsInDelta)
{
  // delta_u Xi_{s,t} = Xi_{s,t} - Xi_{s,u} - Xi_{u,t} is blind to x-constant parts of Gamma
  const auto g = fbm_field(6, 64);
  const auto& sg = g.spatial_grid();
  const auto& tg = g.time_grid();
  const double c = 0.375;
  AveragedField shifted = AveragedField::from_function(sg, tg, 1, [&](double t, std::span<const double> x, std::span<double> out) {
    const std::size_t node = sg.locate(x);
    out[0] = g.cumulative_node(tg.index_of(t), node)[0] + c * t;
  });
  const auto y = smooth_path(tg, 0.5, 2.0, 0.0);
  const auto mu = smooth_flow(tg);
  auto delta = [&](const AveragedField& f, std::size_t s, std::size_t u, std::size_t t) {
    auto xi = [&](std::size_t a, std::size_t b) { return conv_eval(f, mu.marginal(a), a, b, y.at(a))[0]; };
    return xi(s, t) - xi(s, u) - xi(u, t);
  };
  for (auto [s, u, t] : { std::tuple<std::size_t, std::size_t, std::size_t>{ 0, 32, 64 }, { 8, 12, 16 }, { 3, 40, 41 } })
    EXPECT_NEAR(delta(shifted, s, u, t), delta(g, s, u, t), 1e-13);
}

TEST(SewingRate, ConstantDriftIsExact)
{
  const TimeGrid tg(1.0, 256);
  const auto g = constant_drift(SpatialGrid(2.0, 32, 1), tg, { 1.25 });
  const auto rep = sewing_rate(g, smooth_path(tg, 0.5, 3.0, 0.0), smooth_flow(tg), 0, 256, 2, 6);
  EXPECT_TRUE(rep.exact);
  EXPECT_TRUE(std::isinf(rep.exponent));
  for (double e : rep.errors)
    EXPECT_LE(e, 1e-14);
}

TEST(SewingRate, FrozenPathAndFlowAreExact)
{
  const auto g = fbm_field(7, 256, -1.0);
  const TimeGrid& tg = g.time_grid();
  SamplePath y(tg, 1);
  std::fill(y.values().begin(), y.values().end(), 0.3);
  const auto mu = EmpiricalMeasureFlow::constant(tg, std::vector<double>{ -0.5, 0.1, 0.9 }, 1);
  const auto rep = sewing_rate(g, y, mu, 0, 256, 2, 6);
  EXPECT_TRUE(rep.exact);
}

TEST(SewingRate, RejectsBadLevels)
{
  const TimeGrid tg(1.0, 64);
  const auto g = constant_drift(SpatialGrid(2.0, 32, 1), tg, { 1.0 });
  const auto y = smooth_path(tg, 0.5, 1.0, 0.0);
  const auto mu = smooth_flow(tg);
  EXPECT_THROW(sewing_rate(g, y, mu, 0, 64, 2, 6), InvalidInput);
  EXPECT_THROW(sewing_rate(g, y, mu, 0, 48, 1, 2), InvalidInput);
  EXPECT_THROW(sewing_rate(g, y, mu, 0, 64, 4, 3), InvalidInput);
}

TEST(SewingRate, SolvedSystemBeatsThreshold)
{
  ExperimentConfig cfg;
  cfg.seed = 3;
  cfg.kernel = "power_law:-0.5,eps=0.02";
  cfg.z_noise = NoiseSpec::fbm(0.1);
  cfg.z_steps = 4096;
  cfg.n_steps = 4096;
  cfg.half_width = 4.0;
  cfg.n_cells = 1024;
  cfg.initial_std = 0.25;
  cfg.input_noise = NoiseSpec::bm();
  cfg.input_noise_scale = 0.5;
  cfg.sewing_atoms = 32;
  cfg.sewing_min_level = 3;
  cfg.sewing_max_level = 9;
  const auto st = run_sewing_study(cfg);
  EXPECT_TRUE(st.converged);
  EXPECT_FALSE(st.report.exact);
  EXPECT_GE(st.report.exponent, 0.75 + 0.45 - 0.15);
  // single-window refinement gaps are signed sums of 2^l local errors and
  // fluctuate; their trend over the levels must still be decreasing
  const auto& gaps = st.report.refinement_gaps;
  ASSERT_GE(gaps.size(), 6u);
  EXPECT_GT(st.report.self_convergence, 0.0);
  const double head = std::cbrt(gaps[0] * gaps[1] * gaps[2]);
  const double tail = std::cbrt(gaps[gaps.size() - 1] * gaps[gaps.size() - 2] * gaps[gaps.size() - 3]);
  EXPECT_LT(tail, head);
}

TEST(SewingRate, SmoothConfigurationRefinesMonotonically)
{
  const auto k = Kernel::dirac(0.5, 1);
  const TimeGrid tg(1.0, 1 << 10);
  const auto g = averaged_field_direct(k, SamplePath(tg, 1), SpatialGrid(4.0, 512, 1), tg, false);
  const auto rep = sewing_rate(g, smooth_path(tg, 0.5, 1.5, 0.3), smooth_flow(tg), 0, 1 << 10, 2, 8);
  for (std::size_t i = 1; i < rep.refinement_gaps.size(); ++i)
    EXPECT_LT(rep.refinement_gaps[i], rep.refinement_gaps[i - 1]) << "level " << i;
  EXPECT_NEAR(rep.self_convergence, 1.0, 0.1);
}

TEST(StabilityGapTest, IdenticalInputsAndZeroField)
{
  const auto g = fbm_field(8, 64);
  const TimeGrid& tg = g.time_grid();
  const auto y = smooth_path(tg, 0.5, 2.0, 0.0);
  const auto mu = smooth_flow(tg);
  EXPECT_EQ(stability_gap(g, y, mu, y, mu, 0, 64, 0.75, 0.45, 1.0).lhs, 0.0);
  const auto zero = constant_drift(SpatialGrid(4.0, 256, 1), tg, { 0.0 });
  const auto y2 = smooth_path(tg, 0.7, 1.0, 0.5);
  EXPECT_EQ(stability_gap(zero, y, mu, y2, mu, 0, 64, 0.75, 0.45, 1.0).lhs, 0.0);
}

TEST(StabilityGapTest, BumpPerturbationHasBoundedRatio)
{
  const auto g = fbm_field(9, 256, -1.0);
  const TimeGrid& tg = g.time_grid();
  const double gn = gamma_norm(g, 0.75, 2).value;
  const auto y = smooth_path(tg, 0.5, 2.0, 0.0);
  const auto mu = smooth_flow(tg);
  SamplePath y2 = y;
  for (std::size_t k = 0; k < tg.size(); ++k) {
    const double r = (tg.time(k) - 0.5) / 0.25;
    y2.values()[k] += std::abs(r) < 1 ? 0.01 * std::exp(-1.0 / (1 - r * r)) * std::numbers::e : 0.0;
  }
  for (std::size_t len : { 256, 128, 64, 32 }) {
    const std::size_t s = 128 - len / 2;
    const auto gap = stability_gap(g, y, mu, y2, mu, s, s + len, 0.75, 0.45, gn);
    EXPECT_GT(gap.lhs, 0.0);
    EXPECT_TRUE(std::isfinite(gap.ratio));
    EXPECT_LT(gap.ratio, 1e3) << "window " << len;
  }
}

TEST(DriftEvaluatorTest, BinnedMatchesDirect)
{
  const auto z = gen_noise(NoiseSpec::fbm(0.2), 2, TimeGrid(1.0, 64), 10);
  const auto g = averaged_field_direct(Kernel::power_law(-1.0, 0.1, 2), z, SpatialGrid(4.0, 64, 2), TimeGrid(1.0, 8));
  NormalStream normal(11, 0);
  std::vector<double> atoms(2 * 500);
  for (auto& a : atoms)
    a = 0.4 * normal();
  DriftEvaluator binned(g, DriftMode::automatic, 256), direct(g, DriftMode::direct);
  binned.prepare(2, 5, atoms);
  direct.prepare(2, 5, atoms);
  ASSERT_TRUE(binned.binned());
  EXPECT_FALSE(direct.binned());
  double worst = 0.0, scale = 0.0;
  std::vector<double> a(2), b(2);
  for (int q = 0; q < 50; ++q) {
    const std::vector<double> x{ 0.5 * normal(), 0.5 * normal() };
    binned.evaluate(x, a);
    direct.evaluate(x, b);
    worst = std::max(worst, distance(a, b));
    scale = std::max(scale, norm(b));
  }
  EXPECT_LE(worst, 0.05 * scale);
}

TEST(DriftEvaluatorTest, FallsBackOutsideInnerHalf)
{
  const auto g = fbm_field(12, 16);
  std::vector<double> atoms(300, 0.1);
  atoms[17] = 2.5;
  DriftEvaluator ev(g, DriftMode::binned);
  ev.prepare(0, 16, atoms);
  EXPECT_FALSE(ev.binned());
  std::vector<double> out(1);
  ev.evaluate(std::vector<double>{ 0.3 }, out);
  EXPECT_EQ(out[0], conv_eval(g, atoms, 0, 16, std::vector<double>{ 0.3 })[0]);
}

TEST(DriftEvaluatorTest, AutomaticThreshold)
{
  const auto g = fbm_field(13, 16);
  DriftEvaluator ev(g, DriftMode::automatic, 100);
  ev.prepare(0, 16, std::vector<double>(100, 0.0));
  EXPECT_FALSE(ev.binned());
  ev.prepare(0, 16, std::vector<double>(101, 0.0));
  EXPECT_TRUE(ev.binned());
  EXPECT_EQ(parse_drift_mode("auto"), DriftMode::automatic);
  EXPECT_EQ(to_string(DriftMode::binned), "binned");
  EXPECT_THROW(parse_drift_mode("fast"), InvalidInput);
}
