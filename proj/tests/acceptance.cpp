// One PASS/FAIL line per acceptance criterion. Pass criterion numbers as
// arguments to run a subset.

#include "mfy/harness/studies.hpp"

#include <chrono>
#include <functional>
#include <iostream>
#include <set>

using namespace mfy;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string
fmt(double v, int digits = 4)
{
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

template<class F>
AveragedField
time_linear(SpatialGrid sg, TimeGrid tg, F f)
{
  return AveragedField::from_function(sg, tg, sg.dim(), [&](double t, std::span<const double> x, std::span<double> out) {
    f(x, out);
    for (double& v : out)
      v *= t;
  });
}

ExperimentConfig
config(const char* name)
{
  return load_config(std::filesystem::path(MFY_CONFIG_DIR) / name);
}

double
max_abs(const AveragedField& a)
{
  double worst = 0.0;
  for (std::size_t k = 0; k < a.time_grid().size(); ++k)
    for (double v : a.cumulative(k))
      worst = std::max(worst, std::abs(v));
  return worst;
}

double
max_abs_difference(const AveragedField& a, const AveragedField& b)
{
  double worst = 0.0;
  for (std::size_t k = 0; k < a.time_grid().size(); ++k) {
    const auto x = a.cumulative(k), y = b.cumulative(k);
    for (std::size_t i = 0; i < x.size(); ++i)
      worst = std::max(worst, std::abs(x[i] - y[i]));
  }
  return worst;
}

// ------------------------------------------------------------------------- 1

Outcome
averaged_field_identity()
{
  const TimeGrid tg(1.0, 16);
  const std::vector<std::pair<Kernel, SpatialGrid>> presets{
    { Kernel::zero(1), SpatialGrid(2.0, 64, 1) },
    { Kernel::power_law(-1.0, 0.1, 1), SpatialGrid(2.0, 64, 1) },
    { Kernel::power_law(-0.5, 0.1, 2), SpatialGrid(2.0, 64, 2) },
    { Kernel::biot_savart(0.1), SpatialGrid(2.0, 64, 2) },
    { Kernel::dirac(0.1, 1), SpatialGrid(2.0, 64, 1) },
    { Kernel::lennard_jones(6.0, 0.2, 1), SpatialGrid(2.0, 64, 1) },
    { Kernel::linear(-1.0, 2), SpatialGrid(2.0, 16, 2) },
  };
  double worst = 0.0;
  for (const auto& [k, sg] : presets) {
    const auto g = averaged_field_direct(k, SamplePath(TimeGrid(1.0, 64), sg.dim()), sg, tg, false);
    std::vector<double> x(sg.dim()), kx(k.components());
    for (std::size_t s = 0; s <= tg.n_steps(); s += 3)
      for (std::size_t t = s; t <= tg.n_steps(); ++t)
        for (std::size_t node = 0; node < sg.size(); node += 5) {
          sg.node(node, x);
          k.evaluate(x, kx);
          const auto got = g.increment(s, t, x);
          for (std::size_t c = 0; c < kx.size(); ++c) {
            const double want = (tg.time(t) - tg.time(s)) * kx[c];
            worst = std::max(worst, std::abs(got[c] - want) / (1.0 + std::abs(want)));
          }
        }
  }
  const auto z = gen_noise(NoiseSpec::fbm(0.1), 1, TimeGrid(1.0, 1 << 12), 101);
  const SpatialGrid sg(4.0, 1 << 10, 1);
  const auto kernel = Kernel::power_law(-0.5, 0.05, 1);
  const TimeGrid coarse(1.0, 64);
  const auto direct = averaged_field_direct(kernel, z, sg, coarse, false);
  const auto conv = averaged_field_convolution(kernel, occupation_increments(z, sg, coarse), sg, false);
  const double rel = max_abs_difference(direct, conv) / max_abs(direct);
  return { worst <= 1e-12 && rel <= 0.05,
           "Z = 0 identity error " + fmt(worst) + " (<= 1e-12); two-route sup-relative error " + fmt(rel) +
             " (<= 0.05)" };
}

// ------------------------------------------------------------------------- 2

Outcome
sewing_rate_fit()
{
  const auto st = run_sewing_study(config("sewing.toml"));
  const bool ok = st.converged && !st.report.exact && st.report.exponent >= st.threshold;
  return { ok, "exponent " + fmt(st.report.exponent) + " (>= " + fmt(st.threshold) + "); fitted gamma " +
                 fmt(st.fitted_time_exponent) + ", path beta " + fmt(st.fitted_path_beta) + ", flow beta " +
                 fmt(st.fitted_flow_beta) + "; Picard " + (st.converged ? "converged" : "not converged") };
}

// ------------------------------------------------------------------------- 3

Outcome
linear_oracle()
{
  const std::vector<double> x{ -1.0, 0.25, 0.5, 2.0 };
  const double m = 0.4375;
  auto errors = [&](bool particles, std::size_t n) {
    const TimeGrid tg(1.0, n);
    const auto g = time_linear(SpatialGrid(4.0, 64, 1), tg, [](std::span<const double> v, std::span<double> out) {
      out[0] = -v[0];
    });
    const EmpiricalMeasureFlow noise(tg, x.size(), 1);
    const auto flow = particles ? simulate_particles(g, x, noise, {}) : solve_mkv(g, x, noise, {}).flow;
    double worst = 0.0;
    for (std::size_t k = 0; k < tg.size(); ++k)
      for (std::size_t i = 0; i < x.size(); ++i)
        worst = std::max(worst, std::abs(flow.value(k, i)[0] - (m + std::exp(-tg.time(k)) * (x[i] - m))));
    return worst;
  };
  bool ok = true;
  std::string detail;
  for (bool particles : { false, true }) {
    std::vector<double> e;
    for (std::size_t n = 1 << 9; n <= (1 << 12); n *= 2)
      e.push_back(errors(particles, n));
    double min_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j < e.size(); ++j)
      min_ratio = std::min(min_ratio, e[j - 1] / e[j]);
    ok = ok && e.back() <= 1e-3 && min_ratio >= 1.5;
    detail += std::string(particles ? "; particles" : "mean-field") + " error " + fmt(e.back()) +
              " (<= 1e-3), min refinement factor " + fmt(min_ratio) + " (>= 1.5)";
  }
  return { ok, detail };
}

// ------------------------------------------------------------------------- 4

// largest deviation of one particle step taken from the mean-field state at
// time k from the mean-field state at k + 1
double
one_step_error(const AveragedField& g, const EmpiricalMeasureFlow& y, const EmpiricalMeasureFlow& noise)
{
  const std::size_t n = y.atoms();
  DriftEvaluator drift(g, DriftMode::direct);
  std::vector<double> b(1);
  double worst = 0.0;
  for (std::size_t k = 0; k < g.time_grid().n_steps(); ++k) {
    drift.prepare(k, k + 1, y.marginal(k));
    for (std::size_t i = 0; i < n; ++i) {
      drift.evaluate(y.value(k, i), b);
      const double step = y.value(k, i)[0] + b[0] + noise.value(k + 1, i)[0] - noise.value(k, i)[0];
      worst = std::max(worst, std::abs(step - y.value(k + 1, i)[0]));
    }
  }
  return worst;
}

Outcome
particle_identification()
{
  bool ok = true;
  double worst_ratio = 0.0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = config("convergence.toml");
    cfg.seed = seed;
    cfg.n_steps = 128;
    cfg.z_steps = 1024;
    cfg.n_cells = 1024;
    cfg.solver.drift_mode = DriftMode::direct;
    const auto tg = cfg.time_grid();
    const auto field = build_field(cfg, sample_z(cfg, seed), tg, cfg.spatial_grid());
    const auto in = sample_inputs(cfg, tg, 64, derive_seed(seed, { 9 }));
    const auto y = simulate_particles(field, in.x, in.noise, cfg.solver);
    const auto res = solve_mkv(field, in.x, in.noise, cfg.solver);
    const double tol = cfg.solver.picard_tol + one_step_error(field, res.flow, in.noise);
    double gap = 0.0;
    for (std::size_t k = 0; k < tg.size(); ++k)
      gap = std::max(gap, w1_1d(y.marginal(k), res.flow.marginal(k)));
    ok = ok && res.converged && gap <= tol;
    worst_ratio = std::max(worst_ratio, gap / tol);
    if (seed == 1)
      detail = "seed 1: gap " + fmt(gap) + ", tolerance " + fmt(tol);
  }
  return { ok, detail + "; worst gap/tolerance over 5 seeds " + fmt(worst_ratio) + " (<= 1)" };
}

// ------------------------------------------------------------------------- 5

Outcome
transport_oracles()
{
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Philox rng(s, 0);
    std::vector<double> a(64), b(64);
    for (auto& v : a)
      v = rng.uniform();
    for (auto& v : b)
      v = 2.0 * rng.uniform() - 0.5;
    const double exact = w1_exact_small<double>(a, b, [](double x, double y) { return std::abs(x - y); });
    worst = std::max(worst, std::abs(w1_1d(a, b) - exact));
  }
  std::size_t mismatches = 0;
  const TimeGrid tg(1.0, 16);
  const auto pairs = dyadic_pairs(tg);
  for (std::size_t n = 1; n <= 6; ++n) {
    auto flow = [&](std::uint64_t seed) {
      std::vector<SamplePath> paths;
      for (std::size_t i = 0; i < n; ++i)
        paths.push_back(gen_noise(NoiseSpec::fbm(0.4), 1, tg, seed, i));
      return EmpiricalMeasureFlow::from_paths(paths);
    };
    const auto a = flow(1000 + n), b = flow(2000 + n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double brute = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        s += path_difference_norm(a, i, b, perm[i], 0.45, pairs);
      brute = std::min(brute, s / static_cast<double>(n));
    } while (std::next_permutation(perm.begin(), perm.end()));
    mismatches += path_w1(a, b, 0.45) == brute ? 0 : 1;
  }
  return { worst <= 1e-9 && mismatches == 0,
           "w1_1d vs assignment max error " + fmt(worst) + " (<= 1e-9) on 100 instances; path_w1 vs brute force " +
             std::to_string(mismatches) + " mismatches for N = 1..6" };
}

// ------------------------------------------------------------------------- 6

// Even instances pair two independent Brownian flows; odd instances pair a
// flow with a small random perturbation of itself.
std::pair<EmpiricalMeasureFlow, EmpiricalMeasureFlow>
flow_instance(std::uint64_t s)
{
  const TimeGrid tg(1.0, 32);
  Philox rng(s, 7);
  const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 127.0);
  const double scale = std::pow(10.0, -3.0 * rng.uniform());
  NormalStream normal(s, 8);
  auto flow = [&](std::uint64_t seed) {
    std::vector<SamplePath> paths;
    for (std::size_t i = 0; i < n; ++i) {
      auto p = gen_noise(NoiseSpec::bm(), 1, tg, seed, i);
      std::vector<double> v(tg.size());
      const double x0 = normal();
      for (std::size_t k = 0; k < tg.size(); ++k)
        v[k] = x0 + p(k, 0);
      paths.emplace_back(tg, 1, std::move(v));
    }
    return EmpiricalMeasureFlow::from_paths(paths);
  };
  auto mu = flow(derive_seed(s, { 1 }));
  if (s % 2 == 0)
    return { mu, flow(derive_seed(s, { 2 })) };
  auto nu = mu;
  const auto wiggle = flow(derive_seed(s, { 3 }));
  for (std::size_t k = 0; k < tg.size(); ++k)
    for (std::size_t i = 0; i < n; ++i)
      nu.value(k, i)[0] += scale * wiggle.value(k, i)[0];
  return { mu, nu };
}

Outcome
measure_flow_inequalities()
{
  const double beta = 0.45, slack = 1e-9;
  std::size_t embedding_fail[2] = { 0, 0 }, bound_fail = 0;
  double worst_excess = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto [mu, nu] = flow_instance(s);
    const auto& tg = mu.grid();
    const double path = path_w1(mu, nu, beta);
    const double lhs = flow_distance(mu, nu, beta);
    if (lhs > path + slack) {
      ++embedding_fail[s % 2];
      worst_excess = std::max(worst_excess, lhs / path);
    }
    const double w0 = w1_1d(mu.marginal(0), nu.marginal(0));
    for (std::size_t k = 0; k < tg.size(); ++k)
      if (w1_1d(mu.marginal(k), nu.marginal(k)) > w0 + std::pow(tg.horizon(), beta) * path + slack) {
        ++bound_fail;
        break;
      }
  }
  const std::size_t total = embedding_fail[0] + embedding_fail[1];
  std::string detail = "embedding violated on " + std::to_string(total) + "/50 (independent pairs " +
                       std::to_string(embedding_fail[0]) + "/25, perturbed pairs " +
                       std::to_string(embedding_fail[1]) + "/25";
  if (total > 0)
    detail += ", worst ratio " + fmt(worst_excess);
  detail += "); marginal bound violated on " + std::to_string(bound_fail) + "/50";
  return { total == 0 && bound_fail == 0, detail };
}

// ------------------------------------------------------------------------- 7

Outcome
mean_field_convergence()
{
  const auto cfg = config("convergence.toml");
  const auto res = run_convergence_study(cfg);
  std::string detail = "median sup W1";
  for (std::size_t j = 0; j < cfg.n_list.size(); ++j)
    detail += " N=" + std::to_string(cfg.n_list[j]) + ": " + fmt(res.median_sup_w1[j]);
  const bool hurst_ok = cfg.z_noise.hurst < hurst_threshold(-1.0);
  return { res.strictly_decreasing && res.reference_converged && hurst_ok,
           detail + "; reference " + (res.reference_converged ? "converged" : "not converged") };
}

// ------------------------------------------------------------------------- 8

Outcome
regularisation_demo()
{
  const auto res = run_regularisation_demo(config("regularisation_demo.toml"));
  std::size_t completed = 0;
  double min_dist = std::numeric_limits<double>::infinity();
  for (const auto& r : res.with_noise) {
    completed += r.tripped ? 0 : 1;
    min_dist = std::min(min_dist, r.min_shifted_distance);
  }
  const bool ok = res.without_noise.tripped && completed == res.with_noise.size() && res.with_noise.size() == 10 &&
                  min_dist > 0.0;
  return { ok, std::string("Z = 0 ") + (res.without_noise.tripped ? "tripped at t = " + fmt(res.without_noise.trip_time)
                                                                  : "did not trip") +
                 "; Z = fBm completed " + std::to_string(completed) + "/" + std::to_string(res.with_noise.size()) +
                 ", min shifted distance " + fmt(min_dist) };
}

// ------------------------------------------------------------------------- 9

Outcome
stability_in_law()
{
  const auto cfg = config("stability.toml");
  const auto res = run_stability_study(cfg);
  bool ok = res.slopes.size() == 2;
  std::string detail;
  for (std::size_t r = 0; r < res.slopes.size(); ++r) {
    std::vector<StabilityRow> rows;
    for (const auto& row : res.rows)
      if (row.resolution == r)
        rows.push_back(row);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.delta < b.delta; });
    bool monotone = rows.front().delta == 0.0 && rows.front().output_sup_w1 <= 2 * cfg.solver.picard_tol;
    for (std::size_t j = 1; j < rows.size(); ++j)
      monotone = monotone && rows[j].output_sup_w1 > rows[j - 1].output_sup_w1;
    for (const auto& row : rows)
      ok = ok && row.converged;
    ok = ok && monotone && std::isfinite(res.slopes[r]);
    detail += "resolution " + std::to_string(r) + " slope " + fmt(res.slopes[r]) +
              (monotone ? " (output -> 0 with delta); " : " (not monotone in delta); ");
  }
  const double ratio = res.slopes.size() == 2 ? res.slopes[1] / res.slopes[0] : std::nan("");
  ok = ok && ratio >= 0.5 && ratio <= 2.0;
  return { ok, detail + "slope ratio " + fmt(ratio) + " (within [0.5, 2])" };
}

// ------------------------------------------------------------------------ 10

Outcome
kernel_diagnostics()
{
  const bool exact =
    hurst_threshold(0.0) == 0.25 && hurst_threshold(-1.0) == 1.0 / 6.0 && hurst_threshold(-2.0) == 0.125;
  const auto res = run_besov_check({ -0.5, -1.0, -1.5 });
  double worst = 0.0;
  for (double s : res.spreads)
    worst = std::max(worst, s);
  return { exact && worst < 3.0, std::string("hurst thresholds ") + (exact ? "exact" : "wrong") +
                                   "; block scaling spreads " + fmt(res.spreads[0]) + ", " + fmt(res.spreads[1]) +
                                   ", " + fmt(res.spreads[2]) + " over k in [" + std::to_string(res.k_lo) + ", " +
                                   std::to_string(res.k_hi) + "] (< 3)" };
}

} // namespace

int
main(int argc, char** argv)
{
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
    { "averaged-field identity and two-route agreement", averaged_field_identity },
    { "sewing rate", sewing_rate_fit },
    { "linear mean-field oracle", linear_oracle },
    { "particle and mean-field identification", particle_identification },
    { "transport oracles", transport_oracles },
    { "measure-flow inequalities", measure_flow_inequalities },
    { "mean-field convergence", mean_field_convergence },
    { "regularisation demo", regularisation_demo },
    { "stability in law", stability_in_law },
    { "kernel diagnostics", kernel_diagnostics },
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i)
    only.insert(std::stoul(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1))
      continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = { false, std::string("exception: ") + e.what() };
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += out.pass ? 0 : 1;
    std::cout << (out.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << out.detail
              << " [" << fmt(secs, 3) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
