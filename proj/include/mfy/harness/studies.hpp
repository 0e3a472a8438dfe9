#pragma once

#include "mfy/harness/config.hpp"
#include "mfy/harness/svg.hpp"
#include "mfy/particles.hpp"

#include <thread>

namespace mfy {

/// Runs body(i) for i in [0, count) on up to `threads` workers. Results must
/// be written to per-index slots so output does not depend on scheduling.
template<class Body>
void
parallel_for(std::size_t count, std::size_t threads, Body&& body)
{
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i)
      body(i);
    return;
  }
  std::atomic<std::size_t> next{ 0 };
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < count; i = next++)
          body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool)
    t.join();
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
}

inline double
median(std::vector<double> v)
{
  require(!v.empty(), "median: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// The regularising path Z of an experiment (shared by every run in it).
inline SamplePath
sample_z(const ExperimentConfig& cfg, std::uint64_t seed)
{
  return gen_noise(cfg.z_noise, cfg.dim, cfg.z_grid(), seed, streams::kRegularising);
}

/// Averaged field of the configured kernel along z by direct quadrature.
inline AveragedField
build_field(const ExperimentConfig& cfg, const SamplePath& z, const TimeGrid& tgrid, const SpatialGrid& sgrid,
            bool with_gradient = false)
{
  return averaged_field_direct(cfg.make_kernel(), z, sgrid, tgrid, with_gradient);
}

struct ParticleInputs
{
  std::vector<double> x;
  EmpiricalMeasureFlow noise;
};

/// n i.i.d. pairs (x_i, B_i): x ~ N(0, initial_std^2 I), B = scale * noise path.
inline ParticleInputs
sample_inputs(const ExperimentConfig& cfg, const TimeGrid& tgrid, std::size_t n, std::uint64_t seed)
{
  const std::size_t d = cfg.dim;
  ParticleInputs in{ std::vector<double>(n * d), EmpiricalMeasureFlow(tgrid, n, d) };
  NormalStream normal(seed, streams::kInitial);
  for (auto& v : in.x)
    v = cfg.initial_std * normal();
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = gen_noise(cfg.input_noise, d, tgrid, seed, streams::kIdiosyncratic + i * d);
    for (std::size_t k = 0; k < tgrid.size(); ++k)
      for (std::size_t c = 0; c < d; ++c)
        in.noise.value(k, i)[c] = cfg.input_noise_scale * b(k, c);
  }
  return in;
}

/// Eight equally spaced grid times after 0 (all of them on short grids).
inline std::vector<std::size_t>
checkpoints(const TimeGrid& grid)
{
  std::vector<std::size_t> out;
  const std::size_t n = grid.n_steps();
  const std::size_t count = std::min<std::size_t>(8, n);
  for (std::size_t j = 1; j <= count; ++j)
    out.push_back(j * n / count);
  return out;
}

// ---------------------------------------------------------------- convergence

struct ConvergenceRow
{
  std::size_t n = 0;
  std::size_t seed_index = 0;
  double sup_w1 = 0.0;
  /// path-space W1 between the first min(n, 64) atoms and 64 reference atoms
  double path_w1 = 0.0;
  double input_x_w1 = 0.0;
  double input_b_w2 = 0.0;
  /// sup over checkpoints of W1 between the drift-free flows
  double input_sup_w1 = 0.0;
  bool blew_up = false;
};

struct ConvergenceResult
{
  std::vector<ConvergenceRow> rows;
  std::vector<double> median_sup_w1;
  bool reference_converged = false;
  std::vector<double> reference_gaps;
  bool strictly_decreasing = false;
};

constexpr std::size_t kPathAtomCap = 64;

inline ConvergenceResult
run_convergence_study(const ExperimentConfig& cfg, std::size_t threads = 1)
{
  cfg.validate();
  const auto tgrid = cfg.time_grid();
  const auto z = sample_z(cfg, cfg.seed);
  const auto field = build_field(cfg, z, tgrid, cfg.spatial_grid());
  const auto times = checkpoints(tgrid);

  const auto ref_in = sample_inputs(cfg, tgrid, cfg.reference_size, derive_seed(cfg.seed, { 0 }));
  auto ref = solve_mkv(field, ref_in.x, ref_in.noise, cfg.solver);
  const auto ref_free = drift_free_flow(ref_in.x, ref_in.noise);
  const auto ref_paths = ref.flow.subset(0, std::min(kPathAtomCap, ref.flow.atoms()));

  ConvergenceResult out;
  out.reference_converged = ref.converged;
  out.reference_gaps = ref.gaps;
  out.rows.resize(cfg.n_list.size() * cfg.seeds);
  const auto& how = cfg.solver.metric;
  parallel_for(out.rows.size(), threads, [&](std::size_t r) {
    ConvergenceRow row;
    row.n = cfg.n_list[r / cfg.seeds];
    row.seed_index = r % cfg.seeds;
    const auto in = sample_inputs(cfg, tgrid, row.n, derive_seed(cfg.seed, { 1, row.seed_index, row.n }));
    row.input_x_w1 = marginal_w1(in.x, ref_in.x, cfg.dim, how);
    row.input_b_w2 = marginal_w2(in.noise.marginal(tgrid.n_steps()), ref_in.noise.marginal(tgrid.n_steps()),
                                 cfg.dim, how);
    row.input_sup_w1 = sup_marginal_w1(drift_free_flow(in.x, in.noise), ref_free, times, how);
    try {
      const auto y = simulate_particles(field, in.x, in.noise, cfg.solver);
      row.sup_w1 = sup_marginal_w1(y, ref.flow, times, how);
      row.path_w1 = path_w1(y.subset(0, std::min(kPathAtomCap, row.n)), ref_paths, cfg.solver.beta);
    } catch (const BlowUp&) {
      row.blew_up = true;
      row.sup_w1 = row.path_w1 = std::numeric_limits<double>::infinity();
    }
    out.rows[r] = row;
  });
  for (std::size_t j = 0; j < cfg.n_list.size(); ++j) {
    std::vector<double> v;
    for (std::size_t s = 0; s < cfg.seeds; ++s)
      v.push_back(out.rows[j * cfg.seeds + s].sup_w1);
    out.median_sup_w1.push_back(median(v));
  }
  out.strictly_decreasing = true;
  for (std::size_t j = 1; j < out.median_sup_w1.size(); ++j)
    out.strictly_decreasing = out.strictly_decreasing && out.median_sup_w1[j] < out.median_sup_w1[j - 1];
  return out;
}

inline void
write_convergence_outputs(const ConvergenceResult& res, const ExperimentConfig& cfg,
                          const std::filesystem::path& dir)
{
  std::filesystem::create_directories(dir);
  {
    CsvWriter csv(dir / "convergence.csv",
                  { "N", "seed", "sup_marginal_w1", "path_w1_capped", "input_x_w1", "input_b_w2", "input_sup_w1",
                    "blew_up" });
    for (const auto& r : res.rows)
      csv.row_strings({ std::to_string(r.n), std::to_string(r.seed_index), format_double(r.sup_w1),
                        format_double(r.path_w1), format_double(r.input_x_w1), format_double(r.input_b_w2),
                        format_double(r.input_sup_w1), r.blew_up ? "1" : "0" });
  }
  {
    CsvWriter csv(dir / "convergence_median.csv", { "N", "median_sup_marginal_w1" });
    for (std::size_t j = 0; j < cfg.n_list.size(); ++j)
      csv.row({ std::vector<double>{ static_cast<double>(cfg.n_list[j]), res.median_sup_w1[j] } });
  }
  {
    CsvWriter csv(dir / "reference_gaps.csv", { "iteration", "gap" });
    for (std::size_t i = 0; i < res.reference_gaps.size(); ++i)
      csv.row({ std::vector<double>{ static_cast<double>(i + 1), res.reference_gaps[i] } });
  }
  PlotSeries s{ "median sup W1", {}, res.median_sup_w1 };
  for (auto n : cfg.n_list)
    s.x.push_back(static_cast<double>(n));
  write_svg(dir / "convergence.svg", svg_plot({ s }, "Mean-field convergence", "N", "sup W1", true));
}

// ------------------------------------------------------- regularisation demo

struct DemoRun
{
  std::string label;
  std::uint64_t seed = 0;
  bool tripped = false;
  double trip_time = std::nan("");
  double max_drift = 0.0;
  double min_shifted_distance = std::numeric_limits<double>::infinity();
  std::size_t clamps = 0;
};

struct DemoResult
{
  DemoRun without_noise;
  std::vector<DemoRun> with_noise;
};

/// Near-colliding pairs of particles with no idiosyncratic noise.
inline std::vector<double>
demo_initial_data(const ExperimentConfig& cfg)
{
  const std::size_t d = cfg.dim;
  std::vector<double> x(2 * cfg.demo_pairs * d, 0.0);
  for (std::size_t p = 0; p < cfg.demo_pairs; ++p) {
    const double centre =
      cfg.demo_pairs == 1 ? 0.0
                          : -0.25 * cfg.half_width + 0.5 * cfg.half_width * static_cast<double>(p) /
                                                       static_cast<double>(cfg.demo_pairs - 1);
    x[(2 * p) * d] = centre - 0.5 * cfg.demo_separation;
    x[(2 * p + 1) * d] = centre + 0.5 * cfg.demo_separation;
  }
  return x;
}

inline DemoRun
run_demo_once(const ExperimentConfig& cfg, const SamplePath& z, std::string label, std::uint64_t seed)
{
  const auto tgrid = cfg.time_grid();
  const auto field = build_field(cfg, z, tgrid, cfg.spatial_grid());
  const auto x = demo_initial_data(cfg);
  const std::size_t n = x.size() / cfg.dim, d = cfg.dim;
  const EmpiricalMeasureFlow noise(tgrid, n, d);
  EmpiricalMeasureFlow y(tgrid, n, d);
  DemoRun run;
  run.label = std::move(label);
  run.seed = seed;
  std::size_t last = tgrid.n_steps();
  try {
    simulate_particles_into(field, x, noise, cfg.solver, y);
  } catch (const BlowUp& e) {
    run.tripped = true;
    run.trip_time = e.time();
    last = tgrid.index_of(e.time());
  }
  const auto zc = z.restricted(tgrid);
  for (std::size_t k = 0; k <= last; ++k) {
    if (k < last)
      for (std::size_t i = 0; i < n; ++i)
        run.max_drift = std::max(run.max_drift, distance(y.value(k + 1, i), y.value(k, i)));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j)
          continue;
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double v = y.value(k, i)[c] - y.value(k, j)[c] + zc(k, c);
          acc += v * v;
        }
        run.min_shifted_distance = std::min(run.min_shifted_distance, std::sqrt(acc));
      }
  }
  run.clamps = field.clamp_count();
  return run;
}

/// Same near-collision data without (Z = 0) and with the configured Z.
inline DemoResult
run_regularisation_demo(const ExperimentConfig& cfg, std::size_t threads = 1)
{
  cfg.validate();
  DemoResult out;
  out.without_noise = run_demo_once(cfg, SamplePath(cfg.z_grid(), cfg.dim), "Z = 0", cfg.seed);
  out.with_noise.resize(cfg.seeds);
  parallel_for(cfg.seeds, threads, [&](std::size_t s) {
    const auto seed = derive_seed(cfg.seed, { 2, s });
    out.with_noise[s] = run_demo_once(cfg, sample_z(cfg, seed), "Z = " + to_string(cfg.z_noise.kind), seed);
  });
  return out;
}

inline void
write_demo_outputs(const DemoResult& res, const std::filesystem::path& dir)
{
  std::filesystem::create_directories(dir);
  CsvWriter csv(dir / "regularisation_demo.csv",
                { "run", "seed", "tripped", "trip_time", "max_step_drift", "min_shifted_distance", "clamps" });
  auto put = [&](const DemoRun& r) {
    csv.row_strings({ r.label, std::to_string(r.seed), r.tripped ? "1" : "0", format_double(r.trip_time),
                      format_double(r.max_drift), format_double(r.min_shifted_distance), std::to_string(r.clamps) });
  };
  put(res.without_noise);
  for (const auto& r : res.with_noise)
    put(r);
}

// ----------------------------------------------------------------- stability

struct StabilityRow
{
  std::size_t resolution = 0;
  double delta = 0.0;
  double input_w1 = 0.0;
  double output_sup_w1 = 0.0;
  bool converged = true;
};

struct StabilityResult
{
  std::vector<StabilityRow> rows;
  /// least-squares slope through the origin of output against input, per resolution
  std::vector<double> slopes;
};

inline std::vector<double>
perturb(const ExperimentConfig& cfg, std::span<const double> x, double delta)
{
  std::vector<double> out(x.begin(), x.end());
  for (auto& v : out)
    v = cfg.perturbation == Perturbation::dilation ? (1.0 + delta) * v : v + delta;
  return out;
}

/// Output W1 between fixed points whose initial laws differ by delta, at the
/// configured resolution and at double the time and space resolution.
inline StabilityResult
run_stability_study(const ExperimentConfig& cfg, std::size_t threads = 1, std::size_t resolutions = 2)
{
  cfg.validate();
  const auto z = sample_z(cfg, cfg.seed);
  StabilityResult out;
  for (std::size_t res = 0; res < resolutions; ++res) {
    const std::size_t factor = std::size_t{ 1 } << res;
    const TimeGrid tgrid(cfg.horizon, cfg.n_steps * factor);
    require(cfg.z_steps % tgrid.n_steps() == 0, "stability study: z_steps must refine every resolution");
    const SpatialGrid sgrid(cfg.half_width, cfg.n_cells * factor, cfg.dim);
    const auto field = build_field(cfg, z, tgrid, sgrid);
    const auto in = sample_inputs(cfg, tgrid, cfg.stability_atoms, derive_seed(cfg.seed, { 3 }));
    const auto base = solve_mkv(field, in.x, in.noise, cfg.solver);
    std::vector<StabilityRow> rows(cfg.deltas.size());
    parallel_for(cfg.deltas.size(), threads, [&](std::size_t j) {
      StabilityRow row;
      row.resolution = res;
      row.delta = cfg.deltas[j];
      const auto xt = perturb(cfg, in.x, row.delta);
      row.input_w1 = marginal_w1(in.x, xt, cfg.dim, cfg.solver.metric);
      const auto other = solve_mkv(field, xt, in.noise, cfg.solver);
      row.output_sup_w1 = sup_marginal_gap(base.flow, other.flow, cfg.solver.metric);
      row.converged = base.converged && other.converged;
      rows[j] = row;
    });
    double sxy = 0.0, sxx = 0.0;
    for (const auto& r : rows) {
      sxy += r.input_w1 * r.output_sup_w1;
      sxx += r.input_w1 * r.input_w1;
    }
    out.slopes.push_back(sxx > 0.0 ? sxy / sxx : std::nan(""));
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
  }
  return out;
}

inline void
write_stability_outputs(const StabilityResult& res, const std::filesystem::path& dir)
{
  std::filesystem::create_directories(dir);
  {
    CsvWriter csv(dir / "stability.csv", { "resolution", "delta", "input_w1", "output_sup_w1", "converged" });
    for (const auto& r : res.rows)
      csv.row_strings({ std::to_string(r.resolution), format_double(r.delta), format_double(r.input_w1),
                        format_double(r.output_sup_w1), r.converged ? "1" : "0" });
  }
  CsvWriter csv(dir / "stability_slopes.csv", { "resolution", "slope" });
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < res.slopes.size(); ++i) {
    csv.row({ std::vector<double>{ static_cast<double>(i), res.slopes[i] } });
    PlotSeries s{ "resolution " + std::to_string(i), {}, {} };
    for (const auto& r : res.rows)
      if (r.resolution == i) {
        s.x.push_back(r.input_w1);
        s.y.push_back(r.output_sup_w1);
      }
    series.push_back(std::move(s));
  }
  write_svg(dir / "stability.svg", svg_plot(series, "Stability in law", "input W1", "output sup W1", false));
}

// -------------------------------------------------------------------- sewing

struct SewingStudy
{
  SewingReport report;
  /// nominal gamma + beta - 0.15
  double threshold = 0.0;
  double fitted_time_exponent = std::nan("");
  double fitted_path_beta = std::nan("");
  double fitted_flow_beta = std::nan("");
  bool converged = false;
};

/// Solves the system on the configured grid (2^L steps), then measures the
/// germ error of atom 0 against the finest Riemann sum.
inline SewingStudy
run_sewing_study(const ExperimentConfig& cfg)
{
  cfg.validate();
  const auto tgrid = cfg.time_grid();
  require(is_power_of_two(tgrid.n_steps()), "sewing study: n_steps must be a power of two");
  const auto z = sample_z(cfg, cfg.seed);
  const auto field = build_field(cfg, z, tgrid, cfg.spatial_grid(), true);
  const auto in = sample_inputs(cfg, tgrid, cfg.sewing_atoms, derive_seed(cfg.seed, { 4 }));
  const auto sol = solve_mkv(field, in.x, in.noise, cfg.solver);
  SewingStudy out;
  out.converged = sol.converged;
  const auto y = sol.flow.atom(0);
  out.report = sewing_rate(field, y, sol.flow, 0, tgrid.n_steps(), cfg.sewing_min_level, cfg.sewing_max_level);
  out.threshold = cfg.solver.gamma + cfg.solver.beta - 0.15;
  out.fitted_time_exponent = gamma_norm(field, cfg.solver.gamma, 2).fitted_time_exponent;
  out.fitted_path_beta = holder_seminorm(y, cfg.solver.beta).fitted_exponent;
  out.fitted_flow_beta = flow_holder_seminorm(sol.flow, cfg.solver.beta, cfg.solver.metric).fitted_exponent;
  return out;
}

inline void
write_sewing_outputs(const SewingStudy& st, const std::filesystem::path& dir)
{
  std::filesystem::create_directories(dir);
  {
    CsvWriter csv(dir / "sewing.csv", { "window_length", "mean_germ_error" });
    for (std::size_t i = 0; i < st.report.errors.size(); ++i)
      csv.row({ std::vector<double>{ st.report.window_lengths[i], st.report.errors[i] } });
  }
  CsvWriter csv(dir / "sewing_summary.csv",
                { "exponent", "threshold", "self_convergence", "fitted_time_exponent", "fitted_path_beta",
                  "fitted_flow_beta", "exact", "converged" });
  csv.row_strings({ format_double(st.report.exponent), format_double(st.threshold),
                    format_double(st.report.self_convergence), format_double(st.fitted_time_exponent),
                    format_double(st.fitted_path_beta), format_double(st.fitted_flow_beta),
                    st.report.exact ? "1" : "0", st.converged ? "1" : "0" });
  write_svg(dir / "sewing.svg", svg_plot({ { "mean germ error", st.report.window_lengths, st.report.errors } },
                                         "Sewing error", "window length", "error", true));
}

// --------------------------------------------------------------------- besov

struct BesovRow
{
  double sigma = 0.0;
  int k = 0;
  double block_l1 = 0.0;
  double scaled = 0.0;
};

struct BesovResult
{
  std::vector<BesovRow> rows;
  /// max / min of the scaled block norms over [k_lo, k_hi], per sigma
  std::vector<double> spreads;
  std::vector<double> sigmas;
  int k_lo = 0, k_hi = 0;
};

/// Smooth cutoff equal to 1 on |x| <= L/4 and 0 beyond L/2; removes the
/// periodic-wrap discontinuity of truncated kernels.
inline double
spatial_taper(double r, double half_width)
{
  const double a = 0.25 * half_width, b = 0.5 * half_width;
  if (r <= a)
    return 1.0;
  if (r >= b)
    return 0.0;
  auto f = [](double u) { return u > 0.0 ? std::exp(-1.0 / u) : 0.0; };
  const double u = (r - a) / (b - a);
  return f(1.0 - u) / (f(1.0 - u) + f(u));
}

/// 2^{(sigma+d)k} ||Delta_k K||_{L^1} of tapered power-law kernels, which a
/// homogeneous kernel keeps constant across k.
inline BesovResult
run_besov_check(const std::vector<double>& sigmas, double half_width = 8.0, std::size_t n_cells = 1 << 16,
                double epsilon = 1.0 / 2048, std::size_t dim = 1, int k_lo = 2, int k_hi = 6)
{
  const SpatialGrid grid(half_width, n_cells, dim);
  const double nyquist = static_cast<double>(n_cells) / (4.0 * half_width);
  const int k_max = static_cast<int>(std::floor(std::log2(nyquist)));
  require(k_hi <= k_max && k_lo >= -1 && k_lo <= k_hi, "besov check: bad dyadic range");
  BesovResult out;
  out.sigmas = sigmas;
  out.k_lo = k_lo;
  out.k_hi = k_hi;
  for (double sigma : sigmas) {
    auto field = evaluate_on_grid(Kernel::power_law(sigma, epsilon, dim), grid);
    std::vector<double> x(dim);
    for (std::size_t node = 0; node < grid.size(); ++node) {
      grid.node(node, x);
      const double w = spatial_taper(norm(x), half_width);
      for (std::size_t c = 0; c < field.components(); ++c)
        field.values()[node * field.components() + c] *= w;
    }
    const auto blocks = besov_block_norms(field, LpNorm::one, k_max);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int k = -1; k <= k_max; ++k) {
      BesovRow row{ sigma, k, blocks[static_cast<std::size_t>(k + 1)], 0.0 };
      row.scaled = std::pow(2.0, (sigma + static_cast<double>(dim)) * k) * row.block_l1;
      if (k >= k_lo && k <= k_hi) {
        lo = std::min(lo, row.scaled);
        hi = std::max(hi, row.scaled);
      }
      out.rows.push_back(row);
    }
    out.spreads.push_back(hi / lo);
  }
  return out;
}

inline void
write_besov_outputs(const BesovResult& res, const std::filesystem::path& dir)
{
  std::filesystem::create_directories(dir);
  {
    CsvWriter csv(dir / "besov_blocks.csv", { "sigma", "k", "block_l1", "scaled" });
    for (const auto& r : res.rows)
      csv.row({ std::vector<double>{ r.sigma, static_cast<double>(r.k), r.block_l1, r.scaled } });
  }
  CsvWriter csv(dir / "besov_summary.csv", { "sigma", "hurst_threshold", "spread", "k_lo", "k_hi" });
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < res.sigmas.size(); ++i) {
    csv.row({ std::vector<double>{ res.sigmas[i], hurst_threshold(res.sigmas[i]), res.spreads[i],
                                   static_cast<double>(res.k_lo), static_cast<double>(res.k_hi) } });
    PlotSeries s{ "sigma = " + format_double(res.sigmas[i]), {}, {} };
    for (const auto& r : res.rows)
      if (r.sigma == res.sigmas[i] && r.k >= 0) {
        s.x.push_back(std::ldexp(1.0, r.k));
        s.y.push_back(r.scaled);
      }
    series.push_back(std::move(s));
  }
  write_svg(dir / "besov.svg", svg_plot(series, "Scaled Littlewood-Paley blocks", "2^k", "scaled L1 norm", true));
}

} // namespace mfy
