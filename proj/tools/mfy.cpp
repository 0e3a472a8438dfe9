#include "mfy/harness/studies.hpp"
#include "mfy/io.hpp"

#include <CLI11.hpp>
#include <iostream>

namespace {

enum ExitCode : int
{
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kNotConverged = 3,
  kBlowUp = 4
};

struct Globals
{
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 1;
  std::string kernel;
};

mfy::ExperimentConfig
resolve(const Globals& g)
{
  auto cfg = g.config.empty() ? mfy::ExperimentConfig{} : mfy::load_config(g.config);
  cfg.seed = mfy::effective_seed(cfg.seed, g.seed);
  if (!g.kernel.empty())
    cfg.kernel = g.kernel;
  if (!g.out.empty())
    cfg.output_dir = g.out;
  cfg.validate();
  for (const auto& w : cfg.warnings())
    std::cerr << "warning: " << w << '\n';
  return cfg;
}

void
write_marginal_summary(const std::filesystem::path& file, const mfy::EmpiricalMeasureFlow& flow)
{
  std::vector<std::string> header{ "t" };
  for (std::size_t c = 0; c < flow.dim(); ++c)
    for (const char* s : { "mean_", "std_", "min_", "max_" })
      header.push_back(s + std::to_string(c + 1));
  mfy::CsvWriter csv(file, header);
  const double n = static_cast<double>(flow.atoms());
  for (std::size_t k = 0; k < flow.grid().size(); ++k) {
    std::vector<double> row{ flow.grid().time(k) };
    for (std::size_t c = 0; c < flow.dim(); ++c) {
      double sum = 0.0, sq = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = 0; i < flow.atoms(); ++i) {
        const double v = flow.value(k, i)[c];
        sum += v;
        sq += v * v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const double mean = sum / n;
      row.insert(row.end(), { mean, std::sqrt(std::max(0.0, sq / n - mean * mean)), lo, hi });
    }
    csv.row(row);
  }
}

void
write_gamma_norm(const std::filesystem::path& file, const mfy::GammaNorm& gn)
{
  mfy::CsvWriter csv(file, { "gamma", "alpha", "value", "sup_value", "sup_gradient", "lipschitz",
                             "gradient_lipschitz", "fitted_time_exponent" });
  csv.row(std::vector<double>{ gn.gamma, static_cast<double>(gn.alpha), gn.value, gn.components[0],
                               gn.components[1], gn.components[2], gn.components[3], gn.fitted_time_exponent });
}

} // namespace

int
main(int argc, char** argv)
{
  CLI::App app{ "Regularised mean-field particle systems: simulation and diagnostics" };
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "TOML experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed (overrides MFY_SEED and the config)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads for independent rows")->check(CLI::PositiveNumber);
  app.add_option("--kernel", g.kernel, "kernel spec, e.g. power_law:-1,eps=0.02");

  std::string noise_kind = "fbm";
  double hurst = 0.1;
  std::size_t steps = 1024, dim = 1;
  double horizon = 1.0;
  auto* gen = app.add_subcommand("gen-fbm", "sample a noise path (CSV and binary)");
  gen->add_option("--kind", noise_kind, "fbm, bm or zero")->check(CLI::IsMember({ "fbm", "bm", "zero" }));
  gen->add_option("--hurst", hurst, "Hurst index");
  gen->add_option("--steps", steps, "number of time steps");
  gen->add_option("--horizon", horizon, "time horizon T");
  gen->add_option("--dim", dim, "dimension");

  std::string route = "direct";
  auto* avg = app.add_subcommand("averaged-field", "compute the averaged field along Z");
  avg->add_option("--route", route, "direct or convolution")->check(CLI::IsMember({ "direct", "convolution" }));

  auto* sew = app.add_subcommand("sewing-study", "germ-error rate of the nonlinear Young integral");

  std::size_t atoms = 256;
  auto* mkv = app.add_subcommand("solve-mkv", "McKean-Vlasov fixed point by Picard iteration");
  mkv->add_option("--atoms", atoms, "number of input samples M");

  std::string inputs_file;
  auto* part = app.add_subcommand("particles", "simulate the N-particle system");
  part->add_option("--atoms", atoms, "number of particles N");
  part->add_option("--inputs", inputs_file, "flow file: time-0 values are x, increments are B")
    ->check(CLI::ExistingFile);

  auto* conv = app.add_subcommand("convergence-study", "mean-field convergence against a large reference");
  auto* demo = app.add_subcommand("regularisation-demo", "near-collision runs with and without Z");
  auto* stab = app.add_subcommand("stability-study", "output W1 against input perturbation");

  std::vector<double> sigmas{ -0.5, -1.0, -1.5 };
  auto* besov = app.add_subcommand("besov-check", "Littlewood-Paley scaling of power-law kernels");
  besov->add_option("--sigma", sigmas, "kernel orders");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    const auto cfg = resolve(g);
    const std::filesystem::path out = cfg.output_dir;
    std::filesystem::create_directories(out);

    if (*gen) {
      mfy::NoiseSpec spec{ mfy::parse_noise_kind(noise_kind), hurst };
      const mfy::TimeGrid grid(horizon, steps);
      const auto path = mfy::gen_noise(spec, dim, grid, cfg.seed, mfy::streams::kRegularising);
      mfy::write_path_csv(out / "path.csv", path);
      mfy::write_path_binary(out / "path.bin", path, spec);
      return kOk;
    }
    if (*avg) {
      const auto tgrid = cfg.time_grid();
      const auto sgrid = cfg.spatial_grid();
      const auto z = mfy::sample_z(cfg, cfg.seed);
      const auto field =
        route == "direct"
          ? mfy::averaged_field_direct(cfg.make_kernel(), z, sgrid, tgrid, true)
          : mfy::averaged_field_convolution(cfg.make_kernel(), mfy::occupation_increments(z, sgrid, tgrid), sgrid,
                                            true);
      mfy::write_averaged_field_binary(out / "field.bin", field, cfg.z_noise);
      mfy::write_path_binary(out / "z.bin", z, cfg.z_noise);
      write_gamma_norm(out / "gamma_norm.csv", mfy::gamma_norm(field, cfg.solver.gamma, 2, 64, cfg.seed));
      if (field.clamp_count() > 0)
        std::cerr << "warning: " << field.clamp_count() << " off-grid queries were clamped\n";
      return kOk;
    }
    if (*sew) {
      const auto st = mfy::run_sewing_study(cfg);
      mfy::write_sewing_outputs(st, out);
      std::cout << "sewing exponent " << st.report.exponent << " (threshold " << st.threshold << ")\n";
      return st.converged ? kOk : kNotConverged;
    }
    if (*mkv) {
      const auto tgrid = cfg.time_grid();
      const auto z = mfy::sample_z(cfg, cfg.seed);
      const auto field = mfy::build_field(cfg, z, tgrid, cfg.spatial_grid(), true);
      const auto in = mfy::sample_inputs(cfg, tgrid, atoms, mfy::derive_seed(cfg.seed, { 5 }));
      const auto res = mfy::solve_mkv(field, in.x, in.noise, cfg.solver);
      mfy::write_flow_binary(out / "flow.bin", res.flow, cfg.input_noise);
      {
        mfy::CsvWriter csv(out / "picard_gaps.csv", { "iteration", "gap" });
        for (std::size_t i = 0; i < res.gaps.size(); ++i)
          csv.row(std::vector<double>{ static_cast<double>(i + 1), res.gaps[i] });
      }
      const auto gn = mfy::gamma_norm(field, cfg.solver.gamma, 2, 64, cfg.seed);
      write_gamma_norm(out / "gamma_norm.csv", gn);
      const auto growth = mfy::growth_check(res.flow.atom(0), res.flow, in.noise.atom(0), gn.value, cfg.solver);
      mfy::CsvWriter csv(out / "growth.csv",
                         { "y_seminorm", "mu_seminorm", "noise_seminorm", "gamma_norm", "ratio", "bar_h" });
      csv.row(std::vector<double>{ growth.y_seminorm, growth.mu_seminorm, growth.noise_seminorm, growth.gamma_norm,
                                   growth.ratio,
                                   mfy::bar_h(gn.value, cfg.solver.gamma, cfg.solver.step_constant_C,
                                              cfg.horizon) });
      if (!res.converged) {
        std::cerr << "Picard iteration did not converge in " << cfg.solver.max_iters << " iterations\n";
        return kNotConverged;
      }
      return kOk;
    }
    if (*part) {
      const auto tgrid = cfg.time_grid();
      const auto z = mfy::sample_z(cfg, cfg.seed);
      const auto field = mfy::build_field(cfg, z, tgrid, cfg.spatial_grid());
      mfy::ParticleInputs in{ {}, mfy::EmpiricalMeasureFlow(tgrid, 1, cfg.dim) };
      if (!inputs_file.empty()) {
        auto flow = mfy::read_flow_binary(inputs_file);
        mfy::require(flow.grid() == tgrid && flow.dim() == cfg.dim, "particles: input flow does not match the config grid");
        const auto x0 = flow.marginal(0);
        in.x.assign(x0.begin(), x0.end());
        in.noise = std::move(flow);
      } else {
        in = mfy::sample_inputs(cfg, tgrid, atoms, mfy::derive_seed(cfg.seed, { 6 }));
      }
      const auto y = mfy::simulate_particles(field, in.x, in.noise, cfg.solver);
      mfy::write_flow_binary(out / "atoms.bin", y, cfg.input_noise);
      write_marginal_summary(out / "marginal_summary.csv", y);
      return kOk;
    }
    if (*conv) {
      const auto res = mfy::run_convergence_study(cfg, g.threads);
      mfy::write_convergence_outputs(res, cfg, out);
      for (std::size_t j = 0; j < cfg.n_list.size(); ++j)
        std::cout << "N = " << cfg.n_list[j] << ": median sup W1 " << res.median_sup_w1[j] << '\n';
      const bool blew = std::any_of(res.rows.begin(), res.rows.end(), [](const auto& r) { return r.blew_up; });
      if (blew)
        return kBlowUp;
      return res.reference_converged ? kOk : kNotConverged;
    }
    if (*demo) {
      const auto res = mfy::run_regularisation_demo(cfg, g.threads);
      mfy::write_demo_outputs(res, out);
      std::size_t trips = 0;
      for (const auto& r : res.with_noise)
        trips += r.tripped ? 1 : 0;
      std::cout << "Z = 0: " << (res.without_noise.tripped ? "guard tripped" : "completed") << "; with Z: " << trips
                << " of " << res.with_noise.size() << " runs tripped\n";
      return kOk;
    }
    if (*stab) {
      const auto res = mfy::run_stability_study(cfg, g.threads);
      mfy::write_stability_outputs(res, out);
      for (std::size_t i = 0; i < res.slopes.size(); ++i)
        std::cout << "resolution " << i << ": slope " << res.slopes[i] << '\n';
      const bool ok = std::all_of(res.rows.begin(), res.rows.end(), [](const auto& r) { return r.converged; });
      return ok ? kOk : kNotConverged;
    }
    if (*besov) {
      const auto res = mfy::run_besov_check(sigmas);
      mfy::write_besov_outputs(res, out);
      for (std::size_t i = 0; i < res.sigmas.size(); ++i)
        std::cout << "sigma = " << res.sigmas[i] << ": spread " << res.spreads[i] << '\n';
      return kOk;
    }
  } catch (const mfy::BlowUp& e) {
    std::cerr << "blow-up: " << e.what() << '\n';
    return kBlowUp;
  } catch (const mfy::InvalidInput& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
