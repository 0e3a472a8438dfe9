#pragma once

#include "mfy/kernels.hpp"
#include "mfy/paths.hpp"
#include "mfy/solver.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <toml.hpp>

namespace mfy {

/// Perturbation applied to the initial law in stability studies.
enum class Perturbation
{
  dilation,
  shift
};

/// One experiment: kernel, regularising path Z, grids, particle inputs,
/// solver settings and study-specific knobs. Times are in units of the
/// horizon's time unit, lengths in the spatial unit of the kernel.
struct ExperimentConfig
{
  std::string kernel = "power_law:-1,eps=0.02";
  std::size_t dim = 1;

  // regularising path Z, sampled on a grid refining the time grid
  NoiseSpec z_noise = NoiseSpec::fbm(0.1);
  std::size_t z_steps = 1024;

  double horizon = 1.0;
  std::size_t n_steps = 256;

  double half_width = 8.0;
  std::size_t n_cells = 2048;

  // particle inputs: x ~ N(0, initial_std^2 I), B = input_noise_scale * noise
  double initial_std = 1.0;
  NoiseSpec input_noise = NoiseSpec::bm();
  double input_noise_scale = 1.0;
  std::vector<std::size_t> n_list{ 64, 256, 1024 };
  std::size_t reference_size = 4096;
  std::size_t seeds = 10;
  std::uint64_t seed = 1;

  SolveConfig solver{};

  // stability study
  std::vector<double> deltas{ 0.0, 0.0125, 0.025, 0.05, 0.1 };
  Perturbation perturbation = Perturbation::dilation;
  std::size_t stability_atoms = 256;

  // regularisation demo
  std::size_t demo_pairs = 1;
  double demo_separation = 8e-4;

  // sewing study
  std::size_t sewing_atoms = 32;
  std::size_t sewing_min_level = 3;
  std::size_t sewing_max_level = 9;

  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;

  Kernel make_kernel() const { return parse_kernel(kernel, dim); }
  TimeGrid time_grid() const { return TimeGrid(horizon, n_steps); }
  TimeGrid z_grid() const { return TimeGrid(horizon, z_steps); }
  SpatialGrid spatial_grid() const { return SpatialGrid(half_width, n_cells, dim); }

  /// Problems that do not stop a run; empty when the config is clean.
  std::vector<std::string> warnings() const
  {
    std::vector<std::string> out;
    const Kernel k = make_kernel();
    if (k.family() == KernelFamily::power_law && z_noise.kind == NoiseKind::fbm &&
        k.sigma() <= 0.0 && z_noise.hurst >= hurst_threshold(k.sigma()))
      out.push_back("Hurst index " + std::to_string(z_noise.hurst) + " is not below the threshold " +
                    std::to_string(hurst_threshold(k.sigma())) + " for sigma = " + std::to_string(k.sigma()));
    return out;
  }

  void validate() const
  {
    make_kernel();
    require(dim >= 1 && dim <= 3, "config: dim must be 1, 2 or 3");
    require(horizon > 0.0, "config: horizon must be positive");
    require(n_steps >= 1 && z_steps % n_steps == 0, "config: z_steps must be a multiple of n_steps");
    require(half_width > 0.0 && is_power_of_two(n_cells) && n_cells >= 4,
            "config: n_cells must be a power of two >= 4 and half_width positive");
    require(initial_std >= 0.0 && input_noise_scale >= 0.0, "config: scales must be non-negative");
    require(!n_list.empty() && seeds >= 1 && reference_size >= 1, "config: empty particle study");
    for (std::size_t n : n_list)
      require(n >= 1, "config: particle counts must be positive");
    require(sewing_min_level <= sewing_max_level, "config: empty sewing level range");
    solver.validate();
  }
};

namespace detail {

inline NoiseSpec
noise_from(const toml::table& t, NoiseSpec fallback)
{
  NoiseSpec s = fallback;
  if (auto k = t["kind"].value<std::string>())
    s.kind = parse_noise_kind(*k);
  s.hurst = t["hurst"].value_or(s.hurst);
  if (s.kind == NoiseKind::fbm)
    require(s.hurst > 0.0 && s.hurst < 1.0, "config: hurst must lie in (0,1)");
  return s;
}

template<class T>
T
get_count(toml::node_view<const toml::node> v, T fallback)
{
  if (!v)
    return fallback;
  const auto x = v.value<std::int64_t>();
  require(x.has_value() && *x >= 0, "config: expected a non-negative integer");
  return static_cast<T>(*x);
}

inline toml::array
to_array(const std::vector<std::size_t>& v)
{
  toml::array a;
  for (auto x : v)
    a.push_back(static_cast<std::int64_t>(x));
  return a;
}

inline toml::array
to_array(const std::vector<double>& v)
{
  toml::array a;
  for (auto x : v)
    a.push_back(x);
  return a;
}

} // namespace detail

/// Unknown keys are ignored; missing keys keep their defaults.
inline ExperimentConfig
parse_config(std::string_view text)
{
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config: " << e.description() << " at line " << e.source().begin.line;
    throw InvalidInput(os.str());
  }
  const toml::table& r = root;
  ExperimentConfig c;
  c.seed = detail::get_count<std::uint64_t>(r["seed"], c.seed);
  c.output_dir = r["output_dir"].value_or(c.output_dir);
  c.kernel = r["kernel"]["spec"].value_or(c.kernel);
  c.dim = detail::get_count(r["space"]["dim"], c.dim);
  if (auto t = r["z"].as_table())
    c.z_noise = detail::noise_from(*t, c.z_noise);
  c.z_steps = detail::get_count(r["z"]["n_steps"], c.z_steps);
  c.horizon = r["time"]["horizon"].value_or(c.horizon);
  c.n_steps = detail::get_count(r["time"]["n_steps"], c.n_steps);
  c.half_width = r["space"]["half_width"].value_or(c.half_width);
  c.n_cells = detail::get_count(r["space"]["n_cells"], c.n_cells);

  const auto p = r["particles"];
  c.initial_std = p["initial_std"].value_or(c.initial_std);
  if (auto t = p["noise"].as_table())
    c.input_noise = detail::noise_from(*t, c.input_noise);
  c.input_noise_scale = p["noise"]["scale"].value_or(c.input_noise_scale);
  if (auto a = p["n_list"].as_array()) {
    c.n_list.clear();
    for (const auto& e : *a) {
      const auto v = e.value<std::int64_t>();
      require(v.has_value() && *v > 0, "config: particles.n_list must hold positive integers");
      c.n_list.push_back(static_cast<std::size_t>(*v));
    }
  }
  c.reference_size = detail::get_count(p["reference_size"], c.reference_size);
  c.seeds = detail::get_count(p["seeds"], c.seeds);

  const auto s = r["solver"];
  c.solver.gamma = s["gamma"].value_or(c.solver.gamma);
  c.solver.beta = s["beta"].value_or(c.solver.beta);
  c.solver.eta = s["eta"].value_or(c.solver.eta);
  c.solver.picard_tol = s["picard_tol"].value_or(c.solver.picard_tol);
  c.solver.max_iters = detail::get_count(s["max_iters"], c.solver.max_iters);
  c.solver.step_constant_C = s["step_constant"].value_or(c.solver.step_constant_C);
  if (auto m = s["drift_mode"].value<std::string>())
    c.solver.drift_mode = parse_drift_mode(*m);
  c.solver.binned_threshold = detail::get_count(s["binned_threshold"], c.solver.binned_threshold);
  c.solver.self_interaction = s["self_interaction"].value_or(c.solver.self_interaction);
  c.solver.blow_up_factor = s["blow_up_factor"].value_or(c.solver.blow_up_factor);
  c.solver.metric.n_proj = detail::get_count(s["projections"], c.solver.metric.n_proj);

  const auto st = r["stability"];
  if (auto a = st["deltas"].as_array()) {
    c.deltas.clear();
    for (const auto& e : *a) {
      const auto v = e.value<double>();
      require(v.has_value(), "config: stability.deltas must hold numbers");
      c.deltas.push_back(*v);
    }
  }
  if (auto m = st["perturbation"].value<std::string>()) {
    require(*m == "dilation" || *m == "shift", "config: perturbation must be dilation or shift");
    c.perturbation = *m == "shift" ? Perturbation::shift : Perturbation::dilation;
  }
  c.stability_atoms = detail::get_count(st["atoms"], c.stability_atoms);

  c.demo_pairs = detail::get_count(r["demo"]["pairs"], c.demo_pairs);
  c.demo_separation = r["demo"]["separation"].value_or(c.demo_separation);

  c.sewing_atoms = detail::get_count(r["sewing"]["atoms"], c.sewing_atoms);
  c.sewing_min_level = detail::get_count(r["sewing"]["min_level"], c.sewing_min_level);
  c.sewing_max_level = detail::get_count(r["sewing"]["max_level"], c.sewing_max_level);
  c.validate();
  return c;
}

inline std::string
emit_config(const ExperimentConfig& c)
{
  auto noise = [](NoiseSpec n) {
    return toml::table{ { "kind", to_string(n.kind) }, { "hurst", n.hurst } };
  };
  toml::table p{ { "initial_std", c.initial_std },
                 { "n_list", detail::to_array(c.n_list) },
                 { "reference_size", static_cast<std::int64_t>(c.reference_size) },
                 { "seeds", static_cast<std::int64_t>(c.seeds) } };
  toml::table pn = noise(c.input_noise);
  pn.insert("scale", c.input_noise_scale);
  p.insert("noise", pn);
  toml::table z = noise(c.z_noise);
  z.insert("n_steps", static_cast<std::int64_t>(c.z_steps));
  const toml::table root{
    { "seed", static_cast<std::int64_t>(c.seed) },
    { "output_dir", c.output_dir },
    { "kernel", toml::table{ { "spec", c.kernel } } },
    { "z", z },
    { "time", toml::table{ { "horizon", c.horizon }, { "n_steps", static_cast<std::int64_t>(c.n_steps) } } },
    { "space",
      toml::table{ { "dim", static_cast<std::int64_t>(c.dim) },
                   { "half_width", c.half_width },
                   { "n_cells", static_cast<std::int64_t>(c.n_cells) } } },
    { "particles", p },
    { "solver",
      toml::table{ { "gamma", c.solver.gamma },
                   { "beta", c.solver.beta },
                   { "eta", c.solver.eta },
                   { "picard_tol", c.solver.picard_tol },
                   { "max_iters", static_cast<std::int64_t>(c.solver.max_iters) },
                   { "step_constant", c.solver.step_constant_C },
                   { "drift_mode", to_string(c.solver.drift_mode) },
                   { "binned_threshold", static_cast<std::int64_t>(c.solver.binned_threshold) },
                   { "self_interaction", c.solver.self_interaction },
                   { "blow_up_factor", c.solver.blow_up_factor },
                   { "projections", static_cast<std::int64_t>(c.solver.metric.n_proj) } } },
    { "stability",
      toml::table{ { "deltas", detail::to_array(c.deltas) },
                   { "perturbation", c.perturbation == Perturbation::shift ? "shift" : "dilation" },
                   { "atoms", static_cast<std::int64_t>(c.stability_atoms) } } },
    { "demo",
      toml::table{ { "pairs", static_cast<std::int64_t>(c.demo_pairs) }, { "separation", c.demo_separation } } },
    { "sewing",
      toml::table{ { "atoms", static_cast<std::int64_t>(c.sewing_atoms) },
                   { "min_level", static_cast<std::int64_t>(c.sewing_min_level) },
                   { "max_level", static_cast<std::int64_t>(c.sewing_max_level) } } },
  };
  std::ostringstream os;
  os << root << '\n';
  return os.str();
}

inline ExperimentConfig
load_config(const std::filesystem::path& file)
{
  std::ifstream in(file);
  if (!in)
    throw InvalidInput("config: cannot open '" + file.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// The seed actually used: an explicit override, else MFY_SEED, else the
/// config value.
inline std::uint64_t
effective_seed(std::uint64_t config_seed, std::optional<std::uint64_t> flag)
{
  if (flag)
    return *flag;
  if (const char* env = std::getenv("MFY_SEED"); env && *env) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    require(end && *end == '\0', "MFY_SEED must be an unsigned integer");
    return v;
  }
  return config_seed;
}

} // namespace mfy
