#include "mfy/harness/studies.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

using namespace mfy;
namespace fs = std::filesystem;

namespace {

fs::path
scratch(const std::string& name)
{
  const auto dir = fs::temp_directory_path() / ("mfy_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string
slurp(const fs::path& file)
{
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void
spill(const fs::path& file, const std::string& text)
{
  std::ofstream(file) << text;
}

// exit status of the CLI, with stdout and stderr discarded
int
cli(const std::string& args, const std::string& env = "")
{
  const std::string cmd = env + " " + MFY_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExperimentConfig
small(std::string kernel)
{
  ExperimentConfig c;
  c.kernel = std::move(kernel);
  c.z_steps = 256;
  c.n_steps = 32;
  c.half_width = 8.0;
  c.n_cells = 1024;
  c.initial_std = 0.5;
  c.input_noise_scale = 0.5;
  c.n_list = { 8, 16 };
  c.reference_size = 64;
  c.seeds = 2;
  c.stability_atoms = 32;
  c.deltas = { 0.0, 0.05, 0.1 };
  return c;
}

// the same small study expressed as a config file
const char* kSmallToml = R"(seed = 11
[kernel]
spec = "power_law:-1,eps=0.05"
[z]
kind = "fbm"
hurst = 0.1
n_steps = 256
[time]
n_steps = 32
[space]
half_width = 8.0
n_cells = 1024
[particles]
initial_std = 0.5
n_list = [8, 16]
reference_size = 64
seeds = 2
[particles.noise]
kind = "bm"
scale = 0.5
)";

} // namespace

TEST(Config, DefaultsRoundTrip)
{
  const ExperimentConfig c;
  const auto text = emit_config(c);
  EXPECT_EQ(parse_config(text), c);
  EXPECT_EQ(emit_config(parse_config(text)), text);
}

TEST(Config, ShippedConfigsRoundTrip)
{
  for (const auto& entry : fs::directory_iterator(MFY_CONFIG_DIR)) {
    if (entry.path().extension() != ".toml")
      continue;
    const auto c = load_config(entry.path());
    EXPECT_EQ(parse_config(emit_config(c)), c) << entry.path();
    EXPECT_NO_THROW(c.validate()) << entry.path();
  }
}

TEST(Config, EditedValuesSurviveRoundTrip)
{
  auto c = small("lennard_jones:6,eps=0.1");
  c.solver.drift_mode = DriftMode::binned;
  c.solver.self_interaction = false;
  c.perturbation = Perturbation::shift;
  c.z_noise = NoiseSpec::fbm(0.37);
  c.deltas = { 0.0, 0.1 / 3.0 };
  EXPECT_EQ(parse_config(emit_config(c)), c);
}

TEST(Config, RejectsBadInput)
{
  EXPECT_THROW(parse_config("seed = ["), InvalidInput);
  EXPECT_THROW(parse_config("seed = -1"), InvalidInput);
  EXPECT_THROW(parse_config("[kernel]\nspec = \"bogus:1\""), InvalidInput);
  EXPECT_THROW(parse_config("[kernel]\nspec = \"dirac:eps=0.5\""), InvalidInput);
  EXPECT_THROW(parse_config("[z]\nhurst = 1.5"), InvalidInput);
  EXPECT_THROW(parse_config("[time]\nn_steps = 3"), InvalidInput);
  EXPECT_THROW(parse_config("[solver]\nbeta = 0.9"), InvalidInput);
  EXPECT_THROW(parse_config("[stability]\nperturbation = \"twist\""), InvalidInput);
  EXPECT_THROW(load_config("/nonexistent/config.toml"), InvalidInput);
}

TEST(Config, WarnsAboveHurstThreshold)
{
  auto c = small("power_law:-1,eps=0.05");
  EXPECT_TRUE(c.warnings().empty());
  c.z_noise = NoiseSpec::fbm(0.4);
  EXPECT_EQ(c.warnings().size(), 1u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, SeedPrecedence)
{
  ::unsetenv("MFY_SEED");
  EXPECT_EQ(effective_seed(5, std::nullopt), 5u);
  ::setenv("MFY_SEED", "17", 1);
  EXPECT_EQ(effective_seed(5, std::nullopt), 17u);
  EXPECT_EQ(effective_seed(5, 23), 23u);
  ::setenv("MFY_SEED", "nope", 1);
  EXPECT_THROW(effective_seed(5, std::nullopt), InvalidInput);
  ::unsetenv("MFY_SEED");
}

TEST(Studies, ZeroKernelConvergenceMatchesInputs)
{
  const auto res = run_convergence_study(small("zero"));
  EXPECT_TRUE(res.reference_converged);
  for (const auto& r : res.rows) {
    EXPECT_EQ(r.sup_w1, r.input_sup_w1);
    EXPECT_FALSE(r.blew_up);
  }
}

TEST(Studies, ConvergenceCsvIsByteReproducible)
{
  const auto c = small("power_law:-1,eps=0.05");
  const auto a = scratch("conv_a"), b = scratch("conv_b");
  write_convergence_outputs(run_convergence_study(c), c, a);
  write_convergence_outputs(run_convergence_study(c, 2), c, b);
  for (const char* f : { "convergence.csv", "convergence_median.csv", "reference_gaps.csv", "convergence.svg" })
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_NE(slurp(a / "convergence.csv").find("sup_marginal_w1"), std::string::npos);
}

TEST(Studies, ZeroKernelStabilityIsTheIdentity)
{
  auto c = small("zero");
  c.perturbation = Perturbation::shift;
  const auto res = run_stability_study(c);
  for (const auto& r : res.rows) {
    EXPECT_NEAR(r.output_sup_w1, r.input_w1, 1e-12);
    EXPECT_TRUE(r.converged);
  }
  EXPECT_NEAR(res.slopes[0], 1.0, 1e-10);
}

TEST(Studies, UnperturbedStabilityRowVanishes)
{
  const auto c = small("power_law:-1,eps=0.05");
  const auto res = run_stability_study(c, 1, 1);
  ASSERT_EQ(res.rows.front().delta, 0.0);
  EXPECT_LE(res.rows.front().output_sup_w1, 2 * c.solver.picard_tol);
}

TEST(Studies, SmoothKernelDemoCompletesBothRuns)
{
  auto c = small("dirac,eps=0.5");
  c.seeds = 3;
  const auto res = run_regularisation_demo(c);
  EXPECT_FALSE(res.without_noise.tripped);
  for (const auto& r : res.with_noise) {
    EXPECT_FALSE(r.tripped);
    EXPECT_GT(r.min_shifted_distance, 0.0);
    EXPECT_LT(r.max_drift, 1.0);
  }
}

TEST(Cli, ExitCodes)
{
  const auto dir = scratch("cli");
  const auto out = (dir / "out").string();
  EXPECT_EQ(cli("--help"), 0);
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("gen-fbm --bogus-flag"), 2);
  EXPECT_EQ(cli("--config /nonexistent.toml gen-fbm"), 2);
  spill(dir / "broken.toml", "seed = [");
  EXPECT_EQ(cli("--config " + (dir / "broken.toml").string() + " gen-fbm --out " + out), 2);
  EXPECT_EQ(cli("gen-fbm --steps 64 --out " + out), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "path.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "path.bin"));

  spill(dir / "slow.toml", std::string(kSmallToml) + "[solver]\nmax_iters = 1\n");
  EXPECT_EQ(cli("--config " + (dir / "slow.toml").string() + " solve-mkv --atoms 16 --out " + out), 3);

  spill(dir / "wild.toml", std::string(kSmallToml) + "[solver]\nblow_up_factor = 0.01\n");
  EXPECT_EQ(cli("--config " + (dir / "wild.toml").string() + " particles --atoms 16 --out " + out), 4);

  spill(dir / "ok.toml", kSmallToml);
  EXPECT_EQ(cli("--config " + (dir / "ok.toml").string() + " particles --atoms 16 --out " + out), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "marginal_summary.csv"));
}

TEST(Cli, SeedFlagAndEnvironmentAreReproducible)
{
  const auto dir = scratch("seed");
  auto run = [&](const std::string& name, const std::string& args, const std::string& env = "") {
    const auto out = dir / name;
    EXPECT_EQ(cli("gen-fbm --steps 64 --out " + out.string() + " " + args, env), 0);
    return slurp(out / "path.csv");
  };
  const auto a = run("a", "--seed 9");
  EXPECT_EQ(run("b", "--seed 9"), a);
  EXPECT_NE(run("c", "--seed 10"), a);
  EXPECT_EQ(run("d", "", "MFY_SEED=9"), a);
  EXPECT_EQ(run("e", "--seed 9", "MFY_SEED=10"), a);
}

TEST(Cli, StudiesWriteReproducibleCsv)
{
  const auto dir = scratch("study");
  spill(dir / "c.toml", kSmallToml);
  const auto cfg = (dir / "c.toml").string();
  for (const char* name : { "a", "b" })
    ASSERT_EQ(cli("--config " + cfg + " convergence-study --out " + (dir / name).string()), 0);
  EXPECT_EQ(slurp(dir / "a" / "convergence.csv"), slurp(dir / "b" / "convergence.csv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "convergence.svg"));
}
