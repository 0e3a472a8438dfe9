#pragma once

#include "mfy/nlyi.hpp"
#include "mfy/paths.hpp"

namespace mfy {

struct SolveConfig
{
  double gamma = 0.75;
  double beta = 0.45;
  double eta = 0.5;
  /// stop when sup_t W1 between successive iterates falls below this
  double picard_tol = 1e-8;
  std::size_t max_iters = 64;
  double step_constant_C = 1.0;
  std::uint64_t seed = 0;
  DriftMode drift_mode = DriftMode::automatic;
  std::size_t binned_threshold = 256;
  /// keep the j = i term Gamma_{s,t}(0) in particle sums
  bool self_interaction = true;
  /// the guard trips when |Y| exceeds this multiple of the grid half-width
  double blow_up_factor = 10.0;
  MarginalMetric metric{};

  bool operator==(const SolveConfig&) const = default;

  void validate() const
  {
    require(gamma > 0.5 && gamma < 1.0, "SolveConfig: gamma must lie in (1/2, 1)");
    const double cap = std::min(eta, gamma);
    require(beta > 1.0 - gamma && beta < cap, "SolveConfig: beta must lie in (1 - gamma, min(eta, gamma))");
    require(cap + gamma > 1.0, "SolveConfig: min(eta, gamma) + gamma must exceed 1");
    require(picard_tol > 0.0, "SolveConfig: picard_tol must be positive");
    require(max_iters >= 1, "SolveConfig: max_iters must be positive");
    require(step_constant_C > 0.0, "SolveConfig: step constant must be positive");
    require(blow_up_factor > 0.0, "SolveConfig: blow-up factor must be positive");
  }
};

/// (1 / (2 C ||Gamma||))^{1/gamma} min 1 min T.
inline double
bar_h(double gamma_norm, double gamma, double c, double horizon)
{
  require(gamma > 0.0 && c > 0.0 && horizon > 0.0 && gamma_norm >= 0.0, "bar_h: inputs must be positive");
  const double cap = std::min(1.0, horizon);
  if (gamma_norm == 0.0)
    return cap;
  return std::min(std::pow(1.0 / (2.0 * c * gamma_norm), 1.0 / gamma), cap);
}

namespace detail {

inline void
check_drivers(const AveragedField& g, std::span<const double> x, const EmpiricalMeasureFlow& noise)
{
  require(noise.grid() == g.time_grid(), "solver: noise paths must live on the time grid of Gamma");
  require(noise.dim() == g.dim() && g.components() == g.dim(), "solver: Gamma must be R^d-valued");
  require(x.size() == noise.atoms() * noise.dim(), "solver: need one starting point per noise path");
}

inline void
guard(std::span<const double> y, double limit, double time, std::size_t index)
{
  if (!(norm(y) <= limit))
    throw BlowUp("solution left the guard ball |Y| <= " + std::to_string(limit) + " at t = " +
                   std::to_string(time) + " (atom " + std::to_string(index) + ")",
                 time, index);
}

// Y_k = x + (accumulated drift) + (B_k - B_0): drift-free atoms are
// exactly x + B - B_0.
inline double
compose(double x, double drift, const EmpiricalMeasureFlow& noise, std::size_t k, std::size_t i, std::size_t c)
{
  return x + drift + (noise.value(k, i)[c] - noise.value(0, i)[c]);
}

} // namespace detail

/// One Picard sweep: solves every atom against the frozen flow mu with the
/// explicit germ scheme Y_{k+1} = Y_k + (Gamma_{t_k,t_{k+1}} * mu_{t_k})(Y_k) + dB_k,
/// with the drift accumulated apart from the noise.
inline EmpiricalMeasureFlow
solve_frozen_all(const AveragedField& g, std::span<const double> x, const EmpiricalMeasureFlow& noise,
                 const EmpiricalMeasureFlow& mu, const SolveConfig& cfg)
{
  detail::check_drivers(g, x, noise);
  require(mu.grid() == g.time_grid() && mu.dim() == g.dim(), "solve_frozen: flow grid mismatch");
  const std::size_t n = noise.atoms(), d = noise.dim();
  const auto& grid = g.time_grid();
  const double limit = cfg.blow_up_factor * g.spatial_grid().half_width();
  EmpiricalMeasureFlow y(grid, n, d);
  std::copy(x.begin(), x.end(), y.marginal(0).begin());
  for (std::size_t i = 0; i < n; ++i)
    detail::guard(y.value(0, i), limit, 0.0, i);
  DriftEvaluator drift(g, cfg.drift_mode, cfg.binned_threshold);
  std::vector<double> b(d), acc(n * d, 0.0);
  for (std::size_t k = 0; k < grid.n_steps(); ++k) {
    drift.prepare(k, k + 1, mu.marginal(k));
    for (std::size_t i = 0; i < n; ++i) {
      drift.evaluate(y.value(k, i), b);
      auto next = y.value(k + 1, i);
      for (std::size_t c = 0; c < d; ++c) {
        acc[i * d + c] += b[c];
        next[c] = detail::compose(x[i * d + c], acc[i * d + c], noise, k + 1, i, c);
      }
      detail::guard(next, limit, grid.time(k + 1), i);
    }
  }
  return y;
}

/// Solution of the equation with the measure flow frozen at mu.
inline SamplePath
solve_frozen(const AveragedField& g, std::span<const double> x, const SamplePath& noise,
             const EmpiricalMeasureFlow& mu, const SolveConfig& cfg)
{
  const auto paths = std::vector<SamplePath>{ noise };
  return solve_frozen_all(g, x, EmpiricalMeasureFlow::from_paths(paths), mu, cfg).atom(0);
}

struct GrowthReport
{
  double y_seminorm = 0.0;
  double mu_seminorm = 0.0;
  double noise_seminorm = 0.0;
  double gamma_norm = 0.0;
  double ratio = 0.0;
};

/// [Y]_beta / ((1 + [mu]_beta + [B]_eta) (1 max ||Gamma||)).
inline GrowthReport
growth_check(const SamplePath& y, const EmpiricalMeasureFlow& mu, const SamplePath& noise, double gamma_norm,
             const SolveConfig& cfg)
{
  GrowthReport r;
  r.y_seminorm = holder_seminorm(y, cfg.beta).seminorm;
  r.mu_seminorm = flow_holder_seminorm(mu, cfg.beta, cfg.metric).seminorm;
  r.noise_seminorm = holder_seminorm(noise, cfg.eta).seminorm;
  r.gamma_norm = gamma_norm;
  r.ratio = r.y_seminorm / ((1.0 + r.mu_seminorm + r.noise_seminorm) * std::max(1.0, gamma_norm));
  return r;
}

/// sup over grid times of W1 between the marginals of two flows.
inline double
sup_marginal_gap(const EmpiricalMeasureFlow& a, const EmpiricalMeasureFlow& b, const MarginalMetric& how = {})
{
  double best = 0.0;
  for (std::size_t k = 0; k < a.grid().size(); ++k)
    best = std::max(best, marginal_w1(a.marginal(k), b.marginal(k), a.dim(), how));
  return best;
}

/// Drift-free flow {x_i + B_i - B_i(0)}.
inline EmpiricalMeasureFlow
drift_free_flow(std::span<const double> x, const EmpiricalMeasureFlow& noise)
{
  EmpiricalMeasureFlow out(noise.grid(), noise.atoms(), noise.dim());
  const std::size_t d = noise.dim();
  for (std::size_t k = 0; k < noise.grid().size(); ++k)
    for (std::size_t i = 0; i < noise.atoms(); ++i)
      for (std::size_t c = 0; c < d; ++c)
        out.value(k, i)[c] = detail::compose(x[i * d + c], 0.0, noise, k, i, c);
  return out;
}

struct MkvResult
{
  EmpiricalMeasureFlow flow;
  std::vector<double> gaps;
  bool converged = false;
};

/// Picard iteration mu <- law of the frozen-flow solutions over the M input
/// pairs (x_i, B_i), started from the drift-free flow unless `initial` is given.
inline MkvResult
solve_mkv(const AveragedField& g, std::span<const double> x, const EmpiricalMeasureFlow& noise,
          const SolveConfig& cfg, const EmpiricalMeasureFlow* initial = nullptr)
{
  cfg.validate();
  detail::check_drivers(g, x, noise);
  MkvResult res{ initial ? *initial : drift_free_flow(x, noise), {}, false };
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    auto next = solve_frozen_all(g, x, noise, res.flow, cfg);
    const double gap = sup_marginal_gap(next, res.flow, cfg.metric);
    res.gaps.push_back(gap);
    res.flow = std::move(next);
    if (gap < cfg.picard_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

} // namespace mfy
