#pragma once

#include "mfy/solver.hpp"

namespace mfy {

/// The regularised N-particle system
/// Y^i_{k+1} = Y^i_k + (1/N) sum_j Gamma_{t_k,t_{k+1}}(Y^i_k - Y^j_k) + dB^i_k,
/// with the j = i term dropped when cfg.self_interaction is false.
/// Writes into `y`; when the guard trips, `y` holds every step up to and
/// including the offending one.
inline void
simulate_particles_into(const AveragedField& g, std::span<const double> x, const EmpiricalMeasureFlow& noise,
                        const SolveConfig& cfg, EmpiricalMeasureFlow& y)
{
  detail::check_drivers(g, x, noise);
  const std::size_t n = noise.atoms(), d = noise.dim();
  const auto& grid = g.time_grid();
  const double limit = cfg.blow_up_factor * g.spatial_grid().half_width();
  y = EmpiricalMeasureFlow(grid, n, d);
  std::copy(x.begin(), x.end(), y.marginal(0).begin());
  for (std::size_t i = 0; i < n; ++i)
    detail::guard(y.value(0, i), limit, 0.0, i);
  DriftEvaluator drift(g, cfg.drift_mode, cfg.binned_threshold);
  const std::vector<double> origin(d, 0.0);
  std::vector<double> b(d), self(d), acc(n * d, 0.0);
  for (std::size_t k = 0; k < grid.n_steps(); ++k) {
    drift.prepare(k, k + 1, y.marginal(k));
    if (!cfg.self_interaction)
      g.increment(k, k + 1, origin, self);
    for (std::size_t i = 0; i < n; ++i) {
      drift.evaluate(y.value(k, i), b);
      auto next = y.value(k + 1, i);
      for (std::size_t c = 0; c < d; ++c) {
        double v = b[c];
        if (!cfg.self_interaction)
          v -= self[c] / static_cast<double>(n);
        acc[i * d + c] += v;
        next[c] = detail::compose(x[i * d + c], acc[i * d + c], noise, k + 1, i, c);
      }
      detail::guard(next, limit, grid.time(k + 1), i);
    }
  }
}

inline EmpiricalMeasureFlow
simulate_particles(const AveragedField& g, std::span<const double> x, const EmpiricalMeasureFlow& noise,
                   const SolveConfig& cfg)
{
  EmpiricalMeasureFlow y(noise.grid(), noise.atoms(), noise.dim());
  simulate_particles_into(g, x, noise, cfg, y);
  return y;
}

/// Physical coordinates X^i = Y^i + Z.
inline EmpiricalMeasureFlow
shifted_system(const EmpiricalMeasureFlow& y, const SamplePath& z)
{
  require(y.grid() == z.grid() && y.dim() == z.dim(), "shifted_system: grids do not match");
  EmpiricalMeasureFlow out = y;
  for (std::size_t k = 0; k < y.grid().size(); ++k)
    for (std::size_t i = 0; i < y.atoms(); ++i)
      for (std::size_t c = 0; c < y.dim(); ++c)
        out.value(k, i)[c] += z(k, c);
  return out;
}

} // namespace mfy
