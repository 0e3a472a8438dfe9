#pragma once

#include "mfy/grid.hpp"
#include "mfy/paths.hpp"

namespace mfy {

/// Occupation density of a path over a time window.
///
/// Each time step of length dt contributes dt/2 to the cell of each of its
/// endpoints. Contributions are stored as integer half-step counts, so
/// densities of adjacent windows add up exactly.
class OccupationDensity
{
public:
  OccupationDensity(SpatialGrid grid, double dt, double s, double t)
    : grid_(grid)
    , half_step_(0.5 * dt)
    , s_(s)
    , t_(t)
    , counts_(grid.size(), 0)
  {
  }

  const SpatialGrid& grid() const { return grid_; }
  double start() const { return s_; }
  double end() const { return t_; }
  /// Time represented by one count (half of the path's step length).
  double count_mass() const { return half_step_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::vector<std::uint64_t>& counts() { return counts_; }

  /// Time spent in a cell (units of time).
  double mass(std::size_t cell) const { return static_cast<double>(counts_[cell]) * half_step_; }
  /// Density (time per volume) of a cell.
  double density(std::size_t cell) const { return mass(cell) / grid_.cell_volume(); }

  std::vector<double> densities() const
  {
    std::vector<double> out(counts_.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = density(i);
    return out;
  }

  double total_mass() const
  {
    std::uint64_t total = 0;
    for (auto c : counts_)
      total += c;
    return static_cast<double>(total) * half_step_;
  }

  double l2_norm() const
  {
    double acc = 0.0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      const double d = density(i);
      acc += d * d;
    }
    return std::sqrt(acc * grid_.cell_volume());
  }

  OccupationDensity& operator+=(const OccupationDensity& other)
  {
    require(grid_ == other.grid_ && half_step_ == other.half_step_,
            "OccupationDensity: incompatible densities");
    for (std::size_t i = 0; i < counts_.size(); ++i)
      counts_[i] += other.counts_[i];
    s_ = std::min(s_, other.s_);
    t_ = std::max(t_, other.t_);
    return *this;
  }

private:
  SpatialGrid grid_;
  double half_step_;
  double s_, t_;
  std::vector<std::uint64_t> counts_;
};

namespace detail {

inline std::vector<std::size_t>
cells_of_path(const SamplePath& z, const SpatialGrid& grid, std::size_t first, std::size_t last)
{
  require(z.dim() == grid.dim(), "occupation_measure: path and grid dimensions differ");
  std::vector<std::size_t> cells(last - first + 1);
  for (std::size_t k = first; k <= last; ++k) {
    const std::size_t cell = grid.locate(z.at(k));
    if (cell == grid.size())
      throw OutOfGrid("occupation_measure: path leaves the spatial grid at t = " +
                        std::to_string(z.grid().time(k)),
                      z.grid().time(k));
    cells[k - first] = cell;
  }
  return cells;
}

} // namespace detail

/// Occupation density of Z over the grid window [t_first, t_last] (indices).
inline OccupationDensity
occupation_measure_indices(const SamplePath& z, const SpatialGrid& grid, std::size_t first,
                           std::size_t last)
{
  require(first <= last && last <= z.grid().n_steps(), "occupation_measure: window outside [0,T]");
  OccupationDensity occ(grid, z.grid().dt(), z.grid().time(first), z.grid().time(last));
  if (first == last)
    return occ;
  const auto cells = detail::cells_of_path(z, grid, first, last);
  for (std::size_t k = 0; k + 1 < cells.size(); ++k) {
    ++occ.counts()[cells[k]];
    ++occ.counts()[cells[k + 1]];
  }
  return occ;
}

/// Occupation density of Z over [s, t]; s and t must be grid times.
inline OccupationDensity
occupation_measure(const SamplePath& z, const SpatialGrid& grid, double s, double t)
{
  const auto& g = z.grid();
  return occupation_measure_indices(z, grid, g.index_of(s), g.index_of(t));
}

/// Occupation-density increments over consecutive windows of the coarse grid
/// `windows`, which z's grid must refine.
inline std::vector<OccupationDensity>
occupation_increments(const SamplePath& z, const SpatialGrid& grid, const TimeGrid& windows)
{
  const std::size_t r = windows.refinement_of(z.grid());
  const auto cells = detail::cells_of_path(z, grid, 0, z.grid().n_steps());
  std::vector<OccupationDensity> out;
  out.reserve(windows.n_steps());
  for (std::size_t w = 0; w < windows.n_steps(); ++w) {
    OccupationDensity occ(grid, z.grid().dt(), windows.time(w), windows.time(w + 1));
    for (std::size_t k = w * r; k < (w + 1) * r; ++k) {
      ++occ.counts()[cells[k]];
      ++occ.counts()[cells[k + 1]];
    }
    out.push_back(std::move(occ));
  }
  return out;
}

/// Time regularity of the local time: the supremum over dyadic windows of
/// ||L_{s,t}||_{L^2} / |t - s|^gamma, and the exponent fitted to the mean
/// L^2 norm per dyadic level over lags in [min_lag, max_lag].
inline HolderEstimate
local_time_time_regularity(const SamplePath& z, const SpatialGrid& grid, double gamma,
                           double min_lag = 0.0, double max_lag = 0.0)
{
  require(gamma > 0.0 && gamma < 1.0, "local_time_time_regularity: gamma must lie in (0,1)");
  const auto& g = z.grid();
  const std::size_t n = g.n_steps();
  const auto cells = detail::cells_of_path(z, grid, 0, n);
  if (max_lag <= 0.0)
    max_lag = g.horizon();
  HolderEstimate est;
  std::vector<double> means;
  std::vector<std::uint64_t> counts(grid.size());
  const double vol = grid.cell_volume();
  for (std::size_t len = n; len >= 1; len /= 2) {
    const double tau = g.dt() * static_cast<double>(len);
    double level_sum = 0.0;
    std::size_t windows = 0;
    for (std::size_t start = 0; start + len <= n; start += len) {
      std::vector<std::size_t> touched;
      for (std::size_t k = start; k < start + len; ++k) {
        for (std::size_t c : { cells[k], cells[k + 1] }) {
          if (counts[c]++ == 0)
            touched.push_back(c);
        }
      }
      double acc = 0.0;
      for (std::size_t c : touched) {
        const double d = static_cast<double>(counts[c]) * 0.5 * g.dt() / vol;
        acc += d * d;
        counts[c] = 0;
      }
      const double l2 = std::sqrt(acc * vol);
      est.seminorm = std::max(est.seminorm, l2 / std::pow(tau, gamma));
      level_sum += l2;
      ++windows;
    }
    if (tau >= min_lag * (1 - 1e-12) && tau <= max_lag * (1 + 1e-12)) {
      est.lags_used.push_back(tau);
      means.push_back(level_sum / static_cast<double>(windows));
    }
    if (len == 1)
      break;
  }
  if (est.lags_used.size() >= 2)
    est.fitted_exponent = fit_loglog_slope(est.lags_used, means);
  return est;
}

} // namespace mfy
