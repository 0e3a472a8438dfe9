#pragma once

#include "mfy/core.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <memory>
#include <string>
#include <vector>

namespace mfy {

/// Uniform partition of [0, T] into n_steps intervals.
class TimeGrid
{
public:
  TimeGrid() = default;
  TimeGrid(double horizon, std::size_t n_steps)
    : horizon_(horizon)
    , n_steps_(n_steps)
  {
    require(horizon > 0.0, "TimeGrid: horizon must be positive");
    require(n_steps >= 1, "TimeGrid: need at least one step");
  }

  double horizon() const { return horizon_; }
  std::size_t n_steps() const { return n_steps_; }
  std::size_t size() const { return n_steps_ + 1; }
  double dt() const { return horizon_ / static_cast<double>(n_steps_); }
  double time(std::size_t k) const
  {
    return k == n_steps_ ? horizon_ : horizon_ * static_cast<double>(k) / static_cast<double>(n_steps_);
  }

  /// Index of time t, which must lie on the grid.
  std::size_t index_of(double t) const
  {
    const double r = t / dt();
    const double k = std::round(r);
    require(std::abs(r - k) < 1e-9 && k >= 0.0 && k <= static_cast<double>(n_steps_),
            "TimeGrid: time " + std::to_string(t) + " is not a grid point");
    return static_cast<std::size_t>(k);
  }

  /// Number of fine steps of `fine` per step of this grid; `fine` must refine it.
  std::size_t refinement_of(const TimeGrid& fine) const
  {
    require(std::abs(fine.horizon_ - horizon_) <= 1e-12 * horizon_,
            "TimeGrid: horizons differ");
    require(fine.n_steps_ % n_steps_ == 0, "TimeGrid: grid is not a refinement");
    return fine.n_steps_ / n_steps_;
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b)
  {
    return a.horizon_ == b.horizon_ && a.n_steps_ == b.n_steps_;
  }

private:
  double horizon_ = 1.0;
  std::size_t n_steps_ = 1;
};

/// A path sampled on a TimeGrid with values in R^d, stored row-major.
class SamplePath
{
public:
  SamplePath() = default;
  SamplePath(TimeGrid grid, std::size_t dim)
    : grid_(grid)
    , dim_(dim)
    , values_(grid.size() * dim, 0.0)
  {
    require(dim >= 1, "SamplePath: dimension must be positive");
  }
  SamplePath(TimeGrid grid, std::size_t dim, std::vector<double> values)
    : grid_(grid)
    , dim_(dim)
    , values_(std::move(values))
  {
    require(dim >= 1, "SamplePath: dimension must be positive");
    require(values_.size() == grid.size() * dim, "SamplePath: value count does not match grid");
  }

  const TimeGrid& grid() const { return grid_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return grid_.size(); }

  std::span<const double> at(std::size_t k) const { return { values_.data() + k * dim_, dim_ }; }
  std::span<double> at(std::size_t k) { return { values_.data() + k * dim_, dim_ }; }
  double operator()(std::size_t k, std::size_t c = 0) const { return values_[k * dim_ + c]; }
  double& operator()(std::size_t k, std::size_t c = 0) { return values_[k * dim_ + c]; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Value at index k of a coarser grid that this path's grid refines.
  std::span<const double> at_coarse(const TimeGrid& coarse, std::size_t k) const
  {
    return at(k * coarse.refinement_of(grid_));
  }

  /// Restriction to a coarser grid.
  SamplePath restricted(const TimeGrid& coarse) const
  {
    const std::size_t r = coarse.refinement_of(grid_);
    SamplePath out(coarse, dim_);
    for (std::size_t k = 0; k < coarse.size(); ++k)
      std::copy_n(values_.data() + k * r * dim_, dim_, out.values_.data() + k * dim_);
    return out;
  }

  friend bool operator==(const SamplePath& a, const SamplePath& b)
  {
    return a.grid_ == b.grid_ && a.dim_ == b.dim_ && a.values_ == b.values_;
  }

private:
  TimeGrid grid_;
  std::size_t dim_ = 1;
  std::vector<double> values_;
};

/// Uniform cube [-L, L)^d with n nodes per axis at x_i = -L + i h, h = 2L/n.
/// Node n/2 sits at the origin; node i and node n - i are mirror images.
class SpatialGrid
{
public:
  SpatialGrid() = default;
  SpatialGrid(double half_width, std::size_t n_cells, std::size_t dim)
    : half_width_(half_width)
    , n_(n_cells)
    , dim_(dim)
  {
    require(half_width > 0.0, "SpatialGrid: half width must be positive");
    require(is_power_of_two(n_cells) && n_cells >= 2, "SpatialGrid: cells per axis must be a power of two");
    require(dim >= 1 && dim <= 3, "SpatialGrid: dimension must be 1, 2 or 3");
  }

  double half_width() const { return half_width_; }
  std::size_t n_cells() const { return n_; }
  std::size_t dim() const { return dim_; }
  double spacing() const { return 2.0 * half_width_ / static_cast<double>(n_); }
  double cell_volume() const { return std::pow(spacing(), static_cast<double>(dim_)); }
  std::size_t size() const
  {
    std::size_t s = 1;
    for (std::size_t a = 0; a < dim_; ++a)
      s *= n_;
    return s;
  }

  double coordinate(std::size_t i) const { return -half_width_ + static_cast<double>(i) * spacing(); }

  std::array<std::size_t, 3> unflatten(std::size_t flat) const
  {
    std::array<std::size_t, 3> idx{};
    for (std::size_t a = dim_; a-- > 0;) {
      idx[a] = flat % n_;
      flat /= n_;
    }
    return idx;
  }

  std::size_t flatten(const std::array<std::size_t, 3>& idx) const
  {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < dim_; ++a)
      flat = flat * n_ + idx[a];
    return flat;
  }

  void node(std::size_t flat, std::span<double> out) const
  {
    const auto idx = unflatten(flat);
    for (std::size_t a = 0; a < dim_; ++a)
      out[a] = coordinate(idx[a]);
  }

  /// Flat index of the cell containing x (nearest node), or size() if outside.
  std::size_t locate(std::span<const double> x) const
  {
    std::array<std::size_t, 3> idx{};
    const double h = spacing();
    for (std::size_t a = 0; a < dim_; ++a) {
      const double u = std::floor((x[a] + half_width_) / h + 0.5);
      if (!(u >= 0.0 && u < static_cast<double>(n_)))
        return size();
      idx[a] = static_cast<std::size_t>(u);
    }
    return flatten(idx);
  }

  friend bool operator==(const SpatialGrid& a, const SpatialGrid& b)
  {
    return a.half_width_ == b.half_width_ && a.n_ == b.n_ && a.dim_ == b.dim_;
  }

private:
  double half_width_ = 1.0;
  std::size_t n_ = 2;
  std::size_t dim_ = 1;
};

/// Multilinear interpolation stencil of a point on a SpatialGrid.
struct Stencil
{
  std::array<std::size_t, 8> nodes{};
  std::array<double, 8> weights{};
  std::size_t count = 0;
  bool clamped = false;
};

inline Stencil
make_stencil(const SpatialGrid& grid, std::span<const double> x)
{
  Stencil st;
  const std::size_t d = grid.dim();
  const std::size_t n = grid.n_cells();
  const double h = grid.spacing();
  std::array<std::size_t, 3> lo{};
  std::array<double, 3> frac{};
  for (std::size_t a = 0; a < d; ++a) {
    double u = (x[a] + grid.half_width()) / h;
    const double top = static_cast<double>(n - 1);
    if (!(u >= 0.0)) {
      u = 0.0;
      st.clamped = true;
    } else if (u > top) {
      u = top;
      st.clamped = true;
    }
    std::size_t i = static_cast<std::size_t>(u);
    if (i >= n - 1)
      i = n - 2;
    lo[a] = i;
    frac[a] = u - static_cast<double>(i);
  }
  st.count = std::size_t{ 1 } << d;
  for (std::size_t corner = 0; corner < st.count; ++corner) {
    std::array<std::size_t, 3> idx{};
    double w = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      const bool up = (corner >> a) & 1U;
      idx[a] = lo[a] + (up ? 1 : 0);
      w *= up ? frac[a] : 1.0 - frac[a];
    }
    st.nodes[corner] = grid.flatten(idx);
    st.weights[corner] = w;
  }
  return st;
}

/// A vector field sampled at the nodes of a SpatialGrid.
class GriddedField
{
public:
  GriddedField() = default;
  GriddedField(SpatialGrid grid, std::size_t components)
    : grid_(grid)
    , components_(components)
    , values_(grid.size() * components, 0.0)
  {
    require(components >= 1, "GriddedField: need at least one component");
  }

  const SpatialGrid& grid() const { return grid_; }
  std::size_t components() const { return components_; }
  std::span<const double> at(std::size_t node) const
  {
    return { values_.data() + node * components_, components_ };
  }
  std::span<double> at(std::size_t node) { return { values_.data() + node * components_, components_ }; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Multilinear interpolation; points outside are clamped to the boundary.
  bool interpolate(std::span<const double> x, std::span<double> out) const
  {
    const Stencil st = make_stencil(grid_, x);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < st.count; ++k) {
      const double* v = values_.data() + st.nodes[k] * components_;
      for (std::size_t c = 0; c < components_; ++c)
        out[c] += st.weights[k] * v[c];
    }
    return !st.clamped;
  }

  double max_abs() const
  {
    double m = 0.0;
    for (std::size_t node = 0; node < grid_.size(); ++node)
      m = std::max(m, norm(at(node)));
    return m;
  }

private:
  SpatialGrid grid_;
  std::size_t components_ = 1;
  std::vector<double> values_;
};

/// Thread-safe counter of clamped off-grid queries.
class ClampCounter
{
public:
  void record() const { count_.fetch_add(1, std::memory_order_relaxed); }
  std::size_t count() const { return count_.load(std::memory_order_relaxed); }
  void reset() const { count_.store(0, std::memory_order_relaxed); }

private:
  mutable std::atomic<std::size_t> count_{ 0 };
};

} // namespace mfy
