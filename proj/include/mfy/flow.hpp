#pragma once

#include "mfy/grid.hpp"

#include <algorithm>
#include <numeric>

namespace mfy {

/// N paths on a common TimeGrid, each of weight 1/N. Stored time-major so
/// that the marginal at a grid time is one contiguous N*d block.
class EmpiricalMeasureFlow
{
public:
  EmpiricalMeasureFlow(TimeGrid grid, std::size_t atoms, std::size_t dim)
    : grid_(grid)
    , atoms_(atoms)
    , dim_(dim)
    , values_(grid.size() * atoms * dim, 0.0)
  {
    require(atoms >= 1, "EmpiricalMeasureFlow: need at least one atom");
    require(dim >= 1, "EmpiricalMeasureFlow: dimension must be positive");
  }

  static EmpiricalMeasureFlow from_paths(std::span<const SamplePath> paths)
  {
    require(!paths.empty(), "EmpiricalMeasureFlow: need at least one atom");
    EmpiricalMeasureFlow flow(paths.front().grid(), paths.size(), paths.front().dim());
    for (std::size_t i = 0; i < paths.size(); ++i) {
      require(paths[i].grid() == flow.grid_ && paths[i].dim() == flow.dim_,
              "EmpiricalMeasureFlow: atoms must share grid and dimension");
      for (std::size_t k = 0; k < flow.grid_.size(); ++k)
        std::copy_n(paths[i].at(k).begin(), flow.dim_, flow.value(k, i).begin());
    }
    return flow;
  }

  /// Flow of the constant-in-time atoms given as a flat N*d array.
  static EmpiricalMeasureFlow constant(TimeGrid grid, std::span<const double> points, std::size_t dim)
  {
    require(points.size() % dim == 0, "EmpiricalMeasureFlow: point array is not a multiple of d");
    EmpiricalMeasureFlow flow(grid, points.size() / dim, dim);
    for (std::size_t k = 0; k < grid.size(); ++k)
      std::copy(points.begin(), points.end(), flow.marginal(k).begin());
    return flow;
  }

  const TimeGrid& grid() const { return grid_; }
  std::size_t atoms() const { return atoms_; }
  std::size_t dim() const { return dim_; }
  const std::vector<double>& values() const { return values_; }

  std::span<const double> marginal(std::size_t k) const
  {
    return { values_.data() + k * atoms_ * dim_, atoms_ * dim_ };
  }
  std::span<double> marginal(std::size_t k) { return { values_.data() + k * atoms_ * dim_, atoms_ * dim_ }; }

  std::span<const double> value(std::size_t k, std::size_t i) const
  {
    return { values_.data() + (k * atoms_ + i) * dim_, dim_ };
  }
  std::span<double> value(std::size_t k, std::size_t i) { return { values_.data() + (k * atoms_ + i) * dim_, dim_ }; }

  SamplePath atom(std::size_t i) const
  {
    std::vector<double> v(grid_.size() * dim_);
    for (std::size_t k = 0; k < grid_.size(); ++k)
      std::copy_n(value(k, i).begin(), dim_, v.begin() + static_cast<std::ptrdiff_t>(k * dim_));
    return SamplePath(grid_, dim_, std::move(v));
  }

  /// Flow on a coarser grid whose steps are unions of ours.
  EmpiricalMeasureFlow restricted(const TimeGrid& coarse) const
  {
    const std::size_t r = coarse.refinement_of(grid_);
    EmpiricalMeasureFlow out(coarse, atoms_, dim_);
    for (std::size_t k = 0; k < coarse.size(); ++k)
      std::copy_n(marginal(k * r).begin(), atoms_ * dim_, out.marginal(k).begin());
    return out;
  }

  /// The flow on grid times [first, last], re-based to start at time 0.
  EmpiricalMeasureFlow window(std::size_t first, std::size_t last) const
  {
    require(first < last && last <= grid_.n_steps(), "EmpiricalMeasureFlow: bad time window");
    EmpiricalMeasureFlow out(TimeGrid(grid_.time(last) - grid_.time(first), last - first), atoms_, dim_);
    for (std::size_t k = first; k <= last; ++k)
      std::copy_n(marginal(k).begin(), atoms_ * dim_, out.marginal(k - first).begin());
    return out;
  }

  /// Atoms [first, first + count) as a flow of their own.
  EmpiricalMeasureFlow subset(std::size_t first, std::size_t count) const
  {
    require(first + count <= atoms_, "EmpiricalMeasureFlow: subset out of range");
    EmpiricalMeasureFlow out(grid_, count, dim_);
    for (std::size_t k = 0; k < grid_.size(); ++k)
      std::copy_n(value(k, first).begin(), count * dim_, out.marginal(k).begin());
    return out;
  }

  friend bool operator==(const EmpiricalMeasureFlow& a, const EmpiricalMeasureFlow& b)
  {
    return a.grid_ == b.grid_ && a.atoms_ == b.atoms_ && a.dim_ == b.dim_ && a.values_ == b.values_;
  }

private:
  TimeGrid grid_;
  std::size_t atoms_;
  std::size_t dim_;
  std::vector<double> values_;
};

/// Points of a flat N*d array in lexicographic order. Sums over atoms run in
/// this order so that results do not depend on how the atoms are labelled.
inline std::vector<double>
canonical_order(std::span<const double> points, std::size_t dim)
{
  const std::size_t n = points.size() / dim;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(points.begin() + static_cast<std::ptrdiff_t>(a * dim),
                                        points.begin() + static_cast<std::ptrdiff_t>((a + 1) * dim),
                                        points.begin() + static_cast<std::ptrdiff_t>(b * dim),
                                        points.begin() + static_cast<std::ptrdiff_t>((b + 1) * dim));
  });
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(points.begin() + static_cast<std::ptrdiff_t>(idx[i] * dim), dim,
                out.begin() + static_cast<std::ptrdiff_t>(i * dim));
  return out;
}

} // namespace mfy
