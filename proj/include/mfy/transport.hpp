#pragma once

#include "mfy/flow.hpp"
#include "mfy/paths.hpp"
#include "mfy/rng.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace mfy {

/// Minimum-cost perfect matching of a square cost matrix (row-major),
/// Hungarian method with potentials, O(n^3). Returns the assignment
/// row -> column.
inline std::vector<std::size_t>
hungarian(std::span<const double> cost, std::size_t n)
{
  require(cost.size() == n * n, "hungarian: cost matrix must be n x n");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials as in the classical formulation
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j])
          continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j)
    assignment[p[j] - 1] = j - 1;
  return assignment;
}

namespace detail {

// integral of |F_a - F_b| for empirical measures with uniform weights
inline double
quantile_distance(std::vector<double> a, std::vector<double> b, double power)
{
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t na = a.size(), nb = b.size();
  if (na == nb) {
    double s = 0.0;
    for (std::size_t i = 0; i < na; ++i)
      s += std::pow(std::abs(a[i] - b[i]), power);
    return s / static_cast<double>(na);
  }
  // walk the common refinement of the two quantile grids: this equals the
  // sorted-sample cost after replicating both sets to lcm(na, nb) atoms
  double s = 0.0;
  std::size_t i = 0, j = 0;
  double q = 0.0;
  while (i < na && j < nb) {
    const double qa = static_cast<double>(i + 1) / static_cast<double>(na);
    const double qb = static_cast<double>(j + 1) / static_cast<double>(nb);
    const double next = std::min(qa, qb);
    s += (next - q) * std::pow(std::abs(a[i] - b[j]), power);
    q = next;
    if (qa <= next)
      ++i;
    if (qb <= next)
      ++j;
  }
  return s;
}

} // namespace detail

/// W1 between two empirical measures on R (uniform weights).
inline double
w1_1d(std::span<const double> a, std::span<const double> b)
{
  require(!a.empty() && !b.empty(), "w1_1d: empty sample set");
  return detail::quantile_distance({ a.begin(), a.end() }, { b.begin(), b.end() }, 1.0);
}

/// W2 between two empirical measures on R (uniform weights).
inline double
w2_1d(std::span<const double> a, std::span<const double> b)
{
  require(!a.empty() && !b.empty(), "w2_1d: empty sample set");
  return std::sqrt(detail::quantile_distance({ a.begin(), a.end() }, { b.begin(), b.end() }, 2.0));
}

/// Largest set size accepted by exact assignment.
constexpr std::size_t kAssignmentLimit = 512;

/// Exact W1 between uniform empirical measures on an arbitrary metric space
/// via optimal assignment. Unequal sizes are replicated to lcm(|a|, |b|).
template<class Item, class Metric>
double
w1_exact_small(std::span<const Item> a, std::span<const Item> b, Metric&& metric)
{
  require(!a.empty() && !b.empty(), "w1_exact_small: empty input");
  const std::size_t n = std::lcm(a.size(), b.size());
  require(n <= kAssignmentLimit, "w1_exact_small: sizes exceed the assignment limit of 512");
  const std::size_t ra = n / a.size(), rb = n / b.size();
  std::vector<double> base(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      base[i * b.size() + j] = metric(a[i], b[j]);
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      cost[i * n + j] = base[(i / ra) * b.size() + (j / rb)];
  const auto assign = hungarian(cost, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    total += cost[i * n + assign[i]];
  return total / static_cast<double>(n);
}

/// Points in R^d given as flat row-major arrays of size N*d.
inline double
w1_exact_points(std::span<const double> a, std::span<const double> b, std::size_t dim)
{
  require(a.size() % dim == 0 && b.size() % dim == 0, "w1_exact_points: size is not a multiple of d");
  std::vector<std::size_t> ia(a.size() / dim), ib(b.size() / dim);
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  return w1_exact_small<std::size_t>(ia, ib, [&](std::size_t i, std::size_t j) {
    return distance(a.subspan(i * dim, dim), b.subspan(j * dim, dim));
  });
}

/// Unit directions shared by sliced distances with the same (n_proj, seed).
inline std::vector<double>
projection_directions(std::size_t dim, std::size_t n_proj, std::uint64_t seed)
{
  NormalStream normal(seed, streams::kProjections);
  std::vector<double> dirs(n_proj * dim);
  for (std::size_t p = 0; p < n_proj; ++p) {
    double r = 0.0;
    do {
      r = 0.0;
      for (std::size_t a = 0; a < dim; ++a) {
        dirs[p * dim + a] = normal();
        r += dirs[p * dim + a] * dirs[p * dim + a];
      }
    } while (r == 0.0);
    r = std::sqrt(r);
    for (std::size_t a = 0; a < dim; ++a)
      dirs[p * dim + a] /= r;
  }
  return dirs;
}

inline std::vector<double>
project(std::span<const double> points, std::size_t dim, std::span<const double> direction)
{
  std::vector<double> out(points.size() / dim);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t a = 0; a < dim; ++a)
      s += points[i * dim + a] * direction[a];
    out[i] = s;
  }
  return out;
}

/// Sliced W1 over explicit unit directions.
inline double
sliced_w1(std::span<const double> a, std::span<const double> b, std::size_t dim,
          std::span<const double> directions)
{
  const std::size_t n_proj = directions.size() / dim;
  require(n_proj >= 1, "sliced_w1: need at least one direction");
  double s = 0.0;
  for (std::size_t p = 0; p < n_proj; ++p) {
    const auto dir = directions.subspan(p * dim, dim);
    s += w1_1d(project(a, dim, dir), project(b, dim, dir));
  }
  return s / static_cast<double>(n_proj);
}

/// Sliced W1 with n_proj directions drawn uniformly on the sphere from `seed`.
inline double
sliced_w1(std::span<const double> a, std::span<const double> b, std::size_t dim, std::size_t n_proj,
          std::uint64_t seed)
{
  require(dim >= 2, "sliced_w1: use w1_1d for d = 1");
  return sliced_w1(a, b, dim, projection_directions(dim, n_proj, seed));
}

/// Dyadic time pairs (k 2^-l T, (k+1) 2^-l T) of a grid with a power-of-two
/// number of steps, as index pairs.
inline std::vector<std::pair<std::size_t, std::size_t>>
dyadic_pairs(const TimeGrid& grid)
{
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t len = grid.n_steps(); len >= 1; len /= 2) {
    for (std::size_t s = 0; s + len <= grid.n_steps(); s += len)
      out.emplace_back(s, s + len);
    if (len == 1)
      break;
  }
  return out;
}

/// Discrete C^beta norm |f_0| + sup over dyadic pairs of |f_t - f_s| / |t-s|^beta
/// of the difference of two atoms.
inline double
path_difference_norm(const EmpiricalMeasureFlow& a, std::size_t i, const EmpiricalMeasureFlow& b,
                     std::size_t j, double beta, std::span<const std::pair<std::size_t, std::size_t>> pairs)
{
  const std::size_t d = a.dim();
  const auto& g = a.grid();
  auto diff = [&](std::size_t k, std::size_t c) { return a.value(k, i)[c] - b.value(k, j)[c]; };
  double head = 0.0;
  for (std::size_t c = 0; c < d; ++c)
    head += diff(0, c) * diff(0, c);
  double semi = 0.0;
  for (const auto& [s, t] : pairs) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double x = diff(t, c) - diff(s, c);
      acc += x * x;
    }
    semi = std::max(semi, std::sqrt(acc) / std::pow(g.time(t) - g.time(s), beta));
  }
  return std::sqrt(head) + semi;
}

/// W1 on path space under the discrete C^beta norm, by exact assignment.
inline double
path_w1(const EmpiricalMeasureFlow& a, const EmpiricalMeasureFlow& b, double beta)
{
  require(a.grid() == b.grid() && a.dim() == b.dim(), "path_w1: flows live on different grids");
  const auto pairs = dyadic_pairs(a.grid());
  std::vector<std::size_t> ia(a.atoms()), ib(b.atoms());
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  return w1_exact_small<std::size_t>(ia, ib, [&](std::size_t i, std::size_t j) {
    return path_difference_norm(a, i, b, j, beta, pairs);
  });
}

/// How marginal W1 distances are computed for d >= 2.
struct MarginalMetric
{
  std::size_t n_proj = 64;
  std::uint64_t seed = 0;
  /// Use exact assignment (instead of slicing) when both sets are this small.
  std::size_t exact_limit = 0;

  bool operator==(const MarginalMetric&) const = default;
};

/// W1 between two point clouds in R^d: sorted samples for d = 1; exact
/// assignment or sliced otherwise.
inline double
marginal_w1(std::span<const double> a, std::span<const double> b, std::size_t dim,
            const MarginalMetric& how = {})
{
  if (dim == 1)
    return w1_1d(a, b);
  const std::size_t na = a.size() / dim, nb = b.size() / dim;
  if (std::max(na, nb) <= how.exact_limit)
    return w1_exact_points(a, b, dim);
  return sliced_w1(a, b, dim, how.n_proj, how.seed);
}

/// W2 between point clouds: sorted samples for d = 1, sliced (root of the
/// mean squared projected W2) otherwise.
inline double
marginal_w2(std::span<const double> a, std::span<const double> b, std::size_t dim, const MarginalMetric& how = {})
{
  if (dim == 1)
    return w2_1d(a, b);
  const auto dirs = projection_directions(dim, how.n_proj, how.seed);
  double s = 0.0;
  for (std::size_t p = 0; p < how.n_proj; ++p) {
    const auto dir = std::span<const double>(dirs).subspan(p * dim, dim);
    const double w = w2_1d(project(a, dim, dir), project(b, dim, dir));
    s += w * w;
  }
  return std::sqrt(s / static_cast<double>(how.n_proj));
}

/// ||(mu_t - mu_s) - (nu_t - nu_s)||_{lip*}: by KR duality this is the W1
/// distance between the mass-2 measures mu_t + nu_s and mu_s + nu_t. Exact in
/// d = 1, sliced over common directions otherwise.
inline double
lip_star_difference(std::span<const double> mu_t, std::span<const double> mu_s,
                    std::span<const double> nu_t, std::span<const double> nu_s, std::size_t dim,
                    const MarginalMetric& how = {})
{
  std::vector<double> left(mu_t.begin(), mu_t.end()), right(mu_s.begin(), mu_s.end());
  left.insert(left.end(), nu_s.begin(), nu_s.end());
  right.insert(right.end(), nu_t.begin(), nu_t.end());
  // each side is a uniform measure of total mass 2
  return 2.0 * marginal_w1(left, right, dim, how);
}

/// Marginal Hölder seminorm sup over dyadic pairs of W1(mu_t, mu_s) / |t-s|^beta.
inline HolderEstimate
flow_holder_seminorm(const EmpiricalMeasureFlow& mu, double beta, const MarginalMetric& how = {},
                     std::size_t first = 0, std::size_t last = std::numeric_limits<std::size_t>::max())
{
  require(beta > 0.0 && beta < 1.0, "flow_holder_seminorm: beta must lie in (0,1)");
  const auto& g = mu.grid();
  last = std::min(last, g.n_steps());
  HolderEstimate est;
  std::vector<double> lags, means;
  for (std::size_t len = last - first; len >= 1; len /= 2) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t s = first; s + len <= last; s += len) {
      const double w = marginal_w1(mu.marginal(s), mu.marginal(s + len), mu.dim(), how);
      est.seminorm = std::max(est.seminorm, w / std::pow(g.time(s + len) - g.time(s), beta));
      sum += w;
      ++count;
    }
    lags.push_back(g.dt() * static_cast<double>(len));
    means.push_back(sum / static_cast<double>(count));
    if (len == 1)
      break;
  }
  est.lags_used = lags;
  if (lags.size() >= 2)
    est.fitted_exponent = fit_loglog_slope(lags, means);
  return est;
}

/// [mu - nu]_beta over dyadic pairs of [first, last], via lip_star_difference.
inline double
flow_difference_seminorm(const EmpiricalMeasureFlow& mu, const EmpiricalMeasureFlow& nu, double beta,
                         const MarginalMetric& how = {}, std::size_t first = 0,
                         std::size_t last = std::numeric_limits<std::size_t>::max())
{
  require(mu.grid() == nu.grid() && mu.dim() == nu.dim(), "flow_difference_seminorm: grids differ");
  const auto& g = mu.grid();
  last = std::min(last, g.n_steps());
  double best = 0.0;
  for (std::size_t len = last - first; len >= 1; len /= 2) {
    for (std::size_t s = first; s + len <= last; s += len) {
      const std::size_t t = s + len;
      const double v =
        lip_star_difference(mu.marginal(t), mu.marginal(s), nu.marginal(t), nu.marginal(s), mu.dim(), how);
      best = std::max(best, v / std::pow(g.time(t) - g.time(s), beta));
    }
    if (len == 1)
      break;
  }
  return best;
}

/// |||mu; nu|||_{beta;[first,last]} = ||mu_first - nu_first||_{lip*} + [mu - nu]_beta.
inline double
flow_distance(const EmpiricalMeasureFlow& mu, const EmpiricalMeasureFlow& nu, double beta,
              const MarginalMetric& how = {}, std::size_t first = 0,
              std::size_t last = std::numeric_limits<std::size_t>::max())
{
  return marginal_w1(mu.marginal(first), nu.marginal(first), mu.dim(), how) +
         flow_difference_seminorm(mu, nu, beta, how, first, last);
}

/// sup over the given time indices of marginal W1.
inline double
sup_marginal_w1(const EmpiricalMeasureFlow& a, const EmpiricalMeasureFlow& b,
                std::span<const std::size_t> times, const MarginalMetric& how = {})
{
  double best = 0.0;
  for (std::size_t k : times)
    best = std::max(best, marginal_w1(a.marginal(k), b.marginal(k), a.dim(), how));
  return best;
}

} // namespace mfy
