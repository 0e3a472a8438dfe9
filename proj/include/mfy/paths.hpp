#pragma once

#include "mfy/fft.hpp"
#include "mfy/grid.hpp"
#include "mfy/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <optional>
#include <string>

namespace mfy {

enum class NoiseKind
{
  fbm,
  bm,
  zero
};

/// Noise path specification; `hurst` is only read for fbm.
struct NoiseSpec
{
  NoiseKind kind = NoiseKind::zero;
  double hurst = 0.5;

  static NoiseSpec fbm(double h) { return { NoiseKind::fbm, h }; }
  static NoiseSpec bm() { return { NoiseKind::bm, 0.5 }; }
  static NoiseSpec zero() { return { NoiseKind::zero, 0.5 }; }

  bool operator==(const NoiseSpec&) const = default;
};

inline std::string
to_string(NoiseKind kind)
{
  switch (kind) {
    case NoiseKind::fbm:
      return "fbm";
    case NoiseKind::bm:
      return "bm";
    case NoiseKind::zero:
      return "zero";
  }
  return "unknown";
}

inline NoiseKind
parse_noise_kind(const std::string& s)
{
  if (s == "fbm")
    return NoiseKind::fbm;
  if (s == "bm")
    return NoiseKind::bm;
  if (s == "zero")
    return NoiseKind::zero;
  throw InvalidInput("unknown noise kind '" + s + "'");
}

/// Covariance of fractional Brownian motion with Hurst index h.
inline double
fbm_covariance(double s, double t, double h)
{
  return 0.5 * (std::pow(s, 2 * h) + std::pow(t, 2 * h) - std::pow(std::abs(t - s), 2 * h));
}

namespace detail {

// Autocovariance of unit-step fractional Gaussian noise at lag k.
inline double
fgn_autocovariance(std::size_t k, double h)
{
  const double kk = static_cast<double>(k);
  if (k == 0)
    return 1.0;
  return 0.5 * (std::pow(kk + 1, 2 * h) - 2 * std::pow(kk, 2 * h) + std::pow(kk - 1, 2 * h));
}

// Davies-Harte: fGn increments of length n with unit step.
inline std::vector<double>
davies_harte_increments(std::size_t n, double h, NormalStream& normal)
{
  const std::size_t m = 2 * n;
  std::vector<Complex> c(m);
  for (std::size_t k = 0; k <= n; ++k)
    c[k] = fgn_autocovariance(k, h);
  for (std::size_t k = n + 1; k < m; ++k)
    c[k] = c[m - k];
  CubeFFT fft(m, 1);
  fft.forward(c);
  std::vector<Complex> w(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double lambda = c[k].real();
    if (lambda < -1e-10 * std::abs(c[0].real()))
      throw Error("gen_noise: circulant embedding has a negative eigenvalue (" +
                  std::to_string(lambda) + ")");
    const double a = normal();
    const double b = normal();
    w[k] = std::sqrt(std::max(lambda, 0.0) / static_cast<double>(m)) * Complex(a, b);
  }
  fft.forward(w);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k)
    out[k] = w[k].real();
  return out;
}

// Cholesky factor of the fBm covariance at grid times t_1..t_n.
inline std::vector<double>
cholesky_fbm(const TimeGrid& grid, double h, NormalStream& normal)
{
  const std::size_t n = grid.n_steps();
  Eigen::MatrixXd cov(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      cov(i, j) = fbm_covariance(grid.time(i + 1), grid.time(j + 1), h);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw Error("gen_noise: fBm covariance is not positive definite");
  Eigen::VectorXd g(n);
  for (std::size_t i = 0; i < n; ++i)
    g(i) = normal();
  const Eigen::VectorXd x = llt.matrixL() * g;
  return { x.data(), x.data() + n };
}

} // namespace detail

/// Largest n_steps for which the Cholesky fallback is used when n_steps is
/// not a power of two.
constexpr std::size_t kCholeskyLimit = std::size_t{ 1 } << 12;

/// Generates a noise path with independent coordinates; coordinate c of the
/// path uses Philox stream (seed, stream_base + c).
inline SamplePath
gen_noise(NoiseSpec spec, std::size_t dim, const TimeGrid& grid, std::uint64_t seed,
          std::uint64_t stream_base = 0)
{
  SamplePath path(grid, dim);
  if (spec.kind == NoiseKind::zero)
    return path;
  const std::size_t n = grid.n_steps();
  if (spec.kind == NoiseKind::fbm) {
    require(spec.hurst > 0.0 && spec.hurst < 1.0, "gen_noise: Hurst index must lie in (0,1)");
    require(is_power_of_two(n) || n <= kCholeskyLimit,
            "gen_noise: fBm needs a power-of-two step count (or at most 4096 steps)");
  }
  for (std::size_t c = 0; c < dim; ++c) {
    NormalStream normal(seed, stream_base + c);
    if (spec.kind == NoiseKind::bm) {
      const double sd = std::sqrt(grid.dt());
      double acc = 0.0;
      for (std::size_t k = 1; k <= n; ++k) {
        acc += sd * normal();
        path(k, c) = acc;
      }
    } else if (is_power_of_two(n)) {
      const auto inc = detail::davies_harte_increments(n, spec.hurst, normal);
      const double scale = std::pow(grid.dt(), spec.hurst);
      double acc = 0.0;
      for (std::size_t k = 1; k <= n; ++k) {
        acc += scale * inc[k - 1];
        path(k, c) = acc;
      }
    } else {
      const auto x = detail::cholesky_fbm(grid, spec.hurst, normal);
      for (std::size_t k = 1; k <= n; ++k)
        path(k, c) = x[k - 1];
    }
  }
  return path;
}

/// A Hölder seminorm together with a scaling fit over dyadic lags.
struct HolderEstimate
{
  double seminorm = 0.0;
  double fitted_exponent = std::nan("");
  std::vector<double> lags_used;
};

/// Grid sizes up to this use the exact O(n^2) pair set.
constexpr std::size_t kExactPairLimit = std::size_t{ 1 } << 11;

namespace detail {

template<class Visit>
void
for_each_pair(std::size_t n_steps, std::size_t pair_budget, std::uint64_t seed, Visit&& visit)
{
  if (n_steps <= kExactPairLimit) {
    for (std::size_t i = 0; i < n_steps; ++i)
      for (std::size_t j = i + 1; j <= n_steps; ++j)
        visit(i, j);
    return;
  }
  for (std::size_t lag = 1; lag <= n_steps; lag *= 2)
    for (std::size_t i = 0; i + lag <= n_steps; ++i)
      visit(i, i + lag);
  Philox rng(seed, streams::kSampling);
  for (std::size_t b = 0; b < pair_budget; ++b) {
    std::size_t i = rng() % (n_steps + 1);
    std::size_t j = rng() % (n_steps + 1);
    if (i == j)
      continue;
    if (i > j)
      std::swap(i, j);
    visit(i, j);
  }
}

} // namespace detail

/// Discrete beta-Hölder seminorm restricted to the index window [first, last].
inline double
holder_seminorm_window(const SamplePath& path, double beta, std::size_t first, std::size_t last)
{
  const auto& g = path.grid();
  double best = 0.0;
  for (std::size_t i = first; i < last; ++i)
    for (std::size_t j = i + 1; j <= last; ++j) {
      const double r = distance(path.at(i), path.at(j)) / std::pow(g.time(j) - g.time(i), beta);
      best = std::max(best, r);
    }
  return best;
}

/// Supremum of |X_t - X_s| / |t - s|^beta over grid pairs with the
/// root-mean-square increment fitted against dyadic lags in
/// [min_lag, max_lag] (the whole range when unset).
inline HolderEstimate
holder_seminorm(const SamplePath& path, double beta, std::size_t pair_budget = 1 << 16,
                double min_lag = 0.0, double max_lag = 0.0, std::uint64_t seed = 0)
{
  require(path.size() >= 2, "holder_seminorm: path needs at least two points");
  require(beta > 0.0 && beta < 1.0, "holder_seminorm: beta must lie in (0,1)");
  const auto& g = path.grid();
  const std::size_t n = g.n_steps();
  HolderEstimate est;
  detail::for_each_pair(n, pair_budget, seed, [&](std::size_t i, std::size_t j) {
    const double r = distance(path.at(i), path.at(j)) / std::pow(g.time(j) - g.time(i), beta);
    est.seminorm = std::max(est.seminorm, r);
  });
  if (max_lag <= 0.0)
    max_lag = g.horizon();
  std::vector<double> rms;
  for (std::size_t lag = 1; lag <= n; lag *= 2) {
    const double tau = g.dt() * static_cast<double>(lag);
    if (tau < min_lag * (1 - 1e-12) || tau > max_lag * (1 + 1e-12))
      continue;
    double s = 0.0;
    for (std::size_t i = 0; i + lag <= n; ++i) {
      const double dx = distance(path.at(i), path.at(i + lag));
      s += dx * dx;
    }
    est.lags_used.push_back(tau);
    rms.push_back(std::sqrt(s / static_cast<double>(n - lag + 1)));
  }
  if (est.lags_used.size() >= 2)
    est.fitted_exponent = fit_loglog_slope(est.lags_used, rms);
  return est;
}

/// Result of the local-to-global Hölder check.
struct LocalToGlobalResult
{
  bool holds = false;
  double local_seminorm = 0.0;
  double global_seminorm = 0.0;
  double bound = 0.0;
  /// Start time of the first window whose seminorm exceeds M, if any.
  std::optional<double> violating_window;
};

/// Checks [X]_{alpha;[0,T]} <= M (1 v 2 h^{alpha-1}) T^{1-alpha} given that
/// every window [t, t+h] has seminorm at most M.
inline LocalToGlobalResult
local_to_global_check(const SamplePath& path, double alpha, double h, double m_local)
{
  require(alpha > 0.0 && alpha < 1.0, "local_to_global_check: alpha must lie in (0,1)");
  const auto& g = path.grid();
  require(h > 0.0 && h <= g.horizon(), "local_to_global_check: h must lie in (0,T]");
  const std::size_t w = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(h / g.dt() + 1e-9)));
  const std::size_t n = g.n_steps();
  LocalToGlobalResult res;
  // every pair with lag <= w lies in some window [t, t + h]
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t last = std::min(i + w, n);
    for (std::size_t j = i + 1; j <= last; ++j) {
      const double r = distance(path.at(i), path.at(j)) / std::pow(g.time(j) - g.time(i), alpha);
      res.local_seminorm = std::max(res.local_seminorm, r);
      if (r > m_local * (1 + 1e-12) && !res.violating_window)
        res.violating_window = g.time(std::min(i, n - w));
    }
  }
  res.global_seminorm = holder_seminorm(path, alpha).seminorm;
  const double T = g.horizon();
  res.bound = m_local * std::max(1.0, 2.0 * std::pow(h, alpha - 1.0)) * std::pow(T, 1.0 - alpha);
  res.holds = !res.violating_window && res.global_seminorm <= res.bound * (1 + 1e-12);
  return res;
}

} // namespace mfy
