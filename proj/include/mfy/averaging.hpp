#pragma once

#include "mfy/kernels.hpp"
#include "mfy/localtime.hpp"

namespace mfy {

/// Averaged field Gamma_{0,t} K(x) = int_0^t K(x + Z_r) dr stored cumulatively
/// on a space-time grid; increments Gamma_{s,t} = Gamma_{0,t} - Gamma_{0,s}.
///
/// Off-grid queries use multilinear interpolation; queries outside the grid
/// clamp to the boundary and bump a shared counter.
class AveragedField
{
public:
  AveragedField(SpatialGrid sgrid, TimeGrid tgrid, std::size_t components)
    : sgrid_(sgrid)
    , tgrid_(tgrid)
    , comps_(components)
    , cumulative_(tgrid.size() * sgrid.size() * components, 0.0)
    , clamps_(std::make_shared<ClampCounter>())
  {
  }

  /// Field with Gamma_{0,t}(x) = f(t, x) at every grid time and node.
  template<class F>
  static AveragedField from_function(SpatialGrid sgrid, TimeGrid tgrid, std::size_t components, F&& f)
  {
    AveragedField g(sgrid, tgrid, components);
    std::vector<double> x(sgrid.dim());
    for (std::size_t k = 0; k < tgrid.size(); ++k)
      for (std::size_t node = 0; node < sgrid.size(); ++node) {
        sgrid.node(node, x);
        f(tgrid.time(k), std::span<const double>(x), g.cumulative_node(k, node));
      }
    g.compute_gradient();
    return g;
  }

  const SpatialGrid& spatial_grid() const { return sgrid_; }
  const TimeGrid& time_grid() const { return tgrid_; }
  std::size_t components() const { return comps_; }
  std::size_t dim() const { return sgrid_.dim(); }
  bool has_gradient() const { return !gradient_.empty(); }

  std::span<const double> cumulative(std::size_t k) const
  {
    return { cumulative_.data() + k * sgrid_.size() * comps_, sgrid_.size() * comps_ };
  }
  std::span<double> cumulative_node(std::size_t k, std::size_t node)
  {
    return { cumulative_.data() + (k * sgrid_.size() + node) * comps_, comps_ };
  }
  std::span<const double> cumulative_node(std::size_t k, std::size_t node) const
  {
    return { cumulative_.data() + (k * sgrid_.size() + node) * comps_, comps_ };
  }
  /// Jacobian of Gamma_{0,t_k} at a node, laid out [component][axis].
  std::span<const double> gradient_node(std::size_t k, std::size_t node) const
  {
    const std::size_t w = comps_ * dim();
    return { gradient_.data() + (k * sgrid_.size() + node) * w, w };
  }

  /// Gamma_{s,t}(x) for grid time indices s <= t.
  void increment(std::size_t s, std::size_t t, std::span<const double> x, std::span<double> out) const
  {
    const Stencil st = make_stencil(sgrid_, x);
    if (st.clamped)
      clamps_->record();
    std::fill(out.begin(), out.end(), 0.0);
    const double* cs = cumulative_.data() + s * sgrid_.size() * comps_;
    const double* ct = cumulative_.data() + t * sgrid_.size() * comps_;
    for (std::size_t k = 0; k < st.count; ++k) {
      const std::size_t base = st.nodes[k] * comps_;
      for (std::size_t c = 0; c < comps_; ++c)
        out[c] += st.weights[k] * (ct[base + c] - cs[base + c]);
    }
  }

  std::vector<double> increment(std::size_t s, std::size_t t, std::span<const double> x) const
  {
    std::vector<double> out(comps_);
    increment(s, t, x, out);
    return out;
  }

  /// Interpolated Jacobian of Gamma_{s,t} at x, laid out [component][axis].
  void increment_gradient(std::size_t s, std::size_t t, std::span<const double> x,
                          std::span<double> out) const
  {
    require(has_gradient(), "AveragedField: gradient was not computed");
    const Stencil st = make_stencil(sgrid_, x);
    if (st.clamped)
      clamps_->record();
    const std::size_t w = comps_ * dim();
    std::fill(out.begin(), out.end(), 0.0);
    const double* gs = gradient_.data() + s * sgrid_.size() * w;
    const double* gt = gradient_.data() + t * sgrid_.size() * w;
    for (std::size_t k = 0; k < st.count; ++k) {
      const std::size_t base = st.nodes[k] * w;
      for (std::size_t c = 0; c < w; ++c)
        out[c] += st.weights[k] * (gt[base + c] - gs[base + c]);
    }
  }

  /// Gamma_{s,t} at every node.
  GriddedField increment_field(std::size_t s, std::size_t t) const
  {
    GriddedField f(sgrid_, comps_);
    const auto cs = cumulative(s);
    const auto ct = cumulative(t);
    for (std::size_t i = 0; i < f.values().size(); ++i)
      f.values()[i] = ct[i] - cs[i];
    return f;
  }

  /// Centered finite differences (one-sided at the boundary) of every
  /// cumulative slice.
  void compute_gradient()
  {
    const std::size_t d = dim();
    const std::size_t n = sgrid_.n_cells();
    const std::size_t npts = sgrid_.size();
    const double h = sgrid_.spacing();
    gradient_.assign(tgrid_.size() * npts * comps_ * d, 0.0);
    std::array<std::size_t, 3> stride{};
    {
      std::size_t s = 1;
      for (std::size_t a = d; a-- > 0;) {
        stride[a] = s;
        s *= n;
      }
    }
    for (std::size_t k = 0; k < tgrid_.size(); ++k) {
      const double* cum = cumulative_.data() + k * npts * comps_;
      double* grad = gradient_.data() + k * npts * comps_ * d;
      for (std::size_t node = 0; node < npts; ++node) {
        const auto idx = sgrid_.unflatten(node);
        for (std::size_t a = 0; a < d; ++a) {
          std::size_t lo = node, hi = node;
          double span = 2.0 * h;
          if (idx[a] == 0) {
            hi = node + stride[a];
            span = h;
          } else if (idx[a] == n - 1) {
            lo = node - stride[a];
            span = h;
          } else {
            lo = node - stride[a];
            hi = node + stride[a];
          }
          for (std::size_t c = 0; c < comps_; ++c)
            grad[(node * comps_ + c) * d + a] = (cum[hi * comps_ + c] - cum[lo * comps_ + c]) / span;
        }
      }
    }
  }

  /// The field on grid times [first, last], re-based to start at time 0.
  /// Cumulative slices are copied unchanged, so increments agree bitwise.
  AveragedField window(std::size_t first, std::size_t last) const
  {
    require(first < last && last <= tgrid_.n_steps(), "AveragedField: bad time window");
    AveragedField out(sgrid_, TimeGrid(tgrid_.time(last) - tgrid_.time(first), last - first), comps_);
    const std::size_t slice = sgrid_.size() * comps_;
    std::copy(cumulative_.begin() + static_cast<std::ptrdiff_t>(first * slice),
              cumulative_.begin() + static_cast<std::ptrdiff_t>((last + 1) * slice), out.cumulative_.begin());
    if (has_gradient()) {
      const std::size_t gslice = slice * dim();
      out.gradient_.assign(gradient_.begin() + static_cast<std::ptrdiff_t>(first * gslice),
                           gradient_.begin() + static_cast<std::ptrdiff_t>((last + 1) * gslice));
    }
    return out;
  }

  /// Number of clamped off-grid queries so far.
  std::size_t clamp_count() const { return clamps_->count(); }
  void reset_clamp_count() const { clamps_->reset(); }

private:
  SpatialGrid sgrid_;
  TimeGrid tgrid_;
  std::size_t comps_;
  std::vector<double> cumulative_;
  std::vector<double> gradient_;
  std::shared_ptr<ClampCounter> clamps_;
};

/// Gamma by trapezoidal quadrature of r -> K(x + Z_r) on Z's grid, which must
/// refine `tgrid`. The kernel is evaluated in closed form at shifted points.
inline AveragedField
averaged_field_direct(const Kernel& kernel, const SamplePath& z, const SpatialGrid& sgrid,
                      const TimeGrid& tgrid, bool with_gradient = true)
{
  require(kernel.dim() == sgrid.dim() && z.dim() == sgrid.dim(),
          "averaged_field_direct: kernel, path and grid dimensions differ");
  const std::size_t r = tgrid.refinement_of(z.grid());
  const std::size_t npts = sgrid.size();
  const std::size_t comps = kernel.components();
  const std::size_t d = sgrid.dim();
  AveragedField field(sgrid, tgrid, comps);
  std::vector<double> nodes(npts * d);
  for (std::size_t node = 0; node < npts; ++node)
    sgrid.node(node, std::span<double>(nodes.data() + node * d, d));

  std::vector<double> prev(npts * comps), cur(npts * comps), acc(npts * comps, 0.0);
  std::vector<double> shifted(d);
  auto sample = [&](std::size_t j, std::vector<double>& out) {
    const auto zj = z.at(j);
    for (std::size_t node = 0; node < npts; ++node) {
      for (std::size_t a = 0; a < d; ++a)
        shifted[a] = nodes[node * d + a] + zj[a];
      kernel.evaluate(shifted, std::span<double>(out.data() + node * comps, comps));
    }
  };
  sample(0, prev);
  const double half = 0.5 * z.grid().dt();
  for (std::size_t j = 1; j <= z.grid().n_steps(); ++j) {
    sample(j, cur);
    for (std::size_t i = 0; i < acc.size(); ++i)
      acc[i] += half * (prev[i] + cur[i]);
    std::swap(prev, cur);
    if (j % r == 0) {
      const std::size_t k = j / r;
      for (std::size_t node = 0; node < npts; ++node)
        std::copy_n(acc.data() + node * comps, comps, field.cumulative_node(k, node).data());
    }
  }
  if (with_gradient)
    field.compute_gradient();
  return field;
}

/// Gamma_{0,t} = K * Lbar_t, the correlation of the kernel with the
/// cumulative occupation density, evaluated by zero-padded FFT. `increments`
/// are consecutive occupation windows on `sgrid` covering [0, T].
inline AveragedField
averaged_field_convolution(const Kernel& kernel, const std::vector<OccupationDensity>& increments,
                           const SpatialGrid& sgrid, bool with_gradient = true)
{
  require(!increments.empty(), "averaged_field_convolution: no occupation windows");
  require(kernel.dim() == sgrid.dim(), "averaged_field_convolution: kernel and grid dimensions differ");
  for (const auto& occ : increments)
    require(occ.grid() == sgrid, "averaged_field_convolution: occupation grid does not match");
  const std::size_t nt = increments.size();
  const double horizon = increments.back().end();
  const TimeGrid tgrid(horizon, nt);
  for (std::size_t k = 0; k < nt; ++k)
    require(std::abs(increments[k].start() - tgrid.time(k)) <= 1e-9 * horizon &&
              std::abs(increments[k].end() - tgrid.time(k + 1)) <= 1e-9 * horizon,
            "averaged_field_convolution: occupation windows are not consecutive and uniform");

  const std::size_t d = sgrid.dim();
  const std::size_t n = sgrid.n_cells();
  const std::size_t comps = kernel.components();
  const SpatialGrid padded(2.0 * sgrid.half_width(), 2 * n, d);
  const GriddedField table = evaluate_on_grid(kernel, padded);
  CubeFFT fft(2 * n, d);
  const std::size_t psize = padded.size();

  // embed index of the small grid into the padded cube at the same offset
  std::vector<std::size_t> embed(sgrid.size());
  for (std::size_t node = 0; node < sgrid.size(); ++node)
    embed[node] = padded.flatten(sgrid.unflatten(node));

  std::vector<std::vector<Complex>> ktab(comps, std::vector<Complex>(psize));
  for (std::size_t c = 0; c < comps; ++c) {
    for (std::size_t i = 0; i < psize; ++i)
      ktab[c][i] = table.values()[i * comps + c];
    fft.forward(ktab[c]);
  }

  AveragedField field(sgrid, tgrid, comps);
  std::vector<std::uint64_t> cumulative_counts(sgrid.size(), 0);
  std::vector<Complex> mass(psize), prod(psize);
  for (std::size_t k = 0; k < nt; ++k) {
    const auto& inc = increments[k];
    for (std::size_t i = 0; i < sgrid.size(); ++i)
      cumulative_counts[i] += inc.counts()[i];
    std::fill(mass.begin(), mass.end(), Complex(0.0));
    for (std::size_t i = 0; i < sgrid.size(); ++i)
      mass[embed[i]] = static_cast<double>(cumulative_counts[i]);
    fft.forward(mass);
    const double unit = inc.count_mass();
    for (std::size_t c = 0; c < comps; ++c) {
      for (std::size_t i = 0; i < psize; ++i)
        prod[i] = ktab[c][i] * std::conj(mass[i]);
      fft.inverse(prod);
      for (std::size_t node = 0; node < sgrid.size(); ++node)
        field.cumulative_node(k + 1, node)[c] = unit * prod[embed[node]].real();
    }
  }
  if (with_gradient)
    field.compute_gradient();
  return field;
}

/// Measured regularity of an averaged field against the conditions
/// |Gamma| + |grad Gamma| <~ |t-s|^gamma,
/// |Gamma(x) - Gamma(y)| <~ |t-s|^gamma |x-y| and the same for grad Gamma.
struct GammaNorm
{
  double gamma = 0.0;
  int alpha = 1;
  double value = 0.0;
  /// sup-value, sup-gradient, Lipschitz and gradient-Lipschitz rates.
  std::array<double, 4> components{};
  /// Exponent of the mean over windows of sup_x |Gamma_{s,t}| against |t-s|.
  double fitted_time_exponent = std::nan("");
};

inline GammaNorm
gamma_norm(const AveragedField& g, double gamma, int alpha, std::size_t space_pair_budget = 64,
           std::uint64_t seed = 0, double min_lag = 0.0, double max_lag = 0.0)
{
  require(gamma > 0.5 && gamma < 1.0, "gamma_norm: gamma must lie in (1/2, 1)");
  require(alpha == 1 || alpha == 2, "gamma_norm: alpha must be 1 or 2");
  require(g.has_gradient(), "gamma_norm: field has no gradient");
  const auto& sg = g.spatial_grid();
  const auto& tg = g.time_grid();
  const std::size_t d = sg.dim();
  const std::size_t comps = g.components();
  const std::size_t w = comps * d;
  const std::size_t npts = sg.size();
  const std::size_t n = sg.n_cells();

  // neighbour pairs along every axis plus a random budget
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t node = 0; node < npts; ++node) {
    const auto idx = sg.unflatten(node);
    for (std::size_t a = 0; a < d; ++a) {
      if (idx[a] + 1 < n) {
        auto j = idx;
        ++j[a];
        pairs.emplace_back(node, sg.flatten(j));
      }
    }
  }
  Philox rng(seed, streams::kSampling + 1);
  for (std::size_t b = 0; b < space_pair_budget; ++b) {
    const std::size_t i = rng() % npts, j = rng() % npts;
    if (i != j)
      pairs.emplace_back(i, j);
  }
  std::vector<double> pdist(pairs.size());
  {
    std::vector<double> xi(d), xj(d);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      sg.node(pairs[p].first, xi);
      sg.node(pairs[p].second, xj);
      pdist[p] = distance(xi, xj);
    }
  }

  GammaNorm out;
  out.gamma = gamma;
  out.alpha = alpha;
  if (max_lag <= 0.0)
    max_lag = tg.horizon();
  std::vector<double> lags, means;
  std::vector<double> inc(npts * comps), ginc(npts * w);
  for (std::size_t len = tg.n_steps(); len >= 1; len /= 2) {
    const double tau = tg.dt() * static_cast<double>(len);
    const double rate = std::pow(tau, gamma);
    double level_sum = 0.0;
    std::size_t windows = 0;
    for (std::size_t s = 0; s + len <= tg.n_steps(); s += len) {
      const std::size_t t = s + len;
      const auto cs = g.cumulative(s), ct = g.cumulative(t);
      for (std::size_t i = 0; i < inc.size(); ++i)
        inc[i] = ct[i] - cs[i];
      double sup_val = 0.0, sup_grad = 0.0;
      for (std::size_t node = 0; node < npts; ++node) {
        sup_val = std::max(sup_val, norm(std::span<const double>(inc.data() + node * comps, comps)));
        const auto gs = g.gradient_node(s, node), gt = g.gradient_node(t, node);
        for (std::size_t c = 0; c < w; ++c)
          ginc[node * w + c] = gt[c] - gs[c];
        sup_grad = std::max(sup_grad, norm(std::span<const double>(ginc.data() + node * w, w)));
      }
      double lip = 0.0, glip = 0.0;
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, j] = pairs[p];
        lip = std::max(lip, distance(std::span<const double>(inc.data() + i * comps, comps),
                                     std::span<const double>(inc.data() + j * comps, comps)) /
                              pdist[p]);
        if (alpha == 2)
          glip = std::max(glip, distance(std::span<const double>(ginc.data() + i * w, w),
                                         std::span<const double>(ginc.data() + j * w, w)) /
                                  pdist[p]);
      }
      out.components[0] = std::max(out.components[0], sup_val / rate);
      out.components[1] = std::max(out.components[1], sup_grad / rate);
      out.components[2] = std::max(out.components[2], lip / rate);
      out.components[3] = std::max(out.components[3], glip / rate);
      level_sum += sup_val;
      ++windows;
    }
    if (tau >= min_lag * (1 - 1e-12) && tau <= max_lag * (1 + 1e-12)) {
      lags.push_back(tau);
      means.push_back(level_sum / static_cast<double>(windows));
    }
    if (len == 1)
      break;
  }
  out.value = *std::max_element(out.components.begin(), out.components.end());
  if (lags.size() >= 2)
    out.fitted_time_exponent = fit_loglog_slope(lags, means);
  return out;
}

/// Outcome of the interpolation inequality check over dyadic time pairs.
struct InterpolationReport
{
  bool holds = true;
  /// Largest observed ||.||_{C^theta} / (||.||_{C^1}^theta ||.||_{C^0}^{1-theta}).
  double worst_ratio = 0.0;
  std::size_t pairs_checked = 0;
};

/// Besov-Hölder norm sup_k 2^{k s} ||Delta_k f||_inf from block norms indexed
/// k = -1, 0, 1, ...
inline double
holder_zygmund_norm(std::span<const double> blocks, double s)
{
  double best = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const int k = static_cast<int>(i) - 1;
    best = std::max(best, std::pow(2.0, k * s) * blocks[i]);
  }
  return best;
}

/// Checks ||Gamma_{s,t}||_{C^theta} <= 1.1 ||Gamma_{s,t}||_{C^1}^theta ||Gamma_{s,t}||_{C^0}^{1-theta}
/// on dyadic pairs down to `min_len` time steps, with C^s measured in the
/// Littlewood-Paley (Besov B^s_{inf,inf}) scale.
inline InterpolationReport
interpolation_check(const AveragedField& g, double theta, std::size_t min_len = 1)
{
  require(theta >= 0.0 && theta <= 1.0, "interpolation_check: theta must lie in [0,1]");
  const auto& sg = g.spatial_grid();
  const auto& tg = g.time_grid();
  const double nyquist = static_cast<double>(sg.n_cells()) / (4.0 * sg.half_width());
  const int k_max = static_cast<int>(std::floor(std::log2(nyquist)));
  InterpolationReport rep;
  for (std::size_t len = tg.n_steps(); len >= std::max<std::size_t>(min_len, 1); len /= 2) {
    for (std::size_t s = 0; s + len <= tg.n_steps(); s += len) {
      const auto blocks = besov_block_norms(g.increment_field(s, s + len), LpNorm::infinity, k_max);
      const double c0 = holder_zygmund_norm(blocks, 0.0);
      const double c1 = holder_zygmund_norm(blocks, 1.0);
      const double ct = holder_zygmund_norm(blocks, theta);
      const double rhs = std::pow(c1, theta) * std::pow(c0, 1.0 - theta);
      ++rep.pairs_checked;
      if (ct == 0.0)
        continue;
      const double ratio = rhs > 0.0 ? ct / rhs : std::numeric_limits<double>::infinity();
      rep.worst_ratio = std::max(rep.worst_ratio, ratio);
      if (ratio > 1.1)
        rep.holds = false;
    }
    if (len == 1)
      break;
  }
  return rep;
}

} // namespace mfy
