#pragma once

#include "mfy/averaging.hpp"
#include "mfy/fft.hpp"
#include "mfy/flow.hpp"
#include "mfy/transport.hpp"

#include <optional>

namespace mfy {

/// (Gamma_{s,t} * mu)(x) = (1/N) sum_j Gamma_{s,t}(x - a_j), atoms summed in
/// canonical order.
inline std::vector<double>
conv_eval(const AveragedField& g, std::span<const double> atoms, std::size_t s, std::size_t t,
          std::span<const double> x)
{
  const std::size_t d = g.dim();
  require(atoms.size() % d == 0 && !atoms.empty(), "conv_eval: atom array is not N*d");
  const auto sorted = canonical_order(atoms, d);
  const std::size_t n = sorted.size() / d;
  std::vector<double> out(g.components(), 0.0), term(g.components()), shift(d);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t a = 0; a < d; ++a)
      shift[a] = x[a] - sorted[j * d + a];
    g.increment(s, t, shift, term);
    for (std::size_t c = 0; c < out.size(); ++c)
      out[c] += term[c];
  }
  for (double& v : out)
    v /= static_cast<double>(n);
  return out;
}

enum class DriftMode
{
  direct,
  binned,
  automatic
};

inline std::string
to_string(DriftMode m)
{
  switch (m) {
    case DriftMode::direct: return "direct";
    case DriftMode::binned: return "binned";
    default: return "auto";
  }
}

inline DriftMode
parse_drift_mode(std::string_view s)
{
  if (s == "direct")
    return DriftMode::direct;
  if (s == "binned")
    return DriftMode::binned;
  if (s == "auto")
    return DriftMode::automatic;
  throw InvalidInput("unknown drift mode '" + std::string(s) + "'");
}

/// Evaluates x -> (Gamma_{s,t} * mu_s)(x) for one step and one marginal.
///
/// Direct mode interpolates Gamma at every difference x - a_j. Binned mode
/// deposits the atoms on the spatial grid (cloud-in-cell), convolves the
/// histogram with Gamma_{s,t} by FFT on a doubled cube, and interpolates the
/// result; it requires atoms and queries in the inner half of the grid and
/// falls back to direct evaluation otherwise.
class DriftEvaluator
{
public:
  DriftEvaluator(const AveragedField& g, DriftMode mode, std::size_t binned_threshold = 256)
    : g_(&g)
    , mode_(mode)
    , threshold_(binned_threshold)
  {
  }

  void prepare(std::size_t s, std::size_t t, std::span<const double> atoms)
  {
    const std::size_t d = g_->dim();
    s_ = s;
    t_ = t;
    sorted_ = canonical_order(atoms, d);
    n_atoms_ = sorted_.size() / d;
    binned_ready_ = false;
    const bool want_binned =
      mode_ == DriftMode::binned || (mode_ == DriftMode::automatic && n_atoms_ > threshold_);
    if (want_binned && all_inner(sorted_))
      build_binned();
  }

  bool binned() const { return binned_ready_; }

  void evaluate(std::span<const double> x, std::span<double> out) const
  {
    const std::size_t d = g_->dim();
    const std::size_t comps = g_->components();
    std::fill(out.begin(), out.end(), 0.0);
    if (binned_ready_ && all_inner(x)) {
      const Stencil st = make_stencil(g_->spatial_grid(), x);
      for (std::size_t k = 0; k < st.count; ++k)
        for (std::size_t c = 0; c < comps; ++c)
          out[c] += st.weights[k] * field_[st.nodes[k] * comps + c];
      return;
    }
    std::vector<double> term(comps), shift(d);
    for (std::size_t j = 0; j < n_atoms_; ++j) {
      for (std::size_t a = 0; a < d; ++a)
        shift[a] = x[a] - sorted_[j * d + a];
      g_->increment(s_, t_, shift, term);
      for (std::size_t c = 0; c < comps; ++c)
        out[c] += term[c];
    }
    for (std::size_t c = 0; c < comps; ++c)
      out[c] /= static_cast<double>(n_atoms_);
  }

private:
  bool all_inner(std::span<const double> pts) const
  {
    const double lim = 0.5 * g_->spatial_grid().half_width();
    return std::all_of(pts.begin(), pts.end(), [&](double v) { return std::abs(v) < lim; });
  }

  void build_binned()
  {
    const auto& sg = g_->spatial_grid();
    const std::size_t d = sg.dim();
    const std::size_t n = sg.n_cells();
    const std::size_t p = 2 * n;
    const std::size_t comps = g_->components();
    if (!fft_)
      fft_.emplace(p, d);
    std::size_t cube = 1;
    for (std::size_t a = 0; a < d; ++a)
      cube *= p;
    auto padded_index = [&](const std::array<long, 3>& idx) {
      std::size_t flat = 0;
      for (std::size_t a = 0; a < d; ++a)
        flat = flat * p + static_cast<std::size_t>((idx[a] % static_cast<long>(p) + static_cast<long>(p)) %
                                                   static_cast<long>(p));
      return flat;
    };

    std::vector<Complex> mass(cube, Complex(0.0));
    const double w = 1.0 / static_cast<double>(n_atoms_);
    for (std::size_t j = 0; j < n_atoms_; ++j) {
      const Stencil st = make_stencil(sg, std::span<const double>(sorted_).subspan(j * d, d));
      for (std::size_t k = 0; k < st.count; ++k) {
        const auto idx = sg.unflatten(st.nodes[k]);
        std::array<long, 3> li{};
        for (std::size_t a = 0; a < d; ++a)
          li[a] = static_cast<long>(idx[a]);
        mass[padded_index(li)] += w * st.weights[k];
      }
    }
    fft_->forward(mass);

    // Gamma at offset o = node - n/2 is stored at padded index o mod p
    const auto cs = g_->cumulative(s_);
    const auto ct = g_->cumulative(t_);
    field_.assign(sg.size() * comps, 0.0);
    std::vector<Complex> kern(cube);
    for (std::size_t c = 0; c < comps; ++c) {
      std::fill(kern.begin(), kern.end(), Complex(0.0));
      for (std::size_t node = 0; node < sg.size(); ++node) {
        const auto idx = sg.unflatten(node);
        std::array<long, 3> off{};
        for (std::size_t a = 0; a < d; ++a)
          off[a] = static_cast<long>(idx[a]) - static_cast<long>(n / 2);
        kern[padded_index(off)] = ct[node * comps + c] - cs[node * comps + c];
      }
      fft_->forward(kern);
      for (std::size_t m = 0; m < cube; ++m)
        kern[m] *= mass[m];
      fft_->inverse(kern);
      for (std::size_t node = 0; node < sg.size(); ++node) {
        const auto idx = sg.unflatten(node);
        std::array<long, 3> li{};
        for (std::size_t a = 0; a < d; ++a)
          li[a] = static_cast<long>(idx[a]);
        field_[node * comps + c] = kern[padded_index(li)].real();
      }
    }
    binned_ready_ = true;
  }

  const AveragedField* g_;
  DriftMode mode_;
  std::size_t threshold_;
  std::size_t s_ = 0, t_ = 0;
  std::vector<double> sorted_;
  std::size_t n_atoms_ = 0;
  bool binned_ready_ = false;
  std::vector<double> field_;
  std::optional<CubeFFT> fft_;
};

namespace detail {

inline std::size_t
level_stride(std::size_t s, std::size_t t, std::size_t level)
{
  require(t > s, "nly_integral: empty window");
  const std::size_t blocks = std::size_t{ 1 } << level;
  require((t - s) % blocks == 0, "nly_integral: level exceeds the grid resolution of the window");
  return (t - s) / blocks;
}

inline void
check_inputs(const AveragedField& g, const SamplePath& y, const EmpiricalMeasureFlow& mu)
{
  require(y.grid() == g.time_grid() && mu.grid() == g.time_grid(),
          "nly_integral: Y, mu and Gamma must share the time grid");
  require(y.dim() == g.dim() && mu.dim() == g.dim(), "nly_integral: dimension mismatch");
}

} // namespace detail

/// Left-point Riemann sum of (Gamma_{dr} * mu_r)(Y_r) over [t_s, t_t] on the
/// dyadic partition with 2^level blocks.
inline std::vector<double>
nly_integral(const AveragedField& g, const SamplePath& y, const EmpiricalMeasureFlow& mu, std::size_t s,
             std::size_t t, std::size_t level)
{
  detail::check_inputs(g, y, mu);
  const std::size_t stride = detail::level_stride(s, t, level);
  std::vector<double> sum(g.components(), 0.0);
  for (std::size_t u = s; u < t; u += stride) {
    const auto term = conv_eval(g, mu.marginal(u), u, u + stride, y.at(u));
    for (std::size_t c = 0; c < sum.size(); ++c)
      sum[c] += term[c];
  }
  return sum;
}

struct SewingReport
{
  std::vector<double> window_lengths;
  std::vector<double> errors;
  /// log-log slope of the mean germ error against window length
  double exponent = 0.0;
  /// log-log slope of |I(l+1) - I(l)| against the partition mesh
  double self_convergence = 0.0;
  std::vector<double> refinement_gaps;
  /// every germ error is at roundoff level
  bool exact = false;
};

/// Germ error E(l) = mean over the 2^l dyadic sub-windows [u,v] of [s,t] of
/// |I(u,v) - Xi_{u,v}| with I the finest-grid Riemann sum and
/// Xi_{u,v} = (Gamma_{u,v} * mu_u)(Y_u); fits E against the window length.
inline SewingReport
sewing_rate(const AveragedField& g, const SamplePath& y, const EmpiricalMeasureFlow& mu, std::size_t s,
            std::size_t t, std::size_t min_level, std::size_t max_level)
{
  detail::check_inputs(g, y, mu);
  require(min_level <= max_level, "sewing_rate: empty level range");
  const std::size_t steps = t - s;
  require(steps >= 2 && is_power_of_two(steps), "sewing_rate: window must span 2^k grid steps");
  const std::size_t finest = log2_exact(steps);
  require(max_level < finest, "sewing_rate: max level must be below the reference level");
  const std::size_t comps = g.components();

  // prefix sums of the one-step germs give I(u,v) for every grid window
  std::vector<double> prefix((steps + 1) * comps, 0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto xi = conv_eval(g, mu.marginal(s + k), s + k, s + k + 1, y.at(s + k));
    for (std::size_t c = 0; c < comps; ++c)
      prefix[(k + 1) * comps + c] = prefix[k * comps + c] + xi[c];
  }
  double scale = 0.0;
  for (double v : prefix)
    scale = std::max(scale, std::abs(v));

  SewingReport rep;
  double worst = 0.0;
  for (std::size_t level = min_level; level <= max_level; ++level) {
    const std::size_t stride = steps >> level;
    double total = 0.0;
    for (std::size_t u = 0; u < steps; u += stride) {
      const auto germ = conv_eval(g, mu.marginal(s + u), s + u, s + u + stride, y.at(s + u));
      double e = 0.0;
      for (std::size_t c = 0; c < comps; ++c) {
        const double ref = prefix[(u + stride) * comps + c] - prefix[u * comps + c];
        e += (ref - germ[c]) * (ref - germ[c]);
      }
      total += std::sqrt(e);
    }
    const double mean = total / static_cast<double>(std::size_t{ 1 } << level);
    worst = std::max(worst, mean);
    rep.window_lengths.push_back(g.time_grid().dt() * static_cast<double>(stride));
    rep.errors.push_back(mean);
  }
  rep.exact = worst <= 1e-12 * std::max(1.0, scale);
  rep.exponent = rep.exact ? std::numeric_limits<double>::infinity()
                           : fit_loglog_slope(rep.window_lengths, rep.errors);

  std::vector<double> meshes;
  std::vector<double> prev = nly_integral(g, y, mu, s, t, min_level);
  for (std::size_t level = min_level + 1; level <= finest; ++level) {
    const auto cur = nly_integral(g, y, mu, s, t, level);
    rep.refinement_gaps.push_back(distance(cur, prev));
    meshes.push_back(g.time_grid().dt() * static_cast<double>(steps >> level));
    prev = cur;
  }
  rep.self_convergence = fit_loglog_slope(meshes, rep.refinement_gaps);
  return rep;
}

struct StabilityGap
{
  double lhs = 0.0;
  /// the three bracketed right-hand terms, constants omitted
  std::array<double, 3> rhs{};
  double ratio = 0.0;
};

/// Discrete C^beta norm on [s,t]: sup |f| + dyadic-pair seminorm.
inline double
path_holder_norm(const SamplePath& f, const SamplePath& g, std::size_t s, std::size_t t, double beta)
{
  const auto& grid = f.grid();
  const std::size_t d = f.dim();
  auto diff = [&](std::size_t k, std::size_t c) { return f(k, c) - g(k, c); };
  double sup = 0.0;
  for (std::size_t k = s; k <= t; ++k) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c)
      acc += diff(k, c) * diff(k, c);
    sup = std::max(sup, std::sqrt(acc));
  }
  double semi = 0.0;
  for (std::size_t len = t - s; len >= 1; len /= 2) {
    for (std::size_t u = s; u + len <= t; u += len) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double x = diff(u + len, c) - diff(u, c);
        acc += x * x;
      }
      semi = std::max(semi, std::sqrt(acc) / std::pow(grid.time(u + len) - grid.time(u), beta));
    }
    if (len == 1)
      break;
  }
  return sup + semi;
}

/// Measured sides of the stability bound for two (Y, mu) pairs on [t_s, t_t].
/// `gamma_norm` is ||Gamma||_{C^gamma C^alpha}; M1 and M2 are the larger
/// beta-seminorms of the flows and of the paths on the window.
inline StabilityGap
stability_gap(const AveragedField& g, const SamplePath& y, const EmpiricalMeasureFlow& mu,
              const SamplePath& y2, const EmpiricalMeasureFlow& mu2, std::size_t s, std::size_t t, double gamma,
              double beta, double gamma_norm, const MarginalMetric& how = {})
{
  detail::check_inputs(g, y, mu);
  detail::check_inputs(g, y2, mu2);
  const std::size_t steps = t - s;
  require(steps >= 1 && is_power_of_two(steps), "stability_gap: window must span 2^k grid steps");
  const std::size_t level = log2_exact(steps);
  const auto a = nly_integral(g, y, mu, s, t, level);
  const auto b = nly_integral(g, y2, mu2, s, t, level);

  StabilityGap out;
  out.lhs = distance(a, b);
  const double len = g.time_grid().time(t) - g.time_grid().time(s);
  const double m1 = std::max(flow_holder_seminorm(mu, beta, how, s, t).seminorm,
                             flow_holder_seminorm(mu2, beta, how, s, t).seminorm);
  auto seminorm = [&](const SamplePath& p) {
    double semi = 0.0;
    for (std::size_t l = t - s; l >= 1; l /= 2) {
      for (std::size_t u = s; u + l <= t; u += l)
        semi = std::max(semi, distance(p.at(u + l), p.at(u)) / std::pow(g.time_grid().time(u + l) - g.time_grid().time(u), beta));
      if (l == 1)
        break;
    }
    return semi;
  };
  const double path_m = std::max(seminorm(y), seminorm(y2));
  const double y_norm = path_holder_norm(y, y2, s, t, beta);
  const double flow_dist = flow_distance(mu, mu2, beta, how, s, t);
  const double end_gap = distance(y.at(t), y2.at(t)) + marginal_w1(mu.marginal(t), mu2.marginal(t), mu.dim(), how);
  out.rhs[0] = std::pow(len, gamma + beta) * gamma_norm * (1.0 + m1 + path_m) * y_norm;
  out.rhs[1] = std::pow(len, gamma + beta) * gamma_norm * (1.0 + path_m) * flow_dist;
  out.rhs[2] = std::pow(len, gamma) * gamma_norm * end_gap;
  const double total = out.rhs[0] + out.rhs[1] + out.rhs[2];
  out.ratio = total > 0.0 ? out.lhs / total : (out.lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  return out;
}

} // namespace mfy
