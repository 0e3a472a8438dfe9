#pragma once

#include "mfy/fft.hpp"
#include "mfy/grid.hpp"

#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

namespace mfy {

enum class KernelFamily
{
  zero,
  power_law,
  biot_savart,
  mollified_dirac,
  lennard_jones,
  linear,
  custom
};

/// Orientation of the power-law family: `gradient` is the odd vector field
/// x |x|^{sigma-1}, `radial` the scalar |x|^sigma.
enum class PowerLawMode
{
  gradient,
  radial
};

inline std::string
to_string(KernelFamily f)
{
  switch (f) {
    case KernelFamily::zero:
      return "zero";
    case KernelFamily::power_law:
      return "power_law";
    case KernelFamily::biot_savart:
      return "biot_savart";
    case KernelFamily::mollified_dirac:
      return "dirac";
    case KernelFamily::lennard_jones:
      return "lennard_jones";
    case KernelFamily::linear:
      return "linear";
    case KernelFamily::custom:
      return "custom";
  }
  return "unknown";
}

/// Interaction kernel K: R^d -> R^m, with m = d for vector families and
/// m = 1 for scalar ones.
///
/// Singular families are replaced inside the ball |x| < epsilon by a radial
/// polynomial blend q(|x|) matching value, first and second radial derivative
/// at |x| = epsilon. Odd vector families use q(s) = a3 s^3 + a4 s^4 + a5 s^5
/// (so K(0) = 0 and K stays odd); scalar families use the even profile
/// q(s) = a0 + a2 s^2 + a4 s^4 (so q'(0) = 0). The Dirac mass is the unit-mass
/// Gaussian of width epsilon. Biot-Savart carries the 1/(2 pi) prefactor,
/// K(x) = x^perp / (2 pi |x|^2) with x^perp = (-x_2, x_1).
class Kernel
{
public:
  static Kernel zero(std::size_t dim)
  {
    Kernel k(KernelFamily::zero, dim);
    return k;
  }

  static Kernel power_law(double sigma, double epsilon, std::size_t dim,
                          PowerLawMode mode = PowerLawMode::gradient, double scale = 1.0)
  {
    require(sigma <= 0.0, "power_law: sigma must be <= 0");
    require(epsilon > 0.0, "power_law: epsilon must be positive");
    Kernel k(KernelFamily::power_law, dim);
    k.sigma_ = sigma;
    k.epsilon_ = epsilon;
    k.mode_ = mode;
    k.scale_ = scale;
    k.prepare_blend();
    return k;
  }

  static Kernel biot_savart(double epsilon, double scale = 1.0)
  {
    require(epsilon > 0.0, "biot_savart: epsilon must be positive");
    Kernel k(KernelFamily::biot_savart, 2);
    k.sigma_ = -1.0;
    k.epsilon_ = epsilon;
    k.scale_ = scale;
    k.prepare_blend();
    return k;
  }

  static Kernel dirac(double epsilon, std::size_t dim, double scale = 1.0)
  {
    require(epsilon > 0.0, "dirac: epsilon must be positive");
    Kernel k(KernelFamily::mollified_dirac, dim);
    k.sigma_ = -static_cast<double>(dim);
    k.epsilon_ = epsilon;
    k.scale_ = scale;
    return k;
  }

  static Kernel lennard_jones(double p, double epsilon, std::size_t dim, double scale = 1.0)
  {
    require(p > 0.0, "lennard_jones: p must be positive");
    require(epsilon > 0.0, "lennard_jones: epsilon must be positive");
    Kernel k(KernelFamily::lennard_jones, dim);
    k.sigma_ = -2.0 * p;
    k.lj_p_ = p;
    k.epsilon_ = epsilon;
    k.scale_ = scale;
    k.prepare_blend();
    return k;
  }

  /// K(x) = A x with A given row-major (dim x dim).
  static Kernel linear(std::vector<double> matrix, std::size_t dim)
  {
    require(matrix.size() == dim * dim, "linear: matrix must be dim x dim");
    Kernel k(KernelFamily::linear, dim);
    k.sigma_ = 1.0;
    k.matrix_ = std::move(matrix);
    return k;
  }

  /// K(x) = a x.
  static Kernel linear(double a, std::size_t dim)
  {
    std::vector<double> m(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
      m[i * dim + i] = a;
    return linear(std::move(m), dim);
  }

  /// Tabulated kernel, evaluated by multilinear interpolation.
  static Kernel custom(GriddedField table)
  {
    Kernel k(KernelFamily::custom, table.grid().dim());
    k.table_ = std::make_shared<const GriddedField>(std::move(table));
    return k;
  }

  KernelFamily family() const { return family_; }
  std::size_t dim() const { return dim_; }
  double sigma() const { return sigma_; }
  double epsilon() const { return epsilon_; }
  double scale() const { return scale_; }
  PowerLawMode mode() const { return mode_; }
  double lj_p() const { return lj_p_; }
  const std::vector<double>& matrix() const { return matrix_; }

  bool singular() const
  {
    return family_ == KernelFamily::power_law || family_ == KernelFamily::biot_savart ||
           family_ == KernelFamily::lennard_jones || family_ == KernelFamily::mollified_dirac;
  }

  bool vector_valued() const
  {
    switch (family_) {
      case KernelFamily::zero:
      case KernelFamily::biot_savart:
      case KernelFamily::linear:
        return true;
      case KernelFamily::power_law:
        return mode_ == PowerLawMode::gradient;
      case KernelFamily::custom:
        return table_->components() == dim_;
      default:
        return false;
    }
  }

  std::size_t components() const
  {
    if (family_ == KernelFamily::custom)
      return table_->components();
    return vector_valued() ? dim_ : 1;
  }

  void evaluate(std::span<const double> x, std::span<double> out) const
  {
    switch (family_) {
      case KernelFamily::zero:
        std::fill(out.begin(), out.end(), 0.0);
        return;
      case KernelFamily::linear:
        for (std::size_t i = 0; i < dim_; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < dim_; ++j)
            s += matrix_[i * dim_ + j] * x[j];
          out[i] = s;
        }
        return;
      case KernelFamily::custom:
        if (!table_->interpolate(x, out))
          std::fill(out.begin(), out.end(), 0.0);
        return;
      case KernelFamily::mollified_dirac: {
        double r2 = 0.0;
        for (std::size_t a = 0; a < dim_; ++a)
          r2 += x[a] * x[a];
        const double e2 = epsilon_ * epsilon_;
        out[0] = scale_ * std::exp(-0.5 * r2 / e2) /
                 std::pow(2.0 * std::numbers::pi * e2, 0.5 * static_cast<double>(dim_));
        return;
      }
      default:
        break;
    }
    const double r = norm(x.first(dim_));
    const double g = scale_ * profile(r);
    if (!vector_valued()) {
      out[0] = g;
      return;
    }
    if (r == 0.0) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    if (family_ == KernelFamily::biot_savart) {
      out[0] = -g * x[1] / r;
      out[1] = g * x[0] / r;
      return;
    }
    for (std::size_t a = 0; a < dim_; ++a)
      out[a] = g * x[a] / r;
  }

  std::vector<double> operator()(std::span<const double> x) const
  {
    std::vector<double> out(components());
    evaluate(x, out);
    return out;
  }

  /// Radial profile (before the scale factor) of the singular families.
  double profile(double r) const
  {
    if (r < epsilon_) {
      const double s = r / epsilon_;
      if (vector_valued())
        return s * s * s * (blend_[0] + s * (blend_[1] + s * blend_[2]));
      const double s2 = s * s;
      return blend_[0] + s2 * (blend_[1] + s2 * blend_[2]);
    }
    return exterior(r, 0);
  }

  /// "family:param,eps=...,mode=...,scale=..." form, parseable by parse_kernel.
  std::string spec_string() const
  {
    std::ostringstream os;
    os.precision(17);
    os << to_string(family_);
    switch (family_) {
      case KernelFamily::power_law:
        os << ':' << sigma_ << ",eps=" << epsilon_
           << ",mode=" << (mode_ == PowerLawMode::gradient ? "gradient" : "radial");
        break;
      case KernelFamily::biot_savart:
      case KernelFamily::mollified_dirac:
        os << ",eps=" << epsilon_;
        break;
      case KernelFamily::lennard_jones:
        os << ':' << lj_p_ << ",eps=" << epsilon_;
        break;
      case KernelFamily::linear:
        os << ':' << matrix_[0];
        break;
      default:
        break;
    }
    if (scale_ != 1.0)
      os << ",scale=" << scale_;
    return os.str();
  }

private:
  Kernel(KernelFamily family, std::size_t dim)
    : family_(family)
    , dim_(dim)
  {
    require(dim >= 1 && dim <= 3, "Kernel: dimension must be 1, 2 or 3");
  }

  // order-th radial derivative of the unmollified profile
  double exterior(double r, int order) const
  {
    switch (family_) {
      case KernelFamily::power_law:
      case KernelFamily::biot_savart: {
        const double s = sigma_;
        const double c = family_ == KernelFamily::biot_savart ? 0.5 / std::numbers::pi : 1.0;
        if (order == 0)
          return c * std::pow(r, s);
        if (order == 1)
          return c * s * std::pow(r, s - 1);
        return c * s * (s - 1) * std::pow(r, s - 2);
      }
      case KernelFamily::lennard_jones: {
        const double p = lj_p_;
        if (order == 0)
          return std::pow(r, -2 * p) - 2 * std::pow(r, -p);
        if (order == 1)
          return -2 * p * std::pow(r, -2 * p - 1) + 2 * p * std::pow(r, -p - 1);
        return 2 * p * (2 * p + 1) * std::pow(r, -2 * p - 2) - 2 * p * (p + 1) * std::pow(r, -p - 2);
      }
      default:
        return 0.0;
    }
  }

  void prepare_blend()
  {
    const double e = epsilon_;
    const double v[3] = { exterior(e, 0), e * exterior(e, 1), e * e * exterior(e, 2) };
    // rows: q(1), q'(1), q''(1) for the chosen monomial basis
    double m[3][3];
    if (vector_valued()) {
      const double mv[3][3] = { { 1, 1, 1 }, { 3, 4, 5 }, { 6, 12, 20 } };
      std::copy(&mv[0][0], &mv[0][0] + 9, &m[0][0]);
    } else {
      const double ms[3][3] = { { 1, 1, 1 }, { 0, 2, 4 }, { 0, 2, 12 } };
      std::copy(&ms[0][0], &ms[0][0] + 9, &m[0][0]);
    }
    auto det3 = [](const double a[3][3]) {
      return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
             a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
             a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    };
    const double d = det3(m);
    for (int col = 0; col < 3; ++col) {
      double mc[3][3];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          mc[i][j] = j == col ? v[i] : m[i][j];
      blend_[col] = det3(mc) / d;
    }
  }

  KernelFamily family_;
  std::size_t dim_;
  double sigma_ = 0.0;
  double epsilon_ = 0.0;
  double scale_ = 1.0;
  double lj_p_ = 0.0;
  PowerLawMode mode_ = PowerLawMode::gradient;
  std::vector<double> matrix_;
  std::shared_ptr<const GriddedField> table_;
  double blend_[3] = { 0, 0, 0 };
};

/// Parses "family[:param][,key=value...]", e.g. "power_law:-1,eps=0.03".
inline Kernel
parse_kernel(const std::string& text, std::size_t dim)
{
  auto to_number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used > 0 && used == s.size(), "kernel: '" + s + "' is not a number in '" + text + "'");
    return v;
  };
  std::string head = text;
  std::map<std::string, std::string> opts;
  if (const auto comma = text.find(','); comma != std::string::npos) {
    head = text.substr(0, comma);
    std::stringstream rest(text.substr(comma + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      const auto eq = item.find('=');
      require(eq != std::string::npos, "kernel: option '" + item + "' is not key=value");
      opts[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }
  std::string family = head;
  std::optional<double> param;
  if (const auto colon = head.find(':'); colon != std::string::npos) {
    family = head.substr(0, colon);
    param = to_number(head.substr(colon + 1));
  }
  auto number = [&](const std::string& key, std::optional<double> fallback) {
    if (auto it = opts.find(key); it != opts.end())
      return to_number(it->second);
    require(fallback.has_value(), "kernel: missing option '" + key + "' for " + family);
    return *fallback;
  };
  const double scale = number("scale", 1.0);
  if (family == "zero")
    return Kernel::zero(dim);
  if (family == "power_law") {
    require(param.has_value(), "kernel: power_law needs sigma, e.g. power_law:-1");
    PowerLawMode mode = PowerLawMode::gradient;
    if (auto it = opts.find("mode"); it != opts.end()) {
      require(it->second == "gradient" || it->second == "radial", "kernel: mode must be gradient or radial");
      mode = it->second == "radial" ? PowerLawMode::radial : PowerLawMode::gradient;
    }
    return Kernel::power_law(*param, number("eps", std::nullopt), dim, mode, scale);
  }
  if (family == "biot_savart") {
    require(dim == 2, "kernel: biot_savart requires d = 2");
    return Kernel::biot_savart(number("eps", std::nullopt), scale);
  }
  if (family == "dirac")
    return Kernel::dirac(number("eps", std::nullopt), dim, scale);
  if (family == "lennard_jones") {
    require(param.has_value(), "kernel: lennard_jones needs p, e.g. lennard_jones:6");
    return Kernel::lennard_jones(*param, number("eps", std::nullopt), dim, scale);
  }
  if (family == "linear") {
    require(param.has_value(), "kernel: linear needs a coefficient, e.g. linear:-1");
    return Kernel::linear(*param, dim);
  }
  throw InvalidInput("kernel: unknown family '" + family + "'");
}

/// Samples the kernel at every node of the grid; singular kernels require
/// the grid to resolve the mollification radius (h <= epsilon / 2).
inline GriddedField
evaluate_on_grid(const Kernel& kernel, const SpatialGrid& grid)
{
  require(kernel.dim() == grid.dim(), "evaluate_on_grid: kernel and grid dimensions differ");
  if (kernel.singular())
    require(grid.spacing() <= 0.5 * kernel.epsilon() * (1 + 1e-12),
            "evaluate_on_grid: grid spacing " + std::to_string(grid.spacing()) +
              " does not resolve epsilon = " + std::to_string(kernel.epsilon()));
  GriddedField field(grid, kernel.components());
  std::vector<double> x(grid.dim());
  for (std::size_t node = 0; node < grid.size(); ++node) {
    grid.node(node, x);
    kernel.evaluate(x, field.at(node));
  }
  return field;
}

/// Largest admissible Hurst index 1/(4 - 2 sigma) for a kernel of order sigma <= 0.
inline double
hurst_threshold(double sigma)
{
  require(sigma <= 0.0, "hurst_threshold: sigma must be <= 0");
  return 1.0 / (4.0 - 2.0 * sigma);
}

/// L^p exponent of a block norm.
enum class LpNorm
{
  one,
  two,
  infinity
};

/// ||Delta_k f||_{L^p} for k = -1..k_max, where Delta_{-1} keeps |xi| < 1
/// and Delta_k keeps 2^k <= |xi| < 2^{k+1}, with xi in cycles per unit length
/// of the periodised discrete transform. For vector fields the pointwise
/// Euclidean norm is used.
inline std::vector<double>
besov_block_norms(const GriddedField& field, LpNorm p, int k_max)
{
  const auto& grid = field.grid();
  const std::size_t n = grid.n_cells();
  const double period = 2.0 * grid.half_width();
  const double nyquist = static_cast<double>(n) / (2.0 * period);
  require(k_max >= -1, "besov_block_norms: k_max must be >= -1");
  require(std::ldexp(1.0, k_max) <= nyquist,
          "besov_block_norms: k_max exceeds the grid Nyquist band");
  const std::size_t size = grid.size();
  const std::size_t comps = field.components();
  CubeFFT fft(n, grid.dim());

  std::vector<std::vector<Complex>> spectra(comps, std::vector<Complex>(size));
  for (std::size_t c = 0; c < comps; ++c) {
    for (std::size_t i = 0; i < size; ++i)
      spectra[c][i] = field.values()[i * comps + c];
    fft.forward(spectra[c]);
  }
  std::vector<double> radius(size);
  for (std::size_t i = 0; i < size; ++i) {
    const auto idx = grid.unflatten(i);
    double r2 = 0.0;
    for (std::size_t a = 0; a < grid.dim(); ++a) {
      const double xi = static_cast<double>(signed_frequency(idx[a], n)) / period;
      r2 += xi * xi;
    }
    radius[i] = std::sqrt(r2);
  }

  const double vol = grid.cell_volume();
  std::vector<double> norms;
  std::vector<double> pointwise(size);
  std::vector<Complex> block(size);
  for (int k = -1; k <= k_max; ++k) {
    const double lo = k < 0 ? 0.0 : std::ldexp(1.0, k);
    const double hi = std::ldexp(1.0, k + 1);
    std::fill(pointwise.begin(), pointwise.end(), 0.0);
    for (std::size_t c = 0; c < comps; ++c) {
      for (std::size_t i = 0; i < size; ++i)
        block[i] = (radius[i] >= lo && radius[i] < hi) ? spectra[c][i] : Complex(0.0);
      fft.inverse(block);
      for (std::size_t i = 0; i < size; ++i)
        pointwise[i] += block[i].real() * block[i].real();
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      const double v = std::sqrt(pointwise[i]);
      switch (p) {
        case LpNorm::one:
          acc += v * vol;
          break;
        case LpNorm::two:
          acc += v * v * vol;
          break;
        case LpNorm::infinity:
          acc = std::max(acc, v);
          break;
      }
    }
    norms.push_back(p == LpNorm::two ? std::sqrt(acc) : acc);
  }
  return norms;
}

} // namespace mfy
