#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfy {

/// Base class for all library errors.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument, malformed configuration or incompatible grids.
class InvalidInput : public Error
{
public:
  using Error::Error;
};

/// A trajectory left the region where the drift is represented.
class OutOfGrid : public Error
{
public:
  OutOfGrid(const std::string& what, double time)
    : Error(what)
    , time_(time)
  {
  }
  double time() const { return time_; }

private:
  double time_;
};

/// The blow-up guard |Y| > 10 L tripped.
class BlowUp : public Error
{
public:
  BlowUp(const std::string& what, double time, std::size_t index)
    : Error(what)
    , time_(time)
    , index_(index)
  {
  }
  double time() const { return time_; }
  std::size_t index() const { return index_; }

private:
  double time_;
  std::size_t index_;
};

inline void
require(bool condition, const std::string& message)
{
  if (!condition)
    throw InvalidInput(message);
}

constexpr bool
is_power_of_two(std::size_t n)
{
  return n > 0 && (n & (n - 1)) == 0;
}

constexpr std::size_t
log2_exact(std::size_t n)
{
  std::size_t k = 0;
  while ((std::size_t{ 1 } << k) < n)
    ++k;
  return k;
}

inline double
norm(std::span<const double> v)
{
  double s = 0.0;
  for (double x : v)
    s += x * x;
  return std::sqrt(s);
}

inline double
distance(std::span<const double> a, std::span<const double> b)
{
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double d = a[c] - b[c];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Ordinary least-squares slope of y against x.
inline double
fit_slope(std::span<const double> x, std::span<const double> y)
{
  require(x.size() == y.size() && x.size() >= 2, "fit_slope: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

/// Slope of log(y) against log(x); non-positive y entries are skipped.
inline double
fit_loglog_slope(std::span<const double> x, std::span<const double> y)
{
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] > 0.0 && x[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < 2)
    return std::nan("");
  return fit_slope(lx, ly);
}

} // namespace mfy
