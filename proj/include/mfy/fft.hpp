#pragma once

#include "mfy/core.hpp"

#include <complex>
#include <unsupported/Eigen/FFT>
#include <vector>

namespace mfy {

using Complex = std::complex<double>;

/// In-place d-dimensional DFT of a row-major array whose every axis has
/// length `n`. The inverse transform is normalised by 1/n^d.
class CubeFFT
{
public:
  CubeFFT(std::size_t n, std::size_t dim)
    : n_(n)
    , dim_(dim)
  {
    require(is_power_of_two(n), "fft: axis length must be a power of two");
    require(dim >= 1, "fft: dimension must be positive");
  }

  std::size_t size() const
  {
    std::size_t s = 1;
    for (std::size_t a = 0; a < dim_; ++a)
      s *= n_;
    return s;
  }

  void forward(std::vector<Complex>& data) { transform(data, false); }
  void inverse(std::vector<Complex>& data) { transform(data, true); }

private:
  void transform(std::vector<Complex>& data, bool inverse)
  {
    require(data.size() == size(), "fft: data size does not match the cube");
    std::vector<Complex> line(n_), out(n_);
    std::size_t stride = 1;
    for (std::size_t axis = 0; axis < dim_; ++axis) {
      // lines along this axis: index = outer * (n*stride) + j*stride + inner
      const std::size_t block = n_ * stride;
      for (std::size_t outer = 0; outer < data.size(); outer += block) {
        for (std::size_t inner = 0; inner < stride; ++inner) {
          for (std::size_t j = 0; j < n_; ++j)
            line[j] = data[outer + j * stride + inner];
          if (inverse)
            engine_.inv(out, line);
          else
            engine_.fwd(out, line);
          for (std::size_t j = 0; j < n_; ++j)
            data[outer + j * stride + inner] = out[j];
        }
      }
      stride *= n_;
    }
  }

  std::size_t n_;
  std::size_t dim_;
  Eigen::FFT<double> engine_;
};

/// Signed frequency index of DFT bin j on an axis of length n.
inline long
signed_frequency(std::size_t j, std::size_t n)
{
  return j < n / 2 ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(n);
}

} // namespace mfy
