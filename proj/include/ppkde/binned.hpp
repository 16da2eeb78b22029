#pragma once

#include "ppkde/kernels.hpp"
#include "ppkde/quadrature.hpp"

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace ppkde {

//! Fast approximate KDE on a grid: linear binning of the sample followed by
//! an FFT convolution with the sampled kernel. The error relative to the
//! exact sum is O((dx / h)^2).
//!
//! One instance serves every bandwidth up to max_bandwidth on its grid.
//! Instances are immutable after construction and safe to share.
class BinnedKde
{
public:
  using Spectrum = std::vector<std::complex<double>>;

  BinnedKde(const Grid& grid, double max_bandwidth, const Kernel& kernel);

  const Grid& grid() const noexcept { return grid_; }
  std::size_t fft_size() const noexcept { return fft_size_; }

  //! Fourier transform of the linearly binned, 1/N-weighted sample.
  //! Values outside the grid are assigned to the nearest end point.
  Spectrum bin(std::span<const double> sample) const;

  //! Transform of K^{(deriv)}(. / h) / h^{deriv + 1} sampled on the grid.
  Spectrum kernel_spectrum(double h, int deriv = 0) const;

  //! Grid values of the estimator given both transforms.
  std::vector<double> evaluate(const Spectrum& bins,
                               const Spectrum& kernel) const;

  std::vector<double> evaluate(std::span<const double> sample,
                               double h,
                               int deriv = 0) const;

private:
  Grid grid_;
  Kernel kernel_;
  double max_h_;
  std::size_t fft_size_;
};

} // namespace ppkde
