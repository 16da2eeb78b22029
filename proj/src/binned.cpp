#include "ppkde/binned.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace ppkde {

namespace {

// FFTW planning is not thread-safe; executing an existing plan on new arrays
// is. Plans are created once per transform size and kept for the process.
struct Plans
{
  fftw_plan forward;
  fftw_plan backward;
};

struct FftwBuffer
{
  explicit FftwBuffer(std::size_t bytes)
    : ptr(fftw_malloc(bytes))
  {
    if (!ptr)
      throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;

  double* real() { return static_cast<double*>(ptr); }
  fftw_complex* cplx() { return static_cast<fftw_complex*>(ptr); }

  void* ptr;
};

const Plans& plans_for(std::size_t n)
{
  static std::mutex mutex;
  static std::map<std::size_t, Plans> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) {
    FftwBuffer r(sizeof(double) * n);
    FftwBuffer c(sizeof(fftw_complex) * (n / 2 + 1));
    const int ni = static_cast<int>(n);
    Plans p{
      fftw_plan_dft_r2c_1d(ni, r.real(), c.cplx(), FFTW_ESTIMATE),
      fftw_plan_dft_c2r_1d(ni, c.cplx(), r.real(), FFTW_ESTIMATE),
    };
    it = cache.emplace(n, p).first;
  }
  return it->second;
}

BinnedKde::Spectrum forward(std::span<const double> x, std::size_t n)
{
  FftwBuffer in(sizeof(double) * n);
  FftwBuffer out(sizeof(fftw_complex) * (n / 2 + 1));
  for (std::size_t i = 0; i < n; ++i)
    in.real()[i] = x[i];
  fftw_execute_dft_r2c(plans_for(n).forward, in.real(), out.cplx());
  BinnedKde::Spectrum s(n / 2 + 1);
  for (std::size_t k = 0; k < s.size(); ++k)
    s[k] = { out.cplx()[k][0], out.cplx()[k][1] };
  return s;
}

std::size_t next_pow2(std::size_t n)
{
  std::size_t p = 1;
  while (p < n)
    p <<= 1;
  return p;
}

} // namespace

BinnedKde::BinnedKde(const Grid& grid, double max_bandwidth, const Kernel& kernel)
  : grid_(grid)
  , kernel_(kernel)
  , max_h_(max_bandwidth)
  , fft_size_(0)
{
  if (!(max_bandwidth > 0.0))
    throw std::invalid_argument("BinnedKde needs max_bandwidth > 0");
  const double taps =
    std::ceil(kernel_.support_radius() * max_h_ / grid_.spacing());
  fft_size_ = next_pow2(grid_.size() + static_cast<std::size_t>(taps) + 1);
}

BinnedKde::Spectrum BinnedKde::bin(std::span<const double> sample) const
{
  if (sample.empty())
    throw std::invalid_argument("cannot bin an empty sample");
  std::vector<double> counts(fft_size_, 0.0);
  const double w = 1.0 / static_cast<double>(sample.size());
  const double dx = grid_.spacing();
  const auto last = static_cast<double>(grid_.size() - 1);
  for (double v : sample) {
    const double pos = std::clamp((v - grid_.lo()) / dx, 0.0, last);
    const double base = std::min(std::floor(pos), last - 1.0);
    const double frac = pos - base;
    const auto j = static_cast<std::size_t>(base);
    counts[j] += w * (1.0 - frac);
    counts[j + 1] += w * frac;
  }
  return forward(counts, fft_size_);
}

BinnedKde::Spectrum BinnedKde::kernel_spectrum(double h, int deriv) const
{
  if (!(h > 0.0) || h > max_h_ * (1.0 + 1e-12))
    throw std::invalid_argument("bandwidth outside (0, max_bandwidth]");
  const double dx = grid_.spacing();
  const auto taps = static_cast<std::size_t>(
    std::min(std::ceil(kernel_.support_radius() * h / dx),
             static_cast<double>(fft_size_ - grid_.size())));
  const double scale = 1.0 / std::pow(h, deriv + 1);
  std::vector<double> w(fft_size_, 0.0);
  w[0] = kernel_.derivative(0.0, deriv) * scale;
  for (std::size_t k = 1; k <= taps; ++k) {
    const double t = static_cast<double>(k) * dx / h;
    w[k] = kernel_.derivative(t, deriv) * scale;
    w[fft_size_ - k] = kernel_.derivative(-t, deriv) * scale;
  }
  return forward(w, fft_size_);
}

std::vector<double> BinnedKde::evaluate(const Spectrum& bins,
                                        const Spectrum& kernel) const
{
  const std::size_t n = fft_size_;
  if (bins.size() != n / 2 + 1 || kernel.size() != n / 2 + 1)
    throw std::invalid_argument("spectrum size does not match the plan");
  FftwBuffer in(sizeof(fftw_complex) * (n / 2 + 1));
  FftwBuffer out(sizeof(double) * n);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const std::complex<double> z = bins[k] * kernel[k];
    in.cplx()[k][0] = z.real();
    in.cplx()[k][1] = z.imag();
  }
  fftw_execute_dft_c2r(plans_for(n).backward, in.cplx(), out.real());
  std::vector<double> y(grid_.size());
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = out.real()[i] * inv;
  return y;
}

std::vector<double> BinnedKde::evaluate(std::span<const double> sample,
                                        double h,
                                        int deriv) const
{
  return evaluate(bin(sample), kernel_spectrum(h, deriv));
}

} // namespace ppkde
