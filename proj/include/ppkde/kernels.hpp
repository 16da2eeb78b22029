#pragma once

#include <array>
#include <string>
#include <string_view>

namespace ppkde {

enum class KernelFamily
{
  gaussian,
  epanechnikov
};

//! A symmetric second-order kernel K with its constants.
//!
//! Moments k_s = int |t|^s K(t) dt (s = 0..3) and the roughness int K^2 are
//! stored in closed form; the constructor re-derives them by quadrature and
//! throws std::logic_error if the two disagree.
class Kernel
{
public:
  explicit Kernel(KernelFamily family = KernelFamily::gaussian);

  //! Accepts "gaussian" or "epanechnikov".
  static Kernel from_name(std::string_view name);

  KernelFamily family() const noexcept { return family_; }
  std::string_view name() const noexcept;

  double operator()(double t) const noexcept { return eval(t); }
  double eval(double t) const noexcept;

  //! d^order K / dt^order. Orders 1 and 2 need a smooth kernel.
  double derivative(double t, int order) const;

  //! Whether analytic first and second derivatives are available.
  bool smooth() const noexcept { return family_ == KernelFamily::gaussian; }

  double moment(int s) const;
  double k2() const noexcept { return moments_[2]; }
  double roughness() const noexcept { return roughness_; }

  //! K_2(z) = int K(s) K(s - z) ds.
  double autocorrelation(double z) const noexcept;

  //! K vanishes (or is below double resolution relative to K(0)) for
  //! |t| > support_radius().
  double support_radius() const noexcept;

private:
  void verify_constants() const;

  KernelFamily family_;
  std::array<double, 4> moments_{};
  double roughness_ = 0.0;
};

} // namespace ppkde
