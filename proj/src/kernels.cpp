#include "ppkde/kernels.hpp"

#include "ppkde/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ppkde {

namespace {

constexpr double inv_sqrt_2pi = 0.3989422804014327;
constexpr double gaussian_cutoff = 9.0;

double gaussian(double t) noexcept
{
  return inv_sqrt_2pi * std::exp(-0.5 * t * t);
}

} // namespace

Kernel::Kernel(KernelFamily family)
  : family_(family)
{
  switch (family_) {
    case KernelFamily::gaussian: {
      const double a = std::sqrt(2.0 / std::numbers::pi);
      moments_ = { 1.0, a, 1.0, 2.0 * a };
      roughness_ = 0.5 / std::sqrt(std::numbers::pi);
      break;
    }
    case KernelFamily::epanechnikov:
      moments_ = { 1.0, 0.375, 0.2, 0.125 };
      roughness_ = 0.6;
      break;
  }
  verify_constants();
}

Kernel Kernel::from_name(std::string_view name)
{
  if (name == "gaussian")
    return Kernel(KernelFamily::gaussian);
  if (name == "epanechnikov")
    return Kernel(KernelFamily::epanechnikov);
  throw std::invalid_argument("unknown kernel '" + std::string(name) +
                              "' (expected gaussian or epanechnikov)");
}

std::string_view Kernel::name() const noexcept
{
  return family_ == KernelFamily::gaussian ? "gaussian" : "epanechnikov";
}

double Kernel::eval(double t) const noexcept
{
  if (family_ == KernelFamily::gaussian)
    return gaussian(t);
  return std::abs(t) <= 1.0 ? 0.75 * (1.0 - t * t) : 0.0;
}

double Kernel::derivative(double t, int order) const
{
  if (order == 0)
    return eval(t);
  if (order < 0 || order > 2)
    throw std::invalid_argument("kernel derivative order must be 0, 1 or 2");
  if (!smooth())
    throw std::invalid_argument(
      "derivatives require a smooth kernel; epanechnikov is not");
  const double phi = gaussian(t);
  return order == 1 ? -t * phi : (t * t - 1.0) * phi;
}

double Kernel::moment(int s) const
{
  if (s < 0 || s > 3)
    throw std::out_of_range("kernel moments are defined for s in 0..3");
  return moments_[static_cast<std::size_t>(s)];
}

double Kernel::autocorrelation(double z) const noexcept
{
  if (family_ == KernelFamily::gaussian) {
    // N(0, 2) density
    return 0.5 / std::sqrt(std::numbers::pi) * std::exp(-0.25 * z * z);
  }
  const double a = std::abs(z);
  if (a >= 2.0)
    return 0.0;
  const double d = 2.0 - a;
  return 3.0 / 160.0 * d * d * d * (a * a + 6.0 * a + 4.0);
}

double Kernel::support_radius() const noexcept
{
  return family_ == KernelFamily::gaussian ? gaussian_cutoff : 1.0;
}

void Kernel::verify_constants() const
{
  const double r = family_ == KernelFamily::gaussian ? 14.0 : 1.0;
  const Grid grid(-r, r, 8001);
  const auto check = [&](double numeric, double analytic, const char* what) {
    if (std::abs(numeric - analytic) > 1e-8)
      throw std::logic_error(std::string("kernel constant mismatch: ") + what);
  };
  for (int s = 0; s <= 3; ++s) {
    const double q = integrate(
      [&](double t) { return std::pow(std::abs(t), s) * eval(t); }, grid);
    check(q, moments_[static_cast<std::size_t>(s)], "moment");
  }
  check(integrate([&](double t) { return eval(t) * eval(t); }, grid),
        roughness_,
        "roughness");
}

} // namespace ppkde
