#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace ppkde {

//! Uniformly spaced points lo = x_0 < ... < x_{n-1} = hi.
class Grid
{
public:
  Grid(double lo, double hi, std::size_t n_points);

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  std::size_t size() const noexcept { return n_; }
  double spacing() const noexcept { return dx_; }
  double point(std::size_t i) const noexcept
  {
    return i + 1 == n_ ? hi_ : lo_ + static_cast<double>(i) * dx_;
  }
  std::vector<double> points() const;

  friend bool operator==(const Grid&, const Grid&) = default;

private:
  double lo_;
  double hi_;
  std::size_t n_;
  double dx_;
};

//! Padding rule for truncating integrals over the real line.
struct WindowOptions
{
  double pad_multiplier = 5.0;
  std::size_t n_points = 4001;
};

//! [min - p*(h_max + sd), max + p*(h_max + sd)] over the pooled samples,
//! where sd is the pooled sample standard deviation.
Grid default_window(std::span<const double> pooled,
                    double max_bandwidth,
                    const WindowOptions& opts = {});

//! Composite Simpson rule on samples f(x_0..x_{n-1}) with spacing dx; an odd
//! trailing panel is closed with the trapezoid rule. Throws NumericalError on
//! non-finite values.
double integrate_values(std::span<const double> values, double dx);

double integrate(const std::function<double(double)>& f, const Grid& grid);

struct ScalarMinimum
{
  double x;
  double value;
  int iterations;
};

//! Golden-section search on [lo, hi]; the bracket is shrunk until its width
//! is below tol. Throws NonConvergence after max_iter iterations.
ScalarMinimum argmin_scalar(const std::function<double(double)>& f,
                            double lo,
                            double hi,
                            double tol,
                            int max_iter = 500);

using VectorFunction = std::function<double(std::span<const double>)>;

//! Central-difference gradient with step eps in every coordinate.
std::vector<double> gradient_fd(const VectorFunction& f,
                                std::span<const double> x,
                                double eps);

} // namespace ppkde
