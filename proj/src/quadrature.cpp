#include "ppkde/quadrature.hpp"

#include "ppkde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ppkde {

Grid::Grid(double lo, double hi, std::size_t n_points)
  : lo_(lo)
  , hi_(hi)
  , n_(n_points)
  , dx_(0.0)
{
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
    throw std::invalid_argument("grid requires finite lo < hi");
  if (n_points < 2)
    throw std::invalid_argument("grid requires at least two points");
  dx_ = (hi - lo) / static_cast<double>(n_points - 1);
}

std::vector<double> Grid::points() const
{
  std::vector<double> x(n_);
  for (std::size_t i = 0; i < n_; ++i)
    x[i] = point(i);
  return x;
}

Grid default_window(std::span<const double> pooled,
                    double max_bandwidth,
                    const WindowOptions& opts)
{
  if (pooled.empty())
    throw std::invalid_argument("default_window: no samples");
  const auto [mn, mx] = std::minmax_element(pooled.begin(), pooled.end());
  const double n = static_cast<double>(pooled.size());
  const double mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : pooled)
    ss += (v - mean) * (v - mean);
  const double sd = pooled.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  double pad = opts.pad_multiplier * (max_bandwidth + sd);
  if (!(pad > 0.0))
    pad = 1.0;
  return Grid(*mn - pad, *mx + pad, opts.n_points);
}

double integrate_values(std::span<const double> values, double dx)
{
  const std::size_t n = values.size();
  if (n < 2)
    throw std::invalid_argument("integrate_values: need at least two values");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(values[i]))
      throw NumericalError("non-finite integrand at grid index " +
                           std::to_string(i));
  }
  const std::size_t panels = n - 1;
  const std::size_t simpson_panels = panels - panels % 2;
  double sum = 0.0;
  if (simpson_panels > 0) {
    double odd = 0.0, even = 0.0;
    for (std::size_t i = 1; i < simpson_panels; ++i)
      (i % 2 ? odd : even) += values[i];
    sum = dx / 3.0 *
          (values[0] + values[simpson_panels] + 4.0 * odd + 2.0 * even);
  }
  if (panels % 2)
    sum += 0.5 * dx * (values[n - 2] + values[n - 1]);
  return sum;
}

double integrate(const std::function<double(double)>& f, const Grid& grid)
{
  std::vector<double> y(grid.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = f(grid.point(i));
  return integrate_values(y, grid.spacing());
}

ScalarMinimum argmin_scalar(const std::function<double(double)>& f,
                            double lo,
                            double hi,
                            double tol,
                            int max_iter)
{
  if (!(lo < hi))
    throw std::invalid_argument("argmin_scalar requires lo < hi");
  if (!(tol > 0.0))
    throw std::invalid_argument("argmin_scalar requires tol > 0");

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  int it = 0;
  while (b - a > tol) {
    if (++it > max_iter)
      throw NonConvergence("golden-section search did not reach tolerance");
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return { x, f(x), it };
}

std::vector<double> gradient_fd(const VectorFunction& f,
                                std::span<const double> x,
                                double eps)
{
  if (!(eps > 0.0))
    throw std::invalid_argument("gradient_fd requires eps > 0");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

} // namespace ppkde
