#include "ppkde/amise.hpp"

#include "ppkde/errors.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace ppkde {

namespace {

void check_bandwidths(std::span<const double> h, std::size_t m)
{
  if (h.size() != m)
    throw std::invalid_argument("bandwidth vector has the wrong length");
  for (double v : h) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument("bandwidths must be positive and finite");
  }
}

void check_sizes(std::span<const double> sizes, std::size_t m)
{
  if (sizes.size() != m)
    throw std::invalid_argument("sample-size vector has the wrong length");
  for (double v : sizes) {
    if (!(v >= 1.0))
      throw std::invalid_argument("sample sizes must be >= 1");
  }
}

// prod_{k != m} v_k for every m, without dividing.
std::vector<double> leave_one_out_products(std::span<const double> v)
{
  const std::size_t m = v.size();
  std::vector<double> out(m, 1.0);
  double prefix = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    out[i] = prefix;
    prefix *= v[i];
  }
  double suffix = 1.0;
  for (std::size_t i = m; i-- > 0;) {
    out[i] *= suffix;
    suffix *= v[i];
  }
  return out;
}

double dot_integral(const std::vector<double>& a,
                    const std::vector<double>& b,
                    double dx)
{
  std::vector<double> prod(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    prod[i] = a[i] * b[i];
  return integrate_values(prod, dx);
}

} // namespace

double bias_leading(DensitySet densities,
                    std::span<const double> h,
                    const Kernel& kernel,
                    double x)
{
  const std::size_t m = densities.size();
  check_bandwidths(h, m);
  std::vector<double> p(m);
  for (std::size_t i = 0; i < m; ++i)
    p[i] = densities[i]->value(x, 0);
  const auto others = leave_one_out_products(p);
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    sum += h[i] * h[i] * densities[i]->value(x, 2) * others[i];
  return 0.5 * kernel.k2() * sum;
}

double variance_leading(DensitySet densities,
                        std::span<const double> sizes,
                        std::span<const double> h,
                        const Kernel& kernel,
                        double x)
{
  const std::size_t m = densities.size();
  check_bandwidths(h, m);
  check_sizes(sizes, m);
  std::vector<double> p(m), p2(m);
  for (std::size_t i = 0; i < m; ++i) {
    p[i] = densities[i]->value(x, 0);
    p2[i] = p[i] * p[i];
  }
  const auto others = leave_one_out_products(p2);
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    sum += p[i] / (sizes[i] * h[i]) * others[i];
  return sum * kernel.roughness();
}

LeadingTerms::LeadingTerms(DensitySet densities,
                           const Grid& grid,
                           const Kernel& kernel)
  : grid_(grid)
  , k2_(kernel.k2())
  , roughness_(kernel.roughness())
{
  if (densities.empty())
    throw std::invalid_argument("LeadingTerms needs at least one density");
  std::vector<std::vector<double>> values, second;
  for (const auto* d : densities) {
    values.push_back(d->on_grid(grid_, 0));
    second.push_back(d->on_grid(grid_, 2));
  }
  assemble(std::move(values), std::move(second));
}

LeadingTerms::LeadingTerms(std::vector<std::vector<double>> values,
                           std::vector<std::vector<double>> second_derivatives,
                           const Grid& grid,
                           const Kernel& kernel)
  : grid_(grid)
  , k2_(kernel.k2())
  , roughness_(kernel.roughness())
{
  if (values.empty() || values.size() != second_derivatives.size())
    throw std::invalid_argument("LeadingTerms: mismatched component arrays");
  assemble(std::move(values), std::move(second_derivatives));
}

void LeadingTerms::assemble(std::vector<std::vector<double>> values,
                            std::vector<std::vector<double>> second)
{
  const std::size_t m = values.size();
  const std::size_t n = grid_.size();
  for (std::size_t k = 0; k < m; ++k) {
    if (values[k].size() != n || second[k].size() != n)
      throw std::invalid_argument("LeadingTerms: array does not match grid");
  }
  pstar_.assign(n, 1.0);
  g_.assign(m, std::vector<double>(n));
  w_.assign(m, std::vector<double>(n));
  std::vector<double> p(m), p2(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      p[k] = values[k][i];
      p2[k] = p[k] * p[k];
      pstar_[i] *= p[k];
    }
    const auto others = leave_one_out_products(p);
    const auto others2 = leave_one_out_products(p2);
    for (std::size_t k = 0; k < m; ++k) {
      g_[k][i] = second[k][i] * others[k];
      w_[k][i] = p[k] * others2[k];
    }
  }
  lambda_ = integrate_values(pstar_, grid_.spacing());
  if (!(lambda_ > degenerate_lambda))
    throw DegenerateProduct(lambda_);
}

void LeadingTerms::check(std::span<const double> sizes,
                         std::span<const double> h) const
{
  check_bandwidths(h, subsets());
  check_sizes(sizes, subsets());
}

std::vector<double> LeadingTerms::bias_on_grid(std::span<const double> h) const
{
  check_bandwidths(h, subsets());
  std::vector<double> b(grid_.size(), 0.0);
  for (std::size_t k = 0; k < subsets(); ++k) {
    const double s = h[k] * h[k];
    for (std::size_t i = 0; i < b.size(); ++i)
      b[i] += s * g_[k][i];
  }
  const double scale = 0.5 * c() * k2_;
  for (double& v : b)
    v *= scale;
  return b;
}

std::vector<double> LeadingTerms::variance_on_grid(
  std::span<const double> sizes,
  std::span<const double> h) const
{
  check(sizes, h);
  std::vector<double> v(grid_.size(), 0.0);
  for (std::size_t k = 0; k < subsets(); ++k) {
    const double s = 1.0 / (sizes[k] * h[k]);
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] += s * w_[k][i];
  }
  return v;
}

double LeadingTerms::amise_product(std::span<const double> sizes,
                                   std::span<const double> h) const
{
  check(sizes, h);
  const double dx = grid_.spacing();
  // bias_on_grid carries c; the product estimator's bias does not.
  auto b = bias_on_grid(h);
  for (double& v : b)
    v *= lambda_;
  const double bias2 = dot_integral(b, b, dx);
  const double var = integrate_values(variance_on_grid(sizes, h), dx);
  return bias2 + var * roughness_;
}

double LeadingTerms::amise_bar(std::span<const double> sizes,
                               std::span<const double> h) const
{
  check(sizes, h);
  const double dx = grid_.spacing();
  const double c = this->c();
  const auto b = bias_on_grid(h);
  std::vector<double> post(pstar_.size());
  for (std::size_t i = 0; i < post.size(); ++i)
    post[i] = c * pstar_[i];

  const double int_b = integrate_values(b, dx);
  const double post_sq = dot_integral(post, post, dx);
  const double b_sq = dot_integral(b, b, dx);
  const double var = integrate_values(variance_on_grid(sizes, h), dx);
  const double cross = int_b * dot_integral(b, post, dx);
  return int_b * int_b * post_sq + b_sq + c * c * var * roughness_ -
         2.0 * cross;
}

AmiseCoefficients LeadingTerms::coefficients(std::span<const double> sizes) const
{
  const std::size_t m = subsets();
  check_sizes(sizes, m);
  const double dx = grid_.spacing();
  const double c = this->c();

  std::vector<double> post(pstar_.size());
  for (std::size_t i = 0; i < post.size(); ++i)
    post[i] = c * pstar_[i];
  const double post_sq = dot_integral(post, post, dx);

  std::vector<double> int_g(m), int_g_post(m);
  for (std::size_t k = 0; k < m; ++k) {
    int_g[k] = integrate_values(g_[k], dx);
    int_g_post[k] = dot_integral(g_[k], post, dx);
  }

  AmiseCoefficients out;
  out.subsets = m;
  out.k2 = k2_;
  out.kernel_roughness = roughness_;
  out.beta.resize(m * m);
  const double q = c * c * k2_ * k2_ / 4.0;
  std::vector<double> gram(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j)
      gram[i * m + j] = gram[j * m + i] = dot_integral(g_[i], g_[j], dx);
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      out.beta[i * m + j] =
        q * (int_g[i] * int_g[j] * post_sq + gram[i * m + j] -
             2.0 * int_g[i] * int_g_post[j]);
    }
  }

  out.nu.resize(m);
  for (std::size_t k = 0; k < m; ++k)
    out.nu[k] = c * c * integrate_values(w_[k], dx) / sizes[k] * roughness_;
  return out;
}

double amise_product(DensitySet densities,
                     std::span<const double> sizes,
                     std::span<const double> h,
                     const Kernel& kernel,
                     const Grid& grid)
{
  return LeadingTerms(densities, grid, kernel).amise_product(sizes, h);
}

double amise_bar(DensitySet densities,
                 std::span<const double> sizes,
                 std::span<const double> h,
                 const Kernel& kernel,
                 const Grid& grid)
{
  return LeadingTerms(densities, grid, kernel).amise_bar(sizes, h);
}

AmiseCoefficients empirical_coefficients(const ProductPosterior& post)
{
  const auto comps = post.components();
  std::vector<std::vector<double>> second;
  std::vector<double> sizes;
  for (const auto& c : comps) {
    // throws for non-smooth kernels
    second.push_back(c.on_grid(post.grid(), 2));
    sizes.push_back(static_cast<double>(c.size()));
  }
  const LeadingTerms terms(
    post.component_values(), std::move(second), post.grid(), comps[0].kernel());
  return terms.coefficients(sizes);
}

double amise_hat(const AmiseCoefficients& coeffs, std::span<const double> h)
{
  const std::size_t m = coeffs.subsets;
  check_bandwidths(h, m);
  double quad = 0.0, inv = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double hi2 = h[i] * h[i];
    for (std::size_t j = 0; j < m; ++j)
      quad += hi2 * h[j] * h[j] * coeffs(i, j);
    inv += coeffs.nu[i] / h[i];
  }
  return quad + inv;
}

std::vector<double> amise_hat_grad(const AmiseCoefficients& coeffs,
                                   std::span<const double> h)
{
  const std::size_t m = coeffs.subsets;
  check_bandwidths(h, m);
  std::vector<double> g(m);
  for (std::size_t k = 0; k < m; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      s += h[j] * h[j] * (coeffs(k, j) + coeffs(j, k));
    g[k] = 2.0 * h[k] * s - coeffs.nu[k] / (h[k] * h[k]);
  }
  return g;
}

void write_coefficients_csv(const AmiseCoefficients& coeffs,
                            std::ostream& beta_out,
                            std::ostream& nu_out)
{
  beta_out << "i,j,beta\n" << std::setprecision(17);
  for (std::size_t i = 0; i < coeffs.subsets; ++i) {
    for (std::size_t j = 0; j < coeffs.subsets; ++j)
      beta_out << i + 1 << ',' << j + 1 << ',' << coeffs(i, j) << '\n';
  }
  nu_out << "i,nu\n" << std::setprecision(17);
  for (std::size_t i = 0; i < coeffs.subsets; ++i)
    nu_out << i + 1 << ',' << coeffs.nu[i] << '\n';
}

} // namespace ppkde
