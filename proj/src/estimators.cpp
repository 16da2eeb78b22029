#include "ppkde/estimators.hpp"

#include "ppkde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ppkde {

namespace {

constexpr double inv_sqrt_2pi = 0.3989422804014327;

// Exact exp() is re-seeded at this stride inside the Gaussian recurrence.
constexpr std::size_t recurrence_stride = 64;

void check_deriv_range(int deriv)
{
  if (deriv < 0 || deriv > 2)
    throw std::invalid_argument("derivative order must be 0, 1 or 2");
}

double normal_density(double x, double mu, double sigma, int deriv)
{
  const double z = (x - mu) / sigma;
  const double phi = inv_sqrt_2pi * std::exp(-0.5 * z * z) / sigma;
  switch (deriv) {
    case 0:
      return phi;
    case 1:
      return -z * phi / sigma;
    default:
      return (z * z - 1.0) * phi / (sigma * sigma);
  }
}

// Gamma(shape, scale) density and derivatives for x >= 0.
double gamma_density(double x, double shape, double scale, int deriv)
{
  if (x < 0.0)
    return 0.0;
  const double b = shape - 1.0;
  const double log_norm = -std::lgamma(shape) - shape * std::log(scale);
  const double e = std::exp(log_norm - x / scale);
  const auto pw = [x](double p) { return std::pow(x, p); };
  switch (deriv) {
    case 0:
      return e * pw(b);
    case 1: {
      double v = -pw(b) / scale;
      if (b != 0.0)
        v += b * pw(b - 1.0);
      return e * v;
    }
    default: {
      double v = pw(b) / (scale * scale);
      if (b != 0.0)
        v -= 2.0 * b * pw(b - 1.0) / scale;
      if (b != 0.0 && b != 1.0)
        v += b * (b - 1.0) * pw(b - 2.0);
      return e * v;
    }
  }
}

} // namespace

std::vector<double> DensitySource::on_grid(const Grid& grid, int deriv) const
{
  std::vector<double> y(grid.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = value(grid.point(i), deriv);
  return y;
}

SubsetSample::SubsetSample(std::vector<double> values, int index)
  : values_(std::move(values))
  , index_(index)
{
  if (values_.empty())
    throw std::invalid_argument("subset sample is empty");
  for (double v : values_) {
    if (!std::isfinite(v))
      throw std::invalid_argument("subset sample contains a non-finite value");
  }
}

SubsetKde::SubsetKde(SubsetSample sample, double bandwidth, Kernel kernel)
  : sample_(std::move(sample))
  , sorted_(sample_.values().begin(), sample_.values().end())
  , h_(bandwidth)
  , kernel_(kernel)
{
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw std::invalid_argument("bandwidth must be positive and finite");
  std::sort(sorted_.begin(), sorted_.end());
}

void SubsetKde::check_deriv(int deriv) const
{
  check_deriv_range(deriv);
  if (deriv > 0 && !kernel_.smooth())
    throw std::invalid_argument("KDE derivatives need a smooth kernel, got " +
                                std::string(kernel_.name()));
}

double SubsetKde::value(double x, int deriv) const
{
  check_deriv(deriv);
  const double reach = kernel_.support_radius() * h_;
  const auto first = std::lower_bound(sorted_.begin(), sorted_.end(), x - reach);
  const auto last = std::upper_bound(first, sorted_.end(), x + reach);
  double sum = 0.0;
  for (auto it = first; it != last; ++it)
    sum += kernel_.derivative((x - *it) / h_, deriv);
  return sum / (static_cast<double>(sorted_.size()) * std::pow(h_, deriv + 1));
}

std::vector<double> SubsetKde::on_grid(const Grid& grid, int deriv) const
{
  check_deriv(deriv);
  const std::size_t g = grid.size();
  const double lo = grid.lo();
  const double dx = grid.spacing();
  const double reach = kernel_.support_radius() * h_;
  const bool gaussian = kernel_.family() == KernelFamily::gaussian;
  const double delta = dx / h_;
  const double step_ratio = std::exp(-delta * delta);

  std::vector<double> acc(g, 0.0);
  for (double s : sorted_) {
    const double jlo = std::ceil((s - reach - lo) / dx);
    const double jhi = std::floor((s + reach - lo) / dx);
    if (jhi < 0.0 || jlo > static_cast<double>(g - 1))
      continue;
    const auto j0 = static_cast<std::size_t>(std::max(jlo, 0.0));
    const auto j1 =
      static_cast<std::size_t>(std::min(jhi, static_cast<double>(g - 1)));
    if (!gaussian) {
      for (std::size_t j = j0; j <= j1; ++j)
        acc[j] += kernel_.eval((grid.point(j) - s) / h_);
      continue;
    }
    // exp(-t^2/2) along the grid by multiplicative recurrence in t.
    double e = 0.0, r = 0.0;
    for (std::size_t j = j0; j <= j1; ++j) {
      const double t = (grid.point(j) - s) / h_;
      if ((j - j0) % recurrence_stride == 0) {
        e = std::exp(-0.5 * t * t);
        r = std::exp(-(t * delta + 0.5 * delta * delta));
      } else {
        e *= r;
        r *= step_ratio;
      }
      if (deriv == 0)
        acc[j] += e;
      else if (deriv == 1)
        acc[j] -= t * e;
      else
        acc[j] += (t * t - 1.0) * e;
    }
  }
  const double scale = (gaussian ? inv_sqrt_2pi : 1.0) /
                       (static_cast<double>(sorted_.size()) *
                        std::pow(h_, deriv + 1));
  for (double& v : acc)
    v *= scale;
  return acc;
}

SubsetKde SubsetKde::with_bandwidth(double h) const
{
  return SubsetKde(sample_, h, kernel_);
}

SubsetKde fit_subset_kde(SubsetSample sample, double h, const Kernel& kernel)
{
  return SubsetKde(std::move(sample), h, kernel);
}

double eval_kde(const SubsetKde& kde, double x, int deriv)
{
  return kde.value(x, deriv);
}

double eval_product(std::span<const SubsetKde> components, double x)
{
  double p = 1.0;
  for (const auto& c : components)
    p *= c.value(x);
  return p;
}

GridPosterior normalize_grid_product(
  std::span<const std::vector<double>> component_values,
  const Grid& grid)
{
  if (component_values.empty())
    throw std::invalid_argument("product needs at least one component");
  GridPosterior out;
  out.product.assign(grid.size(), 1.0);
  for (const auto& v : component_values) {
    if (v.size() != grid.size())
      throw std::invalid_argument("component values do not match the grid");
    for (std::size_t i = 0; i < v.size(); ++i)
      out.product[i] *= v[i];
  }
  out.lambda_hat = integrate_values(out.product, grid.spacing());
  if (!(out.lambda_hat > degenerate_lambda))
    throw DegenerateProduct(out.lambda_hat);
  out.c_hat = 1.0 / out.lambda_hat;
  out.posterior.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    out.posterior[i] = out.c_hat * out.product[i];
  return out;
}

ProductPosterior::ProductPosterior(std::vector<SubsetKde> components, Grid grid)
  : components_(std::move(components))
  , grid_(grid)
{
  if (components_.empty())
    throw std::invalid_argument("product posterior needs M >= 1 components");
  values_.reserve(components_.size());
  for (const auto& c : components_)
    values_.push_back(c.on_grid(grid_, 0));
  cached_ = normalize_grid_product(values_, grid_);
}

double ProductPosterior::eval_product(double x) const
{
  return ppkde::eval_product(components_, x);
}

std::vector<double> ProductPosterior::bandwidths() const
{
  std::vector<double> h;
  h.reserve(components_.size());
  for (const auto& c : components_)
    h.push_back(c.bandwidth());
  return h;
}

ProductPosterior normalize(std::vector<SubsetKde> components, Grid grid)
{
  return ProductPosterior(std::move(components), grid);
}

AnalyticModel::AnalyticModel(ModelFamily family, double a, double b, int subsets)
  : family_(family)
  , a_(a)
  , b_(b)
  , m_(subsets)
{
  if (subsets < 1)
    throw std::invalid_argument("model needs M >= 1 subsets");
  if (!std::isfinite(a) || !std::isfinite(b))
    throw std::invalid_argument("model parameters must be finite");
}

AnalyticModel AnalyticModel::normal(double mu, double sigma, int subsets)
{
  if (!(sigma > 0.0))
    throw std::invalid_argument("normal model needs sigma > 0");
  return AnalyticModel(ModelFamily::normal, mu, sigma, subsets);
}

AnalyticModel AnalyticModel::gamma(double alpha, double theta, int subsets)
{
  if (!(alpha > 1.0))
    throw std::invalid_argument("gamma model needs alpha > 1");
  if (!(theta > 0.0))
    throw std::invalid_argument("gamma model needs theta > 0");
  return AnalyticModel(ModelFamily::gamma, alpha, theta, subsets);
}

std::string_view AnalyticModel::family_name() const noexcept
{
  return family_ == ModelFamily::normal ? "normal" : "gamma";
}

AnalyticModel AnalyticModel::with_subsets(int subsets) const
{
  return AnalyticModel(family_, a_, b_, subsets);
}

double AnalyticModel::subset_sd() const noexcept
{
  return family_ == ModelFamily::normal ? b_ : std::sqrt(a_) * b_;
}

double AnalyticModel::support_lo() const noexcept
{
  return family_ == ModelFamily::normal ? -INFINITY : 0.0;
}

double AnalyticModel::lambda() const noexcept
{
  const double m = m_;
  if (family_ == ModelFamily::normal) {
    return std::pow(2.0 * std::numbers::pi * b_ * b_, -(m - 1.0) / 2.0) /
           std::sqrt(m);
  }
  // int x^{M(alpha-1)} e^{-M x / theta} dx / (Gamma(alpha) theta^alpha)^M
  const double k = m * (a_ - 1.0) + 1.0;
  return std::exp(std::lgamma(k) + k * std::log(b_ / m) -
                  m * (std::lgamma(a_) + a_ * std::log(b_)));
}

double AnalyticModel::subset_value(double x, int deriv) const
{
  return family_ == ModelFamily::normal ? normal_density(x, a_, b_, deriv)
                                        : gamma_density(x, a_, b_, deriv);
}

double AnalyticModel::product_value(double x, int deriv) const
{
  const double p = subset_value(x, 0);
  const double m = m_;
  if (m_ == 1)
    return subset_value(x, deriv);
  switch (deriv) {
    case 0:
      return std::pow(p, m);
    case 1:
      return m * std::pow(p, m - 1.0) * subset_value(x, 1);
    default: {
      const double d1 = subset_value(x, 1);
      return m * (m - 1.0) * std::pow(p, m - 2.0) * d1 * d1 +
             m * std::pow(p, m - 1.0) * subset_value(x, 2);
    }
  }
}

double AnalyticModel::posterior_value(double x, int deriv) const
{
  const double m = m_;
  if (family_ == ModelFamily::normal)
    return normal_density(x, a_, b_ / std::sqrt(m), deriv);
  return gamma_density(x, m * (a_ - 1.0) + 1.0, b_ / m, deriv);
}

double AnalyticModel::density(DensityKind which, double x, int deriv) const
{
  check_deriv_range(deriv);
  switch (which) {
    case DensityKind::subset:
      return subset_value(x, deriv);
    case DensityKind::product:
      return product_value(x, deriv);
    default:
      return posterior_value(x, deriv);
  }
}

double analytic_density(const AnalyticModel& model,
                        DensityKind which,
                        double x,
                        int deriv)
{
  if (model.family() == ModelFamily::gamma && x < 0.0)
    throw std::domain_error("gamma density evaluated at x < 0");
  return model.density(which, x, deriv);
}

} // namespace ppkde
