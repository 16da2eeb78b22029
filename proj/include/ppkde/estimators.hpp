#pragma once

#include "ppkde/kernels.hpp"
#include "ppkde/quadrature.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace ppkde {

//! A univariate density with first and second derivatives.
class DensitySource
{
public:
  virtual ~DensitySource() = default;

  virtual double value(double x, int deriv = 0) const = 0;

  //! Values at every grid point. The default calls value() pointwise.
  virtual std::vector<double> on_grid(const Grid& grid, int deriv = 0) const;
};

//! Draws X_1..X_N of one subset; index is 1-based.
class SubsetSample
{
public:
  explicit SubsetSample(std::vector<double> values, int index = 1);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  int index() const noexcept { return index_; }

private:
  std::vector<double> values_;
  int index_;
};

//! p_m(x) = 1 / (N h) sum_i K((x - X_i) / h).
class SubsetKde : public DensitySource
{
public:
  SubsetKde(SubsetSample sample, double bandwidth, Kernel kernel = Kernel());

  double value(double x, int deriv = 0) const override;
  std::vector<double> on_grid(const Grid& grid, int deriv = 0) const override;

  const SubsetSample& sample() const noexcept { return sample_; }
  std::size_t size() const noexcept { return sample_.size(); }
  double bandwidth() const noexcept { return h_; }
  const Kernel& kernel() const noexcept { return kernel_; }

  //! Same sample and kernel, different bandwidth.
  SubsetKde with_bandwidth(double h) const;

private:
  void check_deriv(int deriv) const;

  SubsetSample sample_;
  std::vector<double> sorted_;
  double h_;
  Kernel kernel_;
};

SubsetKde fit_subset_kde(SubsetSample sample, double h, const Kernel& kernel);

double eval_kde(const SubsetKde& kde, double x, int deriv = 0);

//! prod_m p_m(x).
double eval_product(std::span<const SubsetKde> components, double x);

//! Unnormalized product sampled on a grid, with its mass and the normalized
//! posterior c_hat * product.
struct GridPosterior
{
  std::vector<double> product;
  std::vector<double> posterior;
  double lambda_hat = 0.0;
  double c_hat = 0.0;
};

//! Products per grid point of the component values; throws DegenerateProduct
//! when the mass is at or below degenerate_lambda.
GridPosterior normalize_grid_product(
  std::span<const std::vector<double>> component_values,
  const Grid& grid);

inline constexpr double degenerate_lambda = 1e-300;

//! The normalized product p_hat = c_hat * prod_m p_m of M subset estimators,
//! with lambda_hat cached against a fixed grid.
class ProductPosterior
{
public:
  ProductPosterior(std::vector<SubsetKde> components, Grid grid);

  std::span<const SubsetKde> components() const noexcept
  {
    return components_;
  }
  std::size_t subsets() const noexcept { return components_.size(); }
  const Grid& grid() const noexcept { return grid_; }
  double lambda_hat() const noexcept { return cached_.lambda_hat; }
  double c_hat() const noexcept { return cached_.c_hat; }

  double eval_product(double x) const;
  double eval(double x) const { return cached_.c_hat * eval_product(x); }

  const std::vector<double>& product_on_grid() const noexcept
  {
    return cached_.product;
  }
  const std::vector<double>& posterior_on_grid() const noexcept
  {
    return cached_.posterior;
  }

  //! Per-component grid values, deriv 0.
  const std::vector<std::vector<double>>& component_values() const noexcept
  {
    return values_;
  }

  std::vector<double> bandwidths() const;

private:
  std::vector<SubsetKde> components_;
  Grid grid_;
  std::vector<std::vector<double>> values_;
  GridPosterior cached_;
};

ProductPosterior normalize(std::vector<SubsetKde> components, Grid grid);

enum class ModelFamily
{
  normal,
  gamma
};

enum class DensityKind
{
  subset,
  product,
  posterior
};

//! M identical subset densities, Normal(mu, sigma) or Gamma(alpha, theta)
//! with theta the scale parameter.
class AnalyticModel
{
public:
  static AnalyticModel normal(double mu, double sigma, int subsets);
  static AnalyticModel gamma(double alpha, double theta, int subsets);

  ModelFamily family() const noexcept { return family_; }
  std::string_view family_name() const noexcept;
  int subsets() const noexcept { return m_; }
  AnalyticModel with_subsets(int subsets) const;

  //! mu / alpha and sigma / theta.
  double first() const noexcept { return a_; }
  double second() const noexcept { return b_; }

  double subset_sd() const noexcept;
  //! Lower end of the support (0 for gamma).
  double support_lo() const noexcept;

  //! lambda = int p_1^M, and c = 1 / lambda.
  double lambda() const noexcept;
  double c() const noexcept { return 1.0 / lambda(); }

  //! Density or derivative; zero outside the support.
  double density(DensityKind which, double x, int deriv = 0) const;

private:
  AnalyticModel(ModelFamily family, double a, double b, int subsets);

  double subset_value(double x, int deriv) const;
  double product_value(double x, int deriv) const;
  double posterior_value(double x, int deriv) const;

  ModelFamily family_;
  double a_;
  double b_;
  int m_;
};

//! Exact p_m, p* or p. Rejects x < 0 for gamma models and deriv outside 0..2.
double analytic_density(const AnalyticModel& model,
                        DensityKind which,
                        double x,
                        int deriv = 0);

//! One of the model's identical subset densities as a DensitySource.
class AnalyticSubsetDensity : public DensitySource
{
public:
  explicit AnalyticSubsetDensity(AnalyticModel model)
    : model_(model)
  {}

  double value(double x, int deriv = 0) const override
  {
    return model_.density(DensityKind::subset, x, deriv);
  }

private:
  AnalyticModel model_;
};

} // namespace ppkde
