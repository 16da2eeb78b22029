#pragma once

#include "ppkde/estimators.hpp"
#include "ppkde/kernels.hpp"
#include "ppkde/quadrature.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace ppkde {

using DensitySet = std::span<const DensitySource* const>;

//! Leading-order bias of the product estimator at x:
//! (k2 / 2) sum_m h_m^2 p_m''(x) prod_{k != m} p_k(x).
double bias_leading(DensitySet densities,
                    std::span<const double> h,
                    const Kernel& kernel,
                    double x);

//! Leading-order variance of the product estimator at x:
//! sum_m p_m(x) / (N_m h_m) prod_{k != m} p_k(x)^2 * int K^2.
double variance_leading(DensitySet densities,
                        std::span<const double> sizes,
                        std::span<const double> h,
                        const Kernel& kernel,
                        double x);

//! Coefficients of the plug-in surrogate
//!   AMISE(h) = sum_{i,j} h_i^2 h_j^2 beta(i, j) + sum_i nu_i / h_i.
//! beta is kept exactly as assembled (not symmetrized).
struct AmiseCoefficients
{
  std::size_t subsets = 0;
  std::vector<double> beta; // row-major, subsets x subsets
  std::vector<double> nu;
  double k2 = 1.0;
  double kernel_roughness = 0.0;

  double operator()(std::size_t i, std::size_t j) const
  {
    return beta[i * subsets + j];
  }
};

//! Grid integrals of the densities that the asymptotic error functionals are
//! built from. Everything downstream is a closed-form function of (N, h).
class LeadingTerms
{
public:
  LeadingTerms(DensitySet densities, const Grid& grid, const Kernel& kernel);

  //! Grid samples of p_m and p_m'' for each component.
  LeadingTerms(std::vector<std::vector<double>> values,
               std::vector<std::vector<double>> second_derivatives,
               const Grid& grid,
               const Kernel& kernel);

  std::size_t subsets() const noexcept { return g_.size(); }
  const Grid& grid() const noexcept { return grid_; }
  //! lambda = int prod_m p_m and c = 1 / lambda, on the grid.
  double lambda() const noexcept { return lambda_; }
  double c() const noexcept { return 1.0 / lambda_; }

  //! B(x) = c * bias_leading on the grid.
  std::vector<double> bias_on_grid(std::span<const double> h) const;
  //! V(x) on the grid, without the kernel roughness factor.
  std::vector<double> variance_on_grid(std::span<const double> sizes,
                                       std::span<const double> h) const;

  //! Squared-bias plus variance integral for the unnormalized product.
  double amise_product(std::span<const double> sizes,
                       std::span<const double> h) const;

  //! Leading part of the lambda-weighted error of the normalized estimator.
  double amise_bar(std::span<const double> sizes,
                   std::span<const double> h) const;

  AmiseCoefficients coefficients(std::span<const double> sizes) const;

private:
  void assemble(std::vector<std::vector<double>> values,
                std::vector<std::vector<double>> second);
  void check(std::span<const double> sizes, std::span<const double> h) const;

  Grid grid_;
  double k2_;
  double roughness_;
  std::vector<double> pstar_;
  // g_[m] = p_m'' prod_{k != m} p_k ; w_[m] = p_m prod_{k != m} p_k^2
  std::vector<std::vector<double>> g_;
  std::vector<std::vector<double>> w_;
  double lambda_ = 0.0;
};

double amise_product(DensitySet densities,
                     std::span<const double> sizes,
                     std::span<const double> h,
                     const Kernel& kernel,
                     const Grid& grid);

double amise_bar(DensitySet densities,
                 std::span<const double> sizes,
                 std::span<const double> h,
                 const Kernel& kernel,
                 const Grid& grid);

//! Plug-in coefficients from a fitted product posterior. Needs a smooth
//! kernel; uses the posterior's grid and c_hat.
AmiseCoefficients empirical_coefficients(const ProductPosterior& post);

double amise_hat(const AmiseCoefficients& coeffs, std::span<const double> h);

//! d/dh_k = 2 h_k sum_j h_j^2 (beta_kj + beta_jk) - nu_k / h_k^2.
std::vector<double> amise_hat_grad(const AmiseCoefficients& coeffs,
                                   std::span<const double> h);

//! CSV tables "i,j,beta" and "i,nu" (1-based indices).
void write_coefficients_csv(const AmiseCoefficients& coeffs,
                            std::ostream& beta_out,
                            std::ostream& nu_out);

} // namespace ppkde
