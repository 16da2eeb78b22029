#pragma once

#include "ppkde/amise.hpp"
#include "ppkde/estimators.hpp"
#include "ppkde/kernels.hpp"
#include "ppkde/quadrature.hpp"

#include <optional>
#include <span>
#include <vector>

namespace ppkde {

//! One bandwidth per subset; every entry positive and finite.
class BandwidthVector
{
public:
  explicit BandwidthVector(std::vector<double> h);
  static BandwidthVector uniform(std::size_t subsets, double h);

  std::span<const double> values() const noexcept { return h_; }
  std::size_t size() const noexcept { return h_.size(); }
  double operator[](std::size_t i) const { return h_[i]; }
  double max() const;
  double norm() const;

private:
  std::vector<double> h_;
};

//! Classical single-estimator optimum
//! (R(K) / (n k2^2 int p''^2))^{1/5}. curvature = int (p'')^2.
double parzen_h_m1(double n, double k2, double kernel_roughness, double curvature);

//! Minimizer of h -> M (A h^4 + B / (n h)): (4n)^{-1/5} (B/A)^{1/5}.
double h_opt_symmetric(double n, double a, double b);

//! Constants of the symmetric (identical subsets, equal sizes) surrogate.
struct SymmetricConstants
{
  double a;
  double b;
};

//! A(M), B(M) by quadrature over the model's subset density p_1, with
//! c = 1 / int p_1^M.
SymmetricConstants ab_constants(const AnalyticModel& model,
                                const Grid& grid,
                                const Kernel& kernel = Kernel());

//! Closed forms for Normal(mu, sigma) subsets and a Gaussian kernel.
SymmetricConstants normal_ab_constants(int subsets, double sigma);

//! Closed forms for Gamma(alpha, theta) subsets, theta the scale. Evaluated
//! with log-Gamma terms. Throws GammaDomain unless (alpha-1)M > 1 and
//! 2(alpha-1)M > 3.
SymmetricConstants gamma_ab_constants(int subsets,
                                      double alpha,
                                      double theta,
                                      const Kernel& kernel = Kernel());

//! (16/9 M^3 / (2M - 1))^{1/10} sigma n^{-1/5}.
double h_opt_normal(double n, int subsets, double sigma);

//! Per-subset single-estimator optimum repeated M times.
BandwidthVector h_opt_baseline(double n, int subsets, double sigma);

//! Symmetric optimum for Gamma(alpha, theta) subsets.
double h_opt_gamma(double n, int subsets, double alpha, double theta);

//! Closed-form optimal common bandwidth for an analytic model.
double h_opt_model(const AnalyticModel& model, double n);

enum class StepRule
{
  fixed,
  backtracking
};

struct OptimizerOptions
{
  int max_outer_iters = 50;
  int descent_steps_per_iter = 5;
  StepRule step_rule = StepRule::backtracking;
  //! First trial move as a fraction of ||h||. The fixed rule keeps that
  //! step size for the whole run; backtracking restarts each line search at
  //! twice the last accepted step.
  double init_step = 0.25;
  //! Defaults to 1e-4 ||h_0||.
  std::optional<double> tol;
  //! Defaults to 1e-3 max(h_0) / M.
  std::optional<double> h_floor;
  double armijo = 1e-4;
  double shrink = 0.5;
  WindowOptions window;
};

struct TraceRow
{
  int iter;
  std::vector<double> h;
  double amise_hat;
};

struct OptimizeResult
{
  BandwidthVector h;
  bool converged = false;
  int iterations = 0;
  double tol = 0.0;
  std::vector<TraceRow> trace{};
  //! Coefficients of the last outer iteration (at h_0 if none ran).
  AmiseCoefficients coefficients{};
  //! ||amise_hat_grad(coefficients, h)||.
  double gradient_norm = 0.0;
};

struct DescentSettings
{
  StepRule rule = StepRule::backtracking;
  double step = 0.0; // in gradient units
  double armijo = 1e-4;
  double shrink = 0.5;
  double h_floor = 0.0;
};

struct DescentResult
{
  std::vector<double> h;
  std::vector<double> values; // surrogate after each accepted step, [0] = start
  double last_step = 0.0;
};

//! Projected gradient descent on the surrogate, h_i >= h_floor.
DescentResult descend_surrogate(const AmiseCoefficients& coeffs,
                                std::vector<double> h,
                                int steps,
                                const DescentSettings& settings);

//! Iterative plug-in bandwidth search: refit estimators at the current h,
//! rebuild the surrogate coefficients, take a few descent steps, repeat until
//! the bandwidth vector stops moving. The grid defaults to default_window()
//! at the initial bandwidths.
OptimizeResult optimize_bandwidth(std::span<const SubsetSample> subsets,
                                  const Kernel& kernel,
                                  const OptimizerOptions& opts = {},
                                  std::optional<Grid> grid = std::nullopt);

} // namespace ppkde
