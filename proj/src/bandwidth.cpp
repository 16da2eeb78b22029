#include "ppkde/bandwidth.hpp"

#include "ppkde/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace ppkde {

namespace {

double norm2(std::span<const double> v)
{
  double s = 0.0;
  for (double x : v)
    s += x * x;
  return std::sqrt(s);
}

void require_positive(double v, const char* what)
{
  if (!(v > 0.0) || !std::isfinite(v))
    throw std::invalid_argument(std::string(what) + " must be positive");
}

// mult * exp(log_scale); keeps huge Gamma-function magnitudes representable.
struct Scaled
{
  double log_scale;
  double mult;
};

Scaled operator*(Scaled a, Scaled b)
{
  return { a.log_scale + b.log_scale, a.mult * b.mult };
}

Scaled operator/(Scaled a, Scaled b)
{
  return { a.log_scale - b.log_scale, a.mult / b.mult };
}

Scaled scaled_sum(std::initializer_list<Scaled> terms)
{
  double top = -INFINITY;
  for (const auto& t : terms) {
    if (t.mult != 0.0)
      top = std::max(top, t.log_scale);
  }
  if (!std::isfinite(top))
    return { 0.0, 0.0 };
  double m = 0.0;
  for (const auto& t : terms)
    m += t.mult * std::exp(t.log_scale - top);
  return { top, m };
}

// For p(x) = x^b e^{-x} (unit scale, unnormalized):
//   sum_s coef[s] * int x^{k b + s} e^{-k x} dx,   s = s_min .. s_min + n - 1
// = sum_s coef[s] Gamma(k b + s + 1) / k^{k b + s + 1}.
template <std::size_t N>
Scaled gamma_moment_sum(double k, double b, int s_min, const std::array<double, N>& coef)
{
  const double l = k * b + s_min + 1.0;
  if (!(l > 0.0))
    throw GammaDomain("Gamma-function argument is not positive");
  const Scaled base{ std::lgamma(l) - l * std::log(k), 1.0 };
  double m = 0.0, ratio = 1.0;
  for (std::size_t i = 0; i < N; ++i) {
    m += coef[i] * ratio;
    ratio *= (l + static_cast<double>(i)) / k;
  }
  return { base.log_scale, m };
}

Scaled gamma_power_integral(double k, double b)
{
  return gamma_moment_sum<1>(k, b, 0, { 1.0 });
}

} // namespace

BandwidthVector::BandwidthVector(std::vector<double> h)
  : h_(std::move(h))
{
  if (h_.empty())
    throw std::invalid_argument("bandwidth vector is empty");
  for (double v : h_)
    require_positive(v, "bandwidth");
}

BandwidthVector BandwidthVector::uniform(std::size_t subsets, double h)
{
  return BandwidthVector(std::vector<double>(subsets, h));
}

double BandwidthVector::max() const
{
  return *std::max_element(h_.begin(), h_.end());
}

double BandwidthVector::norm() const
{
  return norm2(h_);
}

double parzen_h_m1(double n, double k2, double kernel_roughness, double curvature)
{
  if (!(n >= 1.0))
    throw std::invalid_argument("parzen_h_m1 needs n >= 1");
  require_positive(k2, "k2");
  require_positive(kernel_roughness, "kernel roughness");
  if (!(curvature > 0.0))
    throw std::invalid_argument("curvature int (p'')^2 must be positive");
  return std::pow(kernel_roughness / (n * k2 * k2 * curvature), 0.2);
}

double h_opt_symmetric(double n, double a, double b)
{
  if (!(n > 0.0))
    throw std::invalid_argument("h_opt_symmetric needs n > 0");
  if (!(a > 0.0) || !(b > 0.0))
    throw std::invalid_argument("h_opt_symmetric needs A > 0 and B > 0");
  return std::pow(4.0 * n, -0.2) * std::pow(b / a, 0.2);
}

SymmetricConstants ab_constants(const AnalyticModel& model,
                                const Grid& grid,
                                const Kernel& kernel)
{
  const int m = model.subsets();
  const double dm = m;
  const std::size_t n = grid.size();
  const double dx = grid.spacing();
  std::vector<double> p(n), pp(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = model.density(DensityKind::subset, grid.point(i), 0);
    pp[i] = model.density(DensityKind::subset, grid.point(i), 2);
  }
  std::vector<double> pm(n), g(n), g2(n), gx(n), ppm2(n), p2m1(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::pow(p[i], dm - 1.0);
    pm[i] = q * p[i];
    g[i] = pp[i] * q;
    g2[i] = g[i] * g[i];
    p2m1[i] = std::pow(p[i], 2.0 * dm - 1.0);
    gx[i] = pp[i] * p2m1[i];
  }
  const double c = 1.0 / integrate_values(pm, dx);
  for (std::size_t i = 0; i < n; ++i)
    ppm2[i] = (c * pm[i]) * (c * pm[i]);
  const double i1 = integrate_values(g, dx);
  const double k2 = kernel.k2();
  const double bracket = i1 * i1 * integrate_values(ppm2, dx) +
                         integrate_values(g2, dx) -
                         2.0 * c * i1 * integrate_values(gx, dx);
  return { dm * c * c * k2 * k2 / 4.0 * bracket,
           c * c * integrate_values(p2m1, dx) * kernel.roughness() };
}

SymmetricConstants normal_ab_constants(int subsets, double sigma)
{
  if (subsets < 1)
    throw std::invalid_argument("normal_ab_constants needs M >= 1");
  require_positive(sigma, "sigma");
  const double m = subsets;
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  return { 3.0 / (32.0 * sqrt_pi * std::sqrt(m) * std::pow(sigma, 5)),
           m / (2.0 * sqrt_pi * std::sqrt(2.0 * m - 1.0)) };
}

SymmetricConstants gamma_ab_constants(int subsets,
                                      double alpha,
                                      double theta,
                                      const Kernel& kernel)
{
  if (subsets < 1)
    throw std::invalid_argument("gamma_ab_constants needs M >= 1");
  require_positive(theta, "theta");
  const double m = subsets;
  const double b = alpha - 1.0;
  if (!(b * m - 1.0 > 0.0) || !(2.0 * b * m - 3.0 > 0.0))
    throw GammaDomain("gamma closed form needs (alpha-1)M > 1 and "
                      "2(alpha-1)M > 3");

  // With p = x^b e^{-x} / Gamma(alpha): p'' = p q(x),
  // q = b(b-1) x^-2 - 2b x^-1 + 1. All Gamma(alpha) powers cancel from A.
  const std::array<double, 3> q{ b * (b - 1.0), -2.0 * b, 1.0 };
  const std::array<double, 5> q2{ b * b * (b - 1.0) * (b - 1.0),
                                  -4.0 * b * b * (b - 1.0),
                                  4.0 * b * b + 2.0 * b * (b - 1.0),
                                  -4.0 * b,
                                  1.0 };
  const Scaled jm = gamma_power_integral(m, b);
  const Scaled j2m = gamma_power_integral(2.0 * m, b);
  const Scaled j2m1 = gamma_power_integral(2.0 * m - 1.0, b);
  const Scaled s1 = gamma_moment_sum(m, b, -2, q);         // int p'' p^{M-1}
  const Scaled s2 = gamma_moment_sum(2.0 * m, b, -4, q2);  // int (p'' p^{M-1})^2
  const Scaled s3 = gamma_moment_sum(2.0 * m, b, -2, q);   // int p'' p^{2M-1}

  const Scaled t1 = s1 * s1 * j2m / (jm * jm);
  const Scaled t3 = Scaled{ std::log(2.0), -1.0 } * s1 * s3 / jm;
  const Scaled bracket = scaled_sum({ t1, s2, t3 });
  if (!(bracket.mult > 0.0))
    throw NumericalError("gamma closed form: non-positive bias constant");

  const double k2 = kernel.k2();
  const double log_a = std::log(m * k2 * k2 / 4.0) + bracket.log_scale +
                       std::log(bracket.mult) - 2.0 * jm.log_scale -
                       2.0 * std::log(jm.mult) - 5.0 * std::log(theta);
  const double log_b = std::lgamma(alpha) + j2m1.log_scale -
                       2.0 * jm.log_scale + std::log(kernel.roughness());
  return { std::exp(log_a), std::exp(log_b) };
}

double h_opt_normal(double n, int subsets, double sigma)
{
  if (!(n >= 1.0))
    throw std::invalid_argument("h_opt_normal needs n >= 1");
  if (subsets < 1)
    throw std::invalid_argument("h_opt_normal needs M >= 1");
  require_positive(sigma, "sigma");
  const double m = subsets;
  return std::pow(16.0 / 9.0 * m * m * m / (2.0 * m - 1.0), 0.1) * sigma *
         std::pow(n, -0.2);
}

BandwidthVector h_opt_baseline(double n, int subsets, double sigma)
{
  if (subsets < 1)
    throw std::invalid_argument("h_opt_baseline needs M >= 1");
  return BandwidthVector::uniform(static_cast<std::size_t>(subsets),
                                  h_opt_normal(n, 1, sigma));
}

double h_opt_gamma(double n, int subsets, double alpha, double theta)
{
  if (!(n >= 1.0))
    throw std::invalid_argument("h_opt_gamma needs n >= 1");
  const auto ab = gamma_ab_constants(subsets, alpha, theta);
  return h_opt_symmetric(n, ab.a, ab.b);
}

double h_opt_model(const AnalyticModel& model, double n)
{
  if (model.family() == ModelFamily::normal)
    return h_opt_normal(n, model.subsets(), model.second());
  return h_opt_gamma(n, model.subsets(), model.first(), model.second());
}

DescentResult descend_surrogate(const AmiseCoefficients& coeffs,
                                std::vector<double> h,
                                int steps,
                                const DescentSettings& settings)
{
  DescentResult out;
  double f = amise_hat(coeffs, h);
  out.values.push_back(f);
  double t = settings.step;
  std::vector<double> trial(h.size());
  for (int s = 0; s < steps; ++s) {
    const auto g = amise_hat_grad(coeffs, h);
    if (norm2(g) == 0.0)
      break;
    if (settings.rule == StepRule::backtracking)
      t *= 2.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      double decrease = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) {
        trial[i] = std::max(h[i] - t * g[i], settings.h_floor);
        decrease += g[i] * (h[i] - trial[i]);
      }
      const double ft = amise_hat(coeffs, trial);
      if (settings.rule == StepRule::fixed ||
          ft <= f - settings.armijo * decrease) {
        accepted = true;
        h = trial;
        f = ft;
        break;
      }
      t *= settings.shrink;
    }
    if (!accepted)
      break;
    out.values.push_back(f);
  }
  out.h = std::move(h);
  out.last_step = t;
  return out;
}

OptimizeResult optimize_bandwidth(std::span<const SubsetSample> subsets,
                                  const Kernel& kernel,
                                  const OptimizerOptions& opts,
                                  std::optional<Grid> grid)
{
  if (subsets.empty())
    throw std::invalid_argument("optimize_bandwidth needs at least one subset");
  if (!kernel.smooth())
    throw std::invalid_argument("optimize_bandwidth needs a smooth kernel");
  const int m = static_cast<int>(subsets.size());

  std::vector<double> pooled;
  for (const auto& s : subsets)
    pooled.insert(pooled.end(), s.values().begin(), s.values().end());
  const double mean =
    std::accumulate(pooled.begin(), pooled.end(), 0.0) / pooled.size();
  double ss = 0.0;
  for (double v : pooled)
    ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / std::max<std::size_t>(pooled.size() - 1, 1));
  if (!(sd > 0.0))
    throw std::invalid_argument("pooled sample has zero spread");

  std::vector<double> h(subsets.size());
  for (std::size_t i = 0; i < subsets.size(); ++i)
    h[i] = h_opt_normal(static_cast<double>(subsets[i].size()), m, sd);
  const double h0_norm = norm2(h);
  const double h0_max = *std::max_element(h.begin(), h.end());
  const double tol = opts.tol.value_or(1e-4 * h0_norm);
  const double floor = opts.h_floor.value_or(1e-3 * h0_max / m);
  if (!(tol > 0.0) || !(floor > 0.0))
    throw std::invalid_argument("optimizer tol and h_floor must be positive");
  const Grid g = grid.value_or(default_window(pooled, h0_max, opts.window));

  const auto fit = [&](const std::vector<double>& hv) {
    std::vector<SubsetKde> kdes;
    kdes.reserve(subsets.size());
    for (std::size_t i = 0; i < subsets.size(); ++i)
      kdes.emplace_back(subsets[i], hv[i], kernel);
    return empirical_coefficients(ProductPosterior(std::move(kdes), g));
  };

  OptimizeResult out{ BandwidthVector(h) };
  out.tol = tol;
  out.coefficients = fit(h);
  out.trace.push_back({ 0, h, amise_hat(out.coefficients, h) });

  DescentSettings settings;
  settings.rule = opts.step_rule;
  settings.armijo = opts.armijo;
  settings.shrink = opts.shrink;
  settings.h_floor = floor;
  {
    const double gn = norm2(amise_hat_grad(out.coefficients, h));
    // backtracking doubles before its first trial
    settings.step = opts.init_step * h0_norm / (gn > 0.0 ? gn : 1.0);
    if (opts.step_rule == StepRule::backtracking)
      settings.step *= 0.5;
  }

  for (int k = 1; k <= opts.max_outer_iters; ++k) {
    if (k > 1)
      out.coefficients = fit(h);
    auto step = descend_surrogate(out.coefficients, h, opts.descent_steps_per_iter, settings);
    if (opts.step_rule == StepRule::backtracking)
      settings.step = step.last_step;
    std::vector<double> diff(h.size());
    for (std::size_t i = 0; i < h.size(); ++i)
      diff[i] = step.h[i] - h[i];
    h = std::move(step.h);
    out.iterations = k;
    out.trace.push_back({ k, h, amise_hat(out.coefficients, h) });
    if (norm2(diff) < tol) {
      out.converged = true;
      break;
    }
  }
  out.h = BandwidthVector(h);
  out.gradient_norm = norm2(amise_hat_grad(out.coefficients, h));
  return out;
}

} // namespace ppkde
