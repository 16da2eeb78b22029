#include "ppkde/amise.hpp"
#include "ppkde/bandwidth.hpp"
#include "ppkde/errors.hpp"
#include "ppkde/harness.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace ppkde;

namespace {

const double sqrt_pi = std::sqrt(std::numbers::pi);
const double normal_curvature = 3.0 / (8.0 * sqrt_pi);

//! Brute-force symmetric optimum: minimize amise_bar over a common h with
//! the analytic subset densities.
double brute_force_h(const AnalyticModel& model, double n, const Grid& g)
{
  const int m = model.subsets();
  std::vector<AnalyticSubsetDensity> owned(m, AnalyticSubsetDensity(model));
  std::vector<const DensitySource*> ptrs;
  for (const auto& d : owned)
    ptrs.push_back(&d);
  const LeadingTerms lt(ptrs, g, Kernel());
  const std::vector<double> sizes(m, n);
  return argmin_scalar(
           [&](double h) { return lt.amise_bar(sizes, std::vector<double>(m, h)); }, 0.01,
           2.0, 1e-9)
    .x;
}

std::vector<SubsetSample> normal_subsets(int m, std::size_t n, std::uint64_t seed)
{
  return sample_model(AnalyticModel::normal(0.0, 1.0, m), m, n, seed);
}

} // namespace

TEST_CASE("parzen_h_m1 examples")
{
  const double r = 1.0 / (2.0 * sqrt_pi);
  const double h = parzen_h_m1(1000, 1.0, r, normal_curvature);
  CHECK(h == doctest::Approx(0.2660650).epsilon(1e-6));
  CHECK(parzen_h_m1(16000, 1.0, r, normal_curvature) / h ==
        doctest::Approx(std::pow(16.0, -0.2)).epsilon(1e-12));
  CHECK(parzen_h_m1(1000, 2.0, r, normal_curvature) / h ==
        doctest::Approx(std::pow(2.0, -0.4)).epsilon(1e-12));
  CHECK_THROWS_AS(parzen_h_m1(1000, 1.0, r, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(parzen_h_m1(1000, 1.0, r, -1.0), std::invalid_argument);
}

TEST_CASE("h_opt_symmetric examples")
{
  CHECK(h_opt_symmetric(1, 1.0, 1.0) == doctest::Approx(0.7578583).epsilon(1e-7));
  CHECK(h_opt_symmetric(50, 3.0, 3.0) == doctest::Approx(h_opt_symmetric(50, 0.2, 0.2)).epsilon(1e-14));
  CHECK_THROWS_AS(h_opt_symmetric(10, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(h_opt_symmetric(10, 1.0, -1.0), std::invalid_argument);
}

TEST_CASE("h_opt_symmetric is the minimizer of A h^4 + B / (n h)")
{
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> coef(0.01, 5.0);
  std::uniform_int_distribution<int> size(1, 100000);
  for (int i = 0; i < 50; ++i) {
    const double a = coef(rng), b = coef(rng), n = size(rng);
    const double h = h_opt_symmetric(n, a, b);
    const double golden = argmin_scalar(
                            [&](double x) { return a * std::pow(x, 4) + b / (n * x); },
                            0.2 * h, 5.0 * h, 1e-10 * h)
                            .x;
    CHECK(std::abs(golden - h) <= 1e-8 * std::max(h, 1.0));
  }
}

TEST_CASE("normal constants")
{
  const auto one = normal_ab_constants(1, 1.0);
  CHECK(one.a == doctest::Approx(0.0528928).epsilon(1e-6));
  CHECK(one.b == doctest::Approx(0.2820948).epsilon(1e-6));
  for (int m : { 1, 2, 4, 8 }) {
    const auto model = AnalyticModel::normal(0.0, 1.0, m);
    const auto q = ab_constants(model, Grid(-12.0, 12.0, 8001));
    const auto c = normal_ab_constants(m, 1.0);
    CHECK(q.a == doctest::Approx(3.0 / (32.0 * sqrt_pi * std::sqrt(m))).epsilon(1e-6));
    CHECK(q.b == doctest::Approx(m / (2.0 * sqrt_pi * std::sqrt(2.0 * m - 1.0))).epsilon(1e-6));
    CHECK(q.a == doctest::Approx(c.a).epsilon(1e-6));
    CHECK(q.b == doctest::Approx(c.b).epsilon(1e-6));
  }
  // sigma enters A as sigma^-5 and leaves B alone
  const auto s = normal_ab_constants(3, 2.0);
  CHECK(s.a == doctest::Approx(normal_ab_constants(3, 1.0).a / 32.0).epsilon(1e-14));
  CHECK(s.b == doctest::Approx(normal_ab_constants(3, 1.0).b).epsilon(1e-14));
}

TEST_CASE("h_opt_normal examples")
{
  CHECK(h_opt_normal(1000, 1, 1.0) == doctest::Approx(0.2660650).epsilon(1e-6));
  CHECK(h_opt_normal(1000, 4, 1.0) == doctest::Approx(0.3320).epsilon(1e-4));
  // the large-M coefficient is reached under the (n / M)^{1/5} scaling
  const double coef = h_opt_normal(1000, 1 << 16, 1.0) * std::pow(1000.0 / (1 << 16), 0.2);
  CHECK(std::abs(coef - std::pow(8.0 / 9.0, 0.1)) < 1e-4);
  CHECK_THROWS_AS(h_opt_normal(1000, 4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(h_opt_normal(1000, 0, 1.0), std::invalid_argument);
}

TEST_CASE("h_opt_normal agrees with the symmetric formula")
{
  for (int m = 1; m <= 16; ++m) {
    for (double n : { 100.0, 1000.0, 10000.0 }) {
      for (double sigma : { 0.5, 1.0, 2.0 }) {
        const auto ab = normal_ab_constants(m, sigma);
        CHECK(h_opt_symmetric(n, ab.a, ab.b) ==
              doctest::Approx(h_opt_normal(n, m, sigma)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("h_opt_baseline examples")
{
  for (int m : { 1, 3, 8 }) {
    const auto b = h_opt_baseline(1000, m, 1.0);
    REQUIRE(b.size() == static_cast<std::size_t>(m));
    for (double v : b.values())
      CHECK(v == doctest::Approx(0.2660650).epsilon(1e-6));
  }
  CHECK(h_opt_baseline(777, 1, 1.7)[0] == doctest::Approx(h_opt_normal(777, 1, 1.7)).epsilon(1e-14));
}

TEST_CASE("h_opt_gamma scaling and domain")
{
  const double h = h_opt_gamma(1000, 4, 3.0, 3.0);
  CHECK(h_opt_gamma(16000, 4, 3.0, 3.0) / h == doctest::Approx(std::pow(16.0, -0.2)).epsilon(1e-12));
  CHECK_THROWS_AS(h_opt_gamma(1000, 1, 1.05, 1.0), GammaDomain);
  CHECK_THROWS_AS(h_opt_gamma(1000, 1, 2.0, 1.0), GammaDomain);
  CHECK_NOTHROW(h_opt_gamma(1000, 4, 2.0, 1.0));
}

TEST_CASE("gamma constants match quadrature")
{
  for (double theta : { 3.0, 1.0 / 3.0 }) {
    for (int m : { 2, 4, 8 }) {
      const auto model = AnalyticModel::gamma(3.0, theta, m);
      const auto q = ab_constants(model, Grid(0.0, 40.0 * theta, 16001));
      const auto c = gamma_ab_constants(m, 3.0, theta);
      CHECK(c.a == doctest::Approx(q.a).epsilon(1e-6));
      CHECK(c.b == doctest::Approx(q.b).epsilon(1e-6));
    }
  }
}

TEST_CASE("h_opt_gamma matches brute-force minimization of amise_bar")
{
  for (int m : { 2, 4 }) {
    const auto model = AnalyticModel::gamma(3.0, 3.0, m);
    const double brute = brute_force_h(model, 1000, Grid(0.0, 120.0, 16001));
    CHECK(h_opt_gamma(1000, m, 3.0, 3.0) == doctest::Approx(brute).epsilon(1e-3));
  }
}

TEST_CASE("closed forms are positive and decreasing in n")
{
  const double r = 1.0 / (2.0 * sqrt_pi);
  for (int m : { 1, 2, 5, 12 }) {
    double prev[4] = { INFINITY, INFINITY, INFINITY, INFINITY };
    for (double n : { 1.0, 10.0, 100.0, 1e3, 1e4, 1e6 }) {
      const double v[4] = { parzen_h_m1(n, 1.0, r, normal_curvature), h_opt_normal(n, m, 1.3),
                            h_opt_baseline(n, m, 0.7)[0], h_opt_gamma(n, m, 3.5, 2.0) };
      for (int k = 0; k < 4; ++k) {
        CHECK(v[k] > 0.0);
        CHECK(v[k] < prev[k]);
        prev[k] = v[k];
      }
    }
  }
}

TEST_CASE("h_opt_model dispatches on family")
{
  CHECK(h_opt_model(AnalyticModel::normal(2.0, 1.5, 4), 500) == h_opt_normal(500, 4, 1.5));
  CHECK(h_opt_model(AnalyticModel::gamma(3.0, 3.0, 4), 500) == h_opt_gamma(500, 4, 3.0, 3.0));
}

TEST_CASE("bandwidth vectors reject bad entries")
{
  CHECK_THROWS_AS(BandwidthVector({}), std::invalid_argument);
  CHECK_THROWS_AS(BandwidthVector({ 0.1, 0.0 }), std::invalid_argument);
  CHECK_THROWS_AS(BandwidthVector({ NAN }), std::invalid_argument);
  const BandwidthVector v({ 3.0, 4.0 });
  CHECK(v.norm() == 5.0);
  CHECK(v.max() == 4.0);
}

TEST_CASE("optimizer with no outer iterations returns the initialization")
{
  const auto s = normal_subsets(3, 400, 51);
  OptimizerOptions o;
  o.max_outer_iters = 0;
  const auto r = optimize_bandwidth(s, Kernel(), o);
  std::vector<double> pooled;
  for (const auto& x : s)
    pooled.insert(pooled.end(), x.values().begin(), x.values().end());
  double mean = 0.0, ss = 0.0;
  for (double v : pooled)
    mean += v / pooled.size();
  for (double v : pooled)
    ss += (v - mean) * (v - mean);
  const double h0 = h_opt_normal(400, 3, std::sqrt(ss / (pooled.size() - 1)));
  for (double v : r.h.values())
    CHECK(v == doctest::Approx(h0).epsilon(1e-14));
  CHECK(r.iterations == 0);
  CHECK(!r.converged);
  CHECK(r.trace.size() == 1);
}

TEST_CASE("descent is monotone within every outer iteration")
{
  const auto s = normal_subsets(4, 500, 52);
  std::vector<SubsetKde> k;
  std::vector<double> pooled;
  for (const auto& x : s) {
    k.emplace_back(x, 0.3);
    pooled.insert(pooled.end(), x.values().begin(), x.values().end());
  }
  const auto c = empirical_coefficients(ProductPosterior(k, default_window(pooled, 0.3)));
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> h(4);
    for (double& v : h)
      v = u(rng);
    DescentSettings ds;
    ds.step = 1.0;
    ds.h_floor = 1e-3;
    const auto r = descend_surrogate(c, h, 20, ds);
    for (std::size_t i = 1; i < r.values.size(); ++i)
      CHECK(r.values[i] <= r.values[i - 1]);
    for (double v : r.h)
      CHECK(v >= 1e-3);
  }
}

TEST_CASE("optimizer iterates respect the floor and stop on a small move")
{
  const auto s = normal_subsets(4, 500, 54);
  OptimizerOptions o;
  o.h_floor = 0.2;
  o.max_outer_iters = 10;
  const auto r = optimize_bandwidth(s, Kernel(), o);
  for (const auto& row : r.trace)
    for (double v : row.h)
      CHECK(v >= 0.2);
  CHECK(r.iterations <= 10);
  CHECK(r.trace.size() == static_cast<std::size_t>(r.iterations) + 1);
  if (r.converged) {
    const auto& a = r.trace[r.trace.size() - 2].h;
    const auto& b = r.trace.back().h;
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      d += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(std::sqrt(d) < r.tol);
  }
}

TEST_CASE("optimizer surrogate is stationary at a converged result")
{
  for (std::uint64_t seed : { 55u, 56u, 57u }) {
    const auto r = optimize_bandwidth(normal_subsets(2, 800, seed), Kernel());
    if (r.converged)
      CHECK(r.gradient_norm < 10.0 * r.tol);
  }
}

TEST_CASE("fixed step rule runs and stays above the floor")
{
  OptimizerOptions o;
  o.step_rule = StepRule::fixed;
  o.init_step = 0.01;
  o.max_outer_iters = 5;
  const auto r = optimize_bandwidth(normal_subsets(2, 300, 58), Kernel(), o);
  CHECK(r.iterations >= 1);
  const double floor = 1e-3 * r.trace.front().h[0] / 2;
  for (double v : r.h.values())
    CHECK(v >= floor * (1 - 1e-12));
}

TEST_CASE("optimizer rejects unusable input")
{
  CHECK_THROWS_AS(optimize_bandwidth({}, Kernel()), std::invalid_argument);
  const auto s = normal_subsets(2, 50, 59);
  CHECK_THROWS_AS(optimize_bandwidth(s, Kernel(KernelFamily::epanechnikov)), std::invalid_argument);
  const std::vector<SubsetSample> flat{ SubsetSample({ 1.0, 1.0, 1.0 }) };
  CHECK_THROWS_AS(optimize_bandwidth(flat, Kernel()), std::invalid_argument);
  OptimizerOptions o;
  o.tol = 0.0;
  CHECK_THROWS_AS(optimize_bandwidth(s, Kernel(), o), std::invalid_argument);
}
