#pragma once

#include "ppkde/estimators.hpp"
#include "ppkde/kernels.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ppkde {

//! How the bandwidth of every subset estimator is chosen.
struct HPolicy
{
  enum class Kind
  {
    fixed,
    h_opt,
    h_opt_baseline
  };
  Kind kind = Kind::h_opt;
  double h = 0.0; // fixed only

  static HPolicy parse(const std::string& text);
  std::string name() const;
};

//! Bandwidth grid of a MISE sweep. With relative set, lo and hi multiply the
//! closed-form optimum of each (M, n) cell.
struct SweepRange
{
  double lo = 0.5;
  double hi = 2.0;
  int count = 25;
  bool relative = true;

  std::vector<double> values(double h_opt) const;
};

struct ModelSpec
{
  ModelFamily family = ModelFamily::normal;
  double first = 0.0;  // mu or alpha
  double second = 1.0; // sigma or theta (scale)

  AnalyticModel build(int subsets) const;
  std::string name() const;
};

struct GridSpec
{
  std::size_t points = 4097;
  //! Added on both sides, in units of the largest bandwidth.
  double pad = 5.0;
  std::optional<double> lo;
  std::optional<double> hi;
};

struct ExperimentConfig
{
  ModelSpec model;
  std::vector<int> subsets{ 4, 8 };
  std::vector<std::size_t> n_per_subset{ 250, 500, 1000, 2000, 4000 };
  std::vector<HPolicy> policies{ { HPolicy::Kind::h_opt },
                                 { HPolicy::Kind::h_opt_baseline } };
  SweepRange sweep;
  bool ratio = true;
  int replications = 200;
  int outer_repeats = 20;
  std::optional<std::uint64_t> seed;
  GridSpec grid;
  Kernel kernel;
  int workers = 1;
  std::string output_dir = "results";

  //! Throws ConfigError on the first broken invariant.
  void validate() const;
};

//! Parses the JSON form; unknown keys are rejected. Throws ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
//! JSON echo of every field, as stored in the run manifest.
std::string config_to_json(const ExperimentConfig& cfg, int indent = 2);

} // namespace ppkde
