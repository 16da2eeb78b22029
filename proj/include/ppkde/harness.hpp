#pragma once

#include "ppkde/bandwidth.hpp"
#include "ppkde/config.hpp"
#include "ppkde/estimators.hpp"
#include "ppkde/kernels.hpp"
#include "ppkde/quadrature.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ppkde {

//! M subsets of n i.i.d. draws from the model's subset density. Subset m
//! draws from the stream (seed, outer, replication, m).
std::vector<SubsetSample> sample_model(const AnalyticModel& model,
                                       int subsets,
                                       std::size_t n,
                                       std::uint64_t seed,
                                       std::uint64_t outer = 0,
                                       std::uint64_t replication = 0);

//! int (estimate - truth)^2 over the grid.
double ise(const std::function<double(double)>& truth,
           const std::function<double(double)>& estimate,
           const Grid& grid);
double ise_values(std::span<const double> truth,
                  std::span<const double> estimate,
                  double dx);

//! Knobs shared by every Monte Carlo routine below.
struct HarnessOptions
{
  Kernel kernel;
  GridSpec grid;
  int workers = 1;
};

//! Fixed integration window for a model: the subset density's bulk
//! (+-8 sd for normal, [0, mean + 12 sd] for gamma) widened by
//! grid.pad * max_bandwidth. Explicit lo/hi bounds override all of this.
Grid model_window(const AnalyticModel& model,
                  double max_bandwidth,
                  const GridSpec& spec);

struct MiseEstimate
{
  double mise = 0.0;
  double std_error = 0.0;
  int used = 0;       // replications that entered the mean
  int degenerate = 0; // replications dropped with lambda_hat underflow
};

//! Mean and standard error of the ISE of the normalized product estimator
//! against the model's exact posterior, over `replications` fresh data sets.
MiseEstimate estimate_mise(const AnalyticModel& model,
                           std::size_t n,
                           const BandwidthVector& h,
                           int replications,
                           std::uint64_t seed,
                           const HarnessOptions& opts = HarnessOptions(),
                           std::uint64_t outer = 0);

struct MiseRow
{
  double h;
  double mise;
  double std_error;
};

struct MiseCurve
{
  std::vector<MiseRow> rows; // sorted by h
  std::size_t argmin_index = 0;
  //! Vertex of the parabola through the three lowest rows; falls back to
  //! the argmin row when the fit is not convex or leaves its bracket.
  double argmin_h = 0.0;
  double argmin_mise = 0.0;
  int degenerate = 0;
};

//! Refines the argmin of rows (sorted by h) as described in MiseCurve.
void locate_argmin(MiseCurve& curve);

//! MISE at each common bandwidth in hs with common random numbers:
//! replication r reuses its samples for every h.
MiseCurve sweep_bandwidth(const AnalyticModel& model,
                          std::size_t n,
                          std::span<const double> hs,
                          int replications,
                          std::uint64_t seed,
                          const HarnessOptions& opts = HarnessOptions(),
                          std::uint64_t outer = 0);

//! h vector for a policy on a model with M subsets of n draws.
BandwidthVector policy_bandwidths(const HPolicy& policy,
                                  const AnalyticModel& model,
                                  std::size_t n);

struct MiseVsNRow
{
  std::string model;
  int subsets;
  std::size_t n;
  std::string policy;
  double h;
  MiseEstimate estimate;
};

struct RatioRow
{
  std::string model;
  int subsets;
  std::size_t n;
  double h_opt;
  double h_argmin; // median over outer repeats
  double ratio;    // median of h_opt / h_argmin over outer repeats
  double ratio_stderr;
  std::vector<double> per_repeat_ratio;
};

struct ExperimentReport
{
  std::vector<MiseVsNRow> mise_vs_n;
  std::vector<RatioRow> ratios;
  int replications_total = 0;
  int degenerate_total = 0;
};

HarnessOptions harness_options(const ExperimentConfig& cfg);

//! Every (M, n) cell: MISE per policy and, when cfg.ratio is set, the sweep
//! argmin over cfg.outer_repeats independent repeats. Requires cfg.seed.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

void write_mise_vs_n_csv(const ExperimentReport& report, std::ostream& out);
void write_ratio_csv(const ExperimentReport& report, std::ostream& out);
void write_sweep_csv(const MiseCurve& curve, std::ostream& out);

//! Writes mise_vs_n.csv, ratio.csv and manifest.json into dir. Files are
//! staged under temporary names and renamed only when all writes succeeded.
//! Throws IoError naming the failing file.
void write_report(const ExperimentReport& report,
                  const ExperimentConfig& cfg,
                  const std::string& dir,
                  double wall_seconds);

//! Every regular file in dir, in name order, as one subset each. Values
//! may be separated by whitespace, commas or newlines. Throws IoError.
std::vector<SubsetSample> load_subsets(const std::string& dir);

//! Shortest round-trip text form used in every CSV.
std::string format_double(double v);

//! Runs fn(0..count-1) on up to `workers` threads. The first exception is
//! rethrown after all workers stop.
void parallel_for(std::size_t count,
                  int workers,
                  const std::function<void(std::size_t)>& fn);

} // namespace ppkde
