// Command-line front end: fit, optimize, mise-sweep, experiment, report.

#include "ppkde/amise.hpp"
#include "ppkde/bandwidth.hpp"
#include "ppkde/config.hpp"
#include "ppkde/errors.hpp"
#include "ppkde/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

using namespace ppkde;

namespace {

enum ExitCode
{
  exit_ok = 0,
  exit_config = 2,
  exit_numerical = 3,
  exit_io = 4
};

// Shared flag overrides for config-driven subcommands. Unset flags leave
// the config value alone.
struct Overrides
{
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string model;
  std::optional<double> mu, sigma, alpha, theta;
  std::vector<int> subsets;
  std::vector<std::size_t> n;
  std::vector<std::string> policies;
  std::optional<double> sweep_lo, sweep_hi;
  std::optional<int> sweep_count;
  bool sweep_absolute = false;
  std::optional<int> replications, outer_repeats, workers;
  std::optional<std::size_t> grid_points;
  std::optional<double> grid_pad;
  std::string kernel;
  std::string output_dir;
  bool no_ratio = false;

  void add_to(CLI::App& app)
  {
    app.add_option("--config", config_path, "JSON experiment config");
    app.add_option("--seed", seed, "master seed (64-bit)");
    app.add_option("--model", model, "normal or gamma")
      ->check(CLI::IsMember({ "normal", "gamma" }));
    app.add_option("--mu", mu);
    app.add_option("--sigma", sigma);
    app.add_option("--alpha", alpha);
    app.add_option("--theta", theta, "gamma scale");
    app.add_option("--M", subsets, "subset counts");
    app.add_option("--n", n, "per-subset sample sizes");
    app.add_option("--policies", policies, "h_opt, h_opt_baseline, fixed:<h>");
    app.add_option("--sweep-lo", sweep_lo);
    app.add_option("--sweep-hi", sweep_hi);
    app.add_option("--sweep-count", sweep_count);
    app.add_flag("--sweep-absolute", sweep_absolute,
                 "sweep bounds are bandwidths, not multiples of h_opt");
    app.add_option("--replications", replications);
    app.add_option("--outer-repeats", outer_repeats);
    app.add_option("--workers", workers);
    app.add_option("--grid-points", grid_points);
    app.add_option("--grid-pad", grid_pad);
    app.add_option("--kernel", kernel);
    app.add_option("--output-dir", output_dir);
  }

  ExperimentConfig resolve() const
  {
    ExperimentConfig cfg =
      config_path.empty() ? ExperimentConfig() : load_config(config_path);
    if (seed)
      cfg.seed = seed;
    if (!model.empty()) {
      const auto family = model == "normal" ? ModelFamily::normal : ModelFamily::gamma;
      if (family != cfg.model.family)
        cfg.model = family == ModelFamily::normal ? ModelSpec{ family, 0.0, 1.0 }
                                                  : ModelSpec{ family, 3.0, 3.0 };
    }
    const bool normal = cfg.model.family == ModelFamily::normal;
    if ((mu || sigma) && !normal)
      throw ConfigError("--mu/--sigma apply to the normal model only");
    if ((alpha || theta) && normal)
      throw ConfigError("--alpha/--theta apply to the gamma model only");
    if (mu)
      cfg.model.first = *mu;
    if (sigma)
      cfg.model.second = *sigma;
    if (alpha)
      cfg.model.first = *alpha;
    if (theta)
      cfg.model.second = *theta;
    if (!subsets.empty())
      cfg.subsets = subsets;
    if (!n.empty())
      cfg.n_per_subset = n;
    if (!policies.empty()) {
      cfg.policies.clear();
      for (const auto& p : policies)
        cfg.policies.push_back(HPolicy::parse(p));
    }
    if (sweep_lo)
      cfg.sweep.lo = *sweep_lo;
    if (sweep_hi)
      cfg.sweep.hi = *sweep_hi;
    if (sweep_count)
      cfg.sweep.count = *sweep_count;
    if (sweep_absolute)
      cfg.sweep.relative = false;
    if (replications)
      cfg.replications = *replications;
    if (outer_repeats)
      cfg.outer_repeats = *outer_repeats;
    if (workers)
      cfg.workers = *workers;
    if (grid_points)
      cfg.grid.points = *grid_points;
    if (grid_pad)
      cfg.grid.pad = *grid_pad;
    if (!kernel.empty()) {
      try {
        cfg.kernel = Kernel::from_name(kernel);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    if (!output_dir.empty())
      cfg.output_dir = output_dir;
    if (no_ratio)
      cfg.ratio = false;
    cfg.validate();
    return cfg;
  }
};

std::ofstream open_output(const std::string& path)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot open " + path + " for writing");
  return out;
}

void check_written(std::ostream& out, const std::string& path)
{
  out.flush();
  if (!out)
    throw IoError("write failed for " + path);
}

double pooled_sd(std::span<const SubsetSample> subsets)
{
  std::vector<double> all;
  for (const auto& s : subsets)
    all.insert(all.end(), s.values().begin(), s.values().end());
  const double mean = std::accumulate(all.begin(), all.end(), 0.0) / all.size();
  double ss = 0.0;
  for (double v : all)
    ss += (v - mean) * (v - mean);
  return std::sqrt(ss / std::max<std::size_t>(all.size() - 1, 1));
}

std::vector<double> pooled(std::span<const SubsetSample> subsets)
{
  std::vector<double> all;
  for (const auto& s : subsets)
    all.insert(all.end(), s.values().begin(), s.values().end());
  return all;
}

// ---- fit -------------------------------------------------------------------

struct FitArgs
{
  std::string subsets_dir;
  std::vector<double> bandwidth;
  std::string kernel = "gaussian";
  std::size_t grid_points = 4001;
  double pad = 5.0;
  std::string out;
};

int run_fit(const FitArgs& a)
{
  const auto subsets = load_subsets(a.subsets_dir);
  const Kernel kernel = Kernel::from_name(a.kernel);
  const int m = static_cast<int>(subsets.size());
  std::vector<double> h = a.bandwidth;
  if (h.empty()) {
    const double sd = pooled_sd(subsets);
    for (const auto& s : subsets)
      h.push_back(h_opt_normal(static_cast<double>(s.size()), m, sd));
  } else if (h.size() == 1) {
    h.assign(subsets.size(), h[0]);
  } else if (h.size() != subsets.size()) {
    throw ConfigError("--bandwidth needs one value or one per subset");
  }
  const BandwidthVector hv(h);
  const auto all = pooled(subsets);
  const Grid grid = default_window(all, hv.max(), { a.pad, a.grid_points });
  std::vector<SubsetKde> kdes;
  for (std::size_t i = 0; i < subsets.size(); ++i)
    kdes.emplace_back(subsets[i], h[i], kernel);
  const ProductPosterior post(std::move(kdes), grid);

  std::ofstream file;
  if (!a.out.empty())
    file = open_output(a.out);
  std::ostream& out = a.out.empty() ? std::cout : file;
  out << "x,product,posterior\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    out << format_double(grid.point(i)) << ','
        << format_double(post.product_on_grid()[i]) << ','
        << format_double(post.posterior_on_grid()[i]) << '\n';
  if (!a.out.empty())
    check_written(out, a.out);
  std::cerr << "lambda_hat=" << format_double(post.lambda_hat())
            << " c_hat=" << format_double(post.c_hat()) << " h=";
  for (std::size_t i = 0; i < h.size(); ++i)
    std::cerr << (i ? "," : "") << format_double(h[i]);
  std::cerr << '\n';
  return exit_ok;
}

// ---- optimize --------------------------------------------------------------

struct OptimizeArgs
{
  std::string subsets_dir;
  std::string kernel = "gaussian";
  int max_iters = 50;
  int steps = 5;
  std::optional<double> tol;
  std::optional<double> h_floor;
  double init_step = 0.25;
  std::string step_rule = "backtracking";
  std::size_t grid_points = 4001;
  std::string trace;
  std::string out;
  std::string coefficients;
};

int run_optimize(const OptimizeArgs& a)
{
  const auto subsets = load_subsets(a.subsets_dir);
  const Kernel kernel = Kernel::from_name(a.kernel);
  OptimizerOptions opts;
  opts.max_outer_iters = a.max_iters;
  opts.descent_steps_per_iter = a.steps;
  opts.tol = a.tol;
  opts.h_floor = a.h_floor;
  opts.init_step = a.init_step;
  opts.step_rule = a.step_rule == "fixed" ? StepRule::fixed : StepRule::backtracking;
  opts.window.n_points = a.grid_points;
  if (opts.max_outer_iters < 0 || opts.descent_steps_per_iter < 1)
    throw ConfigError("--max-iters must be >= 0 and --steps-per-iter >= 1");
  if ((a.tol && !(*a.tol > 0.0)) || (a.h_floor && !(*a.h_floor > 0.0)))
    throw ConfigError("--tol and --h-floor must be > 0");

  const auto result = optimize_bandwidth(subsets, kernel, opts);

  std::ofstream file;
  if (!a.trace.empty())
    file = open_output(a.trace);
  std::ostream& out = a.trace.empty() ? std::cout : file;
  out << "iter";
  for (std::size_t i = 0; i < subsets.size(); ++i)
    out << ",h_" << i + 1;
  out << ",amise_hat\n";
  for (const auto& row : result.trace) {
    out << row.iter;
    for (double v : row.h)
      out << ',' << format_double(v);
    out << ',' << format_double(row.amise_hat) << '\n';
  }
  if (!a.trace.empty())
    check_written(out, a.trace);

  if (!a.out.empty()) {
    auto f = open_output(a.out);
    f << "subset,h\n";
    for (std::size_t i = 0; i < result.h.size(); ++i)
      f << i + 1 << ',' << format_double(result.h[i]) << '\n';
    check_written(f, a.out);
  }
  if (!a.coefficients.empty()) {
    const std::string beta_path = a.coefficients + "_beta.csv";
    const std::string nu_path = a.coefficients + "_nu.csv";
    auto b = open_output(beta_path);
    auto n = open_output(nu_path);
    write_coefficients_csv(result.coefficients, b, n);
    check_written(b, beta_path);
    check_written(n, nu_path);
  }
  std::cerr << (result.converged ? "converged" : "not converged") << " after "
            << result.iterations << " iterations; gradient norm "
            << format_double(result.gradient_norm) << "; h =";
  for (double v : result.h.values())
    std::cerr << ' ' << format_double(v);
  std::cerr << '\n';
  return exit_ok;
}

// ---- mise-sweep ------------------------------------------------------------

int run_sweep(const Overrides& o, const std::string& out_path)
{
  const auto cfg = o.resolve();
  if (!cfg.seed)
    throw ConfigError("mise-sweep needs a seed (--seed or config)");
  const int m = cfg.subsets.front();
  const std::size_t n = cfg.n_per_subset.front();
  if (cfg.subsets.size() > 1 || cfg.n_per_subset.size() > 1)
    std::cerr << "mise-sweep: using M=" << m << ", n=" << n << '\n';
  const auto model = cfg.model.build(m);
  const double h_opt = h_opt_model(model, static_cast<double>(n));
  const auto hs = cfg.sweep.values(h_opt);
  const auto curve = sweep_bandwidth(model, n, hs, cfg.replications, *cfg.seed,
                                     harness_options(cfg));
  const std::string path =
    out_path.empty() ? cfg.output_dir + "/sweep.csv" : out_path;
  std::error_code ec;
  std::filesystem::create_directories(std::filesystem::path(path).parent_path(), ec);
  auto f = open_output(path);
  write_sweep_csv(curve, f);
  check_written(f, path);
  std::cerr << "argmin_h=" << format_double(curve.argmin_h)
            << " argmin_mise=" << format_double(curve.argmin_mise)
            << " h_opt=" << format_double(h_opt) << " ratio="
            << format_double(h_opt / curve.argmin_h) << '\n';
  if (2 * curve.degenerate > cfg.replications)
    throw NumericalError("most replications were degenerate");
  return exit_ok;
}

// ---- experiment ------------------------------------------------------------

int run_experiment_cmd(const Overrides& o)
{
  const auto cfg = o.resolve();
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = run_experiment(cfg);
  const double wall =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& row : report.mise_vs_n) {
    if (row.estimate.degenerate > row.estimate.used)
      throw NumericalError("most replications were degenerate for M=" +
                           std::to_string(row.subsets) + ", n=" +
                           std::to_string(row.n));
  }
  write_report(report, cfg, cfg.output_dir, wall);
  std::cerr << "wrote " << cfg.output_dir << "/{mise_vs_n.csv,ratio.csv,manifest.json} in "
            << wall << " s\n";
  return exit_ok;
}

// ---- report ----------------------------------------------------------------

std::vector<std::map<std::string, std::string>> read_csv(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open " + path);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  const auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ','))
      out.push_back(cell);
    return out;
  };
  if (!std::getline(in, line))
    throw IoError(path + " is empty");
  header = split(line);
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw IoError("malformed row in " + path + ": " + line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < cells.size(); ++i)
      row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

int run_report(const std::string& dir)
{
  const auto mise = read_csv(dir + "/mise_vs_n.csv");
  using Key = std::tuple<std::string, int, std::string>;
  std::map<Key, std::vector<std::pair<double, double>>> series;
  std::map<std::tuple<std::string, int, long>, std::map<std::string, double>> cells;
  for (const auto& r : mise) {
    const int m = std::stoi(r.at("M"));
    const double n = std::stod(r.at("n"));
    const double v = std::stod(r.at("mise"));
    series[{ r.at("model"), m, r.at("policy") }].push_back({ n, v });
    cells[{ r.at("model"), m, std::stol(r.at("n")) }][r.at("policy")] = v;
  }
  std::cout << "log-log slope of MISE in n\n";
  for (const auto& [key, pts] : series) {
    double mx = 0.0, my = 0.0;
    for (const auto& [n, v] : pts) {
      mx += std::log(n) / pts.size();
      my += std::log(v) / pts.size();
    }
    double sxy = 0.0, sxx = 0.0;
    for (const auto& [n, v] : pts) {
      sxy += (std::log(n) - mx) * (std::log(v) - my);
      sxx += (std::log(n) - mx) * (std::log(n) - mx);
    }
    std::cout << "  " << std::get<0>(key) << " M=" << std::get<1>(key) << ' '
              << std::get<2>(key) << ": "
              << (sxx > 0.0 ? format_double(sxy / sxx) : std::string("n/a")) << '\n';
  }
  std::cout << "h_opt vs h_opt_baseline\n";
  for (const auto& [key, pol] : cells) {
    if (!pol.count("h_opt") || !pol.count("h_opt_baseline"))
      continue;
    const double a = pol.at("h_opt"), b = pol.at("h_opt_baseline");
    std::cout << "  " << std::get<0>(key) << " M=" << std::get<1>(key)
              << " n=" << std::get<2>(key) << ": " << format_double(a) << " vs "
              << format_double(b) << (a <= b ? "  (h_opt better)" : "  (baseline better)")
              << '\n';
  }
  std::ifstream ratio_in(dir + "/ratio.csv");
  if (ratio_in) {
    ratio_in.close();
    std::cout << "h_opt / h_argmin\n";
    for (const auto& r : read_csv(dir + "/ratio.csv"))
      std::cout << "  " << r.at("model") << " M=" << r.at("M") << " n=" << r.at("n")
                << ": " << r.at("ratio") << " +- " << r.at("ratio_stderr") << '\n';
  }
  return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Product-of-subset KDE posterior estimation and bandwidth tools" };
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit subset KDEs and print the normalized product");
  fit_cmd->add_option("--subsets", fit.subsets_dir, "directory with one file per subset")
    ->required();
  fit_cmd->add_option("--bandwidth", fit.bandwidth, "one h, or one per subset");
  fit_cmd->add_option("--kernel", fit.kernel);
  fit_cmd->add_option("--grid-points", fit.grid_points);
  fit_cmd->add_option("--grid-pad", fit.pad);
  fit_cmd->add_option("--out", fit.out, "CSV path (default stdout)");

  OptimizeArgs opt;
  auto* opt_cmd = app.add_subcommand("optimize", "iterative plug-in bandwidth search");
  opt_cmd->add_option("--subsets", opt.subsets_dir, "directory with one file per subset")
    ->required();
  opt_cmd->add_option("--kernel", opt.kernel);
  opt_cmd->add_option("--max-iters", opt.max_iters);
  opt_cmd->add_option("--steps-per-iter", opt.steps);
  opt_cmd->add_option("--tol", opt.tol, "stop when ||h_k - h_k+1|| < tol");
  opt_cmd->add_option("--h-floor", opt.h_floor);
  opt_cmd->add_option("--init-step", opt.init_step);
  opt_cmd->add_option("--step-rule", opt.step_rule)
    ->check(CLI::IsMember({ "fixed", "backtracking" }));
  opt_cmd->add_option("--grid-points", opt.grid_points);
  opt_cmd->add_option("--trace", opt.trace, "trace CSV path (default stdout)");
  opt_cmd->add_option("--out", opt.out, "final bandwidths CSV");
  opt_cmd->add_option("--coefficients", opt.coefficients,
                      "path prefix for the beta/nu CSV tables");

  Overrides sweep_o;
  std::string sweep_out;
  auto* sweep_cmd = app.add_subcommand("mise-sweep", "MISE over a bandwidth grid");
  sweep_o.add_to(*sweep_cmd);
  sweep_cmd->add_option("--out", sweep_out, "CSV path (default <output-dir>/sweep.csv)");

  Overrides exp_o;
  auto* exp_cmd = app.add_subcommand("experiment", "full Monte Carlo experiment");
  exp_o.add_to(*exp_cmd);
  exp_cmd->get_option("--seed")->required();
  exp_cmd->add_flag("--no-ratio", exp_o.no_ratio, "skip the sweep/argmin stage");

  std::string report_dir;
  auto* rep_cmd = app.add_subcommand("report", "summarize experiment CSVs");
  rep_cmd->add_option("--input", report_dir, "experiment output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (*fit_cmd)
      return run_fit(fit);
    if (*opt_cmd)
      return run_optimize(opt);
    if (*sweep_cmd)
      return run_sweep(sweep_o, sweep_out);
    if (*exp_cmd)
      return run_experiment_cmd(exp_o);
    if (*rep_cmd)
      return run_report(report_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return exit_io;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const GammaDomain& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return exit_ok;
}
