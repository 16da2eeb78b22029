#include "ppkde/harness.hpp"

#include "ppkde/binned.hpp"
#include "ppkde/errors.hpp"
#include "ppkde/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <mutex>
#include <ostream>
#include <random>
#include <thread>

namespace ppkde {

namespace {

constexpr const char* library_version = "0.1.0";

// Everything a replication needs that does not depend on its samples.
struct McSetup
{
  McSetup(const AnalyticModel& model,
          std::size_t n,
          double max_h,
          const HarnessOptions& opts)
    : model(model)
    , n(n)
    , grid(model_window(model, max_h, opts.grid))
    , binned(grid, max_h, opts.kernel)
    , truth(grid.size())
  {
    for (std::size_t i = 0; i < grid.size(); ++i)
      truth[i] = model.density(DensityKind::posterior, grid.point(i));
  }

  AnalyticModel model;
  std::size_t n;
  Grid grid;
  BinnedKde binned;
  std::vector<double> truth;
};

// NaN marks a degenerate replication.
double replication_ise(const McSetup& s,
                       std::span<const BinnedKde::Spectrum> bins,
                       std::span<const BinnedKde::Spectrum* const> kernels)
{
  const std::size_t m = bins.size();
  std::vector<std::vector<double>> values(m);
  for (std::size_t k = 0; k < m; ++k) {
    values[k] = s.binned.evaluate(bins[k], *kernels[k]);
    // FFT round-off leaves noise of either sign where the estimate is ~0;
    // left in place it would keep disjoint supports from ever registering
    // as a degenerate product.
    const double peak = *std::max_element(values[k].begin(), values[k].end());
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * peak;
    for (double& v : values[k])
      v = v > floor ? v : 0.0;
  }
  GridPosterior post;
  try {
    post = normalize_grid_product(values, s.grid);
  } catch (const DegenerateProduct&) {
    return std::nan("");
  }
  const double mass = integrate_values(post.posterior, s.grid.spacing());
  if (std::abs(mass - 1.0) > 1e-6)
    throw NumericalError("normalized estimator integrates to " +
                         std::to_string(mass));
  return ise_values(s.truth, post.posterior, s.grid.spacing());
}

std::vector<BinnedKde::Spectrum> bin_samples(const McSetup& s,
                                             std::uint64_t seed,
                                             std::uint64_t outer,
                                             std::uint64_t replication)
{
  const auto samples =
    sample_model(s.model, s.model.subsets(), s.n, seed, outer, replication);
  std::vector<BinnedKde::Spectrum> bins;
  bins.reserve(samples.size());
  for (const auto& sample : samples)
    bins.push_back(s.binned.bin(sample.values()));
  return bins;
}

MiseEstimate summarize(std::span<const double> ises)
{
  MiseEstimate e;
  double sum = 0.0;
  for (double v : ises) {
    if (std::isnan(v)) {
      ++e.degenerate;
      continue;
    }
    ++e.used;
    sum += v;
  }
  if (e.used == 0)
    throw NumericalError("every replication produced a degenerate product");
  e.mise = sum / e.used;
  double ss = 0.0;
  for (double v : ises) {
    if (!std::isnan(v))
      ss += (v - e.mise) * (v - e.mise);
  }
  e.std_error = e.used > 1 ? std::sqrt(ss / (e.used - 1) / e.used) : 0.0;
  return e;
}

double median(std::vector<double> v)
{
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

void write_file(const std::filesystem::path& path,
                const std::function<void(std::ostream&)>& body)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot open " + path.string() + " for writing");
  body(out);
  out.flush();
  if (!out)
    throw IoError("write failed for " + path.string());
}

std::string utc_timestamp()
{
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace

std::vector<SubsetSample> sample_model(const AnalyticModel& model,
                                       int subsets,
                                       std::size_t n,
                                       std::uint64_t seed,
                                       std::uint64_t outer,
                                       std::uint64_t replication)
{
  if (n < 1)
    throw std::invalid_argument("sample_model needs n >= 1");
  if (subsets < 1)
    throw std::invalid_argument("sample_model needs M >= 1");
  std::vector<SubsetSample> out;
  out.reserve(static_cast<std::size_t>(subsets));
  for (int m = 0; m < subsets; ++m) {
    auto rng = make_stream({ seed, outer, replication, static_cast<std::uint64_t>(m) });
    std::vector<double> v(n);
    if (model.family() == ModelFamily::normal) {
      std::normal_distribution<double> dist(model.first(), model.second());
      for (double& x : v)
        x = dist(rng);
    } else {
      std::gamma_distribution<double> dist(model.first(), model.second());
      for (double& x : v)
        x = dist(rng);
    }
    out.emplace_back(std::move(v), m + 1);
  }
  return out;
}

double ise(const std::function<double(double)>& truth,
           const std::function<double(double)>& estimate,
           const Grid& grid)
{
  return integrate(
    [&](double x) {
      const double d = estimate(x) - truth(x);
      return d * d;
    },
    grid);
}

double ise_values(std::span<const double> truth,
                  std::span<const double> estimate,
                  double dx)
{
  if (truth.size() != estimate.size())
    throw std::invalid_argument("ise_values: length mismatch");
  std::vector<double> sq(truth.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double d = estimate[i] - truth[i];
    sq[i] = d * d;
  }
  return integrate_values(sq, dx);
}

Grid model_window(const AnalyticModel& model,
                  double max_bandwidth,
                  const GridSpec& spec)
{
  if (spec.lo)
    return Grid(*spec.lo, *spec.hi, spec.points);
  if (!(max_bandwidth > 0.0))
    throw std::invalid_argument("model_window needs a positive bandwidth");
  const double pad = spec.pad * max_bandwidth;
  const double sd = model.subset_sd();
  if (model.family() == ModelFamily::normal)
    return Grid(model.first() - 8.0 * sd - pad, model.first() + 8.0 * sd + pad,
                spec.points);
  const double mean = model.first() * model.second();
  return Grid(-pad, mean + 12.0 * sd + pad, spec.points);
}

MiseEstimate estimate_mise(const AnalyticModel& model,
                           std::size_t n,
                           const BandwidthVector& h,
                           int replications,
                           std::uint64_t seed,
                           const HarnessOptions& opts,
                           std::uint64_t outer)
{
  if (replications < 2)
    throw std::invalid_argument("estimate_mise needs replications >= 2");
  if (h.size() != static_cast<std::size_t>(model.subsets()))
    throw std::invalid_argument("bandwidth vector length differs from M");
  const McSetup setup(model, n, h.max(), opts);
  std::vector<BinnedKde::Spectrum> spectra;
  for (double v : h.values())
    spectra.push_back(setup.binned.kernel_spectrum(v));
  std::vector<const BinnedKde::Spectrum*> kernels;
  for (const auto& s : spectra)
    kernels.push_back(&s);

  std::vector<double> ises(static_cast<std::size_t>(replications));
  parallel_for(ises.size(), opts.workers, [&](std::size_t r) {
    const auto bins = bin_samples(setup, seed, outer, r);
    ises[r] = replication_ise(setup, bins, kernels);
  });
  return summarize(ises);
}

void locate_argmin(MiseCurve& curve)
{
  const auto& rows = curve.rows;
  if (rows.empty())
    throw std::invalid_argument("locate_argmin on an empty curve");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].mise < rows[best].mise)
      best = i;
  }
  curve.argmin_index = best;
  curve.argmin_h = rows[best].h;
  curve.argmin_mise = rows[best].mise;
  if (rows.size() < 3)
    return;

  std::vector<std::size_t> idx(rows.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    idx[i] = i;
  std::partial_sort(idx.begin(), idx.begin() + 3, idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return rows[a].mise < rows[b].mise;
                    });
  std::sort(idx.begin(), idx.begin() + 3);
  const double x0 = rows[idx[0]].h, x1 = rows[idx[1]].h, x2 = rows[idx[2]].h;
  const double y0 = rows[idx[0]].mise, y1 = rows[idx[1]].mise, y2 = rows[idx[2]].mise;
  // Newton divided differences: y = y0 + d1 (x - x0) + d2 (x - x0)(x - x1)
  const double d01 = (y1 - y0) / (x1 - x0);
  const double d12 = (y2 - y1) / (x2 - x1);
  const double d2 = (d12 - d01) / (x2 - x0);
  if (!(d2 > 0.0))
    return;
  const double xv = 0.5 * (x0 + x1) - d01 / (2.0 * d2);
  if (!(xv >= x0 && xv <= x2))
    return;
  curve.argmin_h = xv;
  curve.argmin_mise = y0 + d01 * (xv - x0) + d2 * (xv - x0) * (xv - x1);
}

MiseCurve sweep_bandwidth(const AnalyticModel& model,
                          std::size_t n,
                          std::span<const double> hs,
                          int replications,
                          std::uint64_t seed,
                          const HarnessOptions& opts,
                          std::uint64_t outer)
{
  if (replications < 2)
    throw std::invalid_argument("sweep_bandwidth needs replications >= 2");
  if (hs.empty())
    throw std::invalid_argument("sweep_bandwidth needs bandwidths");
  std::vector<double> sorted(hs.begin(), hs.end());
  std::sort(sorted.begin(), sorted.end());
  if (!(sorted.front() > 0.0))
    throw std::invalid_argument("sweep bandwidths must be positive");

  const McSetup setup(model, n, sorted.back(), opts);
  const std::size_t m = static_cast<std::size_t>(model.subsets());
  std::vector<BinnedKde::Spectrum> spectra;
  for (double v : sorted)
    spectra.push_back(setup.binned.kernel_spectrum(v));

  const std::size_t reps = static_cast<std::size_t>(replications);
  std::vector<double> ises(reps * sorted.size());
  parallel_for(reps, opts.workers, [&](std::size_t r) {
    const auto bins = bin_samples(setup, seed, outer, r);
    for (std::size_t j = 0; j < sorted.size(); ++j) {
      const std::vector<const BinnedKde::Spectrum*> kernels(m, &spectra[j]);
      ises[j * reps + r] = replication_ise(setup, bins, kernels);
    }
  });

  MiseCurve curve;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    const auto e = summarize(std::span(ises).subspan(j * reps, reps));
    curve.rows.push_back({ sorted[j], e.mise, e.std_error });
    curve.degenerate = std::max(curve.degenerate, e.degenerate);
  }
  locate_argmin(curve);
  return curve;
}

BandwidthVector policy_bandwidths(const HPolicy& policy,
                                  const AnalyticModel& model,
                                  std::size_t n)
{
  const auto m = static_cast<std::size_t>(model.subsets());
  const double dn = static_cast<double>(n);
  switch (policy.kind) {
    case HPolicy::Kind::h_opt:
      return BandwidthVector::uniform(m, h_opt_model(model, dn));
    case HPolicy::Kind::h_opt_baseline:
      return BandwidthVector::uniform(m, h_opt_model(model.with_subsets(1), dn));
    case HPolicy::Kind::fixed:
      break;
  }
  return BandwidthVector::uniform(m, policy.h);
}

HarnessOptions harness_options(const ExperimentConfig& cfg)
{
  HarnessOptions opts;
  opts.kernel = cfg.kernel;
  opts.grid = cfg.grid;
  opts.workers = cfg.workers;
  return opts;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg)
{
  cfg.validate();
  if (!cfg.seed)
    throw ConfigError("an experiment needs an explicit seed");
  const std::uint64_t seed = *cfg.seed;
  const auto opts = harness_options(cfg);
  const std::string model_name = cfg.model.name();

  ExperimentReport report;
  for (int m : cfg.subsets) {
    const auto model = cfg.model.build(m);
    for (std::size_t n : cfg.n_per_subset) {
      for (const auto& policy : cfg.policies) {
        const auto h = policy_bandwidths(policy, model, n);
        const auto e = estimate_mise(model, n, h, cfg.replications, seed, opts, 0);
        report.mise_vs_n.push_back({ model_name, m, n, policy.name(), h[0], e });
        report.replications_total += cfg.replications;
        report.degenerate_total += e.degenerate;
      }
      if (!cfg.ratio)
        continue;
      const double h_opt = h_opt_model(model, static_cast<double>(n));
      const auto hs = cfg.sweep.values(h_opt);
      RatioRow row{ model_name, m, n, h_opt, 0.0, 0.0, 0.0, {} };
      std::vector<double> argmins;
      for (int r = 0; r < cfg.outer_repeats; ++r) {
        const auto curve = sweep_bandwidth(model, n, hs, cfg.replications, seed,
                                           opts, static_cast<std::uint64_t>(r) + 1);
        argmins.push_back(curve.argmin_h);
        row.per_repeat_ratio.push_back(h_opt / curve.argmin_h);
        report.replications_total += cfg.replications;
        report.degenerate_total += curve.degenerate;
      }
      row.h_argmin = median(argmins);
      row.ratio = median(row.per_repeat_ratio);
      const double k = static_cast<double>(row.per_repeat_ratio.size());
      if (k > 1) {
        double mean = 0.0, ss = 0.0;
        for (double v : row.per_repeat_ratio)
          mean += v / k;
        for (double v : row.per_repeat_ratio)
          ss += (v - mean) * (v - mean);
        // large-sample standard error of a median: sqrt(pi/2) sd / sqrt(k)
        row.ratio_stderr = std::sqrt(std::acos(-1.0) / 2.0) *
                           std::sqrt(ss / (k - 1)) / std::sqrt(k);
      }
      report.ratios.push_back(std::move(row));
    }
  }
  return report;
}

std::vector<SubsetSample> load_subsets(const std::string& dir)
{
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    throw IoError("subset directory " + dir + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file())
      files.push_back(entry.path());
  }
  if (ec)
    throw IoError("cannot list " + dir + ": " + ec.message());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw IoError("no subset files in " + dir);

  std::vector<SubsetSample> out;
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in)
      throw IoError("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::replace(text.begin(), text.end(), ',', ' ');
    std::vector<double> values;
    const char* p = text.data();
    const char* end = p + text.size();
    while (p < end) {
      if (std::isspace(static_cast<unsigned char>(*p))) {
        ++p;
        continue;
      }
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc() || !std::isfinite(v))
        throw IoError("non-numeric value in " + path.string() + " at byte " +
                      std::to_string(p - text.data()));
      values.push_back(v);
      p = res.ptr;
    }
    if (values.empty())
      throw IoError("subset file " + path.string() + " holds no values");
    out.emplace_back(std::move(values), static_cast<int>(out.size()) + 1);
  }
  return out;
}

std::string format_double(double v)
{
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_mise_vs_n_csv(const ExperimentReport& report, std::ostream& out)
{
  out << "model,M,n,policy,h,mise,stderr,degenerate_count\n";
  for (const auto& r : report.mise_vs_n) {
    out << r.model << ',' << r.subsets << ',' << r.n << ',' << r.policy << ','
        << format_double(r.h) << ',' << format_double(r.estimate.mise) << ','
        << format_double(r.estimate.std_error) << ',' << r.estimate.degenerate
        << '\n';
  }
}

void write_ratio_csv(const ExperimentReport& report, std::ostream& out)
{
  out << "model,M,n,h_opt,h_argmin,ratio,ratio_stderr\n";
  for (const auto& r : report.ratios) {
    out << r.model << ',' << r.subsets << ',' << r.n << ','
        << format_double(r.h_opt) << ',' << format_double(r.h_argmin) << ','
        << format_double(r.ratio) << ',' << format_double(r.ratio_stderr) << '\n';
  }
}

void write_sweep_csv(const MiseCurve& curve, std::ostream& out)
{
  out << "h,mise,stderr\n";
  for (const auto& r : curve.rows)
    out << format_double(r.h) << ',' << format_double(r.mise) << ','
        << format_double(r.std_error) << '\n';
}

void write_report(const ExperimentReport& report,
                  const ExperimentConfig& cfg,
                  const std::string& dir,
                  double wall_seconds)
{
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec)
    throw IoError("cannot create output directory " + dir + ": " + ec.message());

  struct Output
  {
    std::string name;
    std::function<void(std::ostream&)> body;
  };
  const std::vector<Output> outputs{
    { "mise_vs_n.csv", [&](std::ostream& o) { write_mise_vs_n_csv(report, o); } },
    { "ratio.csv", [&](std::ostream& o) { write_ratio_csv(report, o); } },
    { "manifest.json",
      [&](std::ostream& o) {
        nlohmann::json j;
        j["config"] = nlohmann::json::parse(config_to_json(cfg));
        j["seed"] = *cfg.seed;
        j["versions"] = { { "ppkde", library_version },
                          { "compiler", __VERSION__ },
                          { "cxx_standard", __cplusplus } };
        j["wall_seconds"] = wall_seconds;
        j["finished_utc"] = utc_timestamp();
        j["replications_total"] = report.replications_total;
        j["degenerate_total"] = report.degenerate_total;
        o << j.dump(2) << '\n';
      } },
  };

  std::vector<fs::path> staged;
  try {
    for (const auto& out : outputs) {
      const fs::path tmp = root / (out.name + ".partial");
      staged.push_back(tmp);
      write_file(tmp, out.body);
    }
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      fs::rename(staged[i], root / outputs[i].name, ec);
      if (ec)
        throw IoError("cannot move " + staged[i].string() + " into place: " +
                      ec.message());
    }
  } catch (...) {
    for (const auto& p : staged)
      fs::remove(p, ec);
    throw;
  }
}

void parallel_for(std::size_t count,
                  int workers,
                  const std::function<void(std::size_t)>& fn)
{
  const std::size_t threads =
    std::min<std::size_t>(count, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{ 0 };
  std::atomic<bool> failed{ false };
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count || failed.load())
          return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error)
            error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& th : pool)
    th.join();
  if (error)
    std::rethrow_exception(error);
}

} // namespace ppkde
