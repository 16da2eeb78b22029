#include "ppkde/config.hpp"

#include "ppkde/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ppkde {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj,
                    const std::set<std::string>& known,
                    const std::string& where)
{
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T get(const json& obj, const char* key, const std::string& where)
{
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
std::vector<T> scalar_or_list(const json& v, const std::string& where)
{
  try {
    if (v.is_array())
      return v.get<std::vector<T>>();
    return { v.get<T>() };
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

ModelSpec parse_model(const json& j)
{
  if (!j.is_object())
    throw ConfigError("model must be an object");
  const auto family = get<std::string>(j, "family", "model");
  ModelSpec m;
  if (family == "normal") {
    reject_unknown(j, { "family", "mu", "sigma" }, "model");
    m.family = ModelFamily::normal;
    m.first = j.contains("mu") ? get<double>(j, "mu", "model") : 0.0;
    m.second = j.contains("sigma") ? get<double>(j, "sigma", "model") : 1.0;
  } else if (family == "gamma") {
    reject_unknown(j, { "family", "alpha", "theta" }, "model");
    m.family = ModelFamily::gamma;
    m.first = get<double>(j, "alpha", "model");
    m.second = get<double>(j, "theta", "model");
  } else {
    throw ConfigError("model.family must be 'normal' or 'gamma', got '" +
                      family + "'");
  }
  return m;
}

json model_to_json(const ModelSpec& m)
{
  if (m.family == ModelFamily::normal)
    return { { "family", "normal" }, { "mu", m.first }, { "sigma", m.second } };
  return { { "family", "gamma" }, { "alpha", m.first }, { "theta", m.second } };
}

} // namespace

HPolicy HPolicy::parse(const std::string& text)
{
  if (text == "h_opt")
    return { Kind::h_opt };
  if (text == "h_opt_baseline")
    return { Kind::h_opt_baseline };
  const std::string prefix = "fixed:";
  if (text.rfind(prefix, 0) == 0) {
    std::size_t used = 0;
    double h = 0.0;
    try {
      h = std::stod(text.substr(prefix.size()), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size() - prefix.size() || !(h > 0.0))
      throw ConfigError("bad fixed bandwidth in policy '" + text + "'");
    return { Kind::fixed, h };
  }
  throw ConfigError("policy must be h_opt, h_opt_baseline or fixed:<h>, got '" +
                    text + "'");
}

std::string HPolicy::name() const
{
  switch (kind) {
    case Kind::h_opt:
      return "h_opt";
    case Kind::h_opt_baseline:
      return "h_opt_baseline";
    case Kind::fixed:
      break;
  }
  std::ostringstream os;
  os.precision(17);
  os << "fixed:" << h;
  return os.str();
}

std::vector<double> SweepRange::values(double h_opt) const
{
  const double scale = relative ? h_opt : 1.0;
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    out[static_cast<std::size_t>(i)] = scale * (lo + t * (hi - lo));
  }
  return out;
}

AnalyticModel ModelSpec::build(int subsets) const
{
  if (family == ModelFamily::normal)
    return AnalyticModel::normal(first, second, subsets);
  return AnalyticModel::gamma(first, second, subsets);
}

std::string ModelSpec::name() const
{
  return family == ModelFamily::normal ? "normal" : "gamma";
}

void ExperimentConfig::validate() const
{
  if (model.family == ModelFamily::normal) {
    if (!(model.second > 0.0))
      throw ConfigError("model.sigma must be > 0");
  } else if (!(model.first > 1.0) || !(model.second > 0.0)) {
    throw ConfigError("gamma model needs alpha > 1 and theta > 0");
  }
  if (subsets.empty() || n_per_subset.empty())
    throw ConfigError("M and n_per_subset must be non-empty");
  for (int m : subsets) {
    if (m < 1)
      throw ConfigError("every M must be >= 1");
  }
  for (auto n : n_per_subset) {
    if (n < 1)
      throw ConfigError("every n_per_subset must be >= 1");
  }
  if (replications < 2)
    throw ConfigError("replications must be >= 2");
  if (outer_repeats < 1)
    throw ConfigError("outer_repeats must be >= 1");
  if (!(sweep.lo > 0.0) || !(sweep.lo < sweep.hi))
    throw ConfigError("sweep needs 0 < lo < hi");
  if (sweep.count < 5)
    throw ConfigError("sweep.count must be >= 5");
  if (grid.points < 3)
    throw ConfigError("grid.points must be >= 3");
  if (!(grid.pad >= 0.0))
    throw ConfigError("grid.pad must be >= 0");
  if (grid.lo.has_value() != grid.hi.has_value())
    throw ConfigError("grid.lo and grid.hi must be given together");
  if (grid.lo && !(*grid.lo < *grid.hi))
    throw ConfigError("grid.lo must be < grid.hi");
  if (workers < 1)
    throw ConfigError("workers must be >= 1");
}

ExperimentConfig parse_config(const std::string& json_text)
{
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object())
    throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 { "model", "M", "n_per_subset", "policies", "sweep", "ratio",
                   "replications", "outer_repeats", "seed", "grid", "kernel",
                   "workers", "output_dir" },
                 "config");

  ExperimentConfig cfg;
  if (j.contains("model"))
    cfg.model = parse_model(j["model"]);
  if (j.contains("M"))
    cfg.subsets = scalar_or_list<int>(j["M"], "M");
  if (j.contains("n_per_subset"))
    cfg.n_per_subset = scalar_or_list<std::size_t>(j["n_per_subset"], "n_per_subset");
  if (j.contains("policies")) {
    cfg.policies.clear();
    for (const auto& p : scalar_or_list<std::string>(j["policies"], "policies"))
      cfg.policies.push_back(HPolicy::parse(p));
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    if (!s.is_object())
      throw ConfigError("sweep must be an object");
    reject_unknown(s, { "lo", "hi", "count", "relative" }, "sweep");
    if (s.contains("lo"))
      cfg.sweep.lo = get<double>(s, "lo", "sweep");
    if (s.contains("hi"))
      cfg.sweep.hi = get<double>(s, "hi", "sweep");
    if (s.contains("count"))
      cfg.sweep.count = get<int>(s, "count", "sweep");
    if (s.contains("relative"))
      cfg.sweep.relative = get<bool>(s, "relative", "sweep");
  }
  if (j.contains("ratio"))
    cfg.ratio = get<bool>(j, "ratio", "config");
  if (j.contains("replications"))
    cfg.replications = get<int>(j, "replications", "config");
  if (j.contains("outer_repeats"))
    cfg.outer_repeats = get<int>(j, "outer_repeats", "config");
  if (j.contains("seed") && !j["seed"].is_null())
    cfg.seed = get<std::uint64_t>(j, "seed", "config");
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    if (!g.is_object())
      throw ConfigError("grid must be an object");
    reject_unknown(g, { "points", "pad", "lo", "hi" }, "grid");
    if (g.contains("points"))
      cfg.grid.points = get<std::size_t>(g, "points", "grid");
    if (g.contains("pad"))
      cfg.grid.pad = get<double>(g, "pad", "grid");
    if (g.contains("lo"))
      cfg.grid.lo = get<double>(g, "lo", "grid");
    if (g.contains("hi"))
      cfg.grid.hi = get<double>(g, "hi", "grid");
  }
  if (j.contains("kernel")) {
    try {
      cfg.kernel = Kernel::from_name(get<std::string>(j, "kernel", "config"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("workers"))
    cfg.workers = get<int>(j, "workers", "config");
  if (j.contains("output_dir"))
    cfg.output_dir = get<std::string>(j, "output_dir", "config");
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& cfg, int indent)
{
  json j;
  j["model"] = model_to_json(cfg.model);
  j["M"] = cfg.subsets;
  j["n_per_subset"] = cfg.n_per_subset;
  json policies = json::array();
  for (const auto& p : cfg.policies)
    policies.push_back(p.name());
  j["policies"] = policies;
  j["sweep"] = { { "lo", cfg.sweep.lo },
                 { "hi", cfg.sweep.hi },
                 { "count", cfg.sweep.count },
                 { "relative", cfg.sweep.relative } };
  j["ratio"] = cfg.ratio;
  j["replications"] = cfg.replications;
  j["outer_repeats"] = cfg.outer_repeats;
  j["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
  json grid = { { "points", cfg.grid.points }, { "pad", cfg.grid.pad } };
  if (cfg.grid.lo) {
    grid["lo"] = *cfg.grid.lo;
    grid["hi"] = *cfg.grid.hi;
  }
  j["grid"] = grid;
  j["kernel"] = std::string(cfg.kernel.name());
  j["workers"] = cfg.workers;
  j["output_dir"] = cfg.output_dir;
  return j.dump(indent);
}

} // namespace ppkde
