#include "run_config.hpp"

#include "pathkl/girsanov.hpp"
#include "pathkl/rng.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace pathkl::cli {

namespace {

const char* const kSections[] = {"girsanov", "chain", "dv_marginal", "nform_sweep", "sanov"};
const char* const kEstimators[] = {"girsanov", "chain", "dv-marginal", "nform-sweep", "sanov"};

std::string section_for(const std::string& estimator) {
  for (std::size_t i = 0; i < std::size(kEstimators); ++i) {
    if (estimator == kEstimators[i]) return kSections[i];
  }
  throw ConfigError("unknown estimator '" + estimator + "' (expected girsanov, chain, dv-marginal, nform-sweep or sanov)");
}

// Typed access to one JSON object. Every key read is recorded; finish()
// rejects whatever is left over.
class Reader {
 public:
  Reader(const Json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(label() + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key);
  }

  const Json& at(const std::string& key) {
    seen_.insert(key);
    if (!node_.contains(key)) throw ConfigError("missing key '" + where(key) + "'");
    return node_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const Json& v = node_.at(key);
    if (!v.is_number()) throw ConfigError("'" + where(key) + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError("'" + where(key) + "' must be finite");
    return x;
  }

  std::uint64_t integer(const std::string& key, std::uint64_t fallback, std::uint64_t min = 0) {
    if (!has(key)) return fallback;
    const Json& v = node_.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError("'" + where(key) + "' must be a nonnegative integer");
    }
    const auto x = v.get<std::uint64_t>();
    if (x < min) throw ConfigError("'" + where(key) + "' must be at least " + std::to_string(min));
    return x;
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const Json& v = node_.at(key);
    if (!v.is_string()) throw ConfigError("'" + where(key) + "' must be a string");
    return v.get<std::string>();
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = node_.at(key);
    if (!v.is_boolean()) throw ConfigError("'" + where(key) + "' must be true or false");
    return v.get<bool>();
  }

  // A number or a flat array of numbers.
  std::vector<double> numbers(const std::string& key) { return read_numbers(at(key), where(key)); }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + where(item.key()) + "'");
    }
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  static std::vector<double> read_numbers(const Json& v, const std::string& where) {
    std::vector<double> out;
    if (v.is_number()) {
      out.push_back(v.get<double>());
    } else if (v.is_array() && !v.empty()) {
      for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError("'" + where + "' must contain only numbers");
        out.push_back(x.get<double>());
      }
    } else {
      throw ConfigError("'" + where + "' must be a number or a non-empty array of numbers");
    }
    for (double x : out) {
      if (!std::isfinite(x)) throw ConfigError("'" + where + "' must be finite");
    }
    return out;
  }

 private:
  std::string label() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const Json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

Json vec_json(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json mat_json(const Mat& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

std::vector<double> broadcast(const std::vector<double>& v, int d, const std::string& where) {
  if (v.size() == static_cast<std::size_t>(d)) return v;
  if (v.size() == 1) return std::vector<double>(static_cast<std::size_t>(d), v[0]);
  throw ConfigError("'" + where + "' must have length 1 or " + std::to_string(d));
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

Mat square_from(const std::vector<double>& v, int d, const std::string& where) {
  if (v.size() == 1) return v[0] * Mat::Identity(d, d);
  if (v.size() == static_cast<std::size_t>(d)) return to_vec(v).asDiagonal();
  if (v.size() == static_cast<std::size_t>(d * d)) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), d, d);
  }
  throw ConfigError("'" + where + "' must have length 1, d or d*d");
}

ModelConfig read_model(const Json& node, const std::string& path) {
  Reader r(node, path);
  ModelConfig model;
  model.id = r.text("id", "");
  if (model.id.empty()) throw ConfigError("missing key '" + r.where("id") + "'");
  if (r.has("params")) {
    Reader p(r.at("params"), r.where("params"));
    for (const auto& item : r.at("params").items()) model.params[item.key()] = p.numbers(item.key());
    p.finish();
  }
  r.finish();
  return model;
}

// Catalog parameters with defaults filled in from the built model.
Json resolved_model(const ModelConfig& model, const DiffusionSpec& spec) {
  const int d = spec.dim;
  auto given = [&](const std::string& key) -> const std::vector<double>* {
    auto it = model.params.find(key);
    return it == model.params.end() ? nullptr : &it->second;
  };
  Json params = Json::object();
  params["dim"] = d;
  params["a"] = mat_json(diffusion_eval(spec, 0.0, Vec::Zero(d)).a);
  if (model.id == "drift_bm") {
    params["theta"] = vec_json(spec.drift_offset);
  } else if (model.id == "ou") {
    params["gamma"] = given("gamma") ? (*given("gamma"))[0] : 1.0;
    params["mean"] = vec_json(given("mean") ? to_vec(broadcast(*given("mean"), d, "mean")) : Vec::Zero(d));
  } else if (model.id == "linear") {
    params["A"] = mat_json(spec.drift_matrix);
    params["b"] = vec_json(spec.drift_offset);
  }
  Json out = Json::object();
  out["id"] = model.id;
  out["params"] = params;
  return out;
}

DiffusionSpec build_model(const ModelConfig& model, const std::string& where) {
  try {
    return make_model(model.id, model.params);
  } catch (const PositiveDefinitenessError& e) {
    throw ConfigError("'" + where + "': " + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError("'" + where + "': " + e.what());
  }
}

InitialLaw read_initial(const Json* node, const std::string& path, int d, Json& echo) {
  if (!node) {
    echo = Json{{"kind", "point"}, {"x", vec_json(Vec::Zero(d))}};
    return InitialLaw::point_mass(Vec::Zero(d));
  }
  Reader r(*node, path);
  const std::string kind = r.text("kind", "point");
  InitialLaw law;
  if (kind == "point") {
    const Vec x = r.has("x") ? to_vec(broadcast(r.numbers("x"), d, r.where("x"))) : Vec::Zero(d);
    law = InitialLaw::point_mass(x);
    echo = Json{{"kind", "point"}, {"x", vec_json(x)}};
  } else if (kind == "gaussian") {
    const Vec mean = r.has("mean") ? to_vec(broadcast(r.numbers("mean"), d, r.where("mean"))) : Vec::Zero(d);
    const Mat cov = square_from(r.numbers("covariance"), d, r.where("covariance"));
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success || (cov - cov.transpose()).norm() > kTolLinalg * (1.0 + cov.norm())) {
      throw ConfigError("'" + r.where("covariance") + "' must be symmetric positive definite");
    }
    law = InitialLaw::gaussian(mean, cov);
    echo = Json{{"kind", "gaussian"}, {"mean", vec_json(mean)}, {"covariance", mat_json(cov)}};
  } else if (kind == "empirical") {
    const Json& samples = r.at("samples");
    if (!samples.is_array() || samples.empty()) throw ConfigError("'" + r.where("samples") + "' must be a non-empty array");
    std::vector<Vec> points;
    Json list = Json::array();
    for (const auto& s : samples) {
      const auto v = Reader::read_numbers(s, r.where("samples"));
      if (v.size() != static_cast<std::size_t>(d)) {
        throw ConfigError("'" + r.where("samples") + "' entries must have length " + std::to_string(d));
      }
      points.push_back(to_vec(v));
      list.push_back(vec_json(points.back()));
    }
    law = InitialLaw::empirical(std::move(points));
    echo = Json{{"kind", "empirical"}, {"samples", list}};
  } else {
    throw ConfigError("'" + r.where("kind") + "' must be point, gaussian or empirical");
  }
  r.finish();
  return law;
}

Json read_basis(Reader& parent, int d, BasisConfig& basis) {
  if (!parent.has("basis")) {
    basis.lo = broadcast(basis.lo, d, "basis.lo");
    basis.hi = broadcast(basis.hi, d, "basis.hi");
  } else {
    Reader r(parent.at("basis"), parent.where("basis"));
    basis.family = r.text("family", basis.family);
    if (basis.family != "gauss" && basis.family != "poly" && basis.family != "mixed") {
      throw ConfigError("'" + r.where("family") + "' must be gauss, poly or mixed");
    }
    basis.count = static_cast<int>(r.integer("count", static_cast<std::uint64_t>(basis.count), 1));
    basis.degree = static_cast<int>(r.integer("degree", static_cast<std::uint64_t>(basis.degree), 0));
    basis.lo = broadcast(r.has("lo") ? r.numbers("lo") : basis.lo, d, r.where("lo"));
    basis.hi = broadcast(r.has("hi") ? r.numbers("hi") : basis.hi, d, r.where("hi"));
    basis.margin = r.number("margin", basis.margin);
    basis.scale = r.number("scale", basis.scale);
    r.finish();
  }
  for (int j = 0; j < d; ++j) {
    if (!(basis.hi[j] - basis.lo[j] > 2.0 * basis.margin)) {
      throw ConfigError("basis box must be wider than twice the margin on every axis");
    }
  }
  if (!(basis.margin > 0.0)) throw ConfigError("basis margin must be positive");
  if (basis.scale < 0.0) throw ConfigError("basis scale must be nonnegative");
  if (basis.family == "poly" && basis.degree < 1) throw ConfigError("poly basis needs degree >= 1");
  return Json{{"family", basis.family}, {"count", basis.count}, {"degree", basis.degree},
              {"lo", basis.lo},         {"hi", basis.hi},       {"margin", basis.margin},
              {"scale", basis.scale}};
}

bool power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

Json estimate_json(const EntropyEstimate& e) {
  Json out = Json::object();
  out["method"] = e.method;
  out["value"] = number(e.value);
  out["std_error"] = number(e.std_error);
  out["infinite"] = e.infinite;
  out["notes"] = e.notes;
  return out;
}

Json diagnostics_json(const std::map<std::string, double>& diagnostics) {
  Json out = Json::object();
  for (const auto& [key, value] : diagnostics) out[key] = number(value);
  return out;
}

Json table_json(const Table& table) {
  Json rows = Json::array();
  for (const auto& row : table.rows) {
    Json r = Json::array();
    for (double x : row) r.push_back(number(x));
    rows.push_back(r);
  }
  return Json{{"columns", table.columns}, {"rows", rows}};
}

Table summary_table(const EntropyEstimate& e) {
  return {{"value", "std_error", "infinite"}, {{e.value, e.std_error, e.infinite ? 1.0 : 0.0}}};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct Computed {
  EntropyEstimate estimate;
  Table table;
};

Computed compute(const RunConfig& c) {
  const DiffusionSpec spec_P = make_model(c.model_P.id, c.model_P.params);
  std::optional<DiffusionSpec> spec_mu;
  if (c.model_mu) spec_mu = make_model(c.model_mu->id, c.model_mu->params);
  auto grid = std::make_shared<const TimeGrid>(TimeGrid::uniform(c.horizon, c.steps));

  if (c.estimator == "girsanov") {
    const auto ensemble = sample_paths(*spec_mu, c.init_mu, *grid, c.paths, c.seed);
    const auto e = girsanov_entropy(*spec_mu, spec_P, c.init_mu, c.init_P, ensemble, c.tol_match);
    return {e, summary_table(e)};
  }
  if (c.estimator == "chain") {
    SweepConfig sweep_config = c.chain;
    sweep_config.step.seed = derive_seed(c.seed, 2);
    const auto sweep = refinement_sweep(*spec_mu, spec_P, c.init_mu, c.init_P, grid, c.paths, c.seed, sweep_config);
    EntropyEstimate e = sweep.supremum;
    e.diagnostics["levels"] = static_cast<double>(sweep.levels.size());
    e.diagnostics["extrapolation_gap"] = sweep.extrapolation_gap;
    e.diagnostics["monotonicity_violations"] = static_cast<double>(sweep.monotonicity_violations.size());
    e.diagnostics["diverged"] = sweep.diverged ? 1.0 : 0.0;
    e.diagnostics["diffusion_mismatch"] = sweep.diffusion_mismatch ? 1.0 : 0.0;
    Table table{{"level", "intervals", "mesh", "value", "std_error", "slope_per_step"}, {}};
    for (std::size_t n = 0; n < sweep.levels.size(); ++n) {
      const auto& level = sweep.levels[n];
      const double slope = n == 0 || n >= sweep.slope_per_step.size() ? std::nan("") : sweep.slope_per_step[n];
      const double mesh = level.partition ? level.partition->mesh() : std::nan("");
      table.rows.push_back({static_cast<double>(n), static_cast<double>(level.per_step.size()), mesh,
                            level.total.value, level.total.std_error, slope});
    }
    return {e, table};
  }
  if (c.estimator == "dv-marginal") {
    const auto index = static_cast<std::size_t>(std::llround(c.dv_time / c.horizon * static_cast<double>(c.steps)));
    const TimeGrid sub = TimeGrid::uniform(c.dv_time, index);
    const auto ens_mu = sample_paths(*spec_mu, c.init_mu, sub, c.dv_samples, c.seed);
    const auto ens_P = sample_paths(spec_P, c.init_P, sub, c.dv_samples, derive_seed(c.seed, 1));
    const auto x_mu = ens_mu.slice(index);
    const auto x_P = ens_P.slice(index);
    auto e = dv_estimate(x_mu, x_P, build_basis(c.basis), c.dv);
    e.diagnostics["t"] = c.dv_time;
    e.diagnostics["samples"] = static_cast<double>(c.dv_samples);
    return {e, summary_table(e)};
  }
  if (c.estimator == "nform-sweep") {
    const auto ensemble = sample_paths(*spec_mu, c.init_mu, *grid, c.paths, c.seed);
    NFormSweep sweep;
    const auto e = nform_entropy(spec_P, c.init_mu, c.init_P, ensemble, build_basis(c.basis), c.nform, &sweep);
    Table table{{"t", "value", "raw_value", "noise_bias", "std_error", "rank"}, {}};
    for (const auto& s : sweep.slices) {
      table.rows.push_back({s.t, s.value, s.raw_value, s.noise_bias, s.std_error, static_cast<double>(s.rank)});
    }
    return {e, table};
  }
  // sanov
  RateExperiment experiment = c.sanov;
  experiment.horizon = c.horizon;
  experiment.steps = c.steps;
  experiment.init = c.init_P;
  experiment.seed = c.seed;
  const auto rows = empirical_rate(spec_P, experiment);
  const auto& last = rows.back();
  EntropyEstimate e = last.zero_count ? EntropyEstimate::infinity("sanov", "no trial hit the threshold at the largest N")
                                      : EntropyEstimate::finite(last.rate, last.rate_std_error, "sanov");
  e.diagnostics["n"] = static_cast<double>(last.n);
  e.diagnostics["oracle"] = last.oracle;
  Table table{{"n", "count", "p_hat", "p_std_error", "rate", "rate_std_error", "oracle"}, {}};
  for (const auto& row : rows) {
    table.rows.push_back({static_cast<double>(row.n), static_cast<double>(row.count), row.p_hat, row.p_std_error,
                          row.rate, row.rate_std_error, row.oracle});
  }
  return {e, table};
}

Json partial_result(const std::string& method, double best, const std::string& what) {
  Json out = Json::object();
  out["method"] = method;
  out["value"] = number(best);
  out["std_error"] = nullptr;
  out["infinite"] = false;
  out["converged"] = false;
  out["notes"] = Json::array({what});
  return out;
}

void append_number(std::string& out, double x) {
  if (std::isnan(x)) {
    out += "nan";
  } else if (std::isinf(x)) {
    out += x > 0 ? "inf" : "-inf";
  } else {
    char buffer[32];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), x);
    out.append(buffer, result.ptr);
  }
}

}  // namespace

Json number(double value) {
  if (!std::isfinite(value)) return nullptr;
  return value;
}

RunConfig parse_config(const Json& doc, std::optional<std::uint64_t> seed_override) {
  Reader r(doc, "");
  RunConfig c;
  c.estimator = r.text("estimator", "");
  if (c.estimator.empty()) throw ConfigError("missing key 'estimator'");
  const std::string active = section_for(c.estimator);
  for (const char* name : kSections) {
    if (name != active && r.has(name)) {
      throw ConfigError("section '" + std::string(name) + "' does not apply to estimator '" + c.estimator + "'");
    }
  }
  const bool sanov = c.estimator == "sanov";

  c.model_P = read_model(r.at("model_P"), "model_P");
  const DiffusionSpec spec_P = build_model(c.model_P, "model_P");
  const int d = spec_P.dim;
  Json mu_echo;
  if (r.has("model_mu")) {
    c.model_mu = read_model(r.at("model_mu"), "model_mu");
    const DiffusionSpec spec_mu = build_model(*c.model_mu, "model_mu");
    if (spec_mu.dim != d) throw ConfigError("model_mu and model_P have different dimensions");
    mu_echo = resolved_model(*c.model_mu, spec_mu);
  } else if (!sanov) {
    throw ConfigError("missing key 'model_mu'");
  }

  Json init_mu_echo;
  Json init_P_echo;
  c.init_mu = read_initial(r.has("init_mu") ? &r.at("init_mu") : nullptr, "init_mu", d, init_mu_echo);
  if (r.has("init_P")) {
    c.init_P = read_initial(&r.at("init_P"), "init_P", d, init_P_echo);
  } else {
    c.init_P = c.init_mu;
    init_P_echo = init_mu_echo;
  }

  if (r.has("grid")) {
    Reader g(r.at("grid"), "grid");
    c.horizon = g.number("T", c.horizon);
    c.steps = g.integer("steps", c.steps, 1);
    g.finish();
  }
  if (!(c.horizon > 0.0)) throw ConfigError("'grid.T' must be positive");

  if (sanov) {
    if (r.has("paths")) throw ConfigError("'paths' does not apply to estimator 'sanov'; use 'sanov.trials'");
  } else {
    c.paths = r.integer("paths", c.paths, 2);
  }
  c.seed = r.integer("seed", c.seed);
  if (seed_override) c.seed = *seed_override;

  Json section = Json::object();
  Json empty = Json::object();
  Reader s(r.has(active) ? r.at(active) : empty, active);
  if (c.estimator == "girsanov") {
    c.tol_match = s.number("tol_match", c.tol_match);
    if (!(c.tol_match >= 0.0)) throw ConfigError("'girsanov.tol_match' must be nonnegative");
    section["tol_match"] = c.tol_match;
  } else if (c.estimator == "chain") {
    auto& ch = c.chain;
    ch.levels = s.integer("levels", ch.levels, 1);
    try {
      ch.step.method = step_method_from_string(s.text("method", to_string(ch.step.method)));
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("'chain.method': ") + e.what());
    }
    ch.step.dv_paths = s.integer("dv_paths", ch.step.dv_paths, 1);
    ch.step.dv_cloud = s.integer("dv_cloud", ch.step.dv_cloud, 2);
    ch.step.dv_bumps = static_cast<int>(s.integer("dv_bumps", static_cast<std::uint64_t>(ch.step.dv_bumps), 1));
    ch.divergence_threshold = s.number("divergence_threshold", ch.divergence_threshold);
    ch.tol_match = s.number("tol_match", ch.tol_match);
    if (ch.levels > 1) {
      if (!power_of_two(c.steps)) {
        throw ConfigError("chain refinement needs a dyadic grid: steps = " + std::to_string(c.steps) +
                          " is not a power of two");
      }
      if (ch.levels > 63 || (std::size_t{1} << (ch.levels - 1)) > c.steps) {
        throw ConfigError("chain levels exceed the grid: 2^(levels-1) must not exceed steps");
      }
    }
    section = Json{{"levels", ch.levels},
                   {"method", to_string(ch.step.method)},
                   {"dv_paths", ch.step.dv_paths},
                   {"dv_cloud", ch.step.dv_cloud},
                   {"dv_bumps", ch.step.dv_bumps},
                   {"divergence_threshold", ch.divergence_threshold},
                   {"tol_match", ch.tol_match}};
  } else if (c.estimator == "dv-marginal") {
    c.dv_time = s.number("t", c.horizon);
    c.dv_samples = s.integer("samples", c.paths, 2);
    c.dv.gtol = s.number("gtol", c.dv.gtol);
    c.dv.max_iter = static_cast<int>(s.integer("max_iter", static_cast<std::uint64_t>(c.dv.max_iter), 1));
    if (!(c.dv_time > 0.0 && c.dv_time <= c.horizon)) throw ConfigError("'dv_marginal.t' must lie in (0, T]");
    const double position = c.dv_time / c.horizon * static_cast<double>(c.steps);
    if (std::abs(position - std::round(position)) > 1e-9) {
      throw ConfigError("'dv_marginal.t' must be a grid time");
    }
    section["t"] = c.dv_time;
    section["samples"] = c.dv_samples;
    section["gtol"] = c.dv.gtol;
    section["max_iter"] = c.dv.max_iter;
    section["basis"] = read_basis(s, d, c.basis);
  } else if (c.estimator == "nform-sweep") {
    c.nform.stride = s.integer("stride", c.nform.stride, 1);
    c.nform.window = s.integer("window", c.nform.window, 1);
    c.nform.svd_tol = s.number("svd_tol", c.nform.svd_tol);
    c.nform.debias = s.flag("debias", c.nform.debias);
    if (!(c.nform.svd_tol > 0.0 && c.nform.svd_tol < 1.0)) throw ConfigError("'nform_sweep.svd_tol' must lie in (0, 1)");
    if (2 * c.nform.window > c.steps) throw ConfigError("'nform_sweep.window' is too wide for the grid");
    section["stride"] = c.nform.stride;
    section["window"] = c.nform.window;
    section["svd_tol"] = c.nform.svd_tol;
    section["debias"] = c.nform.debias;
    section["basis"] = read_basis(s, d, c.basis);
  } else {
    auto& e = c.sanov;
    try {
      e.observable = observable_from_string(s.text("observable", to_string(e.observable)));
    } catch (const ArgumentError& err) {
      throw ConfigError(std::string("'sanov.observable': ") + err.what());
    }
    e.component = s.integer("component", e.component);
    e.threshold = s.number("threshold", e.threshold);
    e.trials = s.integer("trials", e.trials, 100);
    e.tilt = s.number("tilt", e.tilt);
    if (s.has("sample_sizes")) {
      const Json& list = s.at("sample_sizes");
      if (!list.is_array() || list.empty()) throw ConfigError("'sanov.sample_sizes' must be a non-empty array");
      e.sample_sizes.clear();
      for (const auto& n : list) {
        if (!n.is_number_integer() || n.get<std::int64_t>() <= 0) {
          throw ConfigError("'sanov.sample_sizes' must hold positive integers");
        }
        e.sample_sizes.push_back(n.get<std::size_t>());
      }
    }
    for (std::size_t j = 1; j < e.sample_sizes.size(); ++j) {
      if (e.sample_sizes[j] <= e.sample_sizes[j - 1]) throw ConfigError("'sanov.sample_sizes' must be increasing");
    }
    if (e.component >= static_cast<std::size_t>(d)) throw ConfigError("'sanov.component' is out of range");
    section = Json{{"observable", to_string(e.observable)}, {"component", e.component},
                   {"threshold", e.threshold},             {"sample_sizes", e.sample_sizes},
                   {"trials", e.trials},                   {"tilt", e.tilt}};
  }
  s.finish();

  if (r.has("output")) {
    Reader o(r.at("output"), "output");
    c.out_path = o.text("path", c.out_path);
    c.format = o.text("format", c.format);
    o.finish();
  }
  if (c.format != "json" && c.format != "csv") throw ConfigError("'output.format' must be json or csv");
  r.finish();

  Json& out = c.resolved;
  out["estimator"] = c.estimator;
  if (c.model_mu) out["model_mu"] = mu_echo;
  out["model_P"] = resolved_model(c.model_P, spec_P);
  out["init_mu"] = init_mu_echo;
  out["init_P"] = init_P_echo;
  out["grid"] = Json{{"T", c.horizon}, {"steps", c.steps}};
  if (!sanov) out["paths"] = c.paths;
  out["seed"] = c.seed;
  out[active] = section;
  out["output"] = Json{{"path", c.out_path}, {"format", c.format}};
  return c;
}

RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc, seed_override);
}

void override_output(RunConfig& config, const std::optional<std::string>& path,
                     const std::optional<std::string>& format) {
  if (path) config.out_path = *path;
  if (format) {
    if (*format != "json" && *format != "csv") throw ConfigError("--format must be json or csv");
    config.format = *format;
  }
  config.resolved["output"] = Json{{"path", config.out_path}, {"format", config.format}};
}

Outcome run(const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  Outcome outcome;
  Json& report = outcome.report;
  report["version"] = kVersion;
  report["command"] = "run";
  report["config"] = config.resolved;
  try {
    Computed computed = compute(config);
    report["status"] = "ok";
    report["result"] = estimate_json(computed.estimate);
    report["diagnostics"] = diagnostics_json(computed.estimate.diagnostics);
    report["table"] = table_json(computed.table);
    outcome.table = std::move(computed.table);
  } catch (const ConvergenceError& e) {
    outcome.exit_code = kExitConvergence;
    report["status"] = "convergence_failure";
    report["result"] = partial_result(config.estimator, e.best_value(), e.what());
  } catch (const InsufficientSamplingError& e) {
    outcome.exit_code = kExitConvergence;
    report["status"] = "convergence_failure";
    report["result"] = partial_result(config.estimator, std::nan(""), e.what());
  }
  report["wall_clock_seconds"] = seconds_since(start);
  return outcome;
}

Outcome compare(const std::vector<RunConfig>& configs) {
  if (configs.size() < 2) throw ConfigError("compare needs at least two configs");
  const auto& first = configs.front().resolved;
  for (std::size_t i = 1; i < configs.size(); ++i) {
    const auto& other = configs[i].resolved;
    for (const char* key : {"model_mu", "model_P", "init_mu", "init_P"}) {
      if (first.contains(key) != other.contains(key) || (first.contains(key) && first[key] != other[key])) {
        throw ConfigError("config " + std::to_string(i) + " differs from config 0 in '" + key + "'");
      }
    }
    if (first["grid"]["T"] != other["grid"]["T"]) {
      throw ConfigError("config " + std::to_string(i) + " differs from config 0 in 'grid.T'");
    }
  }

  const auto start = std::chrono::steady_clock::now();
  Outcome outcome;
  Json& report = outcome.report;
  report["version"] = kVersion;
  report["command"] = "compare";
  Json echoed = Json::array();
  for (const auto& c : configs) echoed.push_back(c.resolved);
  report["configs"] = echoed;

  struct Row {
    double value;
    double std_error;
    bool infinite;
    bool converged;
  };
  std::vector<Row> rows;
  Json results = Json::array();
  outcome.table.columns = {"config", "value", "std_error", "infinite"};
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const Outcome one = run(configs[i]);
    if (one.exit_code != kExitOk) outcome.exit_code = one.exit_code;
    const Json& result = one.report["result"];
    Row row{result["value"].is_null() ? std::nan("") : result["value"].get<double>(),
            result["std_error"].is_null() ? std::nan("") : result["std_error"].get<double>(),
            result["infinite"].get<bool>(), one.exit_code == kExitOk};
    if (row.infinite) row.value = std::numeric_limits<double>::infinity();
    rows.push_back(row);
    Json entry = Json::object();
    entry["config"] = i;
    entry["estimator"] = configs[i].estimator;
    entry["status"] = one.report["status"];
    entry["result"] = result;
    results.push_back(entry);
    outcome.table.rows.push_back({static_cast<double>(i), row.value, row.std_error, row.infinite ? 1.0 : 0.0});
  }
  report["results"] = results;

  Json pairs = Json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      Json pair = Json::object();
      pair["i"] = i;
      pair["j"] = j;
      const bool flagged = rows[i].infinite || rows[j].infinite;
      double z = std::nan("");
      if (!flagged && rows[i].converged && rows[j].converged) {
        const double diff = rows[i].value - rows[j].value;
        const double se = std::hypot(rows[i].std_error, rows[j].std_error);
        z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff));
      }
      pair["z"] = number(z);
      pair["infinite_row"] = flagged;
      pairs.push_back(pair);
    }
  }
  report["pairs"] = pairs;
  report["wall_clock_seconds"] = seconds_since(start);
  return outcome;
}

Outcome list_models() {
  Outcome outcome;
  Json& report = outcome.report;
  report["version"] = kVersion;
  report["command"] = "list-models";
  Json models = Json::array();
  for (const auto& id : catalog_ids()) models.push_back(Json{{"id", id}, {"description", catalog_description(id)}});
  report["models"] = models;
  report["scenarios"] = scenario_ids();
  Json estimators = Json::array();
  for (const char* e : kEstimators) estimators.push_back(e);
  report["estimators"] = estimators;
  return outcome;
}

std::string render(const Outcome& outcome, const std::string& format) {
  if (format == "json") return outcome.report.dump(2) + "\n";
  std::string out;
  for (const auto& item : outcome.report.items()) {
    if (item.key() == "table" || item.key() == "wall_clock_seconds") continue;
    out += "# " + item.key() + ": " + item.value().dump() + "\n";
  }
  if (!outcome.table.columns.empty()) {
    for (std::size_t k = 0; k < outcome.table.columns.size(); ++k) {
      out += (k ? "," : "") + outcome.table.columns[k];
    }
    out += "\n";
    for (const auto& row : outcome.table.rows) {
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (k) out += ",";
        append_number(out, row[k]);
      }
      out += "\n";
    }
  }
  if (outcome.report.contains("wall_clock_seconds")) {
    out += "# wall_clock_seconds: " + outcome.report["wall_clock_seconds"].dump() + "\n";
  }
  return out;
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ArgumentError*>(&error) || dynamic_cast<const PositiveDefinitenessError*>(&error) ||
      dynamic_cast<const nlohmann::json::exception*>(&error)) {
    return kExitValidation;
  }
  if (dynamic_cast<const CapabilityError*>(&error)) return kExitCapability;
  if (dynamic_cast<const ConvergenceError*>(&error) || dynamic_cast<const InsufficientSamplingError*>(&error)) {
    return kExitConvergence;
  }
  return kExitFailure;
}

}  // namespace pathkl::cli
