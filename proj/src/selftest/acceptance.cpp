#include "pathkl/acceptance.hpp"

#include "pathkl/basis.hpp"
#include "pathkl/chain_entropy.hpp"
#include "pathkl/diffusion.hpp"
#include "pathkl/girsanov.hpp"
#include "pathkl/marginal_entropy.hpp"
#include "pathkl/parallel.hpp"
#include "pathkl/rng.hpp"
#include "pathkl/sanov.hpp"
#include "pathkl/variational.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <sstream>

namespace pathkl {

namespace {

// Closed-form reference values.
constexpr double kConstantDriftEntropy = 0.5;            // 1/2 theta^2 T, theta = 1, T = 1
constexpr double kOuEntropy = 0.14191691040457661;       // gamma = 1, T = 1
constexpr double kMismatchStepKl = 0.15342640972002736;  // 1/2 (2 - 1 - ln 2)
constexpr double kShiftKl = 0.5;                         // N(1,1) || N(0,1)
constexpr double kScaleKl = 0.80685281944005469;         // N(0,4) || N(0,1)
constexpr double kSanovRate = 0.5;                       // z^2 / (2T), z = 1, T = 1

// Tolerances.
constexpr double kGirsanovRel = 0.02;
constexpr double kGirsanovSeconds = 10.0;
constexpr double kChainRel = 0.05;
constexpr double kSlopeRel = 0.10;
constexpr double kDvRel = 0.10;
constexpr double kNformAbs = 1e-6;
constexpr double kConvexTol = 1e-9;
constexpr double kHRel = 0.05;
constexpr double kHIntegralRel = 0.10;
constexpr double kRefineTol = 1e-9;
constexpr double kSanovRel = 0.25;
constexpr double kSanovSeconds = 60.0;

const ParamRecord kNoParams{};

std::shared_ptr<const TimeGrid> uniform_grid(double T, std::size_t steps) {
  return std::make_shared<const TimeGrid>(TimeGrid::uniform(T, steps));
}

InitialLaw origin() { return InitialLaw::point_mass(Vec::Zero(1)); }

std::vector<Vec> normal_samples(double mean, double sd, std::size_t n, std::uint64_t seed) {
  Substream rng(seed, 0);
  std::vector<Vec> out(n, Vec(1));
  for (auto& x : out) x[0] = mean + sd * rng.normal();
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

double rel(double value, double reference) { return std::abs(value - reference) / std::abs(reference); }

struct Context {
  CriterionResult& r;
  std::ostringstream detail;
  bool pass = true;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [FAIL]");
  }
};

// 1: BM + drift against BM, Girsanov integral, single thread, timed.
void girsanov_constant_drift(Context& c, std::uint64_t seed) {
  const unsigned saved = num_threads();
  set_num_threads(1);
  const auto start = std::chrono::steady_clock::now();
  const auto mu = make_model("drift_bm", {{"theta", {1.0}}});
  const auto p = make_model("brownian", kNoParams);
  const auto ens = sample_paths(mu, origin(), TimeGrid::uniform(1.0, 1000), 10000, derive_seed(seed, 1));
  const auto est = girsanov_entropy(mu, p, origin(), origin(), ens);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  set_num_threads(saved);
  c.r.values["value"] = est.value;
  c.r.values["std_error"] = est.std_error;
  c.check(rel(est.value, kConstantDriftEntropy) <= kGirsanovRel,
          "value " + fmt(est.value) + " vs 0.5 (tol 2%)");
  c.check(secs < kGirsanovSeconds, "runtime " + fmt(secs) + " s < 10 s single-threaded");
}

// 2: OU(gamma = 1) against BM.
void girsanov_ou(Context& c, std::uint64_t seed) {
  const auto mu = make_model("ou", {{"gamma", {1.0}}});
  const auto p = make_model("brownian", kNoParams);
  const auto ens = sample_paths(mu, origin(), TimeGrid::uniform(1.0, 500), 40000, derive_seed(seed, 2));
  const auto est = girsanov_entropy(mu, p, origin(), origin(), ens);
  c.r.values["value"] = est.value;
  c.r.values["std_error"] = est.std_error;
  c.check(rel(est.value, kOuEntropy) <= kGirsanovRel,
          "value " + fmt(est.value) + " +- " + fmt(est.std_error) + " vs 0.141917 (tol 2%)");
}

// 3: dyadic refinement of the chain sum for BM + drift.
void chain_refinement(Context& c, std::uint64_t seed) {
  const auto mu = make_model("drift_bm", {{"theta", {1.0}}});
  const auto p = make_model("brownian", kNoParams);
  SweepConfig cfg;
  cfg.levels = 9;  // 1 .. 256 intervals on a 256-step grid
  const auto sweep = refinement_sweep(mu, p, origin(), origin(), uniform_grid(1.0, 256), 10000, derive_seed(seed, 3), cfg);
  const double finest = sweep.levels.back().total.value;
  for (std::size_t n = 0; n < sweep.levels.size(); ++n) {
    c.r.values["level_" + std::to_string(n)] = sweep.levels[n].total.value;
  }
  c.check(rel(finest, kConstantDriftEntropy) <= kChainRel, "finest (dt=1/256) " + fmt(finest) + " vs 0.5 (tol 5%)");
  c.check(sweep.monotonicity_violations.empty(),
          std::to_string(sweep.monotonicity_violations.size()) + " monotonicity violations beyond 3 SE");
}

// 4: diffusion mismatch c = 2a.
void infinite_detection(Context& c, std::uint64_t seed) {
  const auto mu = make_model("brownian", {{"a", {2.0}}});
  const auto p = make_model("brownian", kNoParams);
  const auto grid = uniform_grid(1.0, 64);
  const auto ens = sample_paths(mu, origin(), *grid, 2000, derive_seed(seed, 4));
  const auto match = diffusion_match_check(mu, p, ens);
  SweepConfig cfg;
  cfg.levels = 7;
  const auto sweep = refinement_sweep(mu, p, origin(), origin(), ens, cfg);
  const double slope = sweep.slope_per_step.back();
  const auto g = girsanov_entropy(mu, p, origin(), origin(), ens);
  c.r.values["distance"] = match.max_distance;
  c.r.values["slope"] = slope;
  c.check(!match.pass, "match check fails (distance " + fmt(match.max_distance) + ")");
  c.check(rel(slope, kMismatchStepKl) <= kSlopeRel, "slope per step " + fmt(slope) + " vs 0.153426 (tol 10%)");
  c.check(g.infinite, std::string("girsanov returns ") + (g.infinite ? "+inf" : fmt(g.value)));
  c.check(sweep.supremum.infinite, "sweep supremum flagged +inf");
}

// 5: DV lower bound on Gaussian pairs. Windowed x and x^2 on a wide box
// carry the tails; six bumps on the central region where both samples are
// dense add local shape.
void dv_gaussians(Context& c, std::uint64_t seed) {
  const BoxWindow wide = make_window({-8.0}, {8.0}, 1.0);
  auto functions = polynomial_basis(wide, 2).functions();
  const FunctionBasis bumps = gaussian_bumps(make_window({-2.5}, {2.5}, 1.0), 6, 1.5);
  for (const auto& f : bumps.functions()) functions.push_back(f);
  const FunctionBasis basis(std::move(functions), wide);
  const auto nu = normal_samples(0.0, 1.0, 10000, derive_seed(seed, 50));
  struct Case {
    const char* name;
    double mean, sd, exact;
  };
  int k = 0;
  for (const Case& cs : {Case{"shift", 1.0, 1.0, kShiftKl}, Case{"scale", 0.0, 2.0, kScaleKl}}) {
    const auto mu = normal_samples(cs.mean, cs.sd, 10000, derive_seed(seed, 51 + k++));
    const auto est = dv_estimate(mu, nu, basis);
    c.r.values[std::string(cs.name) + "_value"] = est.value;
    c.check(rel(est.value, cs.exact) <= kDvRel && est.value <= cs.exact + 3.0 * est.std_error,
            std::string(cs.name) + " " + fmt(est.value) + " +- " + fmt(est.std_error) + " vs " + fmt(cs.exact));
  }
  c.check(basis.size() >= 8, "basis size " + std::to_string(basis.size()));
}

// Conjugate gradient on Q g = c, written independently of the eigen-based
// pseudo-inverse, followed by evaluation of c.g - 1/2 g.Q.g.
double cg_maximum(const Mat& q, const Vec& c) {
  Vec g = Vec::Zero(c.size());
  Vec r = c;
  Vec dir = r;
  for (int it = 0; it < 50 && r.norm() > 1e-15 * c.norm(); ++it) {
    const Vec qd = q * dir;
    const double alpha = r.squaredNorm() / dir.dot(qd);
    g += alpha * dir;
    const Vec next = r - alpha * qd;
    dir = next + (next.squaredNorm() / r.squaredNorm()) * dir;
    r = next;
  }
  return c.dot(g) - 0.5 * g.dot(q * g);
}

// 6: finite-basis quadratic form.
void nform_random(Context& c, std::uint64_t seed) {
  Substream rng(derive_seed(seed, 6), 0);
  auto random_instance = [&](Mat& q, Vec& v) {
    Mat b(3, 3);
    for (int i = 0; i < 9; ++i) b(i / 3, i % 3) = rng.normal();
    q = b.transpose() * b + 0.1 * Mat::Identity(3, 3);
    v = Vec(3);
    for (int i = 0; i < 3; ++i) v[i] = rng.normal();
  };
  double worst_gap = 0.0, worst_identity = 0.0, worst_convex = -1e300;
  for (int trial = 0; trial < 100; ++trial) {
    Mat q;
    Vec v;
    random_instance(q, v);
    GramData gram;
    gram.q = q;
    const auto n = nform_value({v, 0.0, {}}, gram);
    worst_gap = std::max(worst_gap, std::abs(n.value - cg_maximum(q, v)));
    worst_identity = std::max(worst_identity, std::abs(n.value - quadratic_energy(n.maximizer, q)));
  }
  for (int trial = 0; trial < 100; ++trial) {
    Mat q;
    Vec c1, c2(3);
    random_instance(q, c1);
    for (int i = 0; i < 3; ++i) c2[i] = rng.normal();
    const double lambda = rng.uniform();
    GramData gram;
    gram.q = q;
    const double mix = nform_value({lambda * c1 + (1.0 - lambda) * c2, 0.0, {}}, gram).value;
    const double bound = lambda * nform_value({c1, 0.0, {}}, gram).value +
                         (1.0 - lambda) * nform_value({c2, 0.0, {}}, gram).value;
    worst_convex = std::max(worst_convex, mix - bound);
  }
  c.r.values["max_gap"] = worst_gap;
  c.r.values["max_identity_gap"] = worst_identity;
  c.r.values["max_convexity_excess"] = worst_convex;
  c.check(worst_gap <= kNformAbs, "max |n - CG maximum| " + fmt(worst_gap) + " <= 1e-6");
  c.check(worst_identity == 0.0, "energy identity exact (max gap " + fmt(worst_identity) + ")");
  c.check(worst_convex <= kConvexTol, "max convexity excess " + fmt(worst_convex) + " <= 1e-9");
}

// 7: recovery of the modifying drift and the time-integrated energy.
void h_recovery(Context& c, std::uint64_t seed) {
  const auto mu = make_model("drift_bm", {{"theta", {1.0}}});
  const auto p = make_model("brownian", kNoParams);
  BasisConfig bc;
  bc.family = "mixed";
  bc.count = 10;
  bc.degree = 2;
  bc.lo = {-3.5};
  bc.hi = {4.5};
  bc.margin = 1.0;
  const FunctionBasis basis = build_basis(bc);
  const std::size_t steps = 100;
  const auto ens = sample_paths(mu, origin(), TimeGrid::uniform(1.0, steps), 100000, derive_seed(seed, 7));

  const std::size_t mid = steps / 2;
  const auto action = marginal_time_action(ens, p, basis, mid, 5);
  const auto samples = ens.slice(mid);
  const auto gram = gram_matrix(p, ens.grid()[mid], samples, basis);
  const HField h = recover_h(action, gram, basis, p, ens.grid()[mid]);
  // Central 90% of N(0.5, 0.5).
  const double sd = std::sqrt(0.5);
  const double lo = 0.5 - 1.6448536269514722 * sd, hi = 0.5 + 1.6448536269514722 * sd;
  double worst = 0.0;
  for (int k = 0; k <= 100; ++k) {
    Vec y(1);
    y[0] = lo + (hi - lo) * k / 100.0;
    worst = std::max(worst, std::abs(h(y)[0] - 1.0));
  }
  NFormSweepConfig sc;
  sc.stride = 2;
  const auto integral = nform_entropy(p, origin(), origin(), ens, basis, sc);
  c.r.values["h_max_error"] = worst;
  c.r.values["integral"] = integral.value;
  c.check(worst <= kHRel, "max |h - theta| on central 90% " + fmt(worst) + " <= 5%");
  c.check(rel(integral.value, kConstantDriftEntropy) <= kHIntegralRel,
          "integrated energy " + fmt(integral.value) + " vs 0.5 (tol 10%)");
}

// 8: histogram estimator properties.
void histogram_properties(Context& c, std::uint64_t seed) {
  const auto mu = normal_samples(1.0, 1.0, 10000, derive_seed(seed, 80));
  const auto cells = gaussian_cells({Vec::Zero(1), Mat::Identity(1, 1)});
  auto partition = SpacePartition::uniform(Vec::Constant(1, -6.0), Vec::Constant(1, 7.0), {8});
  double prev = -1.0, worst_drop = 0.0;
  bool bounded = true;
  std::string trail;
  for (int level = 0; level < 4; ++level) {
    const auto est = histogram_kl(mu, cells, partition);
    c.r.values["level_" + std::to_string(level)] = est.value;
    if (level > 0) worst_drop = std::max(worst_drop, prev - est.value);
    bounded = bounded && est.value <= kShiftKl + 3.0 * est.std_error;
    trail += (level ? ", " : "") + fmt(est.value);
    prev = est.value;
    partition = partition.refined();
  }
  c.check(worst_drop <= kRefineTol, "levels [" + trail + "] nondecreasing (max drop " + fmt(worst_drop) + ")");
  c.check(bounded, "all levels <= 0.5 + 3 SE");
  // Reference supported on x < 0, mu-samples on x > 0.
  std::vector<Vec> left, right;
  for (const auto& x : normal_samples(0.0, 1.0, 2000, derive_seed(seed, 81))) {
    (x[0] < 0.0 ? left : right).push_back(x);
  }
  const auto disjoint = histogram_kl(right, empirical_cells(left),
                                     SpacePartition::uniform(Vec::Constant(1, -4.0), Vec::Constant(1, 4.0), {8}));
  c.check(disjoint.infinite, "disjoint supports give +inf");
}

// 9: chain rule on {0, 0.5, 1}.
void chain_rule(Context& c, std::uint64_t seed) {
  const auto mu = make_model("ou", {{"gamma", {1.0}}});
  const auto p = make_model("brownian", kNoParams);
  const auto grid = uniform_grid(1.0, 256);
  const auto ens = sample_paths(mu, origin(), *grid, 10000, derive_seed(seed, 9));
  const auto est = chain_estimate(mu, p, origin(), origin(), ens, Partition(ens.grid_ptr(), {0, 128, 256}));
  const double sum = est.initial_term + est.per_step[0].value + est.per_step[1].value;
  c.r.values["total"] = est.total.value;
  c.r.values["step_0"] = est.per_step[0].value;
  c.r.values["step_1"] = est.per_step[1].value;
  c.check(sum == est.total.value, "total " + fmt(est.total.value) + " == initial + steps exactly");
  bool nonneg = est.initial_term >= 0.0;
  for (const auto& s : est.per_step) nonneg = nonneg && s.value >= -3.0 * s.std_error;
  c.check(nonneg, "terms " + fmt(est.per_step[0].value) + ", " + fmt(est.per_step[1].value) + " >= -3 SE");
}

// 10: Sanov trend for the terminal value of BM.
void sanov_trend(Context& c, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const auto p = make_model("brownian", kNoParams);
  RateExperiment e;
  e.threshold = 1.0;
  e.trials = 10000;
  e.seed = derive_seed(seed, 10);
  e.tilt = 1.0;  // z / T
  const auto rows = empirical_rate(p, e);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool decreasing = true;
  std::string trail;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    c.r.values["rate_" + std::to_string(rows[j].n)] = rows[j].rate;
    trail += (j ? ", " : "") + fmt(rows[j].rate);
    if (j > 0) {
      const double slack = 2.0 * std::hypot(rows[j].rate_std_error, rows[j - 1].rate_std_error);
      decreasing = decreasing && rows[j].rate <= rows[j - 1].rate + slack && rows[j].rate >= kSanovRate - slack;
    }
  }
  const double last = rows.back().rate;
  c.check(rel(last, kSanovRate) <= kSanovRel, "rate at N=40 " + fmt(last) + " vs 0.5 (tol 25%)");
  c.check(decreasing, "rates [" + trail + "] decrease toward 0.5");
  c.check(secs < kSanovSeconds, "runtime " + fmt(secs) + " s < 60 s");
}

using Body = std::function<void(Context&, std::uint64_t)>;

struct Entry {
  int id;
  const char* name;
  Body body;
};

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries{
      {1, "girsanov constant drift", girsanov_constant_drift},
      {2, "girsanov OU vs BM", girsanov_ou},
      {3, "chain refinement", chain_refinement},
      {4, "infinite-entropy detection", infinite_detection},
      {5, "DV Gaussian pairs", dv_gaussians},
      {6, "n-form quadratic functional", nform_random},
      {7, "h recovery", h_recovery},
      {8, "histogram estimator", histogram_properties},
      {9, "chain rule", chain_rule},
      {10, "sanov trend", sanov_trend},
  };
  return entries;
}

bool bitwise_equal(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [key, value] : a) {
    auto it = b.find(key);
    if (it == b.end() || std::memcmp(&value, &it->second, sizeof(double)) != 0) return false;
  }
  return true;
}

CriterionResult run_entry(const Entry& entry, std::uint64_t seed) {
  CriterionResult r;
  r.id = entry.id;
  r.name = entry.name;
  Context c{r, {}, true};
  const auto start = std::chrono::steady_clock::now();
  try {
    entry.body(c, seed);
  } catch (const std::exception& e) {
    c.check(false, std::string("exception: ") + e.what());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.pass = c.pass;
  r.detail = c.detail.str();
  return r;
}

// 11: reruns other criteria at 1 and 4 threads and compares every value bitwise.
CriterionResult determinism(const AcceptanceOptions& options) {
  CriterionResult r;
  r.id = 11;
  r.name = "determinism across thread counts";
  const auto start = std::chrono::steady_clock::now();
  const std::vector<int> ids = options.fast ? std::vector<int>{2, 5, 9} : std::vector<int>{2, 3, 4, 5, 8, 9, 10};
  const unsigned saved = num_threads();
  bool all = true;
  std::ostringstream detail;
  for (int id : ids) {
    const auto& entry = registry()[static_cast<std::size_t>(id - 1)];
    set_num_threads(1);
    const auto one = run_entry(entry, options.seed);
    set_num_threads(4);
    const auto four = run_entry(entry, options.seed);
    const bool same = !one.values.empty() && bitwise_equal(one.values, four.values);
    all = all && same;
    for (const auto& [key, value] : one.values) r.values[std::to_string(id) + "." + key] = value;
    detail << (detail.tellp() > 0 ? "; " : "") << "criterion " << id << (same ? " identical" : " DIFFERS [FAIL]");
  }
  set_num_threads(saved);
  r.pass = all;
  r.detail = detail.str();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

std::vector<int> acceptance_ids(bool fast) {
  if (fast) return {1, 2, 4, 5, 6, 8, 9, 11};
  return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
}

CriterionResult run_criterion(int id, const AcceptanceOptions& options) {
  if (id == 11) return determinism(options);
  for (const auto& entry : registry()) {
    if (entry.id == id) return run_entry(entry, options.seed);
  }
  CriterionResult r;
  r.id = id;
  r.name = "unknown";
  r.detail = "no such criterion";
  return r;
}

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options) {
  std::vector<CriterionResult> out;
  for (int id : acceptance_ids(options.fast)) out.push_back(run_criterion(id, options));
  return out;
}

std::string format_result(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.pass ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << " (" << fmt(r.seconds) << " s): " << r.detail;
  return os.str();
}

}  // namespace pathkl
