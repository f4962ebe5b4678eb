#include "run_config.hpp"

#include <doctest.h>

using namespace pathkl;
using namespace pathkl::cli;

namespace {

Json girsanov_doc() {
  return Json::parse(R"({
    "estimator": "girsanov",
    "model_mu": {"id": "drift_bm", "params": {"theta": 1}},
    "model_P": {"id": "brownian"},
    "grid": {"T": 1, "steps": 100},
    "paths": 2000,
    "seed": 3
  })");
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("girsanov run") {
    const auto outcome = run(parse_config(girsanov_doc()));
    CHECK(outcome.exit_code == kExitOk);
    CHECK(outcome.report["result"]["value"].get<double>() == doctest::Approx(0.5));
    CHECK(outcome.report["version"] == kVersion);
    CHECK(outcome.report["config"]["girsanov"]["tol_match"] == 1e-6);
  }

  TEST_CASE("validation errors") {
    auto doc = girsanov_doc();
    doc["model_mu"]["id"] = "nope";
    CHECK_THROWS_AS(parse_config(doc), ConfigError);

    doc = girsanov_doc();
    doc["pathz"] = 10;
    CHECK_THROWS_AS(parse_config(doc), ConfigError);

    doc = girsanov_doc();
    doc["grid"]["dt"] = 0.1;
    CHECK_THROWS_AS(parse_config(doc), ConfigError);

    doc = girsanov_doc();
    doc["estimator"] = "magic";
    CHECK_THROWS_AS(parse_config(doc), ConfigError);

    doc = girsanov_doc();
    doc["chain"] = Json::object();
    CHECK_THROWS_AS(parse_config(doc), ConfigError);

    doc = girsanov_doc();
    doc["estimator"] = "chain";
    doc["chain"] = Json{{"levels", 3}};
    CHECK_THROWS_AS(parse_config(doc), ConfigError);  // 100 steps is not dyadic
    doc["grid"]["steps"] = 128;
    CHECK_NOTHROW(parse_config(doc));

    doc = girsanov_doc();
    doc["paths"] = 2.5;
    CHECK_THROWS_AS(parse_config(doc), ConfigError);

    doc = girsanov_doc();
    doc["model_P"]["params"] = Json{{"a", -1}};
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
  }

  TEST_CASE("exit code mapping") {
    CHECK(exit_code_for(ConfigError("x")) == kExitValidation);
    CHECK(exit_code_for(CapabilityError("x")) == kExitCapability);
    CHECK(exit_code_for(ConvergenceError("x", 1.0)) == kExitConvergence);
    CHECK(exit_code_for(std::runtime_error("x")) == kExitFailure);
  }

  TEST_CASE("resolved config re-parses to itself") {
    auto doc = girsanov_doc();
    doc["init_mu"] = Json{{"kind", "gaussian"}, {"mean", 0.5}, {"covariance", 2}};
    const auto first = parse_config(doc);
    const auto second = parse_config(first.resolved);
    CHECK(first.resolved == second.resolved);
    CHECK(first.resolved["init_P"] == first.resolved["init_mu"]);
    CHECK(first.resolved["model_mu"]["params"]["a"] == Json::array({1.0}));
  }

  TEST_CASE("seed override") {
    const auto c = parse_config(girsanov_doc(), 99);
    CHECK(c.seed == 99);
    CHECK(c.resolved["seed"] == 99);
  }

  TEST_CASE("report round-trips and is reproducible") {
    auto doc = girsanov_doc();
    doc["model_mu"] = Json{{"id", "ou"}, {"params", {{"gamma", 1}}}};
    const auto config = parse_config(doc);
    auto a = run(config);
    auto b = run(config);
    const Json parsed = Json::parse(render(a, "json"));
    CHECK(parsed == a.report);
    a.report.erase("wall_clock_seconds");
    b.report.erase("wall_clock_seconds");
    CHECK(a.report.dump() == b.report.dump());
  }

  TEST_CASE("infinite values serialize as null with a flag") {
    auto doc = girsanov_doc();
    doc["model_mu"] = Json{{"id", "brownian"}, {"params", {{"a", 2}}}};
    const auto outcome = run(parse_config(doc));
    CHECK(outcome.report["result"]["value"].is_null());
    CHECK(outcome.report["result"]["infinite"] == true);
  }

  TEST_CASE("compare") {
    const auto c = parse_config(girsanov_doc());
    const auto same = compare({c, c});
    CHECK(same.report["pairs"][0]["z"] == 0.0);

    auto ou = girsanov_doc();
    ou["model_mu"] = Json{{"id", "ou"}, {"params", {{"gamma", 1}}}};
    ou["grid"]["steps"] = 128;
    ou["paths"] = 4000;
    auto chain = ou;
    chain["estimator"] = "chain";
    chain["chain"] = Json{{"levels", 8}};
    const auto cross = compare({parse_config(ou), parse_config(chain)});
    CHECK(std::abs(cross.report["pairs"][0]["z"].get<double>()) <= 3.0);

    auto mismatched = girsanov_doc();
    mismatched["model_P"]["params"] = Json{{"a", 2}};
    mismatched["model_mu"]["params"]["a"] = 1;
    auto matched = mismatched;
    matched["model_P"]["params"]["a"] = 1;
    // Same model_mu, but model_P differs: refused.
    CHECK_THROWS_AS(compare({parse_config(matched), parse_config(mismatched)}), ConfigError);

    auto wide = girsanov_doc();
    wide["model_mu"]["params"]["a"] = 2;
    // The path laws are singular but the time-1 marginals are not.
    auto wide_marginal = wide;
    wide_marginal["estimator"] = "dv-marginal";
    wide_marginal["dv_marginal"] = Json{{"basis", {{"family", "poly"}, {"lo", -9}, {"hi", 9}}}};
    const auto flagged = compare({parse_config(wide), parse_config(wide_marginal)});
    CHECK(flagged.report["results"][0]["result"]["infinite"] == true);
    CHECK(flagged.report["results"][1]["result"]["infinite"] == false);
    CHECK(flagged.report["pairs"][0]["infinite_row"] == true);
    CHECK(flagged.report["pairs"][0]["z"].is_null());
  }

  TEST_CASE("csv output") {
    auto doc = girsanov_doc();
    doc["estimator"] = "sanov";
    doc.erase("model_mu");
    doc.erase("paths");
    doc["sanov"] = Json{{"tilt", 1.0}, {"trials", 500}};
    const auto outcome = run(parse_config(doc));
    const std::string csv = render(outcome, "csv");
    CHECK(csv.find("n,count,p_hat,p_std_error,rate,rate_std_error,oracle\n") != std::string::npos);
    CHECK(csv.rfind("# wall_clock_seconds: ") != std::string::npos);
    CHECK(outcome.table.rows.size() == 4);
  }

  TEST_CASE("list-models") {
    const auto outcome = list_models();
    CHECK(outcome.report["models"].size() == catalog_ids().size());
    CHECK(outcome.report["scenarios"].size() == 3);
  }
}
