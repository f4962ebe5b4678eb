#pragma once

#include "pathkl/basis.hpp"
#include "pathkl/chain_entropy.hpp"
#include "pathkl/diffusion.hpp"
#include "pathkl/errors.hpp"
#include "pathkl/marginal_entropy.hpp"
#include "pathkl/sanov.hpp"
#include "pathkl/variational.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pathkl::cli {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitValidation = 2,
  kExitConvergence = 3,
  kExitCapability = 4,
};

// Bad config document: parse errors, unknown keys, wrong types.
class ConfigError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

struct ModelConfig {
  std::string id;
  ParamRecord params;
};

struct RunConfig {
  std::string estimator;  // girsanov | chain | dv-marginal | nform-sweep | sanov
  std::optional<ModelConfig> model_mu;
  ModelConfig model_P;
  InitialLaw init_mu;
  InitialLaw init_P;
  double horizon = 1.0;
  std::size_t steps = 256;
  std::size_t paths = 10000;
  std::uint64_t seed = 1;

  double tol_match = 1e-6;       // girsanov
  SweepConfig chain;             // chain
  BasisConfig basis;             // dv-marginal, nform-sweep
  DvConfig dv;                   // dv-marginal
  double dv_time = 1.0;          // dv-marginal
  std::size_t dv_samples = 0;    // dv-marginal
  NFormSweepConfig nform;        // nform-sweep
  RateExperiment sanov;          // sanov

  std::string out_path;
  std::string format = "json";

  // The config with every default filled in, as echoed in reports.
  Json resolved;
};

// Validates a config document. Throws ConfigError (exit 2) on any problem,
// including keys the schema does not know.
RunConfig parse_config(const Json& doc, std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt);

// --out / --format from the command line; also updates the echoed config.
void override_output(RunConfig& config, const std::optional<std::string>& path,
                     const std::optional<std::string>& format);

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct Outcome {
  int exit_code = kExitOk;
  Json report;
  Table table;
};

// Runs the configured estimator. Convergence failures come back as a partial
// report with exit code 3; other errors propagate.
Outcome run(const RunConfig& config);

// Runs every config and tabulates values with pairwise z-scores. The configs
// must share model pair, initial laws and horizon.
Outcome compare(const std::vector<RunConfig>& configs);

// Model catalog and closed-form scenarios.
Outcome list_models();

// Pretty JSON, or CSV with the non-tabular parts as leading "# " lines.
// wall_clock_seconds is always the last key / line.
std::string render(const Outcome& outcome, const std::string& format);

// Finite numbers pass through; infinities and NaN become null.
Json number(double value);

// Maps an exception from parse/run to an exit code.
int exit_code_for(const std::exception& error);

}  // namespace pathkl::cli
