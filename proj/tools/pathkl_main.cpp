#include "run_config.hpp"

#include "pathkl/acceptance.hpp"
#include "pathkl/parallel.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

struct Flags {
  std::vector<std::string> configs;
  std::string out;
  std::string format;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  CLI::Option* out_opt = nullptr;
  CLI::Option* format_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, Flags& flags) {
  flags.out_opt = cmd->add_option("--out", flags.out, "Write the report here instead of stdout");
  flags.format_opt = cmd->add_option("--format", flags.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--threads", flags.threads, "Worker threads (results do not depend on it)")
      ->check(CLI::Range(1u, 1024u));
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report to '" + path + "'");
  out << text;
}

std::optional<std::string> given(const CLI::Option* opt, const std::string& value) {
  if (opt && opt->count() > 0) return value;
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace pathkl::cli;

  CLI::App app{"Relative entropy between path laws of diffusions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Flags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run one estimator from a config file");
  run_cmd->add_option("--config", run_flags.configs, "Config file (JSON)")->required()->expected(1);
  run_flags.seed_opt = run_cmd->add_option("--seed", run_flags.seed, "Override the config seed");
  add_common(run_cmd, run_flags);

  Flags cmp_flags;
  auto* cmp_cmd = app.add_subcommand("compare", "Run several configs on one model pair and tabulate z-scores");
  cmp_cmd->add_option("--config", cmp_flags.configs, "Config files (repeat the flag)")->required();
  cmp_flags.seed_opt = cmp_cmd->add_option("--seed", cmp_flags.seed, "Override every config seed");
  add_common(cmp_cmd, cmp_flags);

  Flags list_flags;
  auto* list_cmd = app.add_subcommand("list-models", "Print the model catalog");
  add_common(list_cmd, list_flags);

  Flags test_flags;
  auto* test_cmd = app.add_subcommand("self-test", "Run the fast acceptance subset");
  add_common(test_cmd, test_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (run_cmd->parsed()) {
      pathkl::set_num_threads(run_flags.threads);
      std::optional<std::uint64_t> seed;
      if (run_flags.seed_opt->count() > 0) seed = run_flags.seed;
      RunConfig config = load_config(run_flags.configs.front(), seed);
      override_output(config, given(run_flags.out_opt, run_flags.out), given(run_flags.format_opt, run_flags.format));
      const Outcome outcome = run(config);
      emit(render(outcome, config.format), config.out_path);
      if (outcome.exit_code != kExitOk) {
        std::cerr << "pathkl: estimator did not converge; partial report written\n";
      }
      return outcome.exit_code;
    }
    if (cmp_cmd->parsed()) {
      pathkl::set_num_threads(cmp_flags.threads);
      std::optional<std::uint64_t> seed;
      if (cmp_flags.seed_opt->count() > 0) seed = cmp_flags.seed;
      std::vector<RunConfig> configs;
      for (const auto& path : cmp_flags.configs) configs.push_back(load_config(path, seed));
      const Outcome outcome = compare(configs);
      const std::string format = cmp_flags.format.empty() ? "json" : cmp_flags.format;
      emit(render(outcome, format), cmp_flags.out);
      return outcome.exit_code;
    }
    if (list_cmd->parsed()) {
      const Outcome outcome = list_models();
      if (!list_flags.format.empty()) {
        emit(render(outcome, list_flags.format), list_flags.out);
        return kExitOk;
      }
      std::string text;
      for (const auto& m : outcome.report["models"]) {
        text += m["id"].get<std::string>() + "\t" + m["description"].get<std::string>() + "\n";
      }
      text += "scenarios:";
      for (const auto& s : outcome.report["scenarios"]) text += " " + s.get<std::string>();
      text += "\nestimators:";
      for (const auto& s : outcome.report["estimators"]) text += " " + s.get<std::string>();
      emit(text + "\n", list_flags.out);
      return kExitOk;
    }
    pathkl::set_num_threads(test_flags.threads);
    pathkl::AcceptanceOptions options;
    options.fast = true;
    bool all = true;
    for (int id : pathkl::acceptance_ids(true)) {
      const auto result = pathkl::run_criterion(id, options);
      std::cout << pathkl::format_result(result) << std::endl;
      all = all && result.pass;
    }
    return all ? kExitOk : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "pathkl: error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
