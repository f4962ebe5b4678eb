#include "pathkl/acceptance.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fail.
// Optional arguments: criterion ids to run (default: all).
int main(int argc, char** argv) {
  pathkl::AcceptanceOptions options;
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::stoi(argv[i]));
  if (ids.empty()) ids = pathkl::acceptance_ids(false);
  bool all = true;
  for (int id : ids) {
    const auto result = pathkl::run_criterion(id, options);
    std::cout << pathkl::format_result(result) << std::endl;
    all = all && result.pass;
  }
  return all ? EXIT_SUCCESS : EXIT_FAILURE;
}
