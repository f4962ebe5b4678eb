#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pathkl {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  // Every number the check depends on, for determinism comparisons.
  std::map<std::string, double> values;
};

struct AcceptanceOptions {
  std::uint64_t seed = 20240611;
  // Restrict to the criteria that finish in a few seconds.
  bool fast = false;
};

std::vector<int> acceptance_ids(bool fast);
CriterionResult run_criterion(int id, const AcceptanceOptions& options);
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options);

// "PASS [3] chain refinement ... detail"
std::string format_result(const CriterionResult& result);

}  // namespace pathkl
