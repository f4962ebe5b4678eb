#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

namespace pathkl {

// A relative-entropy value with its Monte Carlo standard error. Infinite
// entropies carry infinite = true and value = +inf.
struct EntropyEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool infinite = false;
  std::string method;
  std::map<std::string, double> diagnostics;
  std::vector<std::string> notes;

  static EntropyEstimate finite(double value, double std_error, std::string method) {
    EntropyEstimate e;
    e.value = value;
    e.std_error = std_error;
    e.method = std::move(method);
    return e;
  }

  static EntropyEstimate infinity(std::string method, std::string reason) {
    EntropyEstimate e;
    e.value = std::numeric_limits<double>::infinity();
    e.infinite = true;
    e.method = std::move(method);
    e.notes.push_back(std::move(reason));
    return e;
  }
};

}  // namespace pathkl
