#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace pathkl {

// Worker count used by every parallel loop in the library. Results never
// depend on it: work items write to disjoint slots and reductions run in a
// fixed order afterwards.
void set_num_threads(unsigned n);
unsigned num_threads();

// Calls body(i) for i in [0, n), statically chunked across workers.
// The first exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Pairwise (tree) summation with a fixed leaf size; the association order
// depends only on the length of the input.
double pairwise_sum(std::span<const double> values);

struct MeanAndError {
  double mean = 0.0;
  double std_error = 0.0;
};

// Sample mean and standard error of the mean (zero for a single value).
MeanAndError mean_and_error(std::span<const double> values);

}  // namespace pathkl
