#pragma once

#include "dsl/common.hpp"

#include <string>
#include <vector>

namespace dsl {

// Row-stochastic state-to-state probability table. `occupancy[i]` counts the
// transitions observed out of state i (dialog-final occurrences emit none),
// which is also the weight used when rows are merged.
struct TransitionTable {
  int n_states = 0;
  Mat probs;               // n_states x n_states
  Vec occupancy;           // n_states
  std::vector<std::string> labels;  // optional; empty or size n_states

  std::string label(int i) const;
  void validate(double tol = 1e-6) const;
};

void save_transition_csv(const TransitionTable& table, const std::string& path);
TransitionTable load_transition_csv(const std::string& path);

}  // namespace dsl
