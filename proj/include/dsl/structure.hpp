#pragma once

#include "dsl/common.hpp"
#include "dsl/corpus.hpp"
#include "dsl/transition_table.hpp"
#include "dsl/vrnn.hpp"

#include <map>
#include <string>
#include <vector>

namespace dsl {

// Surjective latent-state -> action-category map with contiguous categories.
struct CollapseMap {
  std::vector<int> state_to_category;  // index = state id
  std::vector<std::string> category_names;

  int n_categories() const;
  void validate(int n_states) const;
  static CollapseMap load(const std::string& path);
  void save(const std::string& path) const;
};

// Bi-gram counting of consecutive within-dialog assignments. Rows with no
// outgoing pair (dialog-final-only states) fall back to uniform.
TransitionTable estimate_transition_table_frequency(
    const LatentAssignment& assignments, int n_states);

// Row i is the DD-VRNN prior evaluated at the i-th one-hot; occupancy is
// counted from the supplied assignments (typically the training set).
TransitionTable read_transition_table_ddvrnn(
    const VrnnModel& model, const LatentAssignment& assignments);

TransitionTable collapse_states(const TransitionTable& table,
                                const CollapseMap& map);

std::string export_dot(const TransitionTable& table,
                       const std::vector<std::string>& labels,
                       double threshold = 0.2);

struct StateExample {
  std::string dialog_id;
  int turn_index = 0;
  double posterior = 0;
  std::string user_text;
  std::string system_text;
  std::string context_text;  // the previous exchange, when there is one
};

// Per state, the k member exchanges with the highest posterior for that
// state, most confident first.
std::vector<std::vector<StateExample>> top_exchanges_per_state(
    const LatentAssignment& assignments, const std::vector<Dialog>& dialogs,
    int k);

// Minimum-cost assignment (Hungarian algorithm); returns the column matched
// to each row. Rectangular inputs are padded with zero cost.
std::vector<int> min_cost_assignment(const Mat& cost);

// counts[i][j] = exchanges whose true state is i and learned state is j
Mat confusion_matrix(const std::vector<std::vector<int>>& true_seqs,
                     const LatentAssignment& assignments, int n_true,
                     int n_learned);

// Per true state, the learned state with maximal confusion overlap, matched
// one-to-one through min-cost assignment on the negated confusion counts.
std::vector<int> align_states(const Mat& confusion);

}  // namespace dsl
