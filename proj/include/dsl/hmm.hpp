#pragma once

#include "dsl/common.hpp"
#include "dsl/corpus.hpp"

#include <string>
#include <vector>

namespace dsl {

// Multinomial-emission HMM over the pooled bag-of-words of each exchange.
struct HmmModel {
  int n_states = 0;
  Vec pi;  // initial distribution
  Mat A;   // n_states x n_states, row-stochastic
  Mat B;   // n_states x vocab, row-stochastic unigram emissions

  void validate(double tol = 1e-9) const;
  void save(const std::string& path) const;
  static HmmModel load(const std::string& path);
};

// One observation sequence: per exchange, the pooled user+system token ids.
using BagDialog = std::vector<std::vector<int>>;

BagDialog to_bag_dialog(const Dialog& dialog, const Vocab& vocab);
std::vector<BagDialog> to_bag_dialogs(const std::vector<Dialog>& dialogs,
                                      const Vocab& vocab);

struct HmmTrainResult {
  HmmModel model;
  std::vector<double> loglik_history;  // non-decreasing, one entry per E-step
};

// Baum-Welch. Iterations use pure maximum-likelihood updates (the history is
// monotone); the returned emission matrix gets additive 0.1 smoothing over
// the vocabulary so unseen test tokens keep positive probability.
HmmTrainResult train_hmm(const std::vector<BagDialog>& dialogs, int n_states,
                         int vocab_size, uint64_t seed, int max_iters = 50,
                         double tol = 1e-4);

double hmm_forward_loglik(const HmmModel& model, const BagDialog& dialog);

struct HmmNll {
  std::vector<double> per_dialog;
  double total = 0;
};

HmmNll hmm_nll(const HmmModel& model, const std::vector<BagDialog>& dialogs);

}  // namespace dsl
