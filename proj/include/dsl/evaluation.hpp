#pragma once

#include "dsl/common.hpp"
#include "dsl/corpus.hpp"
#include "dsl/hmm.hpp"
#include "dsl/vrnn.hpp"

#include <string>
#include <variant>
#include <vector>

namespace dsl {

struct EvalEntry {
  std::string variant;
  int n_states = 0;
  std::string dialog_id;
  double nll = 0;
};

struct EvalSummary {
  std::string variant;
  int n_states = 0;
  double total_nll = 0;
};

struct EvalReport {
  std::vector<EvalEntry> detail;
  std::vector<EvalSummary> summary;
  uint64_t corpus_hash = 0;
  uint64_t seed = 0;
  int num_samples = 0;
};

// Negative ELBO per dialog for the VRNN variants (reconstruction NLL plus the
// per-step KL, no bow term), averaged over num_samples Gumbel draws.
std::vector<EvalEntry> heldout_nll(const VrnnModel& model,
                                   const std::vector<Dialog>& dialogs,
                                   int num_samples, uint64_t seed);

// Exact forward NLL; the variant label defaults to "hmm".
std::vector<EvalEntry> heldout_nll(const HmmModel& model, const Vocab& vocab,
                                   const std::vector<Dialog>& dialogs,
                                   const std::string& label = "hmm");

struct ScoredModel {
  std::string label;  // row label; defaults to the variant name when empty
  const VrnnModel* vrnn = nullptr;
  const HmmModel* hmm = nullptr;
  const Vocab* hmm_vocab = nullptr;  // required with hmm
  int n_states = 0;
};

EvalReport compare_models(const std::vector<ScoredModel>& models,
                          const std::vector<Dialog>& test_dialogs,
                          int num_samples, uint64_t seed);

void save_eval_detail_csv(const EvalReport& report, const std::string& path);
void save_eval_summary_csv(const EvalReport& report, const std::string& path);

}  // namespace dsl
