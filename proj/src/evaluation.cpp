#include "dsl/evaluation.hpp"

#include <fstream>

namespace dsl {

std::vector<EvalEntry> heldout_nll(const VrnnModel& model,
                                   const std::vector<Dialog>& dialogs,
                                   int num_samples, uint64_t seed) {
  std::vector<EvalEntry> out;
  Rng rng(derive_seed(seed, "heldout"));
  for (const auto& dialog : dialogs) {
    EncodedDialog enc = model.encode_dialog(dialog);
    EvalEntry e;
    e.variant = to_string(model.config().variant);
    e.n_states = model.config().n_states;
    e.dialog_id = dialog.dialog_id;
    e.nll = model.dialog_negative_elbo(enc, num_samples, rng);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<EvalEntry> heldout_nll(const HmmModel& model, const Vocab& vocab,
                                   const std::vector<Dialog>& dialogs,
                                   const std::string& label) {
  std::vector<EvalEntry> out;
  for (const auto& dialog : dialogs) {
    EvalEntry e;
    e.variant = label;
    e.n_states = model.n_states;
    e.dialog_id = dialog.dialog_id;
    e.nll = -hmm_forward_loglik(model, to_bag_dialog(dialog, vocab));
    out.push_back(std::move(e));
  }
  return out;
}

EvalReport compare_models(const std::vector<ScoredModel>& models,
                          const std::vector<Dialog>& test_dialogs,
                          int num_samples, uint64_t seed) {
  EvalReport report;
  report.corpus_hash = corpus_fingerprint(test_dialogs);
  report.seed = seed;
  report.num_samples = num_samples;
  for (const auto& m : models) {
    std::vector<EvalEntry> entries;
    if (m.vrnn) {
      entries = heldout_nll(*m.vrnn, test_dialogs, num_samples, seed);
    } else if (m.hmm) {
      if (!m.hmm_vocab) throw Error("compare_models: hmm entry without vocab");
      entries = heldout_nll(*m.hmm, *m.hmm_vocab, test_dialogs,
                            m.label.empty() ? "hmm" : m.label);
    } else {
      throw Error("compare_models: entry with no model");
    }
    if (!m.label.empty())
      for (auto& e : entries) e.variant = m.label;
    EvalSummary s;
    s.variant = entries.empty() ? m.label : entries.front().variant;
    s.n_states = entries.empty() ? m.n_states : entries.front().n_states;
    for (const auto& e : entries) s.total_nll += e.nll;
    report.detail.insert(report.detail.end(), entries.begin(), entries.end());
    report.summary.push_back(s);
  }
  return report;
}

void save_eval_detail_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write eval csv: " + path);
  out << "variant,n_states,dialog_id,nll\n";
  for (const auto& e : report.detail)
    out << e.variant << "," << e.n_states << "," << e.dialog_id << ","
        << format_double(e.nll, 6) << "\n";
}

void save_eval_summary_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write eval summary csv: " + path);
  out << "variant,n_states,total_nll\n";
  for (const auto& s : report.summary)
    out << s.variant << "," << s.n_states << ","
        << format_double(s.total_nll, 6) << "\n";
}

}  // namespace dsl
