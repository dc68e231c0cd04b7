#pragma once

#include "dsl/common.hpp"
#include "dsl/corpus.hpp"
#include "dsl/features.hpp"
#include "dsl/nn.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dsl {

enum class Variant { dvrnn, ddvrnn, ne_dvrnn };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::dvrnn;
  int n_states = 10;
  int embed_dim = 300;
  int rnn_hidden = 300;  // paper uses 200-400 LSTM units
  int z_feat_dim = 100;
  int mlp_hidden = 200;
  double dropout = 0.4;
  double bow_lambda = 0.1;
  double gumbel_temperature = 0.6;
  bool gumbel_hard = true;
  // When true the per-sample KL in the objective is replaced by the KL
  // between batch-averaged posterior and batch-averaged prior.
  bool use_bpr = true;
  double ne_weight = 1.0;  // >1 puts extra reconstruction weight on entities
  int max_utterance_len = kMaxUtteranceLen;
  int max_dialog_len = kMaxDialogLen;
  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 30;
  double grad_clip = 5.0;
  int min_count = 1;
  uint64_t seed = 1;
  std::string pretrained_embeddings;  // optional import path

  void validate() const;
  std::string to_json_string() const;
  static ModelConfig from_json_string(const std::string& s);
};

// One relaxed/discretized draw of z_t together with the posterior it came from.
struct LatentSample {
  Vec relaxed;     // one-hot when drawn with hard=true
  int hard_index = 0;
  Vec posterior;
};

// Context state of the state-level LSTM. `h` is the exposed dialog context;
// `cell` is the LSTM cell memory carried alongside it.
struct VrnnState {
  Vec h;
  Vec cell;
};

struct DecoderState {
  Vec c;  // final hidden of the user-side decoder
  Vec d;  // final hidden of the system-side decoder
};

struct DecodeResult {
  std::vector<double> user_logprobs;
  std::vector<double> system_logprobs;
  DecoderState final_state;
};

struct LossTerms {
  double reconstruction_nll = 0;
  double kl_term = 0;
  double bow_nll = 0;
  double bpr_kl = 0;
  double total = 0;
};

struct EncodedExchange {
  std::vector<int> user_ids;
  std::vector<int> system_ids;
  std::vector<bool> user_ne;
  std::vector<bool> system_ne;
};

struct EncodedDialog {
  std::string dialog_id;
  std::vector<EncodedExchange> exchanges;
};

LatentSample sample_gumbel_softmax(const Vec& probs, double temperature,
                                   bool hard, Rng& rng);

class VrnnModel {
 public:
  VrnnModel(ModelConfig config, Vocab vocab);

  const ModelConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  VrnnState initial_state() const;
  EncodedExchange encode_exchange(const Exchange& ex) const;
  EncodedDialog encode_dialog(const Dialog& dialog) const;
  Vec exchange_feature(const EncodedExchange& ex) const;

  Vec prior_dvrnn(const VrnnState& prev) const;
  Vec prior_ddvrnn(const Vec& z_prev_onehot) const;  // throws on non-one-hot
  Vec prior_start_ddvrnn() const;                    // learned start context
  Vec posterior(const VrnnState& prev, const Vec& x_feat) const;
  DecodeResult decode_exchange(const VrnnState& prev, const LatentSample& z,
                               const EncodedExchange& target) const;
  VrnnState recurrence(const VrnnState& prev, const Vec& x_feat,
                       const LatentSample& z) const;

  // Joint prior probability of a hard state sequence under the direct
  // transition factorization (product over steps, start context at t=0).
  double ddvrnn_sequence_logprob(const std::vector<int>& states) const;

  LossTerms loss_terms(const std::vector<EncodedDialog>& batch, Rng& rng) const;
  // Same objective, and leaves d(total)/d(param) in params().grad.
  LossTerms loss_and_gradients(const std::vector<EncodedDialog>& batch,
                               Rng& rng);

  // Negative ELBO of one dialog: token reconstruction NLL (unweighted) plus
  // the per-step posterior/prior KL, averaged over `num_samples` draws.
  double dialog_negative_elbo(const EncodedDialog& dialog, int num_samples,
                              Rng& rng) const;

 private:
  friend struct VrnnGraphOps;
  ModelConfig config_;
  Vocab vocab_;
  mutable nn::ParamStore params_;
  nn::Mlp prior_, enc_, zfeat_, bow_, dec1_out_, dec2_out_;
  nn::LstmCell dec1_, dec2_, state_rnn_;
  nn::Param* emb_ = nullptr;
  nn::Param* start_z_ = nullptr;  // ddvrnn only
};

struct LatentAssignment {
  struct DialogStates {
    std::string dialog_id;
    std::vector<int> states;
    std::vector<Vec> posteriors;
  };
  int n_states = 0;
  std::vector<DialogStates> dialogs;
  size_t total_exchanges() const;
  std::vector<int> flatten() const;
};

LatentAssignment assign_states(const VrnnModel& model,
                               const std::vector<Dialog>& dialogs);

struct TrainLogEntry {
  int epoch = 0;
  double train_total = 0;
  double train_reconstruction = 0;
  double train_kl = 0;
  double train_bow = 0;
  double valid_total = 0;
};

struct TrainResult {
  std::shared_ptr<VrnnModel> model;
  std::vector<TrainLogEntry> log;
  double best_valid_total = 0;
};

TrainResult train(const std::vector<Dialog>& train_dialogs,
                  const std::vector<Dialog>& valid_dialogs, ModelConfig config);

// Checkpoint directory: manifest.json (config + vocab hash), vocab.json,
// params.bin. The manifest is the compatibility contract.
void save_checkpoint(const VrnnModel& model, const std::string& dir);
std::shared_ptr<VrnnModel> load_checkpoint(const std::string& dir);

}  // namespace dsl
