#include "dsl/vrnn.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace dsl {

using nlohmann::json;
using nn::Graph;
using nn::Var;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::dvrnn: return "dvrnn";
    case Variant::ddvrnn: return "ddvrnn";
    case Variant::ne_dvrnn: return "ne_dvrnn";
  }
  throw Error("unknown variant");
}

Variant variant_from_string(const std::string& s) {
  if (s == "dvrnn") return Variant::dvrnn;
  if (s == "ddvrnn") return Variant::ddvrnn;
  if (s == "ne_dvrnn") return Variant::ne_dvrnn;
  throw Error("unknown variant '" + s + "' (expected dvrnn|ddvrnn|ne_dvrnn)");
}

void ModelConfig::validate() const {
  if (n_states < 2) throw Error("n_states must be >= 2");
  if (bow_lambda < 0) throw Error("bow_lambda must be >= 0");
  if (gumbel_temperature <= 0) throw Error("gumbel_temperature must be > 0");
  if (ne_weight < 1.0) throw Error("ne_weight must be >= 1");
  if (embed_dim < 1 || rnn_hidden < 1 || z_feat_dim < 1 || mlp_hidden < 1)
    throw Error("model dimensions must be positive");
  if (dropout < 0 || dropout >= 1) throw Error("dropout must lie in [0,1)");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (epochs < 0) throw Error("epochs must be >= 0");
  if (learning_rate <= 0) throw Error("learning_rate must be > 0");
  if (max_utterance_len < 1 || max_dialog_len < 1)
    throw Error("sequence length limits must be positive");
}

std::string ModelConfig::to_json_string() const {
  json j;
  j["variant"] = to_string(variant);
  j["n_states"] = n_states;
  j["embed_dim"] = embed_dim;
  j["rnn_hidden"] = rnn_hidden;
  j["z_feat_dim"] = z_feat_dim;
  j["mlp_hidden"] = mlp_hidden;
  j["dropout"] = dropout;
  j["bow_lambda"] = bow_lambda;
  j["gumbel_temperature"] = gumbel_temperature;
  j["gumbel_hard"] = gumbel_hard;
  j["use_bpr"] = use_bpr;
  j["ne_weight"] = ne_weight;
  j["max_utterance_len"] = max_utterance_len;
  j["max_dialog_len"] = max_dialog_len;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["grad_clip"] = grad_clip;
  j["min_count"] = min_count;
  j["seed"] = seed;
  j["pretrained_embeddings"] = pretrained_embeddings;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json_string(const std::string& s) {
  json j = json::parse(s);
  ModelConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.n_states = j.at("n_states").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.rnn_hidden = j.at("rnn_hidden").get<int>();
  c.z_feat_dim = j.at("z_feat_dim").get<int>();
  c.mlp_hidden = j.at("mlp_hidden").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.bow_lambda = j.at("bow_lambda").get<double>();
  c.gumbel_temperature = j.at("gumbel_temperature").get<double>();
  c.gumbel_hard = j.at("gumbel_hard").get<bool>();
  c.use_bpr = j.at("use_bpr").get<bool>();
  c.ne_weight = j.at("ne_weight").get<double>();
  c.max_utterance_len = j.at("max_utterance_len").get<int>();
  c.max_dialog_len = j.at("max_dialog_len").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.min_count = j.at("min_count").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.pretrained_embeddings = j.value("pretrained_embeddings", std::string());
  c.validate();
  return c;
}

LatentSample sample_gumbel_softmax(const Vec& probs, double temperature,
                                   bool hard, Rng& rng) {
  if (temperature <= 0) throw Error("gumbel temperature must be > 0");
  if (!is_simplex(probs)) throw Error("sample_gumbel_softmax: invalid simplex");
  const int n = static_cast<int>(probs.size());
  Vec perturbed(n);
  for (int i = 0; i < n; ++i)
    perturbed[i] = std::log(std::max(probs[i], 1e-10)) + gumbel_noise(rng);
  Vec relaxed = softmax(perturbed / temperature);
  LatentSample s;
  s.posterior = probs;
  s.hard_index = argmax(relaxed);
  s.relaxed = hard ? one_hot(s.hard_index, n) : relaxed;
  return s;
}

// ---- model ----

VrnnModel::VrnnModel(ModelConfig config, Vocab vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  const int n = config_.n_states;
  const int e = config_.embed_dim;
  const int h = config_.rnn_hidden;
  const int zf = config_.z_feat_dim;
  const int mh = config_.mlp_hidden;
  const int v = vocab_.size();
  const int dec1_hidden = h + zf;
  const int dec2_hidden = h + zf + dec1_hidden;

  Rng rng(derive_seed(config_.seed, "init"));
  emb_ = &params_.create("emb", v, e);
  {
    EmbeddingTable init = init_embeddings(v, e, derive_seed(config_.seed, "emb"));
    if (!config_.pretrained_embeddings.empty())
      import_pretrained_embeddings(init, vocab_, config_.pretrained_embeddings);
    emb_->value = init.table;
  }
  const int prior_in = config_.variant == Variant::ddvrnn ? n : h;
  prior_ = nn::make_mlp(params_, "prior", prior_in, mh, n, rng);
  enc_ = nn::make_mlp(params_, "enc", h + 2 * e, mh, n, rng);
  zfeat_ = nn::make_mlp(params_, "zfeat", n, mh, zf, rng);
  bow_ = nn::make_mlp(params_, "bow", h + zf, mh, v, rng);
  dec1_ = nn::make_lstm(params_, "dec1", e, dec1_hidden, rng);
  dec2_ = nn::make_lstm(params_, "dec2", e, dec2_hidden, rng);
  dec1_out_ = nn::make_mlp(params_, "dec1_out", dec1_hidden, mh, v, rng);
  dec2_out_ = nn::make_mlp(params_, "dec2_out", dec2_hidden, mh, v, rng);
  state_rnn_ = nn::make_lstm(params_, "state_rnn", zf + 2 * e, h, rng);
  if (config_.variant == Variant::ddvrnn) {
    start_z_ = &params_.create("start_z", n, 1);
    nn::fill_uniform(start_z_->value, -0.1, 0.1, rng);
  }
}

VrnnState VrnnModel::initial_state() const {
  return VrnnState{Vec::Zero(config_.rnn_hidden), Vec::Zero(config_.rnn_hidden)};
}

EncodedExchange VrnnModel::encode_exchange(const Exchange& ex) const {
  EncodedExchange enc;
  enc.user_ids = vocab_.encode(ex.user_tokens);
  enc.system_ids = vocab_.encode(ex.system_tokens);
  enc.user_ne.assign(enc.user_ids.size(), false);
  enc.system_ne.assign(enc.system_ids.size(), false);
  auto flag_ids = [&](const std::vector<int>& ids, std::vector<bool>& ne) {
    for (size_t i = 0; i < ids.size(); ++i)
      if (vocab_.ne_token_ids.count(ids[i])) ne[i] = true;
  };
  flag_ids(enc.user_ids, enc.user_ne);
  flag_ids(enc.system_ids, enc.system_ne);
  for (const auto& ent : ex.entities) {
    auto& ne = ent.side == Side::user ? enc.user_ne : enc.system_ne;
    for (int k = ent.begin; k < ent.end && k < static_cast<int>(ne.size()); ++k)
      ne[k] = true;
  }
  return enc;
}

EncodedDialog VrnnModel::encode_dialog(const Dialog& dialog) const {
  EncodedDialog enc;
  enc.dialog_id = dialog.dialog_id;
  for (const auto& ex : dialog.exchanges) {
    if (static_cast<int>(enc.exchanges.size()) >= config_.max_dialog_len) break;
    enc.exchanges.push_back(encode_exchange(ex));
  }
  return enc;
}

// Graph-building blocks shared by training, scoring and the public ops.
struct VrnnGraphOps {
  Graph& g;
  const VrnnModel& m;
  Var emb;
  bool apply_ne_weight = true;

  VrnnGraphOps(Graph& graph, const VrnnModel& model, bool ne_weight = true)
      : g(graph), m(model), emb(graph.leaf(*model.emb_)),
        apply_ne_weight(ne_weight) {}

  const ModelConfig& cfg() const { return m.config_; }

  Var feature(const EncodedExchange& ex) {
    return nn::concat({nn::embedding_rows_mean(emb, ex.user_ids),
                       nn::embedding_rows_mean(emb, ex.system_ids)});
  }

  Var prior_logits(Var context) {
    return nn::apply_mlp(g, m.prior_, context, cfg().dropout);
  }

  Var posterior_logits(Var h_prev, Var x_feat) {
    return nn::apply_mlp(g, m.enc_, nn::concat({h_prev, x_feat}), cfg().dropout);
  }

  Var zfeat(Var z) { return nn::apply_mlp(g, m.zfeat_, z, cfg().dropout); }

  // Relaxed Gumbel-Softmax draw from the posterior, straight-through when hard.
  Var sample_z(Var post_logp, Rng& rng, int* hard_index) {
    const int n = cfg().n_states;
    Vec noise(n);
    for (int i = 0; i < n; ++i) noise[i] = gumbel_noise(rng);
    Var y = nn::softmax_v(nn::scale(1.0 / cfg().gumbel_temperature,
                                    nn::add(post_logp, g.constant(noise))));
    if (hard_index) *hard_index = argmax(y.val().col(0));
    return cfg().gumbel_hard ? nn::straight_through_onehot(y) : y;
  }

  struct DecoderRun {
    std::vector<Var> logprobs;  // one per target token
    Var weighted_nll;           // 1x1
    Var last_hidden;
  };

  DecoderRun run_decoder(const nn::LstmCell& cell, const nn::Mlp& out_mlp,
                         Var h0, const std::vector<int>& ids,
                         const std::vector<bool>& ne) {
    DecoderRun run;
    nn::LstmVars state{h0, g.constant(Mat::Zero(cell.hidden, 1))};
    std::vector<Var> nll_terms;
    int prev = kEosId;
    for (size_t i = 0; i < ids.size(); ++i) {
      state = nn::lstm_step(g, cell, nn::embedding_row(emb, prev), state);
      Var logp = nn::log_softmax_v(
          nn::apply_mlp(g, out_mlp, state.h, cfg().dropout));
      Var token_logp = nn::pick(logp, ids[i]);
      run.logprobs.push_back(token_logp);
      double w = 1.0;
      if (apply_ne_weight && ne[i]) w = cfg().ne_weight;
      nll_terms.push_back(nn::scale(-w, token_logp));
      prev = ids[i];
    }
    run.weighted_nll = nll_terms.empty() ? g.scalar(0.0) : nn::add_all(nll_terms);
    run.last_hidden = state.h;
    return run;
  }

  struct StepResult {
    Var post_logp, post_probs, prior_logp, prior_probs;
    Var kl, recon_nll, bow_nll, z;
    int hard_index = 0;
    DecoderRun dec1, dec2;
  };

  // One conversational exchange: prior, posterior, sample, both decoders,
  // bag-of-words head. `prior_context` is h_{t-1} (dvrnn) or z_{t-1} (ddvrnn).
  StepResult step(Var prior_context, nn::LstmVars& state,
                  const EncodedExchange& ex, Rng& rng, bool with_decoders) {
    StepResult r;
    Var x_feat = feature(ex);
    r.prior_logp = nn::log_softmax_v(prior_logits(prior_context));
    r.prior_probs = nn::exp_v(r.prior_logp);
    r.post_logp = nn::log_softmax_v(posterior_logits(state.h, x_feat));
    r.post_probs = nn::exp_v(r.post_logp);
    r.kl = nn::sum_v(nn::mul(r.post_probs, nn::sub(r.post_logp, r.prior_logp)));
    r.z = sample_z(r.post_logp, rng, &r.hard_index);
    Var zf = zfeat(r.z);
    if (with_decoders) {
      Var dec1_h0 = nn::concat({state.h, zf});
      r.dec1 = run_decoder(m.dec1_, m.dec1_out_, dec1_h0, ex.user_ids, ex.user_ne);
      Var dec2_h0 = nn::concat({state.h, zf, r.dec1.last_hidden});
      r.dec2 =
          run_decoder(m.dec2_, m.dec2_out_, dec2_h0, ex.system_ids, ex.system_ne);
      r.recon_nll = nn::add(r.dec1.weighted_nll, r.dec2.weighted_nll);

      Var bow_logp = nn::log_softmax_v(
          nn::apply_mlp(g, m.bow_, nn::concat({state.h, zf}), cfg().dropout));
      std::vector<Var> bow_terms;
      for (int id : ex.user_ids) bow_terms.push_back(nn::pick(bow_logp, id));
      for (int id : ex.system_ids) bow_terms.push_back(nn::pick(bow_logp, id));
      r.bow_nll = nn::scale(-1.0, nn::add_all(bow_terms));
    }
    state = nn::lstm_step(g, m.state_rnn_, nn::concat({zf, x_feat}), state);
    return r;
  }

  nn::LstmVars initial_state_vars() {
    return nn::LstmVars{g.constant(Mat::Zero(cfg().rnn_hidden, 1)),
                        g.constant(Mat::Zero(cfg().rnn_hidden, 1))};
  }

  nn::LstmVars advance(nn::LstmVars state, Var zf, Var x_feat) {
    return nn::lstm_step(g, m.state_rnn_, nn::concat({zf, x_feat}), state);
  }

  Var start_context() {
    if (cfg().variant == Variant::ddvrnn) return g.leaf(*m.start_z_);
    return g.constant(Mat::Zero(cfg().rnn_hidden, 1));
  }

  struct BatchLoss {
    Var recon, kl, bow, bpr, total;
  };

  BatchLoss batch_loss(const std::vector<EncodedDialog>& batch, Rng& rng) {
    std::vector<Var> recon_terms, kl_terms, bow_terms;
    // posterior/prior distributions grouped by dialog position for BPR
    std::vector<std::vector<Var>> posteriors_at, priors_at;
    for (const auto& dialog : batch) {
      nn::LstmVars state = initial_state_vars();
      Var prior_context = start_context();
      size_t t = 0;
      for (const auto& ex : dialog.exchanges) {
        StepResult r = step(prior_context, state, ex, rng, /*with_decoders=*/true);
        recon_terms.push_back(r.recon_nll);
        kl_terms.push_back(r.kl);
        bow_terms.push_back(r.bow_nll);
        if (posteriors_at.size() <= t) {
          posteriors_at.emplace_back();
          priors_at.emplace_back();
        }
        posteriors_at[t].push_back(r.post_probs);
        priors_at[t].push_back(r.prior_probs);
        if (cfg().variant == Variant::ddvrnn) prior_context = r.z;
        ++t;
      }
    }
    if (recon_terms.empty()) throw Error("loss over an empty batch");
    BatchLoss loss;
    loss.recon = nn::add_all(recon_terms);
    loss.kl = nn::add_all(kl_terms);
    loss.bow = nn::add_all(bow_terms);
    // timestep-wise batch prior regularization: KL between the batch-averaged
    // posterior and prior at each dialog position
    std::vector<Var> bpr_terms;
    for (size_t t = 0; t < posteriors_at.size(); ++t) {
      Var q_bar = nn::average(posteriors_at[t]);
      Var p_bar = nn::average(priors_at[t]);
      bpr_terms.push_back(nn::sum_v(nn::mul(
          q_bar, nn::sub(nn::log_v(q_bar, 1e-10), nn::log_v(p_bar, 1e-10)))));
    }
    loss.bpr = nn::add_all(bpr_terms);
    Var kl_or_bpr = cfg().use_bpr ? loss.bpr : loss.kl;
    loss.total = nn::add(nn::add(loss.recon, kl_or_bpr),
                         nn::scale(cfg().bow_lambda, loss.bow));
    return loss;
  }
};

Vec VrnnModel::exchange_feature(const EncodedExchange& ex) const {
  Graph g(false);
  VrnnGraphOps ops(g, *this);
  return ops.feature(ex).val().col(0);
}

Vec VrnnModel::prior_dvrnn(const VrnnState& prev) const {
  if (config_.variant == Variant::ddvrnn)
    throw Error("prior_dvrnn called on a ddvrnn model");
  if (!prev.h.allFinite()) throw Error("prior_dvrnn: non-finite context");
  Graph g(false);
  VrnnGraphOps ops(g, *this);
  Var logits = ops.prior_logits(g.constant(prev.h));
  return softmax(logits.val().col(0));
}

Vec VrnnModel::prior_ddvrnn(const Vec& z_prev_onehot) const {
  if (config_.variant != Variant::ddvrnn)
    throw Error("prior_ddvrnn requires a ddvrnn model");
  if (!is_one_hot(z_prev_onehot) ||
      z_prev_onehot.size() != config_.n_states)
    throw Error("prior_ddvrnn: input must be a one-hot vector of length N");
  Graph g(false);
  VrnnGraphOps ops(g, *this);
  Var logits = ops.prior_logits(g.constant(z_prev_onehot));
  return softmax(logits.val().col(0));
}

Vec VrnnModel::prior_start_ddvrnn() const {
  if (config_.variant != Variant::ddvrnn)
    throw Error("prior_start_ddvrnn requires a ddvrnn model");
  Graph g(false);
  VrnnGraphOps ops(g, *this);
  Var logits = ops.prior_logits(ops.start_context());
  return softmax(logits.val().col(0));
}

Vec VrnnModel::posterior(const VrnnState& prev, const Vec& x_feat) const {
  if (!prev.h.allFinite() || !x_feat.allFinite())
    throw Error("posterior: non-finite inputs");
  if (x_feat.size() != 2 * config_.embed_dim)
    throw Error("posterior: feature length must be 2*embed_dim");
  Graph g(false);
  VrnnGraphOps ops(g, *this);
  Var logits = ops.posterior_logits(g.constant(prev.h), g.constant(x_feat));
  return softmax(logits.val().col(0));
}

DecodeResult VrnnModel::decode_exchange(const VrnnState& prev,
                                        const LatentSample& z,
                                        const EncodedExchange& target) const {
  Graph g(false);
  VrnnGraphOps ops(g, *this, /*ne_weight=*/false);
  Var zf = ops.zfeat(g.constant(z.relaxed));
  Var h_prev = g.constant(prev.h);
  Var dec1_h0 = nn::concat({h_prev, zf});
  auto run1 = ops.run_decoder(dec1_, dec1_out_, dec1_h0, target.user_ids,
                              target.user_ne);
  Var dec2_h0 = nn::concat({h_prev, zf, run1.last_hidden});
  auto run2 = ops.run_decoder(dec2_, dec2_out_, dec2_h0, target.system_ids,
                              target.system_ne);
  DecodeResult out;
  for (const auto& lp : run1.logprobs) out.user_logprobs.push_back(lp.scalar());
  for (const auto& lp : run2.logprobs)
    out.system_logprobs.push_back(lp.scalar());
  out.final_state.c = run1.last_hidden.val().col(0);
  out.final_state.d = run2.last_hidden.val().col(0);
  return out;
}

VrnnState VrnnModel::recurrence(const VrnnState& prev, const Vec& x_feat,
                                const LatentSample& z) const {
  Graph g(false);
  VrnnGraphOps ops(g, *this);
  Var zf = ops.zfeat(g.constant(z.relaxed));
  nn::LstmVars state{g.constant(prev.h), g.constant(prev.cell)};
  state = nn::lstm_step(g, state_rnn_, nn::concat({zf, g.constant(x_feat)}),
                        state);
  return VrnnState{state.h.val().col(0), state.c.val().col(0)};
}

double VrnnModel::ddvrnn_sequence_logprob(const std::vector<int>& states) const {
  if (config_.variant != Variant::ddvrnn)
    throw Error("ddvrnn_sequence_logprob requires a ddvrnn model");
  double joint = 1.0;
  Vec context_probs = prior_start_ddvrnn();
  for (size_t t = 0; t < states.size(); ++t) {
    const int s = states[t];
    if (s < 0 || s >= config_.n_states)
      throw Error("state id out of range in sequence");
    joint *= context_probs[s];
    if (t + 1 < states.size())
      context_probs = prior_ddvrnn(one_hot(s, config_.n_states));
  }
  return std::log(joint);
}

LossTerms VrnnModel::loss_terms(const std::vector<EncodedDialog>& batch,
                                Rng& rng) const {
  Graph g(true, &rng);
  VrnnGraphOps ops(g, *this);
  auto loss = ops.batch_loss(batch, rng);
  LossTerms t;
  t.reconstruction_nll = loss.recon.scalar();
  t.kl_term = loss.kl.scalar();
  t.bow_nll = loss.bow.scalar();
  t.bpr_kl = loss.bpr.scalar();
  t.total = loss.total.scalar();
  return t;
}

LossTerms VrnnModel::loss_and_gradients(const std::vector<EncodedDialog>& batch,
                                        Rng& rng) {
  Graph g(true, &rng);
  VrnnGraphOps ops(g, *this);
  auto loss = ops.batch_loss(batch, rng);
  g.backward(loss.total);
  g.flush_param_grads();
  LossTerms t;
  t.reconstruction_nll = loss.recon.scalar();
  t.kl_term = loss.kl.scalar();
  t.bow_nll = loss.bow.scalar();
  t.bpr_kl = loss.bpr.scalar();
  t.total = loss.total.scalar();
  return t;
}

double VrnnModel::dialog_negative_elbo(const EncodedDialog& dialog,
                                       int num_samples, Rng& rng) const {
  if (num_samples < 1) throw Error("num_samples must be >= 1");
  if (dialog.exchanges.empty()) return 0.0;
  double acc = 0.0;
  for (int s = 0; s < num_samples; ++s) {
    Graph g(false, &rng);
    VrnnGraphOps ops(g, *this, /*ne_weight=*/false);
    nn::LstmVars state = ops.initial_state_vars();
    Var prior_context = ops.start_context();
    double recon = 0.0, kl = 0.0;
    for (const auto& ex : dialog.exchanges) {
      auto r = ops.step(prior_context, state, ex, rng, /*with_decoders=*/true);
      recon += r.recon_nll.scalar();
      kl += r.kl.scalar();
      if (config_.variant == Variant::ddvrnn) prior_context = r.z;
    }
    acc += recon + kl;
  }
  return acc / num_samples;
}

// ---- assignment ----

size_t LatentAssignment::total_exchanges() const {
  size_t n = 0;
  for (const auto& d : dialogs) n += d.states.size();
  return n;
}

std::vector<int> LatentAssignment::flatten() const {
  std::vector<int> out;
  for (const auto& d : dialogs)
    out.insert(out.end(), d.states.begin(), d.states.end());
  return out;
}

LatentAssignment assign_states(const VrnnModel& model,
                               const std::vector<Dialog>& dialogs) {
  LatentAssignment assignment;
  assignment.n_states = model.config().n_states;
  const int n = model.config().n_states;
  for (const auto& dialog : dialogs) {
    EncodedDialog enc = model.encode_dialog(dialog);
    LatentAssignment::DialogStates ds;
    ds.dialog_id = dialog.dialog_id;
    Graph g(false);
    VrnnGraphOps ops(g, model);
    nn::LstmVars state = ops.initial_state_vars();
    for (const auto& ex : enc.exchanges) {
      Var x_feat = ops.feature(ex);
      Var post_logits = ops.posterior_logits(state.h, x_feat);
      Vec post = softmax(post_logits.val().col(0));
      const int s = argmax(post);
      ds.states.push_back(s);
      ds.posteriors.push_back(post);
      // deterministic assignment pass: the context consumes the argmax state
      Var zf = ops.zfeat(g.constant(one_hot(s, n)));
      state = ops.advance(state, zf, x_feat);
    }
    assignment.dialogs.push_back(std::move(ds));
  }
  return assignment;
}

// ---- training ----

namespace {

double validation_total(const VrnnModel& model,
                        const std::vector<EncodedDialog>& valid, int batch_size,
                        uint64_t seed) {
  double total = 0.0;
  Rng rng(seed);
  for (size_t at = 0; at < valid.size(); at += batch_size) {
    std::vector<EncodedDialog> batch(
        valid.begin() + at,
        valid.begin() + std::min(valid.size(), at + batch_size));
    Graph g(false, &rng);
    VrnnGraphOps ops(g, model);
    total += ops.batch_loss(batch, rng).total.scalar();
  }
  return total;
}

}  // namespace

TrainResult train(const std::vector<Dialog>& train_dialogs,
                  const std::vector<Dialog>& valid_dialogs,
                  ModelConfig config) {
  config.validate();
  if (train_dialogs.empty() || valid_dialogs.empty())
    throw Error("train requires non-empty train and valid splits");
  if (config.variant == Variant::ne_dvrnn && config.ne_weight == 1.0)
    config.ne_weight = 2.0;

  Vocab vocab = build_vocab(train_dialogs, config.min_count);
  auto model = std::make_shared<VrnnModel>(config, vocab);

  std::vector<EncodedDialog> train_enc, valid_enc;
  for (const auto& d : train_dialogs) {
    EncodedDialog e = model->encode_dialog(d);
    if (!e.exchanges.empty()) train_enc.push_back(std::move(e));
  }
  for (const auto& d : valid_dialogs) {
    EncodedDialog e = model->encode_dialog(d);
    if (!e.exchanges.empty()) valid_enc.push_back(std::move(e));
  }
  if (train_enc.empty() || valid_enc.empty())
    throw Error("train requires dialogs with at least one exchange");

  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  Rng noise_rng(derive_seed(config.seed, "noise"));
  nn::Adam adam;
  adam.lr = config.learning_rate;

  TrainResult result;
  result.model = model;
  double best_valid = std::numeric_limits<double>::infinity();
  std::map<std::string, Mat> best_params = model->params().snapshot_values();
  {
    const double v0 = validation_total(*model, valid_enc, config.batch_size,
                                       derive_seed(config.seed, "valid"));
    best_valid = v0;
  }

  std::vector<size_t> order(train_enc.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    TrainLogEntry entry;
    entry.epoch = epoch;
    for (size_t at = 0; at < order.size(); at += config.batch_size) {
      std::vector<EncodedDialog> batch;
      for (size_t i = at; i < std::min(order.size(), at + config.batch_size); ++i)
        batch.push_back(train_enc[order[i]]);
      model->params().zero_grads();
      LossTerms terms = model->loss_and_gradients(batch, noise_rng);
      if (!std::isfinite(terms.total))
        throw Error("training diverged: non-finite loss at epoch " +
                    std::to_string(epoch));
      model->params().scale_grads(1.0 / static_cast<double>(batch.size()));
      nn::clip_grad_norm(model->params(), config.grad_clip);
      adam.step(model->params());
      model->params().at("emb").value.row(kPadId).setZero();
      entry.train_total += terms.total;
      entry.train_reconstruction += terms.reconstruction_nll;
      entry.train_kl += terms.kl_term;
      entry.train_bow += terms.bow_nll;
    }
    entry.valid_total = validation_total(*model, valid_enc, config.batch_size,
                                         derive_seed(config.seed, "valid"));
    if (!std::isfinite(entry.valid_total))
      throw Error("training diverged: non-finite validation loss at epoch " +
                  std::to_string(epoch));
    if (entry.valid_total < best_valid) {
      best_valid = entry.valid_total;
      best_params = model->params().snapshot_values();
    }
    result.log.push_back(entry);
  }

  model->params().restore_values(best_params);
  result.best_valid_total = best_valid;
  return result;
}

// ---- checkpointing ----

void save_checkpoint(const VrnnModel& model, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = 1;
  manifest["variant"] = to_string(model.config().variant);
  manifest["config"] = json::parse(model.config().to_json_string());
  manifest["vocab_hash"] = model.vocab().fingerprint();
  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw Error("cannot write checkpoint manifest in " + dir);
    out << manifest.dump(2) << "\n";
  }
  model.vocab().save((fs::path(dir) / "vocab.json").string());
  model.params().save((fs::path(dir) / "params.bin").string());
}

std::shared_ptr<VrnnModel> load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw Error("cannot read checkpoint manifest in " + dir);
  json manifest;
  in >> manifest;
  if (manifest.value("format_version", 0) != 1)
    throw Error("unsupported checkpoint format in " + dir);
  ModelConfig config =
      ModelConfig::from_json_string(manifest.at("config").dump());
  Vocab vocab = Vocab::load((fs::path(dir) / "vocab.json").string());
  if (manifest.contains("vocab_hash") &&
      manifest.at("vocab_hash").get<uint64_t>() != vocab.fingerprint())
    throw Error("checkpoint vocab hash mismatch in " + dir);
  auto model = std::make_shared<VrnnModel>(config, vocab);
  model->params().load((fs::path(dir) / "params.bin").string());
  return model;
}

}  // namespace dsl
