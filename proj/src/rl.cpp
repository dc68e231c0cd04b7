#include "dsl/rl.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace dsl::rl {

using nn::Graph;
using nn::Var;

namespace {
const std::array<std::string, 3> kInformables = {"food", "price", "area"};
const std::array<std::string, 3> kRequestables = {"address", "phone",
                                                  "postcode"};

std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}
}  // namespace

int action_category(int action) {
  switch (action) {
    case kAskFood:
    case kAskPrice:
    case kAskArea:
      return 0;
    case kPresentResult:
    case kPresentAlternative:
      return 1;
    case kGiveInfo:
      return 2;
    case kClosing:
      return 3;
    default:
      throw Error("unknown action id " + std::to_string(action));
  }
}

std::string action_name(int action) {
  static const std::array<std::string, kNumActions> names = {
      "ask_food",           "ask_price", "ask_area", "present_result",
      "present_alternative", "give_info", "closing"};
  if (action < 0 || action >= kNumActions)
    throw Error("unknown action id " + std::to_string(action));
  return names[action];
}

std::string category_name(int category) {
  static const std::array<std::string, kNumCategories> names = {
      "ask_for_entity", "present_results", "give_info", "closing"};
  if (category < 0 || category >= kNumCategories)
    throw Error("unknown category id " + std::to_string(category));
  return names[category];
}

int Goal::requested_count() const {
  int n = 0;
  for (bool b : requested) n += b ? 1 : 0;
  return n;
}

bool EnvState::all_goal_requestables_provided() const {
  for (int i = 0; i < 3; ++i)
    if (goal.requested[i] && requestables[i] != SlotStatus::provided)
      return false;
  return true;
}

EnvState new_episode_state(Rng& rng) {
  EnvState s;
  std::bernoulli_distribution want(0.5);
  do {
    for (int i = 0; i < 3; ++i) s.goal.requested[i] = want(rng);
  } while (s.goal.requested_count() == 0);
  return s;
}

std::vector<std::string> simulate_user(EnvState& state, Rng& rng) {
  std::bernoulli_distribution mention(0.6);
  std::bernoulli_distribution alt(0.3);

  auto provide_informable = [&](int slot) {
    state.informable_set[slot] = true;
    ++state.entity_events;
  };
  auto request_next = [&]() -> std::vector<std::string> {
    for (int i = 0; i < 3; ++i) {
      if (state.goal.requested[i] &&
          state.requestables[i] == SlotStatus::unrequested) {
        state.requestables[i] = SlotStatus::requested;
        ++state.entity_events;
        return words("what is their [slot_" + kRequestables[i] + "] ?");
      }
    }
    // everything was asked; nudge for the still-missing one
    for (int i = 0; i < 3; ++i) {
      if (state.goal.requested[i] &&
          state.requestables[i] == SlotStatus::requested)
        return words("i still need the [slot_" + kRequestables[i] + "] please");
    }
    return words("thank you");
  };
  auto closing_utterance = [&]() {
    state.user_closed = true;
    return words("thank you , that is all");
  };

  const int last = state.last_system_action;
  if (last < 0) {
    // opening request mentioning a random nonempty subset of constraints
    std::array<bool, 3> mentioned{};
    do {
      for (int i = 0; i < 3; ++i) mentioned[i] = mention(rng);
    } while (!mentioned[0] && !mentioned[1] && !mentioned[2]);
    std::string text = "i am looking for a restaurant";
    if (mentioned[0]) text += " serving [value_food] food";
    if (mentioned[1]) text += " in the [value_price] price range";
    if (mentioned[2]) text += " in the [value_area] part of town";
    for (int i = 0; i < 3; ++i)
      if (mentioned[i]) provide_informable(i);
    return words(text + " .");
  }

  switch (last) {
    case kAskFood:
      provide_informable(0);
      return words("i would like [value_food] food please");
    case kAskPrice:
      provide_informable(1);
      return words("something in the [value_price] price range");
    case kAskArea:
      provide_informable(2);
      return words("the [value_area] part of town please");
    case kPresentResult:
    case kPresentAlternative: {
      if (state.all_goal_requestables_provided()) return closing_utterance();
      if (!state.asked_alternative && alt(rng)) {
        state.asked_alternative = true;
        state.wants_alternative = true;
        return words("what other options are there ?");
      }
      return request_next();
    }
    case kGiveInfo: {
      if (state.all_goal_requestables_provided()) return closing_utterance();
      return request_next();
    }
    case kClosing: {
      // premature goodbye; the user restates what is still missing
      if (state.user_closed && state.all_goal_requestables_provided())
        return words("goodbye");
      for (int i = 0; i < 3; ++i) {
        if (!state.informable_set[i]) {
          provide_informable(i);
          return words("wait , i want [value_" + kInformables[i] + "]");
        }
      }
      if (!state.results_presented)
        return words("wait , which restaurant matches ?");
      return request_next();
    }
    default:
      throw Error("simulate_user: unknown last action");
  }
}

std::array<bool, kNumActions> action_mask(const EnvState& state) {
  std::array<bool, kNumActions> mask{};
  mask[kAskFood] = !state.informable_set[0];
  mask[kAskPrice] = !state.informable_set[1];
  mask[kAskArea] = !state.informable_set[2];
  // present_result issues the query itself, so it only needs the constraints;
  // everything downstream of the query stays masked until it happened
  mask[kPresentResult] =
      state.informable_set[0] && state.informable_set[1] && state.informable_set[2];
  mask[kPresentAlternative] = state.db_queried;
  mask[kGiveInfo] = state.results_presented;
  mask[kClosing] = state.results_presented;
  return mask;
}

bool apply_system_action(EnvState& state, int action) {
  bool success = false;
  switch (action) {
    case kAskFood:
    case kAskPrice:
    case kAskArea:
      break;
    case kPresentResult:
      if (!state.db_queried) ++state.entity_events;
      state.db_queried = true;
      state.results_presented = true;
      state.wants_alternative = false;
      break;
    case kPresentAlternative:
      state.wants_alternative = false;
      break;
    case kGiveInfo:
      for (int i = 0; i < 3; ++i) {
        if (state.requestables[i] == SlotStatus::requested) {
          state.requestables[i] = SlotStatus::provided;
          ++state.entity_events;
        }
      }
      break;
    case kClosing:
      success = state.user_closed && state.all_goal_requestables_provided();
      break;
    default:
      throw Error("apply_system_action: unknown action");
  }
  state.last_system_action = action;
  ++state.turn;
  return success;
}

int feature_dim() { return 13 + kNumActions + 1 + 1; }

Vec policy_features(const EnvState& state) {
  Vec f = Vec::Zero(feature_dim());
  int at = 0;
  for (int i = 0; i < 3; ++i) f[at++] = state.informable_set[i] ? 1 : 0;
  for (int i = 0; i < 3; ++i)
    f[at++] = state.requestables[i] == SlotStatus::requested ? 1 : 0;
  for (int i = 0; i < 3; ++i)
    f[at++] = state.requestables[i] == SlotStatus::provided ? 1 : 0;
  f[at++] = state.db_queried ? 1 : 0;
  f[at++] = state.results_presented ? 1 : 0;
  f[at++] = state.user_closed ? 1 : 0;
  f[at++] = state.wants_alternative ? 1 : 0;
  for (int a = 0; a < kNumActions; ++a)
    f[at++] = state.last_system_action == a ? 1 : 0;
  f[at++] = state.last_system_action < 0 ? 1 : 0;
  f[at++] = static_cast<double>(state.turn) / kMaxTurns;
  return f;
}

int rule_based_action(const EnvState& state) {
  for (int i = 0; i < 3; ++i)
    if (!state.informable_set[i]) return kAskFood + i;
  if (!state.db_queried) return kPresentResult;
  if (state.wants_alternative) return kPresentAlternative;
  for (int i = 0; i < 3; ++i)
    if (state.requestables[i] == SlotStatus::requested) return kGiveInfo;
  if (state.user_closed && state.all_goal_requestables_provided())
    return kClosing;
  return kPresentResult;
}

std::string to_string(RewardScheme s) {
  switch (s) {
    case RewardScheme::baseline: return "baseline";
    case RewardScheme::rep: return "rep";
    case RewardScheme::kl: return "kl";
    case RewardScheme::kl_rep: return "kl_rep";
  }
  throw Error("unknown reward scheme");
}

RewardScheme scheme_from_string(const std::string& s) {
  if (s == "baseline") return RewardScheme::baseline;
  if (s == "rep") return RewardScheme::rep;
  if (s == "kl") return RewardScheme::kl;
  if (s == "kl_rep") return RewardScheme::kl_rep;
  throw Error("unknown reward scheme '" + s +
              "' (expected baseline|rep|kl|kl_rep)");
}

void RewardSpec::validate() const {
  if (!uses_kl()) return;
  if (p_trans.rows() != kNumCategories || p_trans.cols() != kNumCategories)
    throw Error("KL reward schemes need a 4x4 collapsed transition table");
  for (int i = 0; i < kNumCategories; ++i)
    if (!is_simplex(p_trans.row(i).transpose(), 1e-6))
      throw Error("collapsed transition row " + std::to_string(i) +
                  " is not a distribution");
}

double compute_reward(const RewardSpec& spec, RewardEvent event,
                      const Vec& p_trans_row, const Vec& p_pred) {
  switch (event) {
    case RewardEvent::success:
      return spec.success_reward;
    case RewardEvent::failure:
      return spec.failure_reward;
    case RewardEvent::proceeding_turn:
      return spec.turn_penalty;
    case RewardEvent::repeated_question:
      break;
  }
  switch (spec.scheme) {
    case RewardScheme::baseline:
      return -1;
    case RewardScheme::rep:
      return -5;
    case RewardScheme::kl:
    case RewardScheme::kl_rep: {
      if (!is_simplex(p_trans_row) || !is_simplex(p_pred))
        throw Error("compute_reward: KL schemes need valid distributions");
      const double kl = kl_divergence(p_trans_row, p_pred, 1e-10);
      return spec.scheme == RewardScheme::kl ? -kl : -kl - 2.0;
    }
  }
  throw Error("unknown reward scheme");
}

std::vector<double> discounted_returns(const std::vector<double>& rewards,
                                       double discount) {
  std::vector<double> g(rewards.size(), 0.0);
  double acc = 0;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    acc = rewards[t] + discount * acc;
    g[t] = acc;
  }
  return g;
}

// ---- policy ----

Policy::Policy(uint64_t seed) {
  Rng rng(derive_seed(seed, "policy_init"));
  lstm_ = nn::make_lstm(params_, "lstm", feature_dim(), 32, rng);
  head_w_ = &params_.create("head.w", kNumActions, 32);
  head_b_ = &params_.create("head.b", kNumActions, 1);
  nn::fill_uniform(head_w_->value, -0.1, 0.1, rng);
}

std::unique_ptr<PolicyEpisode> Policy::begin_episode(Rng* rng) {
  auto ep = std::make_unique<PolicyEpisode>(rng);
  ep->state = nn::LstmVars{ep->graph.constant(Mat::Zero(32, 1)),
                           ep->graph.constant(Mat::Zero(32, 1))};
  return ep;
}

int Policy::step(PolicyEpisode& ep, const Vec& features,
                 const std::array<bool, kNumActions>& mask, double epsilon,
                 Rng& rng, Vec* p_pred) {
  int allowed = 0;
  for (bool b : mask) allowed += b ? 1 : 0;
  if (allowed == 0) throw Error("policy_step: no action allowed by the mask");

  Graph& g = ep.graph;
  ep.state = nn::lstm_step(g, lstm_, g.constant(features), ep.state);
  Var logits = nn::add(nn::matmul(g.leaf(*head_w_), ep.state.h), g.leaf(*head_b_));
  Vec mask_add = Vec::Zero(kNumActions);
  for (int a = 0; a < kNumActions; ++a)
    if (!mask[a]) mask_add[a] = -1e30;
  Var logp = nn::log_softmax_v(nn::add(logits, g.constant(mask_add)));
  Vec probs = logp.val().col(0).array().exp();

  int action;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < epsilon) {
    std::uniform_int_distribution<int> pick_allowed(0, allowed - 1);
    int k = pick_allowed(rng);
    action = -1;
    for (int a = 0; a < kNumActions; ++a) {
      if (mask[a] && k-- == 0) {
        action = a;
        break;
      }
    }
  } else {
    double r = unit(rng);
    action = kNumActions - 1;
    for (int a = 0; a < kNumActions; ++a) {
      r -= probs[a];
      if (r <= 0) {
        action = a;
        break;
      }
    }
    while (!mask[action]) --action;  // guard against roundoff leakage
  }

  if (p_pred) {
    *p_pred = Vec::Zero(kNumCategories);
    for (int a = 0; a < kNumActions; ++a)
      (*p_pred)[action_category(a)] += probs[a];
  }
  ep.chosen_logprobs.push_back(nn::pick(logp, action));
  return action;
}

namespace {
Vec masked_logits_add(const std::array<bool, kNumActions>& mask) {
  Vec add = Vec::Zero(kNumActions);
  for (int a = 0; a < kNumActions; ++a)
    if (!mask[a]) add[a] = -1e30;
  return add;
}
}  // namespace

void Policy::forced_step(PolicyEpisode& ep, const Vec& features, int action) {
  Graph& g = ep.graph;
  ep.state = nn::lstm_step(g, lstm_, g.constant(features), ep.state);
  Var logits = nn::add(nn::matmul(g.leaf(*head_w_), ep.state.h), g.leaf(*head_b_));
  Var logp = nn::log_softmax_v(logits);
  ep.chosen_logprobs.push_back(nn::pick(logp, action));
}

int Policy::greedy_action(PolicyEpisode& ep, const Vec& features,
                          const std::array<bool, kNumActions>& mask) {
  Graph& g = ep.graph;
  ep.state = nn::lstm_step(g, lstm_, g.constant(features), ep.state);
  Var logits = nn::add(nn::matmul(g.leaf(*head_w_), ep.state.h), g.leaf(*head_b_));
  Vec masked = logits.val().col(0) + masked_logits_add(mask);
  return argmax(masked);
}

void Policy::reinforce_update(PolicyEpisode& ep,
                              const std::vector<double>& rewards,
                              double discount, double learning_rate) {
  if (rewards.size() != ep.chosen_logprobs.size())
    throw Error("reinforce_update: reward/step count mismatch");
  if (rewards.empty()) throw Error("reinforce_update: empty trajectory");
  const std::vector<double> returns = discounted_returns(rewards, discount);

  std::vector<Var> terms;
  for (size_t t = 0; t < returns.size(); ++t)
    terms.push_back(
        nn::scale(-(returns[t] - baseline_), ep.chosen_logprobs[t]));
  Var loss = nn::add_all(terms);
  params_.zero_grads();
  ep.graph.backward(loss);
  ep.graph.flush_param_grads();
  if (!std::isfinite(nn::global_grad_norm(params_)))
    throw Error("reinforce_update: non-finite policy gradient");
  nn::clip_grad_norm(params_, 5.0);
  for (auto& p : params_.items()) p->value -= learning_rate * p->grad;

  for (double g : returns) {
    ++baseline_count_;
    baseline_ += (g - baseline_) / static_cast<double>(baseline_count_);
  }
}

void Policy::supervised_update(PolicyEpisode& ep,
                               const std::vector<int>& actions,
                               double learning_rate) {
  if (actions.size() != ep.chosen_logprobs.size())
    throw Error("supervised_update: teacher/step count mismatch");
  // chosen_logprobs were picked at the teacher actions during rollout
  std::vector<Var> terms;
  for (const auto& lp : ep.chosen_logprobs) terms.push_back(nn::scale(-1.0, lp));
  Var loss = nn::add_all(terms);
  params_.zero_grads();
  ep.graph.backward(loss);
  ep.graph.flush_param_grads();
  nn::clip_grad_norm(params_, 5.0);
  for (auto& p : params_.items()) p->value -= learning_rate * p->grad;
}

// ---- episode loop ----

namespace {

// act(state, mask, features, &p_pred) -> action id
template <typename ActFn>
Trajectory episode_loop(const RewardSpec& spec, Rng& rng, ActFn act) {
  spec.validate();
  Trajectory trajectory;
  EnvState state = new_episode_state(rng);
  long events_at_last_action = -1;
  int prev_action = -1;
  int prev_category = -1;

  for (int turn = 1; turn <= kMaxTurns; ++turn) {
    simulate_user(state, rng);
    const Vec features = policy_features(state);
    const auto mask = action_mask(state);
    Vec p_pred;
    const long events_before = state.entity_events;
    const int action = act(state, mask, features, &p_pred);
    if (!mask[action]) throw Error("actor chose a masked action");
    const bool success = apply_system_action(state, action);

    TrajectoryStep step;
    step.features = features;
    step.action = action;
    step.p_pred = p_pred;

    RewardEvent event;
    if (success) {
      event = RewardEvent::success;
      trajectory.outcome = Outcome::success;
    } else if (turn == kMaxTurns) {
      event = RewardEvent::failure;  // timeout scores as failure
      trajectory.outcome = Outcome::timeout;
    } else if (action == prev_action && events_before == events_at_last_action &&
               state.entity_events == events_before) {
      event = RewardEvent::repeated_question;
    } else {
      event = RewardEvent::proceeding_turn;
    }

    Vec p_trans_row = Vec::Constant(kNumCategories, 1.0 / kNumCategories);
    if (spec.uses_kl() && prev_category >= 0)
      p_trans_row = spec.p_trans.row(prev_category).transpose();
    // optional variant: shape every non-terminal turn, not just repetitions
    if (event == RewardEvent::proceeding_turn && spec.kl_every_turn &&
        spec.uses_kl() && prev_category >= 0) {
      step.reward = compute_reward(spec, RewardEvent::repeated_question,
                                   p_trans_row, p_pred);
    } else {
      step.reward = compute_reward(spec, event, p_trans_row, p_pred);
    }

    trajectory.steps.push_back(std::move(step));
    prev_action = action;
    prev_category = action_category(action);
    events_at_last_action = state.entity_events;
    if (success || turn == kMaxTurns) break;
  }
  return trajectory;
}

}  // namespace

EpisodeRecord run_episode(Policy& policy, const RewardSpec& spec, Rng& rng,
                          double epsilon, bool keep_graph) {
  EpisodeRecord record;
  record.episode = policy.begin_episode(&rng);
  record.trajectory = episode_loop(
      spec, rng,
      [&](const EnvState&, const std::array<bool, kNumActions>& mask,
          const Vec& features, Vec* p_pred) {
        return policy.step(*record.episode, features, mask, epsilon, rng,
                           p_pred);
      });
  if (!keep_graph) record.episode.reset();
  return record;
}

Trajectory run_rule_episode(const RewardSpec& spec, Rng& rng) {
  return episode_loop(
      spec, rng,
      [](const EnvState& state, const std::array<bool, kNumActions>&,
         const Vec&, Vec* p_pred) {
        const int action = rule_based_action(state);
        *p_pred = one_hot(action_category(action), kNumCategories);
        return action;
      });
}

void warm_start(Policy& policy, int n_dialogs, uint64_t seed,
                double learning_rate, int epochs) {
  if (n_dialogs == 0) return;
  if (n_dialogs < 0) throw Error("warm_start: negative dialog count");

  // record teacher episodes once, then fit with cross entropy
  struct Teacher {
    std::vector<Vec> features;
    std::vector<int> actions;
  };
  std::vector<Teacher> data;
  Rng env_rng(derive_seed(seed, "warm_env"));
  for (int d = 0; d < n_dialogs; ++d) {
    Teacher teacher;
    EnvState state = new_episode_state(env_rng);
    for (int turn = 1; turn <= kMaxTurns; ++turn) {
      simulate_user(state, env_rng);
      teacher.features.push_back(policy_features(state));
      const int action = rule_based_action(state);
      teacher.actions.push_back(action);
      if (apply_system_action(state, action)) break;
    }
    data.push_back(std::move(teacher));
  }

  Rng order_rng(derive_seed(seed, "warm_order"));
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (size_t idx : order) {
      const Teacher& teacher = data[idx];
      auto ep = policy.begin_episode(nullptr);
      for (size_t t = 0; t < teacher.features.size(); ++t)
        policy.forced_step(*ep, teacher.features[t], teacher.actions[t]);
      policy.supervised_update(*ep, teacher.actions, learning_rate);
    }
  }
}

double evaluate_success(Policy& policy, int n_dialogs, Rng& rng) {
  if (n_dialogs < 1) throw Error("evaluate_success: need at least one dialog");
  RewardSpec spec;  // baseline rewards; they do not affect the rollout
  int wins = 0;
  for (int d = 0; d < n_dialogs; ++d) {
    EpisodeRecord record = run_episode(policy, spec, rng, 0.0, false);
    if (record.trajectory.outcome == Outcome::success) ++wins;
  }
  return static_cast<double>(wins) / n_dialogs;
}

double rule_agreement(Policy& policy, int n_dialogs, Rng& rng) {
  long agree = 0, total = 0;
  for (int d = 0; d < n_dialogs; ++d) {
    EnvState state = new_episode_state(rng);
    auto ep = policy.begin_episode(nullptr);
    for (int turn = 1; turn <= kMaxTurns; ++turn) {
      simulate_user(state, rng);
      const Vec features = policy_features(state);
      const int teacher = rule_based_action(state);
      const int predicted =
          policy.greedy_action(*ep, features, action_mask(state));
      agree += predicted == teacher ? 1 : 0;
      ++total;
      if (apply_system_action(state, teacher)) break;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(agree) / total;
}

// ---- experiment ----

std::vector<LearningCurve> rl_experiment(const std::vector<RewardSpec>& schemes,
                                         const ExperimentConfig& config) {
  if (schemes.empty()) throw Error("rl_experiment: no reward schemes");
  for (const auto& s : schemes) s.validate();
  if (config.total_dialogs < 1 || config.eval_every < 1 ||
      config.total_dialogs % config.eval_every != 0)
    throw Error("rl_experiment: eval_every must divide total_dialogs");
  const int checkpoints = config.total_dialogs / config.eval_every;

  // one warm-started policy per repeat, shared across schemes
  std::vector<std::map<std::string, Mat>> warm_snapshots;
  for (int r = 0; r < config.repeats; ++r) {
    Policy policy(derive_seed(config.seed, "policy" + std::to_string(r)));
    warm_start(policy, config.warm_start_dialogs,
               derive_seed(config.seed, "warm" + std::to_string(r)));
    warm_snapshots.push_back(policy.snapshot());
  }

  std::vector<LearningCurve> curves(schemes.size());
  for (size_t s = 0; s < schemes.size(); ++s) {
    curves[s].scheme = to_string(schemes[s].scheme);
    curves[s].by_repeat = Mat::Zero(config.repeats, checkpoints);
  }

  struct Task {
    size_t scheme;
    int repeat;
  };
  std::vector<Task> tasks;
  for (size_t s = 0; s < schemes.size(); ++s)
    for (int r = 0; r < config.repeats; ++r) tasks.push_back({s, r});

  auto run_task = [&](const Task& task) {
    const RewardSpec& spec = schemes[task.scheme];
    Policy policy(derive_seed(config.seed, "policy" + std::to_string(task.repeat)));
    policy.restore(warm_snapshots[task.repeat]);
    Rng rng(derive_seed(config.seed, "train_" + to_string(spec.scheme) + "_" +
                                         std::to_string(task.repeat)));
    for (int d = 1; d <= config.total_dialogs; ++d) {
      EpisodeRecord record = run_episode(policy, spec, rng, config.epsilon);
      std::vector<double> rewards;
      for (const auto& step : record.trajectory.steps)
        rewards.push_back(step.reward);
      policy.reinforce_update(*record.episode, rewards, config.discount,
                              config.learning_rate);
      if (d % config.eval_every == 0) {
        Rng eval_rng(derive_seed(config.seed,
                                 "eval_" + std::to_string(task.repeat) + "_" +
                                     std::to_string(d)));
        curves[task.scheme].by_repeat(task.repeat, d / config.eval_every - 1) =
            evaluate_success(policy, config.eval_dialogs, eval_rng);
      }
    }
  };

  const int jobs = std::max(1, config.jobs);
  if (jobs == 1) {
    for (const auto& task : tasks) run_task(task);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&]() {
        while (true) {
          const size_t i = next.fetch_add(1);
          if (i >= tasks.size()) break;
          run_task(tasks[i]);
        }
      });
    }
    for (auto& t : workers) t.join();
  }

  for (auto& curve : curves) {
    curve.mean = curve.by_repeat.colwise().mean();
    curve.variance = Vec::Zero(checkpoints);
    for (int c = 0; c < checkpoints; ++c) {
      const Vec col = curve.by_repeat.col(c);
      curve.variance[c] = (col.array() - curve.mean[c]).square().mean();
    }
  }
  return curves;
}

void save_curves_csv(const std::vector<LearningCurve>& curves,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write curves csv: " + path);
  out << "scheme,repeat,checkpoint,success_rate\n";
  for (const auto& curve : curves)
    for (int r = 0; r < curve.by_repeat.rows(); ++r)
      for (int c = 0; c < curve.by_repeat.cols(); ++c)
        out << curve.scheme << "," << r << "," << c + 1 << ","
            << format_double(curve.by_repeat(r, c), 4) << "\n";
}

void save_curves_summary_csv(const std::vector<LearningCurve>& curves,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write curves summary csv: " + path);
  out << "scheme,checkpoint,mean_success,variance\n";
  for (const auto& curve : curves)
    for (int c = 0; c < curve.mean.size(); ++c)
      out << curve.scheme << "," << c + 1 << ","
          << format_double(curve.mean[c], 4) << ","
          << format_double(curve.variance[c], 6) << "\n";
}

}  // namespace dsl::rl
