#pragma once

#include "dsl/common.hpp"
#include "dsl/nn.hpp"

#include <array>
#include <memory>
#include <string>
#include <vector>

namespace dsl::rl {

// Seven system template actions in four categories.
enum Action : int {
  kAskFood = 0,
  kAskPrice = 1,
  kAskArea = 2,
  kPresentResult = 3,       // issues the DB query and presents a venue
  kPresentAlternative = 4,  // presents another venue for the same query
  kGiveInfo = 5,            // provides the requested slots
  kClosing = 6,
};
constexpr int kNumActions = 7;
constexpr int kNumCategories = 4;  // ask-entity, present, give-info, closing
constexpr int kMaxTurns = 10;

int action_category(int action);
std::string action_name(int action);
std::string category_name(int category);

enum class SlotStatus { unrequested, requested, provided };

struct Goal {
  std::array<bool, 3> requested{};  // address, phone, postcode
  int requested_count() const;
};

struct EnvState {
  std::array<bool, 3> informable_set{};      // food, price, area
  std::array<SlotStatus, 3> requestables{};  // address, phone, postcode
  bool db_queried = false;
  bool results_presented = false;
  bool user_closed = false;
  bool wants_alternative = false;
  bool asked_alternative = false;
  int last_system_action = -1;
  int turn = 0;            // system turns taken
  long entity_events = 0;  // bumps whenever slot knowledge advances
  Goal goal;

  bool all_goal_requestables_provided() const;
};

EnvState new_episode_state(Rng& rng);

// Emits the next delexicalized user utterance given the system's last action
// and advances the slot bookkeeping.
std::vector<std::string> simulate_user(EnvState& state, Rng& rng);

std::array<bool, kNumActions> action_mask(const EnvState& state);

// Applies a system action's effects; returns true when the episode is won.
bool apply_system_action(EnvState& state, int action);

Vec policy_features(const EnvState& state);
int feature_dim();

int rule_based_action(const EnvState& state);

enum class RewardScheme { baseline, rep, kl, kl_rep };
std::string to_string(RewardScheme s);
RewardScheme scheme_from_string(const std::string& s);

struct RewardSpec {
  RewardScheme scheme = RewardScheme::baseline;
  double success_reward = 20;
  double failure_reward = -10;
  double turn_penalty = -1;
  Mat p_trans;  // collapsed 4x4 table, required by the KL schemes
  // Algorithm-style shaping applies the KL penalty only at repeated
  // questions; this switch applies it at every non-terminal turn instead.
  bool kl_every_turn = false;

  bool uses_kl() const {
    return scheme == RewardScheme::kl || scheme == RewardScheme::kl_rep;
  }
  void validate() const;
};

enum class RewardEvent { success, failure, repeated_question, proceeding_turn };

double compute_reward(const RewardSpec& spec, RewardEvent event,
                      const Vec& p_trans_row, const Vec& p_pred);

struct TrajectoryStep {
  Vec features;
  int action = 0;
  Vec p_pred;  // category distribution, length 4
  double reward = 0;
};

enum class Outcome { success, failure, timeout };

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  Outcome outcome = Outcome::timeout;
};

std::vector<double> discounted_returns(const std::vector<double>& rewards,
                                       double discount);

class Policy;

// Graph and chosen-action log-probs of one episode, kept alive for the update.
struct PolicyEpisode {
  nn::Graph graph;
  nn::LstmVars state;
  std::vector<nn::Var> chosen_logprobs;
  explicit PolicyEpisode(Rng* rng) : graph(true, rng) {}
};

class Policy {
 public:
  explicit Policy(uint64_t seed);

  std::unique_ptr<PolicyEpisode> begin_episode(Rng* rng);
  // Samples an action (epsilon-greedy over the masked distribution); writes
  // the 4-way category marginal into p_pred.
  int step(PolicyEpisode& ep, const Vec& features,
           const std::array<bool, kNumActions>& mask, double epsilon, Rng& rng,
           Vec* p_pred);

  // Teacher-forced step: records the log-prob of `action` instead of sampling.
  void forced_step(PolicyEpisode& ep, const Vec& features, int action);
  // Deterministic argmax over the masked distribution; records nothing.
  int greedy_action(PolicyEpisode& ep, const Vec& features,
                    const std::array<bool, kNumActions>& mask);

  // REINFORCE ascent on the discounted returns with a running-mean baseline.
  void reinforce_update(PolicyEpisode& ep, const std::vector<double>& rewards,
                        double discount, double learning_rate);

  // One cross-entropy step toward the teacher actions of an episode.
  void supervised_update(PolicyEpisode& ep, const std::vector<int>& actions,
                         double learning_rate);

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  double baseline() const { return baseline_; }

  std::map<std::string, Mat> snapshot() const { return params_.snapshot_values(); }
  void restore(const std::map<std::string, Mat>& snap) {
    params_.restore_values(snap);
  }

 private:
  nn::ParamStore params_;
  nn::LstmCell lstm_;
  nn::Param* head_w_ = nullptr;
  nn::Param* head_b_ = nullptr;
  double baseline_ = 0;
  long baseline_count_ = 0;
};

struct EpisodeRecord {
  Trajectory trajectory;
  std::unique_ptr<PolicyEpisode> episode;
};

EpisodeRecord run_episode(Policy& policy, const RewardSpec& spec, Rng& rng,
                          double epsilon, bool keep_graph = true);

// Same environment and reward events, driven by the rule-based agent.
Trajectory run_rule_episode(const RewardSpec& spec, Rng& rng);

// Imitation of the rule-based agent on freshly simulated dialogs.
void warm_start(Policy& policy, int n_dialogs, uint64_t seed,
                double learning_rate = 5e-3, int epochs = 3);

double evaluate_success(Policy& policy, int n_dialogs, Rng& rng);

// Fraction of states where the policy argmax matches the rule-based agent.
double rule_agreement(Policy& policy, int n_dialogs, Rng& rng);

struct LearningCurve {
  std::string scheme;
  Mat by_repeat;  // repeats x checkpoints
  Vec mean;
  Vec variance;
};

struct ExperimentConfig {
  int total_dialogs = 2000;
  int eval_every = 1000;
  int eval_dialogs = 200;
  int repeats = 10;
  int warm_start_dialogs = 500;
  double epsilon = 0.1;
  double learning_rate = 1e-2;
  double discount = 0.9;
  uint64_t seed = 1;
  int jobs = 1;
};

std::vector<LearningCurve> rl_experiment(const std::vector<RewardSpec>& schemes,
                                         const ExperimentConfig& config);

void save_curves_csv(const std::vector<LearningCurve>& curves,
                     const std::string& path);
void save_curves_summary_csv(const std::vector<LearningCurve>& curves,
                             const std::string& path);

}  // namespace dsl::rl
