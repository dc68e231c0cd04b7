#pragma once

#include "dsl/common.hpp"
#include "dsl/transition_table.hpp"

#include <array>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace dsl {

constexpr int kMaxUtteranceLen = 40;
constexpr int kMaxDialogLen = 10;

// Special vocab ids. An empty utterance side is stored as the single
// sentinel token so mean-pooled features stay defined.
constexpr int kPadId = 0;
constexpr int kUnkId = 1;
constexpr int kEosId = 2;
constexpr int kNosayId = 3;
constexpr int kNumSpecialTokens = 4;

enum class Side { user, system };

struct EntitySpan {
  std::string slot;
  std::string value;
  Side side = Side::user;
  int begin = 0;  // token index, inclusive
  int end = 0;    // token index, exclusive
};

struct Exchange {
  std::vector<std::string> user_tokens;
  std::vector<std::string> system_tokens;
  std::vector<EntitySpan> entities;
  int turn_index = 0;
};

struct Dialog {
  std::string dialog_id;
  std::vector<Exchange> exchanges;
};

struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;
  std::set<int> ne_token_ids;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int id(const std::string& token) const;  // unknown -> kUnkId
  bool contains(const std::string& token) const;
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  uint64_t fingerprint() const;

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);
};

// Lowercases, keeps [bracketed] placeholders whole, splits every other
// punctuation character into its own token.
std::vector<std::string> tokenize(const std::string& text);
bool is_placeholder_token(const std::string& token);

std::vector<Dialog> load_corpus(const std::string& path,
                                int max_utterance_len = kMaxUtteranceLen,
                                int max_dialog_len = kMaxDialogLen);
void save_corpus_jsonl(const std::vector<Dialog>& dialogs,
                       const std::string& path);

struct StateTemplates {
  std::vector<std::string> user;
  std::vector<std::string> system;
};

struct GeneratorConfig {
  std::vector<std::string> states;  // states[0] is the start state
  Mat transitions;                  // row-stochastic over `states`
  std::map<std::string, StateTemplates> templates;
  double asr_error_rate = 0.0;
  int num_dialogs = 0;
  uint64_t seed = 0;

  int state_index(const std::string& name) const;
  void validate() const;  // throws on bad rows or unreachable absorbing state

  static GeneratorConfig load(const std::string& path);
  void save(const std::string& path) const;
};

struct GeneratedCorpus {
  std::vector<Dialog> dialogs;
  TransitionTable truth;                      // exact generator matrix
  std::vector<std::vector<int>> state_seqs;   // per dialog, per exchange
};

GeneratedCorpus generate_weather_corpus(const GeneratorConfig& config);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct CorpusSplit {
  std::vector<Dialog> train;
  std::vector<Dialog> valid;
  std::vector<Dialog> test;
};

CorpusSplit split_corpus(const std::vector<Dialog>& dialogs, SplitRatios ratios,
                         uint64_t seed);

// slot type -> value token sequences
using Lexicon = std::map<std::string, std::vector<std::vector<std::string>>>;

Exchange delexicalize(const Exchange& exchange, const Lexicon& lexicon);

Vocab build_vocab(const std::vector<Dialog>& dialogs, int min_count);

// Hand-set 9-state weather machine matching the states seen in the simulated
// weather domain; probabilities live here, not in the model.
GeneratorConfig default_weather_config(int num_dialogs, uint64_t seed,
                                       double asr_error_rate = 0.2);

// Corpus whose two "time request" states emit an identical exchange in two
// different contexts; used for the context-sensitivity comparisons.
GeneratorConfig ambiguous_context_config(int num_dialogs, uint64_t seed);

uint64_t corpus_fingerprint(const std::vector<Dialog>& dialogs);

}  // namespace dsl
