#include "dsl/corpus.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dsl {

using nlohmann::json;

bool is_placeholder_token(const std::string& token) {
  return token.size() >= 3 && token.front() == '[' && token.back() == ']' &&
         token.find(' ') == std::string::npos;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  size_t i = 0;
  while (i < text.size()) {
    const char raw = text[i];
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
      ++i;
      continue;
    }
    if (c == '[') {
      // keep a bracketed placeholder whole when it closes before whitespace
      size_t j = i + 1;
      while (j < text.size() && text[j] != ']' &&
             !std::isspace(static_cast<unsigned char>(text[j])))
        ++j;
      if (j < text.size() && text[j] == ']') {
        flush();
        std::string ph;
        for (size_t k = i; k <= j; ++k)
          ph.push_back(static_cast<char>(
              std::tolower(static_cast<unsigned char>(text[k]))));
        tokens.push_back(ph);
        i = j + 1;
        continue;
      }
    }
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      cur.push_back(c);
    } else {
      flush();
      tokens.push_back(std::string(1, c));
    }
    ++i;
  }
  flush();
  return tokens;
}

// ---- Vocab ----

int Vocab::id(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnkId : it->second;
}

bool Vocab::contains(const std::string& token) const {
  return token_to_id.count(token) > 0;
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

uint64_t Vocab::fingerprint() const {
  uint64_t h = hash64("vocab");
  for (const auto& t : id_to_token) h = hash64_combine(h, hash64(t));
  for (int i : ne_token_ids) h = hash64_combine(h, static_cast<uint64_t>(i));
  return h;
}

void Vocab::save(const std::string& path) const {
  json j;
  j["tokens"] = id_to_token;
  j["ne_token_ids"] = std::vector<int>(ne_token_ids.begin(), ne_token_ids.end());
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocab file: " + path);
  out << j.dump(2) << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read vocab file: " + path);
  json j;
  in >> j;
  Vocab v;
  v.id_to_token = j.at("tokens").get<std::vector<std::string>>();
  for (int i = 0; i < static_cast<int>(v.id_to_token.size()); ++i)
    v.token_to_id[v.id_to_token[i]] = i;
  for (int i : j.at("ne_token_ids").get<std::vector<int>>())
    v.ne_token_ids.insert(i);
  if (v.size() < kNumSpecialTokens || v.id_to_token[kPadId] != "<pad>")
    throw Error("vocab file missing special tokens: " + path);
  return v;
}

// ---- corpus io ----

namespace {

std::vector<std::string> tokenize_truncated(const std::string& text,
                                            int max_len) {
  std::vector<std::string> toks = tokenize(text);
  if (static_cast<int>(toks.size()) > max_len) toks.resize(max_len);
  if (toks.empty()) toks.push_back("<nosay>");
  return toks;
}

Side side_from_string(const std::string& s) {
  if (s == "user") return Side::user;
  if (s == "system") return Side::system;
  throw Error("entity side must be 'user' or 'system', got '" + s + "'");
}

std::string side_to_string(Side s) {
  return s == Side::user ? "user" : "system";
}

}  // namespace

std::vector<Dialog> load_corpus(const std::string& path, int max_utterance_len,
                                int max_dialog_len) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path);
  std::vector<Dialog> dialogs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("line " + std::to_string(line_no) +
                  ": malformed json record: " + e.what());
    }
    Dialog dialog;
    try {
      dialog.dialog_id = j.at("dialog_id").get<std::string>();
      const auto& turns = j.at("turns");
      if (!turns.is_array())
        throw Error("'turns' must be an array");
      for (const auto& turn : turns) {
        if (static_cast<int>(dialog.exchanges.size()) >= max_dialog_len) break;
        Exchange ex;
        ex.turn_index = static_cast<int>(dialog.exchanges.size());
        const std::string user_text = turn.at("user").get<std::string>();
        const std::string system_text = turn.at("system").get<std::string>();
        const auto full_user = tokenize(user_text);
        const auto full_system = tokenize(system_text);
        ex.user_tokens = tokenize_truncated(user_text, max_utterance_len);
        ex.system_tokens = tokenize_truncated(system_text, max_utterance_len);
        if (turn.contains("entities")) {
          for (const auto& ej : turn.at("entities")) {
            EntitySpan ent;
            ent.slot = ej.at("slot").get<std::string>();
            ent.value = ej.at("value").get<std::string>();
            ent.side = side_from_string(ej.at("side").get<std::string>());
            const auto& span = ej.at("span");
            ent.begin = span.at(0).get<int>();
            ent.end = span.at(1).get<int>();
            const auto& owning =
                ent.side == Side::user ? full_user : full_system;
            if (ent.begin < 0 || ent.end <= ent.begin ||
                ent.end > static_cast<int>(owning.size()))
              throw Error("entity span out of range in dialog '" +
                          dialog.dialog_id + "'");
            if (ent.end <= max_utterance_len) ex.entities.push_back(ent);
          }
        }
        dialog.exchanges.push_back(std::move(ex));
      }
    } catch (const json::exception& e) {
      throw Error("line " + std::to_string(line_no) + ": malformed record: " +
                  e.what());
    }
    dialogs.push_back(std::move(dialog));
  }
  return dialogs;
}

void save_corpus_jsonl(const std::vector<Dialog>& dialogs,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file: " + path);
  auto join = [](const std::vector<std::string>& toks) {
    std::string s;
    for (size_t i = 0; i < toks.size(); ++i) {
      if (i) s += ' ';
      s += toks[i];
    }
    return s;
  };
  for (const auto& dialog : dialogs) {
    json turns = json::array();
    for (const auto& ex : dialog.exchanges) {
      json ents = json::array();
      for (const auto& ent : ex.entities) {
        ents.push_back({{"slot", ent.slot},
                        {"value", ent.value},
                        {"side", side_to_string(ent.side)},
                        {"span", {ent.begin, ent.end}}});
      }
      // the sentinel marks an empty side and is not corpus text
      const bool user_empty =
          ex.user_tokens.size() == 1 && ex.user_tokens[0] == "<nosay>";
      const bool system_empty =
          ex.system_tokens.size() == 1 && ex.system_tokens[0] == "<nosay>";
      turns.push_back({{"user", user_empty ? "" : join(ex.user_tokens)},
                       {"system", system_empty ? "" : join(ex.system_tokens)},
                       {"entities", ents}});
    }
    json j = {{"dialog_id", dialog.dialog_id}, {"turns", turns}};
    out << j.dump() << "\n";
  }
  if (!out) throw Error("failed writing corpus file: " + path);
}

// ---- generator ----

int GeneratorConfig::state_index(const std::string& name) const {
  for (int i = 0; i < static_cast<int>(states.size()); ++i)
    if (states[i] == name) return i;
  return -1;
}

void GeneratorConfig::validate() const {
  const int n = static_cast<int>(states.size());
  if (n == 0) throw Error("generator config has no states");
  if (transitions.rows() != n || transitions.cols() != n)
    throw Error("generator transition matrix shape mismatch");
  if (asr_error_rate < 0.0 || asr_error_rate > 1.0)
    throw Error("asr_error_rate must lie in [0,1]");
  if (num_dialogs < 0) throw Error("num_dialogs must be non-negative");
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (transitions(i, j) < 0.0)
        throw Error("negative transition probability from state " + states[i]);
      sum += transitions(i, j);
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error("outgoing probabilities of state " + states[i] +
                  " sum to " + std::to_string(sum));
  }
  for (const auto& s : states) {
    auto it = templates.find(s);
    if (it == templates.end() || it->second.user.empty() ||
        it->second.system.empty())
      throw Error("missing templates for state " + s);
  }
  // an absorbing state (self transition 1) must be reachable from states[0]
  std::vector<bool> seen(n, false);
  std::vector<int> queue{0};
  seen[0] = true;
  bool absorbing_reachable = false;
  while (!queue.empty()) {
    const int s = queue.back();
    queue.pop_back();
    if (std::abs(transitions(s, s) - 1.0) <= 1e-9) absorbing_reachable = true;
    for (int j = 0; j < n; ++j) {
      if (!seen[j] && transitions(s, j) > 0.0) {
        seen[j] = true;
        queue.push_back(j);
      }
    }
  }
  if (!absorbing_reachable)
    throw Error("unreachable absorbing end state in generator config");
}

GeneratorConfig GeneratorConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read generator config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed generator config: ") + e.what());
  }
  GeneratorConfig cfg;
  cfg.states = j.at("states").get<std::vector<std::string>>();
  const int n = static_cast<int>(cfg.states.size());
  cfg.transitions = Mat::Zero(n, n);
  for (const auto& [from, row] : j.at("transitions").items()) {
    const int i = cfg.state_index(from);
    if (i < 0) throw Error("transition from unknown state " + from);
    for (const auto& [to, p] : row.items()) {
      const int k = cfg.state_index(to);
      if (k < 0) throw Error("transition to unknown state " + to);
      cfg.transitions(i, k) = p.get<double>();
    }
  }
  for (const auto& [state, t] : j.at("templates").items()) {
    StateTemplates st;
    st.user = t.at("user").get<std::vector<std::string>>();
    st.system = t.at("system").get<std::vector<std::string>>();
    cfg.templates[state] = std::move(st);
  }
  cfg.asr_error_rate = j.value("asr_error_rate", 0.0);
  cfg.num_dialogs = j.at("num_dialogs").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.validate();
  return cfg;
}

void GeneratorConfig::save(const std::string& path) const {
  json trans = json::object();
  const int n = static_cast<int>(states.size());
  for (int i = 0; i < n; ++i) {
    json row = json::object();
    for (int j2 = 0; j2 < n; ++j2)
      if (transitions(i, j2) > 0.0) row[states[j2]] = transitions(i, j2);
    trans[states[i]] = row;
  }
  json tmpl = json::object();
  for (const auto& [state, t] : templates)
    tmpl[state] = {{"user", t.user}, {"system", t.system}};
  json j = {{"states", states},          {"transitions", trans},
            {"templates", tmpl},         {"asr_error_rate", asr_error_rate},
            {"num_dialogs", num_dialogs}, {"seed", seed}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write generator config: " + path);
  out << j.dump(2) << "\n";
}

namespace {

void add_placeholder_entities(Exchange& ex) {
  auto scan = [&](const std::vector<std::string>& toks, Side side) {
    for (int i = 0; i < static_cast<int>(toks.size()); ++i) {
      const std::string& t = toks[i];
      if (is_placeholder_token(t) && t.rfind("[value_", 0) == 0) {
        EntitySpan ent;
        ent.slot = t.substr(7, t.size() - 8);
        ent.value = t;
        ent.side = side;
        ent.begin = i;
        ent.end = i + 1;
        ex.entities.push_back(ent);
      }
    }
  };
  scan(ex.user_tokens, Side::user);
  scan(ex.system_tokens, Side::system);
}

}  // namespace

GeneratedCorpus generate_weather_corpus(const GeneratorConfig& config) {
  config.validate();
  const int n = static_cast<int>(config.states.size());

  Mat matrix = config.transitions;
  if (config.asr_error_rate > 0.0) {
    // speech recognition errors force the system to re-confirm and re-query:
    // a self loop of the configured rate on the api_call state
    const int api = config.state_index("api_call");
    if (api >= 0) {
      matrix.row(api) *= (1.0 - config.asr_error_rate);
      matrix(api, api) += config.asr_error_rate;
    }
  }

  GeneratedCorpus out;
  out.truth.n_states = n;
  out.truth.probs = matrix;
  out.truth.labels = config.states;
  out.truth.occupancy = Vec::Zero(n);

  Rng rng(config.seed);
  std::vector<std::discrete_distribution<int>> next_state;
  next_state.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(n);
    for (int j = 0; j < n; ++j) row[j] = matrix(i, j);
    next_state.emplace_back(row.begin(), row.end());
  }

  for (int d = 0; d < config.num_dialogs; ++d) {
    Dialog dialog;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sim_%05d", d);
    dialog.dialog_id = buf;
    std::vector<int> seq;
    int state = 0;
    while (static_cast<int>(dialog.exchanges.size()) < kMaxDialogLen) {
      const StateTemplates& t = config.templates.at(config.states[state]);
      std::uniform_int_distribution<size_t> pick_user(0, t.user.size() - 1);
      std::uniform_int_distribution<size_t> pick_system(0, t.system.size() - 1);
      Exchange ex;
      ex.turn_index = static_cast<int>(dialog.exchanges.size());
      ex.user_tokens = tokenize_truncated(t.user[pick_user(rng)], kMaxUtteranceLen);
      ex.system_tokens =
          tokenize_truncated(t.system[pick_system(rng)], kMaxUtteranceLen);
      add_placeholder_entities(ex);
      dialog.exchanges.push_back(std::move(ex));
      seq.push_back(state);
      if (std::abs(matrix(state, state) - 1.0) <= 1e-9) break;  // absorbing
      state = next_state[state](rng);
    }
    for (size_t i = 0; i + 1 < seq.size(); ++i) out.truth.occupancy[seq[i]] += 1;
    out.dialogs.push_back(std::move(dialog));
    out.state_seqs.push_back(std::move(seq));
  }
  return out;
}

// ---- split ----

CorpusSplit split_corpus(const std::vector<Dialog>& dialogs, SplitRatios ratios,
                         uint64_t seed) {
  const double total = ratios.train + ratios.valid + ratios.test;
  if (std::abs(total - 1.0) > 1e-9)
    throw Error("split ratios must sum to 1, got " + std::to_string(total));
  const int n = static_cast<int>(dialogs.size());
  if (n < 3) throw Error("need at least 3 dialogs to split, got " +
                         std::to_string(n));

  // round each share, then settle the difference on the largest split
  std::array<long, 3> sizes = {
      std::lround(n * ratios.train),
      std::lround(n * ratios.valid),
      std::lround(n * ratios.test),
  };
  auto largest = [&]() {
    return static_cast<size_t>(
        std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  };
  long sum = sizes[0] + sizes[1] + sizes[2];
  while (sum > n) {
    --sizes[largest()];
    --sum;
  }
  while (sum < n) {
    ++sizes[largest()];
    ++sum;
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  CorpusSplit split;
  int at = 0;
  for (long i = 0; i < sizes[0]; ++i) split.train.push_back(dialogs[order[at++]]);
  for (long i = 0; i < sizes[1]; ++i) split.valid.push_back(dialogs[order[at++]]);
  for (long i = 0; i < sizes[2]; ++i) split.test.push_back(dialogs[order[at++]]);
  return split;
}

// ---- delexicalization ----

namespace {

struct SideDelex {
  std::vector<std::string> tokens;
  std::vector<EntitySpan> replacements;
  std::vector<int> new_index;  // old token index -> new index, -1 if consumed
};

SideDelex delex_side(const std::vector<std::string>& tokens, Side side,
                     const Lexicon& lexicon) {
  SideDelex out;
  out.new_index.assign(tokens.size(), -1);
  size_t i = 0;
  while (i < tokens.size()) {
    // longest match across all slots; ties broken by slot name order
    size_t best_len = 0;
    std::string best_slot;
    for (const auto& [slot, values] : lexicon) {
      for (const auto& value : values) {
        if (value.empty() || i + value.size() > tokens.size()) continue;
        const bool better = value.size() > best_len ||
                            (value.size() == best_len && slot < best_slot);
        if (!better) continue;
        bool match = true;
        for (size_t k = 0; k < value.size(); ++k) {
          if (tokens[i + k] != value[k]) {
            match = false;
            break;
          }
        }
        if (match) {
          best_len = value.size();
          best_slot = slot;
        }
      }
    }
    if (best_len > 0) {
      EntitySpan ent;
      ent.slot = best_slot;
      std::string joined;
      for (size_t k = 0; k < best_len; ++k) {
        if (k) joined += ' ';
        joined += tokens[i + k];
      }
      ent.value = joined;
      ent.side = side;
      ent.begin = static_cast<int>(out.tokens.size());
      ent.end = ent.begin + 1;
      out.replacements.push_back(ent);
      out.tokens.push_back("[value_" + best_slot + "]");
      i += best_len;
    } else {
      out.new_index[i] = static_cast<int>(out.tokens.size());
      out.tokens.push_back(tokens[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace

Exchange delexicalize(const Exchange& exchange, const Lexicon& lexicon) {
  SideDelex user = delex_side(exchange.user_tokens, Side::user, lexicon);
  SideDelex system = delex_side(exchange.system_tokens, Side::system, lexicon);

  Exchange out;
  out.turn_index = exchange.turn_index;
  out.user_tokens = user.tokens;
  out.system_tokens = system.tokens;

  // keep pre-existing entities whose tokens survived untouched
  for (const auto& ent : exchange.entities) {
    const SideDelex& sd = ent.side == Side::user ? user : system;
    bool intact = true;
    for (int k = ent.begin; k < ent.end; ++k) {
      if (k >= static_cast<int>(sd.new_index.size()) || sd.new_index[k] < 0 ||
          (k > ent.begin && sd.new_index[k] != sd.new_index[k - 1] + 1)) {
        intact = false;
        break;
      }
    }
    if (intact) {
      EntitySpan moved = ent;
      moved.begin = sd.new_index[ent.begin];
      moved.end = sd.new_index[ent.end - 1] + 1;
      out.entities.push_back(moved);
    }
  }
  for (const auto& ent : user.replacements) out.entities.push_back(ent);
  for (const auto& ent : system.replacements) out.entities.push_back(ent);
  return out;
}

// ---- vocab building ----

Vocab build_vocab(const std::vector<Dialog>& dialogs, int min_count) {
  if (min_count < 1) throw Error("min_count must be >= 1");
  std::map<std::string, long> counts;
  for (const auto& dialog : dialogs) {
    for (const auto& ex : dialog.exchanges) {
      for (const auto& t : ex.user_tokens) ++counts[t];
      for (const auto& t : ex.system_tokens) ++counts[t];
    }
  }
  Vocab vocab;
  vocab.id_to_token = {"<pad>", "<unk>", "<eos>", "<nosay>"};
  counts.erase("<nosay>");  // sentinel already registered

  std::vector<std::pair<std::string, long>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [token, count] : ordered) {
    const bool placeholder = is_placeholder_token(token);
    if (count < min_count && !placeholder) continue;
    const int id = static_cast<int>(vocab.id_to_token.size());
    vocab.id_to_token.push_back(token);
    if (placeholder) vocab.ne_token_ids.insert(id);
  }
  for (int i = 0; i < vocab.size(); ++i)
    vocab.token_to_id[vocab.id_to_token[i]] = i;
  return vocab;
}

// ---- built-in generator configs ----

namespace {

Mat matrix_from_rows(
    const std::vector<std::string>& states,
    const std::vector<std::pair<std::string, std::vector<std::pair<std::string, double>>>>& rows) {
  const int n = static_cast<int>(states.size());
  Mat m = Mat::Zero(n, n);
  auto index = [&](const std::string& name) {
    for (int i = 0; i < n; ++i)
      if (states[i] == name) return i;
    throw Error("unknown state in built-in config: " + name);
  };
  for (const auto& [from, out] : rows)
    for (const auto& [to, p] : out) m(index(from), index(to)) = p;
  return m;
}

}  // namespace

GeneratorConfig default_weather_config(int num_dialogs, uint64_t seed,
                                       double asr_error_rate) {
  GeneratorConfig cfg;
  cfg.states = {"start",          "greeting",      "whats_weather",
                "place_time",     "api_call",      "present_report",
                "anything_else",  "thanks",        "end"};
  cfg.transitions = matrix_from_rows(
      cfg.states,
      {{"start", {{"greeting", 1.0}}},
       {"greeting", {{"whats_weather", 0.8}, {"place_time", 0.2}}},
       {"whats_weather", {{"place_time", 1.0}}},
       {"place_time", {{"api_call", 0.85}, {"place_time", 0.15}}},
       {"api_call", {{"present_report", 1.0}}},
       {"present_report",
        {{"anything_else", 0.55}, {"whats_weather", 0.15}, {"thanks", 0.3}}},
       {"anything_else", {{"thanks", 0.65}, {"whats_weather", 0.35}}},
       {"thanks", {{"end", 1.0}}},
       {"end", {{"end", 1.0}}}});
  cfg.templates["start"] = {
      {""},
      {"hello , welcome to the weather helpline .",
       "hi , this is the weather service ."}};
  cfg.templates["greeting"] = {
      {"hello there", "hi"},
      {"what can i do for you today ?", "how can i help you ?"}};
  cfg.templates["whats_weather"] = {
      {"what is the weather", "tell me the weather please",
       "i want a weather report"},
      {"okay , which place are you asking about ?",
       "sure , what place do you mean ?"}};
  cfg.templates["place_time"] = {
      {"weather in [value_place] [value_time]",
       "[value_place] please , [value_time]",
       "in [value_place] around [value_time]"},
      {"got it , [value_place] at [value_time] .",
       "noted [value_place] [value_time] ."}};
  cfg.templates["api_call"] = {
      {"yes that is right", "thats correct"},
      {"[api_call] querying the forecast now .",
       "[api_call] let me check that for you ."}};
  cfg.templates["present_report"] = {
      {"ok", "great"},
      {"here is your weather report [report] .",
       "your forecast says [report] ."}};
  cfg.templates["anything_else"] = {
      {"hmm alright", "okay thanks"},
      {"is there anything else i can do ?", "anything else today ?"}};
  cfg.templates["thanks"] = {
      {"thank you so much", "thanks a lot"},
      {"you are welcome .", "my pleasure ."}};
  cfg.templates["end"] = {{"goodbye", "bye now"},
                          {"bye bye .", "have a nice day ."}};
  cfg.asr_error_rate = asr_error_rate;
  cfg.num_dialogs = num_dialogs;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

GeneratorConfig ambiguous_context_config(int num_dialogs, uint64_t seed) {
  GeneratorConfig cfg;
  cfg.states = {"start",      "ask_weather", "give_time",
                "api_report", "more_time",   "closing"};
  cfg.transitions = matrix_from_rows(
      cfg.states, {{"start", {{"ask_weather", 1.0}}},
                   {"ask_weather", {{"give_time", 1.0}}},
                   {"give_time", {{"api_report", 1.0}}},
                   {"api_report", {{"more_time", 0.5}, {"closing", 0.5}}},
                   {"more_time", {{"api_report", 1.0}}},
                   {"closing", {{"closing", 1.0}}}});
  // the give_time and more_time exchanges are surface-identical on purpose;
  // only the surrounding context distinguishes them
  cfg.templates["start"] = {{""}, {"hello , what can i do for you ?"}};
  cfg.templates["ask_weather"] = {
      {"what is the weather", "i need the weather please"},
      {"what date are you interested ?"}};
  cfg.templates["give_time"] = {{"weather this morning ."},
                                {"i believe you said this morning ."}};
  cfg.templates["api_report"] = {
      {"thats correct"},
      {"[api_call] . your weather report is here [report] . what else ?",
       "[api_call] . here is the report [report] . anything more ?"}};
  cfg.templates["more_time"] = {{"weather this morning ."},
                                {"i believe you said this morning ."}};
  cfg.templates["closing"] = {{"thank you that is all", "thanks , goodbye"},
                              {"goodbye ."}};
  cfg.asr_error_rate = 0.0;
  cfg.num_dialogs = num_dialogs;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

uint64_t corpus_fingerprint(const std::vector<Dialog>& dialogs) {
  uint64_t h = hash64("corpus");
  for (const auto& dialog : dialogs) {
    h = hash64_combine(h, hash64(dialog.dialog_id));
    for (const auto& ex : dialog.exchanges) {
      for (const auto& t : ex.user_tokens) h = hash64_combine(h, hash64(t));
      for (const auto& t : ex.system_tokens) h = hash64_combine(h, hash64(t));
    }
  }
  return h;
}

}  // namespace dsl
