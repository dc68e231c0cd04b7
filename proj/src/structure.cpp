#include "dsl/structure.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace dsl {

using nlohmann::json;

int CollapseMap::n_categories() const {
  int n = 0;
  for (int c : state_to_category) n = std::max(n, c + 1);
  return n;
}

void CollapseMap::validate(int n_states) const {
  if (static_cast<int>(state_to_category.size()) != n_states)
    throw Error("collapse map must cover all " + std::to_string(n_states) +
                " states");
  const int k = n_categories();
  if (k < 1) throw Error("collapse map has no categories");
  std::vector<bool> used(k, false);
  for (int c : state_to_category) {
    if (c < 0) throw Error("negative category id in collapse map");
    used[c] = true;
  }
  for (int c = 0; c < k; ++c)
    if (!used[c])
      throw Error("empty category " + std::to_string(c) + " in collapse map");
  if (!category_names.empty() && static_cast<int>(category_names.size()) != k)
    throw Error("collapse map category_names length mismatch");
}

CollapseMap CollapseMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read collapse map: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed collapse map: ") + e.what());
  }
  CollapseMap map;
  const auto& entries = j.at("state_to_category");
  int max_state = -1;
  for (const auto& [key, value] : entries.items())
    max_state = std::max(max_state, std::stoi(key));
  map.state_to_category.assign(max_state + 1, -1);
  for (const auto& [key, value] : entries.items())
    map.state_to_category[std::stoi(key)] = value.get<int>();
  for (int c : map.state_to_category)
    if (c < 0) throw Error("collapse map misses a state id in " + path);
  if (j.contains("category_names"))
    map.category_names = j.at("category_names").get<std::vector<std::string>>();
  map.validate(static_cast<int>(map.state_to_category.size()));
  return map;
}

void CollapseMap::save(const std::string& path) const {
  json entries = json::object();
  for (size_t s = 0; s < state_to_category.size(); ++s)
    entries[std::to_string(s)] = state_to_category[s];
  json j = {{"state_to_category", entries}, {"category_names", category_names}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write collapse map: " + path);
  out << j.dump(2) << "\n";
}

TransitionTable estimate_transition_table_frequency(
    const LatentAssignment& assignments, int n_states) {
  Mat counts = Mat::Zero(n_states, n_states);
  for (const auto& dialog : assignments.dialogs) {
    for (size_t t = 0; t < dialog.states.size(); ++t) {
      const int s = dialog.states[t];
      if (s < 0 || s >= n_states)
        throw Error("state id " + std::to_string(s) + " outside [0," +
                    std::to_string(n_states) + ") in assignments");
      if (t + 1 < dialog.states.size()) counts(s, dialog.states[t + 1]) += 1;
    }
  }
  TransitionTable table;
  table.n_states = n_states;
  table.probs = Mat::Zero(n_states, n_states);
  table.occupancy = counts.rowwise().sum();
  for (int i = 0; i < n_states; ++i) {
    if (table.occupancy[i] > 0)
      table.probs.row(i) = counts.row(i) / table.occupancy[i];
    else
      table.probs.row(i).setConstant(1.0 / n_states);
  }
  return table;
}

TransitionTable read_transition_table_ddvrnn(
    const VrnnModel& model, const LatentAssignment& assignments) {
  if (model.config().variant != Variant::ddvrnn)
    throw Error("read_transition_table_ddvrnn requires a ddvrnn checkpoint");
  const int n = model.config().n_states;
  TransitionTable table;
  table.n_states = n;
  table.probs = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    table.probs.row(i) = model.prior_ddvrnn(one_hot(i, n)).transpose();
  Mat counts = Mat::Zero(n, n);
  for (const auto& dialog : assignments.dialogs)
    for (size_t t = 0; t + 1 < dialog.states.size(); ++t)
      counts(dialog.states[t], dialog.states[t + 1]) += 1;
  table.occupancy = counts.rowwise().sum();
  return table;
}

TransitionTable collapse_states(const TransitionTable& table,
                                const CollapseMap& map) {
  map.validate(table.n_states);
  const int k = map.n_categories();
  TransitionTable out;
  out.n_states = k;
  out.probs = Mat::Zero(k, k);
  out.occupancy = Vec::Zero(k);
  out.labels = map.category_names;

  // inbound mass sums over member columns; merged rows average with
  // occupancy weights so the result stays row-stochastic
  Mat col_summed = Mat::Zero(table.n_states, k);
  for (int j = 0; j < table.n_states; ++j)
    col_summed.col(map.state_to_category[j]) += table.probs.col(j);
  for (int i = 0; i < table.n_states; ++i)
    out.occupancy[map.state_to_category[i]] += table.occupancy[i];
  for (int c = 0; c < k; ++c) {
    double weight_total = 0;
    Vec row = Vec::Zero(k);
    Vec plain = Vec::Zero(k);
    int members = 0;
    for (int i = 0; i < table.n_states; ++i) {
      if (map.state_to_category[i] != c) continue;
      ++members;
      plain += col_summed.row(i).transpose();
      row += table.occupancy[i] * col_summed.row(i).transpose();
      weight_total += table.occupancy[i];
    }
    if (weight_total > 0)
      out.probs.row(c) = (row / weight_total).transpose();
    else
      out.probs.row(c) = (plain / members).transpose();
  }
  return out;
}

std::string export_dot(const TransitionTable& table,
                       const std::vector<std::string>& labels,
                       double threshold) {
  if (!labels.empty() && static_cast<int>(labels.size()) != table.n_states)
    throw Error("export_dot: labels length mismatch");
  auto label = [&](int i) {
    if (!labels.empty() && !labels[i].empty()) return labels[i];
    return std::string("state_") + std::to_string(i);
  };
  std::ostringstream out;
  out << "digraph dialog_structure {\n";
  out << "  rankdir=LR;\n";
  for (int i = 0; i < table.n_states; ++i) {
    out << "  s" << i << " [label=\"" << label(i) << "\" occupancy="
        << format_double(table.occupancy[i], 0) << "];\n";
  }
  for (int i = 0; i < table.n_states; ++i) {
    for (int j = 0; j < table.n_states; ++j) {
      if (table.probs(i, j) >= threshold) {
        out << "  s" << i << " -> s" << j << " [label=\""
            << format_double(table.probs(i, j), 2) << "\"];\n";
      }
    }
  }
  out << "}\n";
  return out.str();
}

std::vector<std::vector<StateExample>> top_exchanges_per_state(
    const LatentAssignment& assignments, const std::vector<Dialog>& dialogs,
    int k) {
  if (k < 1) throw Error("top_exchanges_per_state: k must be >= 1");
  std::map<std::string, const Dialog*> by_id;
  for (const auto& d : dialogs) by_id[d.dialog_id] = &d;
  auto join = [](const std::vector<std::string>& toks) {
    std::string s;
    for (size_t i = 0; i < toks.size(); ++i) {
      if (i) s += ' ';
      s += toks[i];
    }
    return s;
  };
  std::vector<std::vector<StateExample>> per_state(assignments.n_states);
  for (const auto& da : assignments.dialogs) {
    auto it = by_id.find(da.dialog_id);
    if (it == by_id.end())
      throw Error("assignments reference unknown dialog " + da.dialog_id);
    const Dialog& dialog = *it->second;
    for (size_t t = 0; t < da.states.size(); ++t) {
      const int s = da.states[t];
      StateExample ex;
      ex.dialog_id = da.dialog_id;
      ex.turn_index = static_cast<int>(t);
      ex.posterior = da.posteriors[t][s];
      ex.user_text = join(dialog.exchanges[t].user_tokens);
      ex.system_text = join(dialog.exchanges[t].system_tokens);
      if (t > 0) {
        ex.context_text = join(dialog.exchanges[t - 1].user_tokens) + " | " +
                          join(dialog.exchanges[t - 1].system_tokens);
      }
      per_state[s].push_back(std::move(ex));
    }
  }
  for (auto& examples : per_state) {
    std::stable_sort(examples.begin(), examples.end(),
                     [](const StateExample& a, const StateExample& b) {
                       return a.posterior > b.posterior;
                     });
    if (static_cast<int>(examples.size()) > k) examples.resize(k);
  }
  return per_state;
}

std::vector<int> min_cost_assignment(const Mat& cost_in) {
  const int n = static_cast<int>(std::max(cost_in.rows(), cost_in.cols()));
  Mat cost = Mat::Zero(n, n);
  cost.topLeftCorner(cost_in.rows(), cost_in.cols()) = cost_in;

  // Hungarian algorithm with potentials, O(n^3), 1-indexed internals
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = std::numeric_limits<double>::infinity();
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(cost_in.rows(), -1);
  for (int j = 1; j <= n; ++j) {
    const int row = p[j] - 1;
    if (row >= 0 && row < cost_in.rows() && j - 1 < cost_in.cols())
      row_to_col[row] = j - 1;
  }
  return row_to_col;
}

Mat confusion_matrix(const std::vector<std::vector<int>>& true_seqs,
                     const LatentAssignment& assignments, int n_true,
                     int n_learned) {
  if (true_seqs.size() != assignments.dialogs.size())
    throw Error("confusion_matrix: dialog count mismatch");
  Mat counts = Mat::Zero(n_true, n_learned);
  for (size_t d = 0; d < true_seqs.size(); ++d) {
    const auto& truth = true_seqs[d];
    const auto& learned = assignments.dialogs[d].states;
    if (truth.size() != learned.size())
      throw Error("confusion_matrix: sequence length mismatch in dialog " +
                  assignments.dialogs[d].dialog_id);
    for (size_t t = 0; t < truth.size(); ++t)
      counts(truth[t], learned[t]) += 1;
  }
  return counts;
}

std::vector<int> align_states(const Mat& confusion) {
  return min_cost_assignment(-confusion);
}

}  // namespace dsl
