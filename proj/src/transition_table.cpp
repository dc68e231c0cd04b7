#include "dsl/transition_table.hpp"

#include <fstream>
#include <sstream>

namespace dsl {

std::string TransitionTable::label(int i) const {
  if (i >= 0 && i < static_cast<int>(labels.size()) && !labels[i].empty())
    return labels[i];
  return "state_" + std::to_string(i);
}

void TransitionTable::validate(double tol) const {
  if (probs.rows() != n_states || probs.cols() != n_states)
    throw Error("transition table shape mismatch");
  if (occupancy.size() != n_states)
    throw Error("transition table occupancy size mismatch");
  for (int i = 0; i < n_states; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n_states; ++j) {
      const double p = probs(i, j);
      if (p < -tol || p > 1.0 + tol)
        throw Error("transition probability out of [0,1] at row " +
                    std::to_string(i));
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol)
      throw Error("transition row " + std::to_string(i) + " sums to " +
                  std::to_string(sum));
  }
}

void save_transition_csv(const TransitionTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write transition csv: " + path);
  for (int j = 0; j < table.n_states; ++j) out << table.label(j) << ",";
  out << "occupancy\n";
  for (int i = 0; i < table.n_states; ++i) {
    for (int j = 0; j < table.n_states; ++j)
      out << format_double(table.probs(i, j), 9) << ",";
    out << format_double(table.occupancy[i], 0) << "\n";
  }
  if (!out) throw Error("failed writing transition csv: " + path);
}

TransitionTable load_transition_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read transition csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty transition csv: " + path);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header.back() != "occupancy")
    throw Error("transition csv header must end with 'occupancy'");
  const int n = static_cast<int>(header.size()) - 1;
  TransitionTable table;
  table.n_states = n;
  table.labels.assign(header.begin(), header.end() - 1);
  table.probs = Mat::Zero(n, n);
  table.occupancy = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line))
      throw Error("transition csv truncated at row " + std::to_string(i));
    std::stringstream ss(line);
    std::string cell;
    for (int j = 0; j <= n; ++j) {
      if (!std::getline(ss, cell, ','))
        throw Error("transition csv row " + std::to_string(i) + " too short");
      const double v = std::stod(cell);
      if (j < n)
        table.probs(i, j) = v;
      else
        table.occupancy[i] = v;
    }
  }
  table.validate();
  return table;
}

}  // namespace dsl
