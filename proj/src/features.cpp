#include "dsl/features.hpp"

#include <fstream>
#include <sstream>

namespace dsl {

EmbeddingTable init_embeddings(int vocab_size, int dim, uint64_t seed) {
  EmbeddingTable t;
  t.table = Mat::Zero(vocab_size, dim);
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  for (int r = 0; r < vocab_size; ++r) {
    if (r == kPadId) continue;
    for (int c = 0; c < dim; ++c) t.table(r, c) = dist(rng);
  }
  return t;
}

void import_pretrained_embeddings(EmbeddingTable& table, const Vocab& vocab,
                                  const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read embedding file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    if (!vocab.contains(token)) continue;
    const int id = vocab.id(token);
    if (id == kPadId) continue;
    for (int c = 0; c < table.dim(); ++c) {
      double v;
      if (!(ss >> v))
        throw Error("embedding file line " + std::to_string(line_no) +
                    ": expected " + std::to_string(table.dim()) + " values");
      table.table(id, c) = v;
    }
  }
}

Vec embed_utterance(const std::vector<int>& ids, const EmbeddingTable& table) {
  if (ids.empty()) throw Error("embed_utterance: empty token list");
  Vec acc = Vec::Zero(table.dim());
  for (int id : ids) {
    if (id < 0 || id >= table.vocab_size())
      throw Error("embed_utterance: token id " + std::to_string(id) +
                  " outside vocabulary of size " +
                  std::to_string(table.vocab_size()));
    acc += table.table.row(id).transpose();
  }
  return acc / static_cast<double>(ids.size());
}

Vec featurize_exchange(const std::vector<int>& user_ids,
                       const std::vector<int>& system_ids,
                       const EmbeddingTable& table) {
  Vec out(2 * table.dim());
  out.head(table.dim()) = embed_utterance(user_ids, table);
  out.tail(table.dim()) = embed_utterance(system_ids, table);
  return out;
}

Vec featurize_exchange(const Exchange& exchange, const Vocab& vocab,
                       const EmbeddingTable& table) {
  return featurize_exchange(vocab.encode(exchange.user_tokens),
                            vocab.encode(exchange.system_tokens), table);
}

}  // namespace dsl
