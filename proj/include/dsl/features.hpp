#pragma once

#include "dsl/common.hpp"
#include "dsl/corpus.hpp"

namespace dsl {

// Word embedding matrix, vocab_size x embed_dim. The pad row is all zeros
// and must stay zero through training.
struct EmbeddingTable {
  Mat table;
  bool trainable = true;
  int dim() const { return static_cast<int>(table.cols()); }
  int vocab_size() const { return static_cast<int>(table.rows()); }
};

EmbeddingTable init_embeddings(int vocab_size, int dim, uint64_t seed);

// Text format, one line per token: "token v1 v2 ... vD". Tokens absent from
// the file keep their random rows; the pad row stays zero.
void import_pretrained_embeddings(EmbeddingTable& table, const Vocab& vocab,
                                  const std::string& path);

// Mean of the token rows. Throws on ids outside the table; map to unk first.
Vec embed_utterance(const std::vector<int>& ids, const EmbeddingTable& table);

// [mean user embedding, mean system embedding], length 2*dim.
Vec featurize_exchange(const std::vector<int>& user_ids,
                       const std::vector<int>& system_ids,
                       const EmbeddingTable& table);
Vec featurize_exchange(const Exchange& exchange, const Vocab& vocab,
                       const EmbeddingTable& table);

}  // namespace dsl
