#pragma once

#include "dsl/common.hpp"
#include "dsl/corpus.hpp"

#include <vector>

namespace dsl {

struct KmeansModel {
  Mat centroids;                 // k x dim
  std::vector<int> assignments;  // one per row of the input
  double inertia = 0;
};

// Lloyd iterations with k-means++ seeding; empty clusters re-seed from the
// point farthest from its centroid. Deterministic given the seed.
KmeansModel kmeans_cluster(const Mat& features, int k, uint64_t seed,
                           int max_iters = 100);

enum class CosineMode { current_utterance, context };

// Raw term-frequency vectors over the vocab. Context is the pooled bag of all
// preceding exchanges in the dialog (zero vector for the first exchange).
std::vector<Vec> bow_vectors(const std::vector<Dialog>& dialogs,
                             const Vocab& vocab, CosineMode mode);

// Cluster-size-weighted mean of the average pairwise cosine similarity inside
// each cluster; singleton clusters are excluded. Cosine with a zero vector
// counts as 0.
double within_cluster_cosine(const std::vector<int>& assignments,
                             const std::vector<Vec>& vectors);
double within_cluster_cosine(const std::vector<int>& assignments,
                             const std::vector<Dialog>& dialogs,
                             const Vocab& vocab, CosineMode mode);

}  // namespace dsl
