#include "dsl/kmeans.hpp"

#include <cmath>
#include <limits>

namespace dsl {

namespace {

int nearest_centroid(const Mat& centroids, const Vec& point, double* dist2_out) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c).transpose() - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist2_out) *dist2_out = best_d;
  return best;
}

}  // namespace

KmeansModel kmeans_cluster(const Mat& features, int k, uint64_t seed,
                           int max_iters) {
  const int n = static_cast<int>(features.rows());
  const int dim = static_cast<int>(features.cols());
  if (k < 1) throw Error("kmeans: k must be >= 1");
  if (k > n) throw Error("kmeans: k exceeds the number of points");

  Rng rng(seed);
  KmeansModel model;
  model.centroids = Mat::Zero(k, dim);

  // k-means++ seeding
  std::uniform_int_distribution<int> first(0, n - 1);
  model.centroids.row(0) = features.row(first(rng));
  Vec d2 = Vec::Zero(n);
  for (int c = 1; c < k; ++c) {
    double total = 0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < c; ++j)
        best = std::min(best, (model.centroids.row(j) - features.row(i))
                                  .squaredNorm());
      d2[i] = best;
      total += best;
    }
    int chosen = 0;
    if (total > 0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (int i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0) {
          chosen = i;
          break;
        }
        chosen = i;
      }
    } else {
      chosen = first(rng);
    }
    model.centroids.row(c) = features.row(chosen);
  }

  model.assignments.assign(n, 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = iter == 0;
    std::vector<double> dist2(n, 0.0);
    for (int i = 0; i < n; ++i) {
      const int a = nearest_centroid(model.centroids, features.row(i).transpose(),
                                     &dist2[i]);
      if (a != model.assignments[i]) {
        model.assignments[i] = a;
        changed = true;
      }
    }
    // empty cluster: restart it at the point farthest from its own centroid
    std::vector<int> counts(k, 0);
    for (int a : model.assignments) ++counts[a];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      int far = 0;
      double far_d = -1;
      for (int i = 0; i < n; ++i) {
        if (counts[model.assignments[i]] <= 1) continue;
        if (dist2[i] > far_d) {
          far_d = dist2[i];
          far = i;
        }
      }
      --counts[model.assignments[far]];
      model.assignments[far] = c;
      counts[c] = 1;
      model.centroids.row(c) = features.row(far);
      changed = true;
    }
    if (!changed) break;
    Mat sums = Mat::Zero(k, dim);
    for (int i = 0; i < n; ++i) sums.row(model.assignments[i]) += features.row(i);
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) model.centroids.row(c) = sums.row(c) / counts[c];
  }

  model.inertia = 0;
  for (int i = 0; i < n; ++i)
    model.inertia +=
        (model.centroids.row(model.assignments[i]) - features.row(i))
            .squaredNorm();
  return model;
}

std::vector<Vec> bow_vectors(const std::vector<Dialog>& dialogs,
                             const Vocab& vocab, CosineMode mode) {
  std::vector<Vec> out;
  const int v = vocab.size();
  for (const auto& dialog : dialogs) {
    Vec context = Vec::Zero(v);
    for (const auto& ex : dialog.exchanges) {
      Vec current = Vec::Zero(v);
      for (const auto& t : ex.user_tokens) current[vocab.id(t)] += 1;
      for (const auto& t : ex.system_tokens) current[vocab.id(t)] += 1;
      out.push_back(mode == CosineMode::current_utterance ? current : context);
      context += current;
    }
  }
  return out;
}

double within_cluster_cosine(const std::vector<int>& assignments,
                             const std::vector<Vec>& vectors) {
  if (assignments.size() != vectors.size())
    throw Error("within_cluster_cosine: assignment/vector count mismatch");
  if (assignments.empty()) throw Error("within_cluster_cosine: empty input");
  int k = 0;
  for (int a : assignments) k = std::max(k, a + 1);
  std::vector<std::vector<int>> members(k);
  for (size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] < 0) throw Error("negative cluster assignment");
    members[assignments[i]].push_back(static_cast<int>(i));
  }
  auto cosine = [&](const Vec& a, const Vec& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0 || nb == 0) return 0.0;
    return a.dot(b) / (na * nb);
  };
  double weighted = 0;
  double weight_total = 0;
  for (const auto& cluster : members) {
    const size_t m = cluster.size();
    if (m < 2) continue;  // singletons contribute nothing
    double sum = 0;
    for (size_t i = 0; i < m; ++i)
      for (size_t j = i + 1; j < m; ++j)
        sum += cosine(vectors[cluster[i]], vectors[cluster[j]]);
    const double pairs = static_cast<double>(m) * (m - 1) / 2.0;
    weighted += (sum / pairs) * static_cast<double>(m);
    weight_total += static_cast<double>(m);
  }
  return weight_total > 0 ? weighted / weight_total : 0.0;
}

double within_cluster_cosine(const std::vector<int>& assignments,
                             const std::vector<Dialog>& dialogs,
                             const Vocab& vocab, CosineMode mode) {
  return within_cluster_cosine(assignments, bow_vectors(dialogs, vocab, mode));
}

}  // namespace dsl
