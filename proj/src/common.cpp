#include "dsl/common.hpp"

#include <cmath>
#include <cstdio>

namespace dsl {

uint64_t hash64(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t hash64_combine(uint64_t h, uint64_t x) {
  // splitmix64 finalizer keeps nearby inputs from colliding
  uint64_t z = h + x + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t derive_seed(uint64_t base, std::string_view tag) {
  return hash64_combine(hash64(tag), base);
}

double logsumexp(const Vec& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

Vec log_softmax(const Vec& logits) {
  return logits.array() - logsumexp(logits);
}

bool is_simplex(const Vec& p, double tol) {
  if (p.size() == 0) return false;
  if ((p.array() < -tol).any()) return false;
  return std::abs(p.sum() - 1.0) <= tol;
}

double kl_divergence(const Vec& p, const Vec& q, double floor) {
  if (p.size() != q.size()) throw Error("kl_divergence: dimension mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * (std::log(p[i]) - std::log(std::max(q[i], floor)));
  }
  return kl;
}

double gumbel_noise(Rng& rng) {
  std::uniform_real_distribution<double> unit(std::numeric_limits<double>::min(), 1.0);
  return -std::log(-std::log(unit(rng)));
}

int argmax(const Vec& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

Vec one_hot(int index, int n) {
  Vec v = Vec::Zero(n);
  v[index] = 1.0;
  return v;
}

bool is_one_hot(const Vec& v, double tol) {
  int ones = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i] - 1.0) <= tol) {
      ++ones;
    } else if (std::abs(v[i]) > tol) {
      return false;
    }
  }
  return ones == 1;
}

std::string format_double(double x, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, x);
  return buf;
}

}  // namespace dsl
