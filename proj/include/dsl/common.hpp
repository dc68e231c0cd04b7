#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dsl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// All recoverable failures surface as dsl::Error with a human-readable message.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// FNV-1a, used for vocab/corpus fingerprints and seed derivation.
uint64_t hash64(std::string_view s);
uint64_t hash64_combine(uint64_t h, uint64_t x);

// Independent deterministic sub-stream seed for a named purpose.
uint64_t derive_seed(uint64_t base, std::string_view tag);

double logsumexp(const Vec& v);
Vec softmax(const Vec& logits);
Vec log_softmax(const Vec& logits);

bool is_simplex(const Vec& p, double tol = 1e-5);

// KL(p || q) with q floored at `floor` before the log. Terms with p_i = 0
// contribute nothing.
double kl_divergence(const Vec& p, const Vec& q, double floor = 1e-10);

// Standard Gumbel(0,1) draw.
double gumbel_noise(Rng& rng);

int argmax(const Vec& v);
Vec one_hot(int index, int n);
bool is_one_hot(const Vec& v, double tol = 1e-9);

std::string format_double(double x, int precision);

}  // namespace dsl
