#include "dsl/hmm.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>

namespace dsl {

using nlohmann::json;

void HmmModel::validate(double tol) const {
  if (pi.size() != n_states || A.rows() != n_states || A.cols() != n_states ||
      B.rows() != n_states)
    throw Error("hmm model shape mismatch");
  auto check_row = [&](const Vec& row, const std::string& what) {
    if ((row.array() < -tol).any() || std::abs(row.sum() - 1.0) > tol)
      throw Error("hmm " + what + " is not a distribution");
  };
  check_row(pi, "initial distribution");
  for (int i = 0; i < n_states; ++i) {
    check_row(A.row(i).transpose(), "transition row " + std::to_string(i));
    check_row(B.row(i).transpose(), "emission row " + std::to_string(i));
  }
}

void HmmModel::save(const std::string& path) const {
  json j;
  j["n_states"] = n_states;
  j["pi"] = std::vector<double>(pi.data(), pi.data() + pi.size());
  auto rows = [](const Mat& m) {
    std::vector<std::vector<double>> out;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(static_cast<size_t>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        row[static_cast<size_t>(c)] = m(r, c);
      out.push_back(std::move(row));
    }
    return out;
  };
  j["A"] = rows(A);
  j["B"] = rows(B);
  std::ofstream out(path);
  if (!out) throw Error("cannot write hmm model: " + path);
  out << j.dump() << "\n";
}

HmmModel HmmModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read hmm model: " + path);
  json j;
  in >> j;
  HmmModel m;
  m.n_states = j.at("n_states").get<int>();
  auto pi = j.at("pi").get<std::vector<double>>();
  m.pi = Eigen::Map<Vec>(pi.data(), static_cast<Eigen::Index>(pi.size()));
  auto to_mat = [](const json& rows) {
    const auto n = rows.size();
    const auto c = rows.at(0).size();
    Mat m2(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
    for (size_t r = 0; r < n; ++r)
      for (size_t k = 0; k < c; ++k) m2(r, k) = rows.at(r).at(k).get<double>();
    return m2;
  };
  m.A = to_mat(j.at("A"));
  m.B = to_mat(j.at("B"));
  m.validate();
  return m;
}

BagDialog to_bag_dialog(const Dialog& dialog, const Vocab& vocab) {
  BagDialog bag;
  for (const auto& ex : dialog.exchanges) {
    std::vector<int> ids = vocab.encode(ex.user_tokens);
    const auto sys = vocab.encode(ex.system_tokens);
    ids.insert(ids.end(), sys.begin(), sys.end());
    bag.push_back(std::move(ids));
  }
  return bag;
}

std::vector<BagDialog> to_bag_dialogs(const std::vector<Dialog>& dialogs,
                                      const Vocab& vocab) {
  std::vector<BagDialog> out;
  out.reserve(dialogs.size());
  for (const auto& d : dialogs) {
    BagDialog bag = to_bag_dialog(d, vocab);
    if (!bag.empty()) out.push_back(std::move(bag));
  }
  return out;
}

namespace {

// log emission likelihood of each exchange under each state
Mat log_emissions(const HmmModel& model, const BagDialog& dialog) {
  const int t_len = static_cast<int>(dialog.size());
  Mat log_b = model.B.array().max(0.0).log();  // -inf on zeros is fine here
  Mat out = Mat::Zero(t_len, model.n_states);
  for (int t = 0; t < t_len; ++t) {
    for (int tok : dialog[t]) {
      if (tok < 0 || tok >= model.B.cols())
        throw Error("token id outside hmm vocabulary");
      out.row(t) += log_b.col(tok).transpose();
    }
  }
  return out;
}

struct ForwardBackward {
  Mat alpha, beta, gamma;   // T x N, scaled
  Vec scale_log;            // per step: log c_t + m_t
  double loglik = 0;
  Mat exp_e;                // exp(logE - rowmax), T x N
  Vec row_max;
};

ForwardBackward forward_backward(const HmmModel& model, const BagDialog& dialog,
                                 bool with_beta) {
  const int t_len = static_cast<int>(dialog.size());
  const int n = model.n_states;
  ForwardBackward fb;
  Mat log_e = log_emissions(model, dialog);
  fb.exp_e = Mat::Zero(t_len, n);
  fb.row_max = Vec::Zero(t_len);
  for (int t = 0; t < t_len; ++t) {
    fb.row_max[t] = log_e.row(t).maxCoeff();
    if (!std::isfinite(fb.row_max[t])) {
      fb.loglik = -std::numeric_limits<double>::infinity();
      return fb;
    }
    fb.exp_e.row(t) = (log_e.row(t).array() - fb.row_max[t]).exp();
  }
  fb.alpha = Mat::Zero(t_len, n);
  fb.scale_log = Vec::Zero(t_len);
  Vec cur = model.pi.cwiseProduct(fb.exp_e.row(0).transpose());
  for (int t = 0;; ++t) {
    const double c = cur.sum();
    if (c <= 0) {
      fb.loglik = -std::numeric_limits<double>::infinity();
      return fb;
    }
    fb.alpha.row(t) = (cur / c).transpose();
    fb.scale_log[t] = std::log(c) + fb.row_max[t];
    if (t + 1 >= t_len) break;
    cur = (model.A.transpose() * fb.alpha.row(t).transpose())
              .cwiseProduct(fb.exp_e.row(t + 1).transpose());
  }
  fb.loglik = fb.scale_log.sum();
  if (with_beta) {
    fb.beta = Mat::Zero(t_len, n);
    fb.beta.row(t_len - 1).setOnes();
    for (int t = t_len - 2; t >= 0; --t) {
      const double c = std::exp(fb.scale_log[t + 1] - fb.row_max[t + 1]);
      Vec nxt = fb.exp_e.row(t + 1).transpose().cwiseProduct(
          fb.beta.row(t + 1).transpose());
      fb.beta.row(t) = (model.A * nxt).transpose() / c;
    }
    fb.gamma = fb.alpha.cwiseProduct(fb.beta);
    // scaled alpha/beta make each gamma row sum to 1 up to roundoff
    for (int t = 0; t < t_len; ++t) fb.gamma.row(t) /= fb.gamma.row(t).sum();
  }
  return fb;
}

}  // namespace

double hmm_forward_loglik(const HmmModel& model, const BagDialog& dialog) {
  if (dialog.empty()) return 0.0;
  return forward_backward(model, dialog, false).loglik;
}

HmmNll hmm_nll(const HmmModel& model, const std::vector<BagDialog>& dialogs) {
  HmmNll out;
  for (const auto& d : dialogs) {
    const double nll = -hmm_forward_loglik(model, d);
    out.per_dialog.push_back(nll);
    out.total += nll;
  }
  return out;
}

HmmTrainResult train_hmm(const std::vector<BagDialog>& dialogs, int n_states,
                         int vocab_size, uint64_t seed, int max_iters,
                         double tol) {
  if (dialogs.empty()) throw Error("train_hmm: empty corpus");
  if (n_states < 1) throw Error("train_hmm: n_states must be >= 1");
  if (vocab_size < 1) throw Error("train_hmm: vocab_size must be >= 1");

  HmmModel model;
  model.n_states = n_states;
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(0.5, 1.5);
  auto random_row = [&](int len) {
    Vec row(len);
    for (int i = 0; i < len; ++i) row[i] = jitter(rng);
    return Vec(row / row.sum());
  };
  model.pi = random_row(n_states);
  model.A = Mat::Zero(n_states, n_states);
  model.B = Mat::Zero(n_states, vocab_size);
  for (int i = 0; i < n_states; ++i) {
    model.A.row(i) = random_row(n_states).transpose();
    model.B.row(i) = random_row(vocab_size).transpose();
  }

  HmmTrainResult result;
  Mat b_num;  // kept for the final smoothing pass
  Vec b_den;
  for (int iter = 0; iter < max_iters; ++iter) {
    Vec pi_acc = Vec::Zero(n_states);
    Mat a_num = Mat::Zero(n_states, n_states);
    b_num = Mat::Zero(n_states, vocab_size);
    b_den = Vec::Zero(n_states);
    double loglik = 0.0;

    for (const auto& dialog : dialogs) {
      if (dialog.empty()) continue;
      ForwardBackward fb = forward_backward(model, dialog, true);
      if (!std::isfinite(fb.loglik))
        throw Error("train_hmm: zero-probability dialog during EM");
      loglik += fb.loglik;
      const int t_len = static_cast<int>(dialog.size());
      pi_acc += fb.gamma.row(0).transpose();
      for (int t = 0; t + 1 < t_len; ++t) {
        const double c = std::exp(fb.scale_log[t + 1] - fb.row_max[t + 1]);
        Vec nxt = fb.exp_e.row(t + 1).transpose().cwiseProduct(
            fb.beta.row(t + 1).transpose());
        Mat xi = fb.alpha.row(t).transpose() * nxt.transpose();
        xi = xi.cwiseProduct(model.A) / c;
        a_num += xi;
      }
      for (int t = 0; t < t_len; ++t) {
        for (int tok : dialog[t]) b_num.col(tok) += fb.gamma.row(t).transpose();
        b_den += fb.gamma.row(t).transpose() *
                 static_cast<double>(dialog[t].size());
      }
    }

    result.loglik_history.push_back(loglik);
    const bool converged =
        result.loglik_history.size() >= 2 &&
        loglik - result.loglik_history[result.loglik_history.size() - 2] < tol;

    // maximum-likelihood M-step; rows without mass fall back to uniform
    model.pi = pi_acc / pi_acc.sum();
    for (int i = 0; i < n_states; ++i) {
      const double arow = a_num.row(i).sum();
      if (arow > 0)
        model.A.row(i) = a_num.row(i) / arow;
      else
        model.A.row(i).setConstant(1.0 / n_states);
      if (b_den[i] > 0)
        model.B.row(i) = b_num.row(i) / b_den[i];
      else
        model.B.row(i).setConstant(1.0 / vocab_size);
    }
    if (converged) break;
  }
  // training likelihood of the final parameters
  {
    double loglik = 0.0;
    for (const auto& dialog : dialogs)
      if (!dialog.empty()) loglik += hmm_forward_loglik(model, dialog);
    result.loglik_history.push_back(loglik);
  }

  // additive smoothing over the vocabulary for unseen test tokens
  for (int i = 0; i < n_states; ++i) {
    model.B.row(i) = (b_num.row(i).array() + 0.1) /
                     (b_den[i] + 0.1 * static_cast<double>(vocab_size));
  }
  model.validate();
  result.model = model;
  return result;
}

}  // namespace dsl
