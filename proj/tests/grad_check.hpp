#pragma once

// Central finite-difference comparison against the tape gradients. The loss
// callback must rebuild the same graph (same noise, same masks) on every
// call; with_grad=true must leave d(loss)/d(param) in each Param::grad.

#include "dsl/nn.hpp"

#include <cmath>
#include <functional>
#include <string>

namespace dsl::testing {

struct GradCheckReport {
  double max_rel_err = 0;
  std::string worst_param;
  int worst_row = 0, worst_col = 0;
  double analytic = 0, numeric = 0;
  long entries_checked = 0;
};

inline GradCheckReport check_gradients(
    nn::ParamStore& store, const std::function<double(bool)>& loss,
    double base_step = 1e-5) {
  store.zero_grads();
  loss(true);
  std::map<std::string, Mat> analytic;
  for (const auto& p : store.items()) analytic[p->name] = p->grad;

  GradCheckReport report;
  for (auto& p : store.items()) {
    for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
      for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
        const double orig = p->value(r, c);
        const double h = base_step * std::max(1.0, std::abs(orig));
        p->value(r, c) = orig + h;
        const double up = loss(false);
        p->value(r, c) = orig - h;
        const double down = loss(false);
        p->value(r, c) = orig;
        const double numeric = (up - down) / (2 * h);
        const double a = analytic[p->name](r, c);
        const double rel =
            std::abs(a - numeric) /
            std::max({std::abs(a), std::abs(numeric), 1e-4});
        ++report.entries_checked;
        if (rel > report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst_param = p->name;
          report.worst_row = static_cast<int>(r);
          report.worst_col = static_cast<int>(c);
          report.analytic = a;
          report.numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace dsl::testing
