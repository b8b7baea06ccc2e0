#include "mixql/metrics.hpp"

#include "mixql/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mixql {

std::vector<int> hungarian_assignment(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw Error(ErrorCategory::argument, "assignment cost matrix must be square");
  // Potentials formulation, 1-based with a sentinel column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = match[j0];
      double delta = inf;
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
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, 0);
  for (int j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

ConfusionSummary misclassification(const std::vector<int>& truth, const std::vector<int>& predicted, int K_true,
                                   int K_pred) {
  if (truth.size() != predicted.size()) throw Error(ErrorCategory::argument, "label vectors differ in length");
  ConfusionSummary out;
  out.confusion = Eigen::MatrixXi::Zero(K_true, K_pred);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= K_true || predicted[i] < 0 || predicted[i] >= K_pred) {
      throw Error(ErrorCategory::argument, "label out of range");
    }
    ++out.confusion(truth[i], predicted[i]);
  }
  out.comparable = K_true == K_pred;
  if (!out.comparable) {
    out.rate = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const Eigen::MatrixXd cost = -out.confusion.cast<double>();
  out.matching = hungarian_assignment(cost);
  int agree = 0;
  for (int k = 0; k < K_true; ++k) agree += out.confusion(k, out.matching[static_cast<std::size_t>(k)]);
  out.rate = truth.empty() ? 0.0 : 1.0 - static_cast<double>(agree) / static_cast<double>(truth.size());
  return out;
}

BiasMseTable bias_mse_table(const std::vector<Eigen::VectorXd>& estimates, const Eigen::VectorXd& truth,
                            const std::vector<std::string>& names) {
  if (static_cast<Eigen::Index>(names.size()) != truth.size()) {
    throw Error(ErrorCategory::argument, "one name per parameter required");
  }
  BiasMseTable table;
  table.replications = estimates.size();
  if (estimates.empty()) return table;
  const auto P = truth.size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(P);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(P);
  for (const auto& e : estimates) {
    if (e.size() != P) throw Error(ErrorCategory::argument, "estimate vector has the wrong length");
    sum += e;
    sq += (e - truth).array().square().matrix();
  }
  const double R = static_cast<double>(estimates.size());
  for (Eigen::Index j = 0; j < P; ++j) {
    ParameterSummary row;
    row.name = names[static_cast<std::size_t>(j)];
    row.truth = truth(j);
    row.mean = sum(j) / R;
    row.bias100 = (row.mean - row.truth) * 100.0;
    row.mse100 = sq(j) / R * 100.0;
    table.rows.push_back(row);
  }
  return table;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::map<int, int> selection_histogram(const std::vector<int>& selected) {
  std::map<int, int> counts;
  for (int k : selected) ++counts[k];
  return counts;
}

}  // namespace mixql
