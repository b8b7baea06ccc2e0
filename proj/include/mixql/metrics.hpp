#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace mixql {

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method).
/// Returns column assigned to each row.
std::vector<int> hungarian_assignment(const Eigen::MatrixXd& cost);

struct ConfusionSummary {
  Eigen::MatrixXi confusion;   ///< K_true x K_pred counts
  bool comparable = false;     ///< false when K_pred != K_true
  double rate = 0.0;           ///< NaN when not comparable
  std::vector<int> matching;   ///< predicted label matched to each true class
};

/// Misclassification rate under the best one-to-one relabeling of predictions.
ConfusionSummary misclassification(const std::vector<int>& truth, const std::vector<int>& predicted, int K_true,
                                   int K_pred);

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double bias100 = 0.0;  ///< (mean - truth) * 100
  double mse100 = 0.0;   ///< mean (estimate - truth)^2 * 100
};

struct BiasMseTable {
  std::vector<ParameterSummary> rows;
  std::size_t replications = 0;
  bool empty() const noexcept { return replications == 0; }
};

/// One estimate vector per (conditioned, label-aligned) replication.
BiasMseTable bias_mse_table(const std::vector<Eigen::VectorXd>& estimates, const Eigen::VectorXd& truth,
                            const std::vector<std::string>& names);

/// Linear-interpolation sample quantile (type 7); q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Count of replications per selected number of components.
std::map<int, int> selection_histogram(const std::vector<int>& selected);

}  // namespace mixql
