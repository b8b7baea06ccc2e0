#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mixql {

/// Parameters of a K-component marginal mixture regression and the record of
/// how they were reached.
struct MixtureFit {
  Eigen::VectorXd pi;    ///< K mixing proportions, all positive, summing to 1
  Eigen::MatrixXd beta;  ///< K x p, row k holds component k's coefficients
  Eigen::VectorXd phi;   ///< K dispersions, floored at EmSettings::phi_floor
  std::vector<double> objective_trace;
  std::vector<int> components_trace;
  bool converged = false;
  int iterations = 0;

  Eigen::Index K() const noexcept { return pi.size(); }
  Eigen::Index p() const noexcept { return beta.cols(); }
};

/// Throws Error(argument) unless shapes agree, pi is a strictly positive
/// probability vector (sum within 1e-10) and phi is positive.
void validate_fit(const MixtureFit& fit);

/// Keeps the listed components in the given order.
MixtureFit select_components(const MixtureFit& fit, const std::vector<Eigen::Index>& order);

/// Permutation that sorts components by beta(k,0) ascending, then beta(k,1)
/// ascending, then pi descending (remaining ties keep their index order).
std::vector<Eigen::Index> label_order(const MixtureFit& fit);

/// Label-switching resolution: components reordered by label_order().
MixtureFit order_labels(const MixtureFit& fit);

}  // namespace mixql
