#pragma once

#include "mixql/data.hpp"
#include "mixql/family.hpp"
#include "mixql/mixture.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace mixql {

// Free parameters are the stacked coefficient rows beta_1..beta_K followed by
// the first K-1 proportions; pi_K = 1 - sum of the others. Dispersions are not
// free parameters here because the quasi-likelihood does not involve them.

Eigen::VectorXd pack_free_parameters(const MixtureFit& fit);

/// Inverse of pack_free_parameters, taking phi and K from `shape`.
MixtureFit unpack_free_parameters(const Eigen::VectorXd& theta, const MixtureFit& shape);

std::vector<std::string> free_parameter_labels(const MixtureFit& fit);

/// psi_i = log sum_k pi_k exp{sum_j q(g(X_ij' beta_k); Y_ij)} for every subject.
Eigen::VectorXd log_psi(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit);

/// n x P matrix of analytic per-subject gradients of psi_i.
Eigen::MatrixXd subject_scores(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit);

struct SandwichResult {
  Eigen::MatrixXd covariance;  ///< B^-1 A B^-1 / n
  Eigen::VectorXd standard_errors;
  Eigen::MatrixXd A;  ///< empirical covariance of subject gradients
  Eigen::MatrixXd B;  ///< mean negative Hessian of psi_i
  std::vector<std::string> labels;
  double condition_number = 0.0;
};

/// Plug-in robust covariance of the free parameters. B comes from central
/// differences of the analytic gradient with step 1e-5 (1 + |theta_j|).
/// Throws Error(numerical) when B is near-singular.
SandwichResult sandwich_covariance(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit);

}  // namespace mixql
