#pragma once

#include "mixql/data.hpp"
#include "mixql/family.hpp"
#include "mixql/mixture.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace mixql {

struct EmSettings {
  double lambda = 0.0;
  int max_iterations = 500;
  double objective_tolerance = 1e-8;  ///< on |dQ_P| / (|Q_P| + 1)
  double parameter_tolerance = 1e-6;  ///< on max |d theta|
  double inner_tolerance = 1e-8;
  int inner_max_steps = 50;
  int inner_max_halvings = 30;
  double prune_threshold = 1e-8;
  double min_effective_subjects = 2.0;
  double phi_floor = 1e-8;
  double monitor_epsilon = 1e-10;  ///< epsilon of the monitored objective only
  bool update_phi = true;          ///< false holds phi at its initial value
  std::uint64_t seed = 20240607;

  /// Throws Error(settings) on non-positive tolerances or negative lambda.
  void validate() const;
};

/// n x K membership responsibilities; rows sum to one.
struct PosteriorMatrix {
  Eigen::MatrixXd u;
};

/// S(i, k) = sum_j [q(g(X_ij' beta_k); Y_ij) - q(Y_ij; Y_ij)] / phi_k, or the
/// plain sum_j q(g(X_ij' beta_k); Y_ij) when `phi` is empty. Throws Error(numerical) naming subject and component
/// when a sum is not finite.
Eigen::MatrixXd component_log_scores(const LongitudinalDataset& data, const ModelFamily& family,
                                     const Eigen::MatrixXd& beta, const std::optional<Eigen::VectorXd>& phi);

/// Row-wise log(sum_k pi_k exp(S(i, k))) with per-row max subtraction.
Eigen::VectorXd log_mixture_rows(const Eigen::MatrixXd& log_scores, const Eigen::VectorXd& pi);

/// Q(theta) = sum_i log sum_k pi_k exp{sum_j q(g(X_ij' beta_k); Y_ij)}.
double quasi_likelihood(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit);

/// Q(theta) - n lambda sum_k {log(eps + pi_k) - log eps}.
double penalized_objective(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit,
                           double lambda, double epsilon);

/// Responsibilities proportional to pi_k exp{sum_j q~(mu_ijk, phi_k; Y_ij)}.
PosteriorMatrix e_step(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit);

struct ProportionUpdate {
  Eigen::VectorXd raw;                  ///< max{0, (ubar_k - lambda) / (1 - lambda K)} for all K
  std::vector<Eigen::Index> survivors;  ///< components with raw > prune threshold
  Eigen::VectorXd pi;                   ///< survivors' proportions renormalized to sum one
};

/// Closed-form penalized proportion update. Throws Error(settings) when
/// lambda * K >= 1 and Error(collapse) when every component is truncated.
ProportionUpdate m_step_pi(const PosteriorMatrix& posterior, double lambda, double prune_threshold = 1e-8);

/// Per-component weighted quasi-score solve, warm-started at `beta`.
Eigen::MatrixXd m_step_beta(const LongitudinalDataset& data, const ModelFamily& family,
                            const PosteriorMatrix& posterior, const Eigen::MatrixXd& beta,
                            const EmSettings& settings);

/// Residual-moment dispersion per component, floored at `phi_floor`.
Eigen::VectorXd m_step_phi(const LongitudinalDataset& data, const ModelFamily& family,
                           const PosteriorMatrix& posterior, const Eigen::MatrixXd& beta, double phi_floor = 1e-8);

/// Modified EM for the penalized quasi-likelihood at fixed lambda, pruning
/// components as their proportions are truncated. The result is label-ordered.
MixtureFit fit_em(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& init,
                  const EmSettings& settings);

}  // namespace mixql
