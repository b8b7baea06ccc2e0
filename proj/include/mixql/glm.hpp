#pragma once

#include "mixql/family.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace mixql {

struct QuasiScoreSettings {
  double score_tolerance = 1e-8;
  double step_tolerance = 1e-6;
  int max_steps = 50;
  int max_halvings = 30;
  /// Added to the diagonal of the information matrix. Only initialization uses it.
  double ridge = 0.0;
};

struct QuasiScoreResult {
  Eigen::VectorXd beta;
  int steps = 0;
  double max_abs_score = 0.0;
};

/// Solves sum_r w_r g'(x_r'b) x_r (y_r - g(x_r'b)) / V(g(x_r'b)) = 0 by Fisher
/// scoring (expected information sum_r w_r g'^2 x_r x_r' / V) with step-halving
/// on the weighted quasi-likelihood.
///
/// `label` names the fit in error messages. Throws Error(rank_deficiency) when
/// the information matrix is singular and InnerSolverError when max_steps is
/// exhausted.
QuasiScoreResult solve_quasi_score(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                   const Eigen::Ref<const Eigen::VectorXd>& y,
                                   const Eigen::Ref<const Eigen::VectorXd>& weights, const ModelFamily& family,
                                   const std::optional<Eigen::VectorXd>& start, const QuasiScoreSettings& settings,
                                   const std::string& label);

/// sum_r w_r q(g(x_r'b); y_r). Throws Error(domain) for out-of-domain means.
double weighted_quasi_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                 const Eigen::Ref<const Eigen::VectorXd>& y,
                                 const Eigen::Ref<const Eigen::VectorXd>& weights, const ModelFamily& family,
                                 const Eigen::Ref<const Eigen::VectorXd>& beta);

/// Per-observation quasi-log-density q(g(x_r'b); y_r).
Eigen::VectorXd quasi_log_densities(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                    const Eigen::Ref<const Eigen::VectorXd>& y, const ModelFamily& family,
                                    const Eigen::Ref<const Eigen::VectorXd>& beta);

}  // namespace mixql
