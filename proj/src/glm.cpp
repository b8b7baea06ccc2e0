#include "mixql/glm.hpp"

#include "mixql/errors.hpp"

#include <cmath>

namespace mixql {

Eigen::VectorXd quasi_log_densities(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                    const Eigen::Ref<const Eigen::VectorXd>& y, const ModelFamily& family,
                                    const Eigen::Ref<const Eigen::VectorXd>& beta) {
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd q(eta.size());
  if (family.kind() == FamilyKind::gaussian_identity) {
    q = -0.5 * (y - eta).array().square();
    return q;
  }
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    q(r) = family.quasi_log_density(family.mean(eta(r)), y(r));
  }
  return q;
}

double weighted_quasi_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                 const Eigen::Ref<const Eigen::VectorXd>& y,
                                 const Eigen::Ref<const Eigen::VectorXd>& weights, const ModelFamily& family,
                                 const Eigen::Ref<const Eigen::VectorXd>& beta) {
  return weights.dot(quasi_log_densities(X, y, family, beta));
}

namespace {

struct ScoreAndInformation {
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

ScoreAndInformation score_and_information(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                          const Eigen::Ref<const Eigen::VectorXd>& y,
                                          const Eigen::Ref<const Eigen::VectorXd>& weights,
                                          const ModelFamily& family, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd working(eta.size());
  Eigen::VectorXd info_weight(eta.size());
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    const double mu = family.mean(eta(r));
    const double d = family.mean_derivative(eta(r));
    const double v = family.variance(mu);
    working(r) = weights(r) * d * (y(r) - mu) / v;
    info_weight(r) = weights(r) * d * d / v;
  }
  ScoreAndInformation out;
  out.score = X.transpose() * working;
  out.information = X.transpose() * info_weight.asDiagonal() * X;
  return out;
}

Eigen::VectorXd starting_beta(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                              const Eigen::Ref<const Eigen::VectorXd>& weights, const ModelFamily& family,
                              double ridge) {
  Eigen::VectorXd z(y.size());
  for (Eigen::Index r = 0; r < y.size(); ++r) z(r) = family.linear_predictor(family.starting_mean(y(r)));
  Eigen::MatrixXd gram = X.transpose() * weights.asDiagonal() * X;
  gram.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  return ldlt.solve(X.transpose() * weights.asDiagonal() * z);
}

}  // namespace

QuasiScoreResult solve_quasi_score(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                   const Eigen::Ref<const Eigen::VectorXd>& y,
                                   const Eigen::Ref<const Eigen::VectorXd>& weights, const ModelFamily& family,
                                   const std::optional<Eigen::VectorXd>& start, const QuasiScoreSettings& settings,
                                   const std::string& label) {
  QuasiScoreResult result;
  const Eigen::Index p = X.cols();
  const double ridge = settings.ridge;
  // Ridge-aware objective so step-halving and the stationarity target agree.
  auto objective = [&](const Eigen::VectorXd& b) {
    return weighted_quasi_likelihood(X, y, weights, family, b) - 0.5 * ridge * b.squaredNorm();
  };
  auto safe_objective = [&](const Eigen::VectorXd& b) {
    try {
      const double v = objective(b);
      return std::isfinite(v) ? std::optional<double>(v) : std::nullopt;
    } catch (const Error&) {
      return std::optional<double>();
    }
  };

  Eigen::VectorXd beta = start.value_or(Eigen::VectorXd());
  if (beta.size() != p || !safe_objective(beta)) {
    beta = starting_beta(X, y, weights, family, ridge > 0 ? ridge : 1e-10);
  }
  auto current = safe_objective(beta);
  if (!current) {
    beta = Eigen::VectorXd::Zero(p);
    current = safe_objective(beta);
    if (!current) {
      throw Error(ErrorCategory::numerical, label + ": no starting value with a finite quasi-likelihood");
    }
  }

  for (int step = 0; step < settings.max_steps; ++step) {
    auto [score, information] = score_and_information(X, y, weights, family, beta);
    score -= ridge * beta;
    information.diagonal().array() += ridge;
    result.max_abs_score = score.cwiseAbs().maxCoeff();
    result.steps = step;
    if (result.max_abs_score <= settings.score_tolerance) {
      result.beta = beta;
      return result;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(information);
    const Eigen::VectorXd d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * std::max(dmax, 1e-300))) {
      throw Error(ErrorCategory::rank_deficiency, label + ": information matrix is singular");
    }
    const Eigen::VectorXd delta = ldlt.solve(score);
    double scale = 1.0;
    bool accepted = false;
    Eigen::VectorXd candidate;
    for (int h = 0; h <= settings.max_halvings; ++h, scale *= 0.5) {
      candidate = beta + scale * delta;
      const auto value = safe_objective(candidate);
      if (value && *value >= *current - 1e-12 * (1.0 + std::abs(*current))) {
        current = value;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No ascent direction left at working precision.
      result.beta = beta;
      return result;
    }
    const double step_norm = (candidate - beta).norm();
    beta = candidate;
    if (step_norm <= settings.step_tolerance) {
      result.beta = beta;
      result.steps = step + 1;
      return result;
    }
  }
  throw InnerSolverError(label + ": Fisher scoring did not converge in " + std::to_string(settings.max_steps) +
                             " steps",
                         beta);
}

}  // namespace mixql
