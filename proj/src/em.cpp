#include "mixql/em.hpp"

#include "mixql/errors.hpp"
#include "mixql/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mixql {

void EmSettings::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCategory::settings, "lambda must be >= 0");
  if (max_iterations < 1) throw Error(ErrorCategory::settings, "max iterations must be positive");
  if (!(objective_tolerance > 0.0) || !(parameter_tolerance > 0.0) || !(inner_tolerance > 0.0)) {
    throw Error(ErrorCategory::settings, "tolerances must be positive");
  }
  if (inner_max_steps < 1) throw Error(ErrorCategory::settings, "inner max steps must be positive");
  if (!(phi_floor > 0.0)) throw Error(ErrorCategory::settings, "phi floor must be positive");
  if (!(monitor_epsilon > 0.0)) throw Error(ErrorCategory::settings, "epsilon must be positive");
  if (prune_threshold < 0.0) throw Error(ErrorCategory::settings, "prune threshold must be >= 0");
}

Eigen::MatrixXd component_log_scores(const LongitudinalDataset& data, const ModelFamily& family,
                                     const Eigen::MatrixXd& beta, const std::optional<Eigen::VectorXd>& phi) {
  const auto K = beta.rows();
  Eigen::MatrixXd scores(data.n(), K);
  // Scaled scores integrate from y to mu, so q(y; y) is removed before dividing by phi.
  Eigen::VectorXd saturated(data.total_observations());
  for (Eigen::Index r = 0; r < saturated.size(); ++r) {
    saturated(r) = family.saturated_quasi_log_density(data.stacked_y()(r));
  }
  const Eigen::VectorXd offset = data.sum_by_subject(saturated);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::VectorXd q = quasi_log_densities(data.stacked_X(), data.stacked_y(), family, beta.row(k).transpose());
    scores.col(k) = data.sum_by_subject(q);
    if (phi) scores.col(k) = (scores.col(k) - offset) / (*phi)(k);
  }
  if (!scores.allFinite()) {
    for (Eigen::Index k = 0; k < K; ++k) {
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (!std::isfinite(scores(i, k))) {
          throw Error(ErrorCategory::numerical, "non-finite quasi-likelihood for subject '" + data.subject(i).id +
                                                    "' in component " + std::to_string(k));
        }
      }
    }
  }
  return scores;
}

Eigen::VectorXd log_mixture_rows(const Eigen::MatrixXd& log_scores, const Eigen::VectorXd& pi) {
  const Eigen::MatrixXd weighted = log_scores.rowwise() + pi.array().log().matrix().transpose();
  const Eigen::VectorXd row_max = weighted.rowwise().maxCoeff();
  return row_max.array() + (weighted.colwise() - row_max).array().exp().rowwise().sum().log();
}

double quasi_likelihood(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit) {
  return log_mixture_rows(component_log_scores(data, family, fit.beta, std::nullopt), fit.pi).sum();
}

double penalized_objective(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit,
                           double lambda, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorCategory::argument, "epsilon must be positive");
  const double penalty = ((fit.pi.array() + epsilon).log() - std::log(epsilon)).sum();
  return quasi_likelihood(data, family, fit) - static_cast<double>(data.n()) * lambda * penalty;
}

PosteriorMatrix e_step(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit) {
  Eigen::MatrixXd w = component_log_scores(data, family, fit.beta, fit.phi);
  w.rowwise() += fit.pi.array().log().matrix().transpose();
  const Eigen::VectorXd row_max = w.rowwise().maxCoeff();
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (!std::isfinite(row_max(i))) {
      throw Error(ErrorCategory::numerical, "all component weights vanish for subject '" + data.subject(i).id + "'");
    }
  }
  w = (w.colwise() - row_max).array().exp().matrix();
  const Eigen::VectorXd row_sum = w.rowwise().sum();
  return PosteriorMatrix{w.array().colwise() / row_sum.array()};
}

ProportionUpdate m_step_pi(const PosteriorMatrix& posterior, double lambda, double prune_threshold) {
  const auto K = posterior.u.cols();
  const double lk = lambda * static_cast<double>(K);
  if (!(lk < 1.0) || lambda < 0.0) {
    throw Error(ErrorCategory::settings, "lambda * K = " + std::to_string(lk) + " must lie in [0, 1) (K = " +
                                             std::to_string(K) + ")");
  }
  const Eigen::VectorXd ubar = posterior.u.colwise().mean().transpose();
  ProportionUpdate out;
  out.raw = ((ubar.array() - lambda) / (1.0 - lk)).max(0.0).matrix();
  for (Eigen::Index k = 0; k < K; ++k) {
    if (out.raw(k) > prune_threshold) out.survivors.push_back(k);
  }
  if (out.survivors.empty()) {
    throw Error(ErrorCategory::collapse, "every mixture component was truncated to zero");
  }
  out.pi.resize(static_cast<Eigen::Index>(out.survivors.size()));
  for (std::size_t s = 0; s < out.survivors.size(); ++s) out.pi(static_cast<Eigen::Index>(s)) = out.raw(out.survivors[s]);
  out.pi /= out.pi.sum();
  return out;
}

namespace {

Eigen::VectorXd observation_weights(const LongitudinalDataset& data, const Eigen::Ref<const Eigen::VectorXd>& subject_weights) {
  Eigen::VectorXd w(data.total_observations());
  for (Eigen::Index i = 0; i < data.n(); ++i) w.segment(data.offset(i), data.m(i)).setConstant(subject_weights(i));
  return w;
}

Eigen::VectorXd component_beta(const LongitudinalDataset& data, const ModelFamily& family,
                               const Eigen::Ref<const Eigen::VectorXd>& subject_weights,
                               const std::optional<Eigen::VectorXd>& start, const EmSettings& settings, Eigen::Index k) {
  QuasiScoreSettings qs;
  qs.score_tolerance = settings.inner_tolerance;
  qs.step_tolerance = settings.parameter_tolerance * 1e-2;
  qs.max_steps = settings.inner_max_steps;
  qs.max_halvings = settings.inner_max_halvings;
  return solve_quasi_score(data.stacked_X(), data.stacked_y(), observation_weights(data, subject_weights), family, start,
                           qs, "component " + std::to_string(k))
      .beta;
}

}  // namespace

Eigen::MatrixXd m_step_beta(const LongitudinalDataset& data, const ModelFamily& family,
                            const PosteriorMatrix& posterior, const Eigen::MatrixXd& beta,
                            const EmSettings& settings) {
  const auto K = posterior.u.cols();
  Eigen::MatrixXd out(K, data.p());
  for (Eigen::Index k = 0; k < K; ++k) {
    std::optional<Eigen::VectorXd> start;
    if (beta.rows() == K && beta.cols() == data.p()) start = beta.row(k).transpose();
    out.row(k) = component_beta(data, family, posterior.u.col(k), start, settings, k).transpose();
  }
  return out;
}

Eigen::VectorXd m_step_phi(const LongitudinalDataset& data, const ModelFamily& family,
                           const PosteriorMatrix& posterior, const Eigen::MatrixXd& beta, double phi_floor) {
  const auto K = posterior.u.cols();
  Eigen::VectorXd m(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) m(i) = static_cast<double>(data.m(i));
  Eigen::VectorXd phi(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::VectorXd eta = data.stacked_X() * beta.row(k).transpose();
    Eigen::VectorXd pearson2(eta.size());
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      const double mu = family.mean(eta(r));
      const double res = data.stacked_y()(r) - mu;
      pearson2(r) = res * res / family.variance(mu);
    }
    const double denom = m.dot(posterior.u.col(k));
    const double value = denom > 0.0 ? posterior.u.col(k).dot(data.sum_by_subject(pearson2)) / denom : 0.0;
    phi(k) = std::isfinite(value) ? std::max(value, phi_floor) : phi_floor;
  }
  return phi;
}

namespace {

double max_parameter_change(const MixtureFit& a, const MixtureFit& b) {
  return std::max({(a.pi - b.pi).cwiseAbs().maxCoeff(), (a.beta - b.beta).cwiseAbs().maxCoeff(),
                   (a.phi - b.phi).cwiseAbs().maxCoeff()});
}

}  // namespace

MixtureFit fit_em(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& init,
                  const EmSettings& settings) {
  settings.validate();
  validate_fit(init);
  if (init.p() != data.p()) throw Error(ErrorCategory::argument, "initial fit has the wrong covariate dimension");

  MixtureFit fit = order_labels(init);
  fit.phi = fit.phi.cwiseMax(settings.phi_floor);
  fit.objective_trace.clear();
  fit.components_trace.clear();
  fit.converged = false;
  fit.iterations = 0;
  fit.objective_trace.push_back(penalized_objective(data, family, fit, settings.lambda, settings.monitor_epsilon));
  fit.components_trace.push_back(static_cast<int>(fit.K()));

  for (int iter = 1; iter <= settings.max_iterations; ++iter) {
    PosteriorMatrix posterior = e_step(data, family, fit);
    const ProportionUpdate proportions = m_step_pi(posterior, settings.lambda, settings.prune_threshold);

    std::vector<Eigen::Index> keep;
    for (auto k : proportions.survivors) {
      if (posterior.u.col(k).sum() >= settings.min_effective_subjects) keep.push_back(k);
    }
    if (keep.empty()) {
      throw Error(ErrorCategory::collapse, "all components pruned at iteration " + std::to_string(iter));
    }

    // A component resting on too few distinct subjects can have a singular
    // design; it is degenerate and gets pruned like an empty one.
    std::vector<Eigen::Index> solvable;
    std::vector<Eigen::VectorXd> betas;
    for (auto k : keep) {
      try {
        betas.push_back(component_beta(data, family, posterior.u.col(k), Eigen::VectorXd(fit.beta.row(k).transpose()),
                                       settings, k));
        solvable.push_back(k);
      } catch (const Error& e) {
        if (e.category() != ErrorCategory::rank_deficiency || keep.size() == 1) throw;
      }
    }
    if (solvable.empty()) {
      throw Error(ErrorCategory::collapse, "every component became degenerate at iteration " + std::to_string(iter));
    }
    keep = std::move(solvable);
    const bool pruned = static_cast<Eigen::Index>(keep.size()) < fit.K();

    MixtureFit previous = select_components(fit, keep);
    PosteriorMatrix kept{Eigen::MatrixXd(data.n(), static_cast<Eigen::Index>(keep.size()))};
    Eigen::VectorXd pi(static_cast<Eigen::Index>(keep.size()));
    MixtureFit next = previous;
    for (std::size_t s = 0; s < keep.size(); ++s) {
      const auto col = static_cast<Eigen::Index>(s);
      kept.u.col(col) = posterior.u.col(keep[s]);
      pi(col) = proportions.raw(keep[s]);
      next.beta.row(col) = betas[s].transpose();
    }
    pi /= pi.sum();
    next.pi = pi;
    if (settings.update_phi) next.phi = m_step_phi(data, family, kept, previous.beta, settings.phi_floor);

    const double objective = penalized_objective(data, family, next, settings.lambda, settings.monitor_epsilon);
    next.objective_trace.push_back(objective);
    next.components_trace.push_back(static_cast<int>(next.K()));
    next.iterations = iter;

    const double last = fit.objective_trace.back();
    const double rel_change = std::abs(objective - last) / (std::abs(objective) + 1.0);
    const double param_change = max_parameter_change(next, previous);
    fit = std::move(next);
    if (!pruned && (rel_change <= settings.objective_tolerance || param_change <= settings.parameter_tolerance)) {
      fit.converged = true;
      break;
    }
  }
  const auto order = label_order(fit);
  MixtureFit ordered = select_components(fit, order);
  return ordered;
}

}  // namespace mixql
