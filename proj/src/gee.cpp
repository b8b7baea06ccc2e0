#include "mixql/gee.hpp"

#include "mixql/errors.hpp"
#include "mixql/glm.hpp"
#include "mixql/selection.hpp"

#include <algorithm>
#include <cmath>

namespace mixql {

CorrelationKind parse_correlation_kind(std::string_view name) {
  if (name == "ind" || name == "independence") return CorrelationKind::independence;
  if (name == "ar1") return CorrelationKind::ar1;
  if (name == "cs" || name == "exchangeable") return CorrelationKind::exchangeable;
  throw Error(ErrorCategory::argument, "unknown working correlation '" + std::string(name) + "' (ind, ar1, cs)");
}

std::string_view correlation_kind_name(CorrelationKind kind) {
  switch (kind) {
    case CorrelationKind::independence: return "ind";
    case CorrelationKind::ar1: return "ar1";
    case CorrelationKind::exchangeable: return "cs";
  }
  return "ind";
}

Eigen::MatrixXd WorkingCorrelation::matrix(Eigen::Index m) const {
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(m, m);
  if (kind == CorrelationKind::independence) return R;
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      if (a == b) continue;
      R(a, b) = kind == CorrelationKind::ar1 ? std::pow(rho, static_cast<double>(std::abs(a - b))) : rho;
    }
  }
  return R;
}

bool WorkingCorrelation::positive_definite_up_to(Eigen::Index max_m) const {
  switch (kind) {
    case CorrelationKind::independence: return true;
    case CorrelationKind::ar1: return std::abs(rho) < 1.0;
    case CorrelationKind::exchangeable:
      return rho < 1.0 && (max_m <= 1 || rho > -1.0 / static_cast<double>(max_m - 1));
  }
  return false;
}

RhoEstimate estimate_rho(const std::vector<Eigen::VectorXd>& residuals, double phi, CorrelationKind kind) {
  RhoEstimate out;
  if (kind == CorrelationKind::independence) return out;
  double numerator = 0.0;
  double pairs = 0.0;
  Eigen::Index max_m = 1;
  for (const auto& r : residuals) {
    const Eigen::Index m = r.size();
    max_m = std::max(max_m, m);
    if (m < 2) continue;
    const Eigen::VectorXd e = r / std::sqrt(phi);
    if (kind == CorrelationKind::ar1) {
      numerator += e.head(m - 1).dot(e.tail(m - 1));
      pairs += static_cast<double>(m - 1);
    } else {
      const double s = e.sum();
      numerator += 0.5 * (s * s - e.squaredNorm());
      pairs += 0.5 * static_cast<double>(m * (m - 1));
    }
  }
  if (pairs == 0.0) {
    out.fell_back_to_independence = true;
    return out;
  }
  double lower = -0.99;
  if (kind == CorrelationKind::exchangeable && max_m > 1) {
    lower = std::max(lower, -0.99 / static_cast<double>(max_m - 1));
  }
  out.rho = std::clamp(numerator / pairs, lower, 0.99);
  return out;
}

GeeFit gee_fit(const LongitudinalDataset& data, const ModelFamily& family, CorrelationKind kind,
               const std::optional<Eigen::VectorXd>& init_beta, const GeeSettings& settings) {
  const auto p = data.p();
  const auto& X = data.stacked_X();
  const auto& y = data.stacked_y();
  GeeFit out;
  if (init_beta && init_beta->size() == p) {
    out.beta = *init_beta;
  } else {
    out.beta = solve_quasi_score(X, y, Eigen::VectorXd::Ones(y.size()), family, std::nullopt, {}, "GEE start").beta;
  }
  std::vector<Eigen::VectorXd> scaled(static_cast<std::size_t>(data.n()));

  for (int it = 1; it <= settings.max_iterations; ++it) {
    const Eigen::VectorXd eta = X * out.beta;
    Eigen::VectorXd mu(eta.size()), deriv(eta.size()), var(eta.size());
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      mu(r) = family.mean(eta(r));
      if (!family.in_domain(mu(r))) throw Error(ErrorCategory::numerical, "GEE iterate left the mean domain");
      deriv(r) = family.mean_derivative(eta(r));
      var(r) = family.variance(mu(r));
    }
    const Eigen::VectorXd resid = y - mu;
    const Eigen::VectorXd pearson = resid.array() / var.array().sqrt();
    out.phi = std::max(pearson.squaredNorm() / static_cast<double>(y.size()), settings.phi_floor);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      scaled[static_cast<std::size_t>(i)] = pearson.segment(data.offset(i), data.m(i));
    }
    const RhoEstimate rho = estimate_rho(scaled, out.phi, kind);
    out.rho = rho.rho;
    out.fell_back_to_independence = rho.fell_back_to_independence;
    const WorkingCorrelation working{rho.fell_back_to_independence ? CorrelationKind::independence : kind, rho.rho};

    Eigen::VectorXd U = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const auto off = data.offset(i);
      const auto m = data.m(i);
      const Eigen::MatrixXd D = deriv.segment(off, m).asDiagonal() * X.middleRows(off, m);
      const Eigen::VectorXd a = var.segment(off, m).cwiseSqrt();
      const Eigen::MatrixXd Vi = out.phi * a.asDiagonal() * working.matrix(m) * a.asDiagonal();
      Eigen::LLT<Eigen::MatrixXd> llt(Vi);
      if (llt.info() != Eigen::Success) {
        throw Error(ErrorCategory::numerical, "working covariance of subject '" + data.subject(i).id + "' is singular");
      }
      const Eigen::MatrixXd VinvD = llt.solve(D);
      U += VinvD.transpose() * resid.segment(off, m);
      H += D.transpose() * VinvD;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    const Eigen::VectorXd d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * d.cwiseAbs().maxCoeff())) {
      throw Error(ErrorCategory::numerical, "GEE normal matrix is singular");
    }
    const Eigen::VectorXd delta = ldlt.solve(U);
    out.beta += delta;
    out.iterations = it;
    if (!delta.allFinite()) throw Error(ErrorCategory::numerical, "GEE update is not finite");
    if (delta.cwiseAbs().maxCoeff() <= settings.tolerance) return out;
  }
  throw InnerSolverError("GEE did not converge in " + std::to_string(settings.max_iterations) + " iterations",
                         out.beta);
}

MixtureFit RefinedFit::as_mixture() const {
  MixtureFit fit;
  fit.pi = pi;
  fit.beta = beta;
  fit.phi = phi;
  fit.converged = true;
  return fit;
}

RefinedFit refine(const LongitudinalDataset& data, const MixtureFit& fit, const ModelFamily& family,
                  CorrelationKind kind, const GeeSettings& settings) {
  validate_fit(fit);
  const auto K = fit.K();
  RefinedFit out;
  out.kind = kind;
  out.pi = fit.pi;
  out.beta = fit.beta;
  out.phi = fit.phi;
  out.rho = Eigen::VectorXd::Zero(K);
  out.assignment = classify_all(fit, family, data);
  for (Eigen::Index k = 0; k < K; ++k) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      if (out.assignment[static_cast<std::size_t>(i)] == k) members.push_back(i);
    }
    if (members.empty()) {
      throw Error(ErrorCategory::collapse, "class " + std::to_string(k) + " received no subjects");
    }
    const GeeFit g = gee_fit(data.select(members), family, kind, fit.beta.row(k).transpose(), settings);
    out.beta.row(k) = g.beta.transpose();
    out.phi(k) = g.phi;
    out.rho(k) = g.rho;
  }
  return out;
}

}  // namespace mixql
