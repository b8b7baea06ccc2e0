#include "mixql/sandwich.hpp"

#include "mixql/em.hpp"
#include "mixql/errors.hpp"

#include <cmath>
#include <sstream>

namespace mixql {

Eigen::VectorXd pack_free_parameters(const MixtureFit& fit) {
  const auto K = fit.K();
  const auto p = fit.p();
  Eigen::VectorXd theta(K * p + K - 1);
  for (Eigen::Index k = 0; k < K; ++k) theta.segment(k * p, p) = fit.beta.row(k).transpose();
  theta.tail(K - 1) = fit.pi.head(K - 1);
  return theta;
}

MixtureFit unpack_free_parameters(const Eigen::VectorXd& theta, const MixtureFit& shape) {
  const auto K = shape.K();
  const auto p = shape.p();
  if (theta.size() != K * p + K - 1) throw Error(ErrorCategory::argument, "free parameter vector has wrong length");
  MixtureFit fit = shape;
  for (Eigen::Index k = 0; k < K; ++k) fit.beta.row(k) = theta.segment(k * p, p).transpose();
  fit.pi.head(K - 1) = theta.tail(K - 1);
  fit.pi(K - 1) = 1.0 - theta.tail(K - 1).sum();
  return fit;
}

std::vector<std::string> free_parameter_labels(const MixtureFit& fit) {
  std::vector<std::string> labels;
  for (Eigen::Index k = 0; k < fit.K(); ++k) {
    for (Eigen::Index c = 0; c < fit.p(); ++c) {
      labels.push_back("beta[" + std::to_string(k + 1) + "," + std::to_string(c + 1) + "]");
    }
  }
  for (Eigen::Index k = 0; k + 1 < fit.K(); ++k) labels.push_back("pi[" + std::to_string(k + 1) + "]");
  return labels;
}

Eigen::VectorXd log_psi(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit) {
  return log_mixture_rows(component_log_scores(data, family, fit.beta, std::nullopt), fit.pi);
}

Eigen::MatrixXd subject_scores(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit) {
  const auto K = fit.K();
  const auto p = fit.p();
  const auto n = data.n();
  const Eigen::MatrixXd S = component_log_scores(data, family, fit.beta, std::nullopt);
  Eigen::MatrixXd logw = S.rowwise() + fit.pi.array().log().matrix().transpose();
  const Eigen::VectorXd row_max = logw.rowwise().maxCoeff();
  Eigen::MatrixXd w = (logw.colwise() - row_max).array().exp().matrix();
  w = (w.array().colwise() / w.rowwise().sum().array()).matrix();

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, K * p + K - 1);
  const auto& X = data.stacked_X();
  const auto& y = data.stacked_y();
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::VectorXd eta = X * fit.beta.row(k).transpose();
    Eigen::VectorXd working(eta.size());
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      const double mu = family.mean(eta(r));
      working(r) = family.mean_derivative(eta(r)) * (y(r) - mu) / family.variance(mu);
    }
    const Eigen::MatrixXd contrib = X.array().colwise() * working.array();
    for (Eigen::Index i = 0; i < n; ++i) {
      grad.block(i, k * p, 1, p) = w(i, k) * contrib.middleRows(data.offset(i), data.m(i)).colwise().sum();
    }
  }
  for (Eigen::Index k = 0; k + 1 < K; ++k) {
    grad.col(K * p + k) = w.col(k) / fit.pi(k) - w.col(K - 1) / fit.pi(K - 1);
  }
  return grad;
}

SandwichResult sandwich_covariance(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit) {
  validate_fit(fit);
  const double n = static_cast<double>(data.n());
  const Eigen::MatrixXd G = subject_scores(data, family, fit);
  const Eigen::Index P = G.cols();

  SandwichResult out;
  out.labels = free_parameter_labels(fit);
  const Eigen::RowVectorXd gbar = G.colwise().mean();
  const Eigen::MatrixXd centered = G.rowwise() - gbar;
  out.A = centered.transpose() * centered / n;

  const Eigen::VectorXd theta = pack_free_parameters(fit);
  out.B.resize(P, P);
  for (Eigen::Index j = 0; j < P; ++j) {
    const double h = 1e-5 * (1.0 + std::abs(theta(j)));
    Eigen::VectorXd plus = theta;
    Eigen::VectorXd minus = theta;
    plus(j) += h;
    minus(j) -= h;
    const Eigen::RowVectorXd gp = subject_scores(data, family, unpack_free_parameters(plus, fit)).colwise().mean();
    const Eigen::RowVectorXd gm = subject_scores(data, family, unpack_free_parameters(minus, fit)).colwise().mean();
    out.B.col(j) = -(gp - gm).transpose() / (2.0 * h);
  }
  out.B = 0.5 * (out.B + out.B.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.B);
  const Eigen::VectorXd magnitude = eig.eigenvalues().cwiseAbs();
  out.condition_number = magnitude.maxCoeff() / magnitude.minCoeff();
  if (eig.info() != Eigen::Success || !(magnitude.minCoeff() > 0.0) || !(out.condition_number < 1e12)) {
    std::ostringstream os;
    os << "information matrix B is near-singular (condition number " << out.condition_number << ")";
    throw Error(ErrorCategory::numerical, os.str());
  }
  const Eigen::MatrixXd Binv =
      eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  out.covariance = Binv * out.A * Binv / n;
  out.standard_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

}  // namespace mixql
