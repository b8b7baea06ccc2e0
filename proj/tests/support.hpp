#pragma once

#include "mixql/data.hpp"
#include "mixql/family.hpp"
#include "mixql/mixture.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace support {

inline mixql::LongitudinalDataset make_dataset(const std::vector<Eigen::VectorXd>& ys,
                                               const std::vector<Eigen::MatrixXd>& Xs) {
  std::vector<mixql::SubjectBlock> subjects;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    subjects.push_back({"s" + std::to_string(i + 1), ys[i], Xs[i]});
  }
  return mixql::LongitudinalDataset(std::move(subjects), {});
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

/// Random long-format data with an intercept column and U(0,1) covariates.
/// Responses follow one of two coefficient vectors, with family-appropriate noise.
inline mixql::LongitudinalDataset random_data(std::mt19937_64& rng, const mixql::ModelFamily& family, int n, int p,
                                              int m_min, int m_max, std::vector<int>* labels = nullptr) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> visits(m_min, m_max);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd beta(2, p);
  for (int c = 0; c < p; ++c) {
    beta(0, c) = c == 0 ? 1.0 : 0.5 * (c % 2 ? 1.0 : -1.0);
    beta(1, c) = c == 0 ? -0.5 : -0.4 * (c % 2 ? 1.0 : -1.0);
  }
  if (family.kind() == mixql::FamilyKind::gaussian_identity) beta(1, 0) = 3.0;
  std::vector<Eigen::VectorXd> ys;
  std::vector<Eigen::MatrixXd> Xs;
  for (int i = 0; i < n; ++i) {
    const int k = i % 2;
    if (labels) labels->push_back(k);
    const int m = visits(rng);
    Eigen::MatrixXd X(m, p);
    Eigen::VectorXd y(m);
    for (int j = 0; j < m; ++j) {
      X(j, 0) = 1.0;
      for (int c = 1; c < p; ++c) X(j, c) = unit(rng);
      const double mu = family.mean(X.row(j).dot(beta.row(k)));
      switch (family.kind()) {
        case mixql::FamilyKind::gaussian_identity: y(j) = mu + 0.5 * normal(rng); break;
        case mixql::FamilyKind::poisson_log: y(j) = std::poisson_distribution<int>(mu)(rng); break;
        case mixql::FamilyKind::binomial_logit: y(j) = std::bernoulli_distribution(mu)(rng) ? 1.0 : 0.0; break;
      }
    }
    ys.push_back(y);
    Xs.push_back(X);
  }
  return make_dataset(ys, Xs);
}

/// A valid fit with positive proportions and dispersions and modest coefficients.
inline mixql::MixtureFit random_fit(std::mt19937_64& rng, int K, int p) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  mixql::MixtureFit fit;
  fit.pi.resize(K);
  for (int k = 0; k < K; ++k) fit.pi(k) = 0.2 + unit(rng);
  fit.pi /= fit.pi.sum();
  fit.beta.resize(K, p);
  for (int k = 0; k < K; ++k) {
    for (int c = 0; c < p; ++c) fit.beta(k, c) = unit(rng) - 0.5 + (c == 0 ? 0.6 * k : 0.0);
  }
  fit.phi.resize(K);
  for (int k = 0; k < K; ++k) fit.phi(k) = 0.5 + unit(rng);
  return fit;
}

/// Q(theta) by direct summation, no log-sum-exp shift.
inline double brute_force_q(const mixql::LongitudinalDataset& data, const mixql::ModelFamily& family,
                            const mixql::MixtureFit& fit) {
  double total = 0.0;
  for (const auto& s : data.subjects()) {
    double mix = 0.0;
    for (Eigen::Index k = 0; k < fit.K(); ++k) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < s.m(); ++j) {
        sum += family.quasi_log_density(family.mean(s.X.row(j).dot(fit.beta.row(k))), s.y(j));
      }
      mix += fit.pi(k) * std::exp(sum);
    }
    total += std::log(mix);
  }
  return total;
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mixql-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace support
