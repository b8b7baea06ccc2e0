#include "mixql/em.hpp"
#include "mixql/errors.hpp"
#include "mixql/sandwich.hpp"

#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace mixql;

namespace {

const ModelFamily gaussian(FamilyKind::gaussian_identity);

MixtureFit two_component_fit(const LongitudinalDataset& d) {
  MixtureFit init;
  init.pi = support::vec({0.5, 0.5});
  init.beta = (Eigen::MatrixXd(2, 3) << 0.5, 0.0, 0.0, 2.5, 0.0, 0.0).finished();
  init.phi = support::vec({1.0, 1.0});
  return fit_em(d, gaussian, init, EmSettings{});
}

}  // namespace

TEST_SUITE("sandwich") {

TEST_CASE("free parameters pack and unpack") {
  std::mt19937_64 rng(1);
  const auto fit = support::random_fit(rng, 3, 2);
  const Eigen::VectorXd theta = pack_free_parameters(fit);
  CHECK(theta.size() == 3 * 2 + 2);
  const auto back = unpack_free_parameters(theta, fit);
  CHECK(back.beta == fit.beta);
  CHECK((back.pi - fit.pi).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(back.phi == fit.phi);
  const auto labels = free_parameter_labels(fit);
  CHECK(labels.size() == 8);
}

TEST_CASE("single gaussian component gives the textbook robust covariance") {
  std::mt19937_64 rng(2);
  const auto d = support::random_data(rng, gaussian, 40, 3, 2, 5);
  const Eigen::MatrixXd& X = d.stacked_X();
  const Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * d.stacked_y());
  MixtureFit fit;
  fit.pi = Eigen::VectorXd::Ones(1);
  fit.beta = beta.transpose();
  fit.phi = Eigen::VectorXd::Ones(1);

  const Eigen::MatrixXd bread = (X.transpose() * X).inverse();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(3, 3);
  for (const auto& s : d.subjects()) {
    const Eigen::VectorXd g = s.X.transpose() * (s.y - s.X * beta);
    meat += g * g.transpose();
  }
  const Eigen::MatrixXd classic = bread * meat * bread;

  const auto result = sandwich_covariance(d, gaussian, fit);
  REQUIRE(result.covariance.rows() == 3);
  for (Eigen::Index j = 0; j < 3; ++j) {
    CHECK(result.standard_errors(j) == doctest::Approx(std::sqrt(classic(j, j))).epsilon(1e-6));
  }
  CHECK((result.covariance - classic).cwiseAbs().maxCoeff() <= 1e-6 * classic.cwiseAbs().maxCoeff());
}

TEST_CASE("repeating every subject halves the variances") {
  std::mt19937_64 rng(3);
  const auto d = support::random_data(rng, gaussian, 80, 3, 3, 5);
  const auto fit = two_component_fit(d);
  REQUIRE(fit.K() == 2);
  std::vector<SubjectBlock> twice = d.subjects();
  for (const auto& s : d.subjects()) twice.push_back({s.id + "b", s.y, s.X});
  const LongitudinalDataset doubled(twice, d.column_names());
  const auto a = sandwich_covariance(d, gaussian, fit);
  const auto b = sandwich_covariance(doubled, gaussian, fit);
  for (Eigen::Index j = 0; j < a.covariance.rows(); ++j) {
    CHECK(b.covariance(j, j) * 2.0 == doctest::Approx(a.covariance(j, j)).epsilon(0.05));
  }
  CHECK(a.condition_number >= 1.0);
}

TEST_CASE("an unidentified coefficient is reported as near-singular") {
  std::mt19937_64 rng(4);
  const auto d = support::random_data(rng, gaussian, 30, 2, 2, 3);
  std::vector<SubjectBlock> blocks = d.subjects();
  for (auto& s : blocks) s.X.col(1).setZero();
  const LongitudinalDataset flat(blocks, d.column_names());
  MixtureFit fit;
  fit.pi = Eigen::VectorXd::Ones(1);
  fit.beta = (Eigen::MatrixXd(1, 2) << 0.7, 0.0).finished();
  fit.phi = Eigen::VectorXd::Ones(1);
  try {
    sandwich_covariance(flat, gaussian, fit);
    FAIL("expected a numerical error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::numerical);
    CHECK(std::string(e.what()).find("condition number") != std::string::npos);
  }
}

}  // TEST_SUITE
