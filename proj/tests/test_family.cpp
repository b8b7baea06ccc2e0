#include "mixql/errors.hpp"
#include "mixql/family.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace mixql;

namespace {

const std::vector<ModelFamily> all_families = {ModelFamily(FamilyKind::gaussian_identity),
                                               ModelFamily(FamilyKind::poisson_log),
                                               ModelFamily(FamilyKind::binomial_logit)};

std::vector<double> mean_grid(const ModelFamily& f) {
  switch (f.kind()) {
    case FamilyKind::gaussian_identity: return {-5.0, -1.3, 0.0, 0.7, 4.0};
    case FamilyKind::poisson_log: return {0.05, 0.5, 1.0, 3.7, 20.0};
    case FamilyKind::binomial_logit: return {0.02, 0.2, 0.5, 0.77, 0.97};
  }
  return {};
}

std::vector<double> response_grid(const ModelFamily& f) {
  switch (f.kind()) {
    case FamilyKind::gaussian_identity: return {-2.0, 0.0, 1.5, 3.0};
    case FamilyKind::poisson_log: return {0.0, 1.0, 4.0, 11.0};
    case FamilyKind::binomial_logit: return {0.0, 0.3, 1.0};
  }
  return {};
}

}  // namespace

TEST_SUITE("family") {

TEST_CASE("quasi-log-density reference values") {
  const ModelFamily g(FamilyKind::gaussian_identity);
  const ModelFamily pois(FamilyKind::poisson_log);
  CHECK(g.quasi_log_density(0.0, 0.0) == 0.0);
  CHECK(g.quasi_log_density(1.0, 3.0) == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(pois.quasi_log_density(1.0, 0.0) == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("dispersed density divides by phi") {
  const ModelFamily g(FamilyKind::gaussian_identity);
  const ModelFamily pois(FamilyKind::poisson_log);
  CHECK(g.quasi_log_density_dispersed(1.0, 2.0, 3.0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(pois.quasi_log_density_dispersed(1.0, 2.0, 0.0) == doctest::Approx(-0.5).epsilon(1e-15));
  for (const auto& f : all_families) {
    for (double mu : mean_grid(f)) {
      for (double y : response_grid(f)) {
        CHECK(f.quasi_log_density_dispersed(mu, 1.0, y) == f.quasi_log_density(mu, y));
        CHECK(f.quasi_log_density_dispersed(mu, 2.5, y) == f.quasi_log_density(mu, y) / 2.5);
      }
    }
  }
  CHECK_THROWS_AS(g.quasi_log_density_dispersed(1.0, 0.0, 1.0), Error);
  CHECK_THROWS_AS(g.quasi_log_density_dispersed(1.0, -1.0, 1.0), Error);
}

TEST_CASE("out-of-domain means are errors") {
  const ModelFamily pois(FamilyKind::poisson_log);
  const ModelFamily bin(FamilyKind::binomial_logit);
  try {
    pois.quasi_log_density(-0.5, 1.0);
    FAIL("expected a domain error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::domain);
    CHECK(std::string(e.what()).find("poisson") != std::string::npos);
  }
  CHECK_THROWS_AS(pois.quasi_log_density(0.0, 1.0), Error);
  CHECK_THROWS_AS(bin.quasi_log_density(1.0, 1.0), Error);
  CHECK_THROWS_AS(bin.quasi_log_density(0.0, 0.0), Error);
}

TEST_CASE("link and inverse link compose to the identity") {
  for (const auto& f : all_families) {
    for (double mu : mean_grid(f)) {
      CHECK(std::abs(f.mean(f.linear_predictor(mu)) - mu) <= 1e-12 * std::max(1.0, std::abs(mu)));
      CHECK(f.variance(mu) > 0.0);
    }
  }
}

TEST_CASE("mean derivative matches central differences") {
  for (const auto& f : all_families) {
    for (double eta : {-2.0, -0.3, 0.0, 0.8, 2.2}) {
      const double h = 1e-5;
      const double fd = (f.mean(eta + h) - f.mean(eta - h)) / (2 * h);
      CHECK(std::abs(fd - f.mean_derivative(eta)) <= 1e-6 * std::abs(f.mean_derivative(eta)));
    }
  }
}

TEST_CASE("saturated value is the maximum over the mean") {
  for (const auto& f : all_families) {
    for (double y : response_grid(f)) {
      if (!f.in_domain(y)) continue;
      const double top = f.quasi_log_density(y, y);
      CHECK(f.saturated_quasi_log_density(y) == doctest::Approx(top).epsilon(1e-14));
      for (double mu : mean_grid(f)) CHECK(f.quasi_log_density(mu, y) <= top + 1e-14);
    }
  }
  // boundary responses still have a finite saturated value
  CHECK(ModelFamily(FamilyKind::poisson_log).saturated_quasi_log_density(0.0) == 0.0);
  CHECK(ModelFamily(FamilyKind::binomial_logit).saturated_quasi_log_density(1.0) == 0.0);
}

TEST_CASE("family names round trip") {
  for (const auto& f : all_families) CHECK(ModelFamily::from_name(f.name()) == f);
  CHECK_THROWS_AS(ModelFamily::from_name("gamma"), Error);
}

}  // TEST_SUITE
