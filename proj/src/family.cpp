#include "mixql/family.hpp"

#include "mixql/errors.hpp"

#include <cmath>
#include <sstream>

namespace mixql {

ModelFamily ModelFamily::from_name(std::string_view name) {
  if (name == "gaussian") return ModelFamily(FamilyKind::gaussian_identity);
  if (name == "poisson") return ModelFamily(FamilyKind::poisson_log);
  if (name == "binomial") return ModelFamily(FamilyKind::binomial_logit);
  throw Error(ErrorCategory::argument,
              "unknown family '" + std::string(name) + "' (expected gaussian, poisson or binomial)");
}

std::string ModelFamily::name() const {
  switch (kind_) {
    case FamilyKind::gaussian_identity: return "gaussian";
    case FamilyKind::poisson_log: return "poisson";
    case FamilyKind::binomial_logit: return "binomial";
  }
  return "gaussian";
}

double ModelFamily::mean(double eta) const {
  switch (kind_) {
    case FamilyKind::gaussian_identity: return eta;
    case FamilyKind::poisson_log: return std::exp(eta);
    case FamilyKind::binomial_logit: return 1.0 / (1.0 + std::exp(-eta));
  }
  return eta;
}

double ModelFamily::mean_derivative(double eta) const {
  switch (kind_) {
    case FamilyKind::gaussian_identity: return 1.0;
    case FamilyKind::poisson_log: return std::exp(eta);
    case FamilyKind::binomial_logit: {
      const double mu = mean(eta);
      return mu * (1.0 - mu);
    }
  }
  return 1.0;
}

double ModelFamily::linear_predictor(double mu) const {
  switch (kind_) {
    case FamilyKind::gaussian_identity: return mu;
    case FamilyKind::poisson_log: return std::log(mu);
    case FamilyKind::binomial_logit: return std::log(mu / (1.0 - mu));
  }
  return mu;
}

double ModelFamily::variance(double mu) const {
  switch (kind_) {
    case FamilyKind::gaussian_identity: return 1.0;
    case FamilyKind::poisson_log: return mu;
    case FamilyKind::binomial_logit: return mu * (1.0 - mu);
  }
  return 1.0;
}

bool ModelFamily::in_domain(double mu) const noexcept {
  switch (kind_) {
    case FamilyKind::gaussian_identity: return std::isfinite(mu);
    case FamilyKind::poisson_log: return std::isfinite(mu) && mu > 0.0;
    case FamilyKind::binomial_logit: return mu > 0.0 && mu < 1.0;
  }
  return false;
}

double ModelFamily::quasi_log_density(double mu, double y) const {
  if (!in_domain(mu)) {
    std::ostringstream os;
    os.precision(17);
    os << name() << " family: mean " << mu << " is outside the mean domain";
    throw Error(ErrorCategory::domain, os.str());
  }
  switch (kind_) {
    case FamilyKind::gaussian_identity: {
      const double r = y - mu;
      return -0.5 * r * r;
    }
    case FamilyKind::poisson_log:
      return (y == 0.0 ? 0.0 : y * std::log(mu)) - mu;
    case FamilyKind::binomial_logit:
      return (y == 0.0 ? 0.0 : y * std::log(mu)) + (y == 1.0 ? 0.0 : (1.0 - y) * std::log1p(-mu));
  }
  return 0.0;
}

double ModelFamily::saturated_quasi_log_density(double y) const {
  const auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
  switch (kind_) {
    case FamilyKind::gaussian_identity: return 0.0;
    case FamilyKind::poisson_log: return xlogx(y) - y;
    case FamilyKind::binomial_logit: return xlogx(y) + xlogx(1.0 - y);
  }
  return 0.0;
}

double ModelFamily::quasi_log_density_dispersed(double mu, double phi, double y) const {
  if (!(phi > 0.0)) {
    throw Error(ErrorCategory::argument, "dispersion must be positive");
  }
  return quasi_log_density(mu, y) / phi;
}

double ModelFamily::starting_mean(double y) const {
  switch (kind_) {
    case FamilyKind::gaussian_identity: return y;
    case FamilyKind::poisson_log: return y + 0.5;
    case FamilyKind::binomial_logit: return (y + 0.5) / 2.0;
  }
  return y;
}

}  // namespace mixql
