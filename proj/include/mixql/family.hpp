#pragma once

#include <string>
#include <string_view>

namespace mixql {

enum class FamilyKind { gaussian_identity, poisson_log, binomial_logit };

/// Mean/variance specification of a marginal regression component.
///
/// Notation follows the marginal-model convention: `mean(eta)` maps the linear
/// predictor X'beta to the mean (the function written g in the model), and
/// `linear_predictor(mu)` is its inverse (the GLM link). The quasi-likelihood
/// integrals use a fixed additive constant per family so that absolute values
/// (e.g. in BIC) are reproducible:
///
///   gaussian : q(mu; y) = -(y - mu)^2 / 2
///   poisson  : q(mu; y) = y log(mu) - mu
///   binomial : q(mu; y) = y log(mu) + (1 - y) log(1 - mu)
///
/// Values are immutable and cheap to copy.
class ModelFamily {
 public:
  constexpr explicit ModelFamily(FamilyKind kind = FamilyKind::gaussian_identity) : kind_(kind) {}

  /// Accepts "gaussian", "poisson", "binomial". Throws Error(argument) otherwise.
  static ModelFamily from_name(std::string_view name);

  FamilyKind kind() const noexcept { return kind_; }
  std::string name() const;

  double mean(double eta) const;
  double mean_derivative(double eta) const;
  double linear_predictor(double mu) const;
  double variance(double mu) const;

  bool in_domain(double mu) const noexcept;

  /// q(mu; y). Throws Error(domain) when mu lies outside the mean domain.
  double quasi_log_density(double mu, double y) const;

  /// q(mu; y) / phi. Throws Error(argument) for phi <= 0.
  /// q(y; y), the value at the saturated mean (0 for gaussian).
  double saturated_quasi_log_density(double y) const;
  double quasi_log_density_dispersed(double mu, double phi, double y) const;

  /// Starting mean for a response value, used to seed Fisher scoring and
  /// to map responses onto the linear-predictor scale for clustering.
  double starting_mean(double y) const;

  friend bool operator==(const ModelFamily&, const ModelFamily&) = default;

 private:
  FamilyKind kind_;
};

}  // namespace mixql
