#pragma once

#include "mixql/data.hpp"
#include "mixql/em.hpp"
#include "mixql/family.hpp"
#include "mixql/gee.hpp"
#include "mixql/metrics.hpp"
#include "mixql/selection.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mixql {

enum class ExampleId { ex1, ex2, ex3, custom };

enum class CovariateLaw {
  /// Treatment ~ B(1, .5), age ~ U(30, 80), sex ~ B(1, .5) per subject, plus
  /// six visit times in months (0, then uniform day windows / 30.5).
  pbc_visits,
  /// m_i = 2 + Poisson(3) rows of i.i.d. U(0, 1) covariates, optional intercept.
  uniform_time_varying,
};

struct ComponentSpec {
  double weight = 1.0;
  Eigen::VectorXd beta;
  double dispersion = 1.0;  ///< sigma^2 for gaussian, phi for counts
  CorrelationKind correlation = CorrelationKind::independence;
  double rho = 0.0;
};

struct SimDesign {
  ExampleId example = ExampleId::custom;
  std::string name = "custom";
  ModelFamily family;
  int n = 100;
  std::vector<ComponentSpec> components;
  CovariateLaw covariates = CovariateLaw::uniform_time_varying;
  int uniform_covariates = 3;
  bool intercept = true;
  int test_per_component = 100;

  int K() const noexcept { return static_cast<int>(components.size()); }
  int p() const;
  std::vector<std::string> column_names() const;
  /// Throws Error(design) for invalid weights, dimensions, dispersions or
  /// correlations that are not positive definite.
  void validate() const;

  /// Truth in report layout: all coefficient rows, then dispersions, then proportions.
  Eigen::VectorXd true_parameters() const;
  std::vector<std::string> parameter_names() const;
};

/// "ex1", "ex2:<rho>" (e.g. "ex2:0.3") or "ex3". Throws Error(argument).
SimDesign example_design(std::string_view spec);

struct SimulatedData {
  LongitudinalDataset data;
  std::vector<int> labels;
};

/// Gaussian mixture of correlated normal vectors y_i ~ MVN(X_i beta_k, sigma_k^2 R_i).
/// With `counts`, exactly counts[k] subjects are drawn from component k
/// (in component order) instead of sampling labels.
SimulatedData gen_gaussian_mixture(const SimDesign& design, std::uint64_t seed,
                                   const std::optional<std::vector<int>>& counts = std::nullopt);

/// Overdispersed count mixture with log-linear means. Within-subject dependence
/// is a Gaussian copula with the component's working correlation; margins are
/// negative binomial with variance phi * mu (Poisson when phi == 1).
SimulatedData gen_count_mixture(const SimDesign& design, std::uint64_t seed,
                                const std::optional<std::vector<int>>& counts = std::nullopt);

/// Dispatches on the design's family.
SimulatedData generate(const SimDesign& design, std::uint64_t seed,
                       const std::optional<std::vector<int>>& counts = std::nullopt);

/// Mean lag-1 product of Pearson residuals computed at the true parameters.
double achieved_lag1_correlation(const SimDesign& design, const SimulatedData& sim);

struct FitConfig {
  int K_init = 10;
  EmSettings em;
  std::optional<LambdaGrid> grid;  ///< default_lambda_grid when empty
  std::optional<CorrelationKind> refine = CorrelationKind::ar1;
  int jobs = 1;
};

struct ReplicationRecord {
  int index = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  int K_hat = 0;
  double lambda = 0.0;
  bool converged = false;
  int iterations = 0;
  /// Estimates aligned to the true components (report layout); empty unless K_hat == K0.
  Eigen::VectorXd pql;
  Eigen::VectorXd pql2;
  bool pql2_ok = false;
  std::string pql2_error;
  double misclassification_pql = 0.0;   ///< NaN unless K_hat == K0
  double misclassification_pql2 = 0.0;  ///< NaN unless refinement succeeded
  double achieved_rho = 0.0;
};

struct MisclassificationSummary {
  double median = 0.0;
  double lower = 0.0;  ///< 2.5th percentile
  double upper = 0.0;  ///< 97.5th percentile
  std::size_t count = 0;
};

struct ReplicationReport {
  SimDesign design;
  std::vector<ReplicationRecord> replications;
  std::map<int, int> histogram;  ///< K_hat -> count (failed replications are excluded)
  int failures = 0;
  double selection_rate = 0.0;  ///< share of all replications with K_hat == K0
  std::vector<std::string> parameter_names;
  Eigen::VectorXd truth;
  BiasMseTable pql;   ///< conditional on K_hat == K0
  BiasMseTable pql2;  ///< conditional on K_hat == K0 and a successful refinement
  MisclassificationSummary misclassification_pql;
  MisclassificationSummary misclassification_pql2;
  double mean_achieved_rho = 0.0;
};

/// Generates a training set per replication, selects lambda, orders labels,
/// refines, and scores a fresh test set with test_per_component subjects per
/// component. Replication r uses derive_seed(master_seed, r); output does not
/// depend on config.jobs.
ReplicationReport run_replications(const SimDesign& design, int replications, const FitConfig& config,
                                   std::uint64_t master_seed);

/// Aggregates already-computed records (conditioning on K_hat == K0).
ReplicationReport summarize_replications(const SimDesign& design, std::vector<ReplicationRecord> records);

}  // namespace mixql
