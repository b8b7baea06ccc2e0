#pragma once

#include "mixql/data.hpp"
#include "mixql/family.hpp"
#include "mixql/mixture.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string_view>
#include <vector>

namespace mixql {

enum class CorrelationKind { independence, ar1, exchangeable };

/// Accepts "ind", "ar1", "cs" (and the long names). Throws Error(argument).
CorrelationKind parse_correlation_kind(std::string_view name);
std::string_view correlation_kind_name(CorrelationKind kind);

struct WorkingCorrelation {
  CorrelationKind kind = CorrelationKind::independence;
  double rho = 0.0;

  /// m x m correlation matrix R(rho).
  Eigen::MatrixXd matrix(Eigen::Index m) const;
  /// Whether R(rho) is positive definite for every size up to max_m.
  bool positive_definite_up_to(Eigen::Index max_m) const;
};

struct RhoEstimate {
  double rho = 0.0;
  bool fell_back_to_independence = false;
};

/// Moment estimator of the working correlation from per-subject residuals
/// r_ij / sqrt(V(mu_ij)) (phi is divided out here). AR(1) uses lag-1 products,
/// exchangeable all within-subject pairs. Results are clamped to [-0.99, 0.99]
/// and, for exchangeable, above -1/(max m - 1).
RhoEstimate estimate_rho(const std::vector<Eigen::VectorXd>& variance_scaled_residuals, double phi,
                         CorrelationKind kind);

struct GeeSettings {
  int max_iterations = 100;
  double tolerance = 1e-8;  ///< on max |delta beta|
  double phi_floor = 1e-8;
};

struct GeeFit {
  Eigen::VectorXd beta;
  double phi = 1.0;
  double rho = 0.0;
  int iterations = 0;
  bool fell_back_to_independence = false;
};

/// Solves sum_i D_i' V_i^-1 (y_i - mu_i) = 0 with V_i = phi A_i^1/2 R_i(rho) A_i^1/2,
/// re-estimating phi and rho from residual moments at every iteration.
GeeFit gee_fit(const LongitudinalDataset& data, const ModelFamily& family, CorrelationKind kind,
               const std::optional<Eigen::VectorXd>& init_beta, const GeeSettings& settings = {});

struct RefinedFit {
  Eigen::VectorXd pi;    ///< carried over from the mixture fit
  Eigen::MatrixXd beta;  ///< K x p
  Eigen::VectorXd phi;
  Eigen::VectorXd rho;
  std::vector<int> assignment;
  CorrelationKind kind = CorrelationKind::independence;

  MixtureFit as_mixture() const;
};

/// Hard-assigns subjects with classify() and refits each class by GEE.
/// Throws Error(collapse) naming a class that receives no subjects.
RefinedFit refine(const LongitudinalDataset& data, const MixtureFit& fit, const ModelFamily& family,
                  CorrelationKind kind, const GeeSettings& settings = {});

}  // namespace mixql
