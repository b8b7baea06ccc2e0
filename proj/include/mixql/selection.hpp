#pragma once

#include "mixql/data.hpp"
#include "mixql/em.hpp"
#include "mixql/family.hpp"
#include "mixql/mixture.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mixql {

// ---- initialization ------------------------------------------------------

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centers;
  double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` runs. A run
/// that leaves a cluster empty is discarded; when every run of an attempt is
/// discarded the attempt is repeated with a fresh seed (10 attempts), after
/// which a random balanced partition is returned.
KMeansResult kmeans(const Eigen::MatrixXd& points, int K, std::uint64_t seed, int restarts = 20,
                    int max_iterations = 100);

/// One row per subject: per-subject quasi-GLM coefficients when every subject
/// has m_i > p and a full-rank design, otherwise (mean, sd) of the responses
/// on the linear-predictor scale zero-padded to p columns. Columns are scaled
/// to unit standard deviation.
Eigen::MatrixXd subject_features(const LongitudinalDataset& data, const ModelFamily& family);

/// Per-cluster quasi-GLM fits. pi from cluster sizes floored at 1/(2n), phi from
/// per-cluster residual moments.
MixtureFit init_from_partition(const LongitudinalDataset& data, const ModelFamily& family,
                               const std::vector<int>& labels, int K, double phi_floor = 1e-8);

/// K-means initialization with K_init components. Throws Error(argument) if K_init > n.
MixtureFit init_kmeans(const LongitudinalDataset& data, const ModelFamily& family, int K_init, std::uint64_t seed);

// ---- tuning --------------------------------------------------------------

struct LambdaGrid {
  std::vector<double> values;

  /// Throws Error(settings) unless strictly increasing, nonnegative and
  /// lambda * K_init < 1 for every entry.
  void validate(int K_init) const;
};

/// 20 values a_j / sqrt(n), a_j log-spaced on [0.05, 5], keeping lambda * K_init < 0.99.
LambdaGrid default_lambda_grid(Eigen::Index n, int K_init);

/// -2 sum_i log[sum_k pi_k exp{sum_j q~(mu_ijk, phi_k; Y_ij)}] + K (p + 2) log n.
double bic(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit);

struct LambdaRow {
  double lambda = 0.0;
  int K = 0;
  double bic = 0.0;
  bool converged = false;
  bool failed = false;
  std::string error;
};

struct SelectionResult {
  double lambda = 0.0;
  MixtureFit fit;
  MixtureFit init;
  std::vector<LambdaRow> table;  ///< one row per grid value, in grid order
};

/// Fits every lambda of the grid from one shared K-means initialization and
/// returns the BIC minimizer among converged fits (falling back to every
/// successful fit if none converged); ties go to the larger lambda.
/// Throws Error(collapse) listing the per-lambda failures when all fail.
SelectionResult select_lambda(const LongitudinalDataset& data, const ModelFamily& family, const LambdaGrid& grid,
                              int K_init, const EmSettings& settings, int jobs = 1);

/// Same, starting from a caller-supplied initialization.
SelectionResult select_lambda_from(const LongitudinalDataset& data, const ModelFamily& family, const LambdaGrid& grid,
                                   const MixtureFit& init, const EmSettings& settings, int jobs = 1);

// ---- classification ------------------------------------------------------

struct Classification {
  int label = 0;
  Eigen::VectorXd posterior;
};

/// argmax_k pi_k exp{sum_j q~(mu_jk, phi_k; y_j)}, lowest index on ties.
Classification classify(const MixtureFit& fit, const ModelFamily& family, const SubjectBlock& subject);

std::vector<int> classify_all(const MixtureFit& fit, const ModelFamily& family, const LongitudinalDataset& data);

/// g(X beta_{k*}) for a subject assigned to class k*.
Eigen::VectorXd predict_mean(const MixtureFit& fit, const ModelFamily& family, const SubjectBlock& subject, int label);

}  // namespace mixql
