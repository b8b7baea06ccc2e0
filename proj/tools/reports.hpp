#pragma once

#include "mixql/data.hpp"
#include "mixql/family.hpp"
#include "mixql/gee.hpp"
#include "mixql/mixture.hpp"
#include "mixql/sandwich.hpp"
#include "mixql/selection.hpp"
#include "mixql/simulate.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace mixql::cli {

std::string bic_table_csv(const std::vector<LambdaRow>& table);
std::string trace_csv(const MixtureFit& fit);
std::string posteriors_csv(const LongitudinalDataset& data, const Eigen::MatrixXd& posterior);
std::string estimates_csv(const MixtureFit& fit, const std::vector<std::string>& columns,
                          const std::optional<SandwichResult>& sandwich);
std::string refined_csv(const RefinedFit& refined, const std::vector<std::string>& columns);

struct FitSummaryInput {
  std::string family;
  Eigen::Index n = 0;
  Eigen::Index observations = 0;
  double lambda = 0.0;
  double bic = 0.0;
  const MixtureFit* fit = nullptr;
  std::vector<std::string> columns;
  std::optional<SandwichResult> sandwich;
  std::string sandwich_error;
  const RefinedFit* refined = nullptr;
};

std::string fit_summary(const FitSummaryInput& in);

/// Everything classify needs to score new data with a saved fit.
struct SavedModel {
  std::string family;
  std::string id_column;
  std::string response_column;
  std::vector<std::string> covariate_columns;
  std::optional<Standardization> standardization;
  bool standardized_response = false;
  double lambda = 0.0;
  MixtureFit fit;
  std::optional<RefinedFit> refined;
};

nlohmann::json model_to_json(const SavedModel& model);
SavedModel model_from_json(const nlohmann::json& j);

std::string classes_csv(const LongitudinalDataset& data, const std::vector<Classification>& classes);
std::string predictions_csv(const LongitudinalDataset& data, const std::vector<Eigen::VectorXd>& means);

std::string labels_csv(const LongitudinalDataset& data, const std::vector<int>& labels);
std::string replications_csv(const ReplicationReport& report);
std::string histogram_csv(const ReplicationReport& report);
std::string parameter_table_csv(const BiasMseTable& table, const std::vector<std::string>& names,
                                const Eigen::VectorXd& truth);
std::string misclassification_csv(const ReplicationReport& report);
std::string bench_summary(const ReplicationReport& report);

}  // namespace mixql::cli
