#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mixql {

/// Repeated measurements of one subject: row j of X pairs with y(j).
struct SubjectBlock {
  std::string id;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;

  Eigen::Index m() const noexcept { return y.size(); }
};

/// Validated, immutable collection of subjects sharing a covariate dimension.
///
/// Observations are also kept stacked (all subjects, in order) so the EM and
/// GEE code can evaluate linear predictors with one matrix product.
class LongitudinalDataset {
 public:
  LongitudinalDataset() = default;

  /// Throws Error(empty_input) for no subjects, Error(argument) for shape
  /// mismatches, empty blocks or non-finite values.
  LongitudinalDataset(std::vector<SubjectBlock> subjects, std::vector<std::string> column_names);

  Eigen::Index n() const noexcept { return static_cast<Eigen::Index>(subjects_.size()); }
  Eigen::Index p() const noexcept { return X_.cols(); }
  Eigen::Index total_observations() const noexcept { return y_.size(); }

  const std::vector<SubjectBlock>& subjects() const noexcept { return subjects_; }
  const SubjectBlock& subject(Eigen::Index i) const { return subjects_[static_cast<std::size_t>(i)]; }
  const std::vector<std::string>& column_names() const noexcept { return column_names_; }

  const Eigen::MatrixXd& stacked_X() const noexcept { return X_; }
  const Eigen::VectorXd& stacked_y() const noexcept { return y_; }
  /// First stacked row of subject i; offset(n()) == total_observations().
  Eigen::Index offset(Eigen::Index i) const { return offsets_[static_cast<std::size_t>(i)]; }
  Eigen::Index m(Eigen::Index i) const { return offset(i + 1) - offset(i); }
  Eigen::Index max_m() const noexcept;

  /// Sum over each subject's rows of a stacked per-observation vector.
  Eigen::VectorXd sum_by_subject(const Eigen::Ref<const Eigen::VectorXd>& per_observation) const;

  /// Subset of subjects in the given order.
  LongitudinalDataset select(const std::vector<Eigen::Index>& indices) const;

 private:
  std::vector<SubjectBlock> subjects_;
  std::vector<std::string> column_names_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  std::vector<Eigen::Index> offsets_{0};
};

struct CsvSchema {
  std::string id_column;
  std::string response_column;
  std::vector<std::string> covariate_columns;
  /// Covariates left untouched by standardize() (e.g. an intercept column).
  std::vector<std::string> exempt_columns;
};

/// Reads a long-format CSV (one row per observation, header required).
/// Rows are grouped by subject id in order of first appearance; within-subject
/// row order is preserved.
LongitudinalDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes id, response and covariates in long format with shortest
/// round-trip decimal formatting.
void write_csv(const std::filesystem::path& path, const LongitudinalDataset& data,
               const std::string& id_column = "id", const std::string& response_column = "y");
void write_csv(std::ostream& out, const LongitudinalDataset& data, const std::string& id_column = "id",
               const std::string& response_column = "y");

/// Formats a double with the shortest representation that parses back exactly.
std::string format_double(double value);

/// Pooled (all observations) affine transform; scale uses the n-1 convention.
struct Standardization {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  double response_center = 0.0;
  double response_scale = 1.0;
};

struct StandardizedData {
  LongitudinalDataset data;
  Standardization transform;
};

/// Centers and scales every covariate column not listed in `exempt_columns`
/// (exempt columns get center 0, scale 1). Throws Error(degenerate_column)
/// for a zero-variance non-exempt column.
StandardizedData standardize(const LongitudinalDataset& data, bool include_response,
                             const std::vector<std::string>& exempt_columns = {});

LongitudinalDataset destandardize(const LongitudinalDataset& data, const Standardization& transform);

/// Applies a previously estimated transform to other data (e.g. new subjects).
LongitudinalDataset apply_standardization(const LongitudinalDataset& data, const Standardization& transform);

}  // namespace mixql
