#include "mixql/data.hpp"

#include "mixql/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace mixql {

LongitudinalDataset::LongitudinalDataset(std::vector<SubjectBlock> subjects,
                                         std::vector<std::string> column_names)
    : subjects_(std::move(subjects)), column_names_(std::move(column_names)) {
  if (subjects_.empty()) {
    throw Error(ErrorCategory::empty_input, "dataset has no subjects");
  }
  const Eigen::Index p = subjects_.front().X.cols();
  if (p < 1) {
    throw Error(ErrorCategory::argument, "dataset needs at least one covariate");
  }
  if (column_names_.empty()) {
    for (Eigen::Index c = 0; c < p; ++c) column_names_.push_back("x" + std::to_string(c + 1));
  }
  if (static_cast<Eigen::Index>(column_names_.size()) != p) {
    throw Error(ErrorCategory::argument, "column name count does not match covariate dimension");
  }
  Eigen::Index total = 0;
  for (const auto& s : subjects_) {
    if (s.m() < 1) {
      throw Error(ErrorCategory::argument, "subject '" + s.id + "' has no observations");
    }
    if (s.X.rows() != s.m() || s.X.cols() != p) {
      throw Error(ErrorCategory::argument, "subject '" + s.id + "' has a design of the wrong shape");
    }
    if (!s.y.allFinite() || !s.X.allFinite()) {
      throw Error(ErrorCategory::argument, "subject '" + s.id + "' contains non-finite values");
    }
    total += s.m();
  }
  X_.resize(total, p);
  y_.resize(total);
  offsets_.clear();
  offsets_.reserve(subjects_.size() + 1);
  Eigen::Index row = 0;
  for (const auto& s : subjects_) {
    offsets_.push_back(row);
    X_.middleRows(row, s.m()) = s.X;
    y_.segment(row, s.m()) = s.y;
    row += s.m();
  }
  offsets_.push_back(row);
}

Eigen::Index LongitudinalDataset::max_m() const noexcept {
  Eigen::Index best = 0;
  for (const auto& s : subjects_) best = std::max(best, s.m());
  return best;
}

Eigen::VectorXd LongitudinalDataset::sum_by_subject(
    const Eigen::Ref<const Eigen::VectorXd>& per_observation) const {
  Eigen::VectorXd out(n());
  for (Eigen::Index i = 0; i < n(); ++i) {
    out(i) = per_observation.segment(offset(i), m(i)).sum();
  }
  return out;
}

LongitudinalDataset LongitudinalDataset::select(const std::vector<Eigen::Index>& indices) const {
  std::vector<SubjectBlock> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(subject(i));
  return LongitudinalDataset(std::move(picked), column_names_);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cell.push_back('"');
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  if (!cell.empty() && cell.back() == '\r') cell.pop_back();
  cells.push_back(std::move(cell));
  return cells;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string cell = trim(raw);
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw ParseError("row " + std::to_string(row) + ", column '" + column + "': cannot read '" + cell +
                         "' as a finite number",
                     row);
  }
  return value;
}

}  // namespace

LongitudinalDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCategory::io, "cannot open '" + path.string() + "'");
  }
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw Error(ErrorCategory::empty_input, "'" + path.string() + "' is empty");
  }
  const auto header = split_csv_line(line);
  auto column_index = [&](const std::string& name) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (trim(header[c]) == name) return c;
    }
    throw Error(ErrorCategory::schema, "column '" + name + "' not found in '" + path.string() + "'");
  };
  if (schema.covariate_columns.empty()) {
    throw Error(ErrorCategory::schema, "schema names no covariate columns");
  }
  const std::size_t id_col = column_index(schema.id_column);
  const std::size_t y_col = column_index(schema.response_column);
  std::vector<std::size_t> x_cols;
  for (const auto& name : schema.covariate_columns) x_cols.push_back(column_index(name));
  const auto p = static_cast<Eigen::Index>(x_cols.size());

  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<double>> ys;
  std::vector<std::vector<double>> xs;

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                           " cells, found " + std::to_string(cells.size()),
                       row);
    }
    const std::string id = trim(cells[id_col]);
    auto [it, inserted] = slot.try_emplace(id, order.size());
    if (inserted) {
      order.push_back(id);
      ys.emplace_back();
      xs.emplace_back();
    }
    ys[it->second].push_back(parse_cell(cells[y_col], row, schema.response_column));
    for (std::size_t c = 0; c < x_cols.size(); ++c) {
      xs[it->second].push_back(parse_cell(cells[x_cols[c]], row, schema.covariate_columns[c]));
    }
  }
  if (order.empty()) {
    throw Error(ErrorCategory::empty_input, "'" + path.string() + "' has a header but no rows");
  }

  std::vector<SubjectBlock> subjects;
  subjects.reserve(order.size());
  for (std::size_t s = 0; s < order.size(); ++s) {
    const auto m = static_cast<Eigen::Index>(ys[s].size());
    SubjectBlock block;
    block.id = order[s];
    block.y = Eigen::Map<const Eigen::VectorXd>(ys[s].data(), m);
    block.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        xs[s].data(), m, p);
    subjects.push_back(std::move(block));
  }
  return LongitudinalDataset(std::move(subjects), schema.covariate_columns);
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error(ErrorCategory::io, "cannot format number");
  return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const LongitudinalDataset& data, const std::string& id_column,
               const std::string& response_column) {
  out << id_column << ',' << response_column;
  for (const auto& name : data.column_names()) out << ',' << name;
  out << '\n';
  for (const auto& s : data.subjects()) {
    for (Eigen::Index j = 0; j < s.m(); ++j) {
      out << s.id << ',' << format_double(s.y(j));
      for (Eigen::Index c = 0; c < s.X.cols(); ++c) out << ',' << format_double(s.X(j, c));
      out << '\n';
    }
  }
}

void write_csv(const std::filesystem::path& path, const LongitudinalDataset& data,
               const std::string& id_column, const std::string& response_column) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCategory::io, "cannot write '" + path.string() + "'");
  write_csv(out, data, id_column, response_column);
  if (!out) throw Error(ErrorCategory::io, "failed while writing '" + path.string() + "'");
}

namespace {

std::pair<double, double> pooled_moments(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double mean = v.mean();
  const double n = static_cast<double>(v.size());
  const double ss = (v.array() - mean).square().sum();
  return {mean, n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
}

LongitudinalDataset apply_affine(const LongitudinalDataset& data, const Standardization& t, bool forward) {
  std::vector<SubjectBlock> out;
  out.reserve(data.subjects().size());
  for (const auto& s : data.subjects()) {
    SubjectBlock b = s;
    if (forward) {
      b.X = ((s.X.rowwise() - t.center.transpose()).array().rowwise() / t.scale.transpose().array()).matrix();
      b.y = ((s.y.array() - t.response_center) / t.response_scale).matrix();
    } else {
      b.X = ((s.X.array().rowwise() * t.scale.transpose().array()).rowwise() + t.center.transpose().array())
                .matrix();
      b.y = (s.y.array() * t.response_scale + t.response_center).matrix();
    }
    out.push_back(std::move(b));
  }
  return LongitudinalDataset(std::move(out), data.column_names());
}

}  // namespace

StandardizedData standardize(const LongitudinalDataset& data, bool include_response,
                             const std::vector<std::string>& exempt_columns) {
  Standardization t;
  const auto p = data.p();
  t.center = Eigen::VectorXd::Zero(p);
  t.scale = Eigen::VectorXd::Ones(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    const auto& name = data.column_names()[static_cast<std::size_t>(c)];
    if (std::find(exempt_columns.begin(), exempt_columns.end(), name) != exempt_columns.end()) continue;
    auto [mean, sd] = pooled_moments(data.stacked_X().col(c));
    if (!(sd > 0.0)) {
      throw Error(ErrorCategory::degenerate_column,
                  "column '" + name + "' has zero pooled standard deviation; mark it exempt");
    }
    t.center(c) = mean;
    t.scale(c) = sd;
  }
  if (include_response) {
    auto [mean, sd] = pooled_moments(data.stacked_y());
    if (!(sd > 0.0)) {
      throw Error(ErrorCategory::degenerate_column, "response has zero pooled standard deviation");
    }
    t.response_center = mean;
    t.response_scale = sd;
  }
  return {apply_affine(data, t, true), t};
}

LongitudinalDataset destandardize(const LongitudinalDataset& data, const Standardization& transform) {
  return apply_affine(data, transform, false);
}

LongitudinalDataset apply_standardization(const LongitudinalDataset& data, const Standardization& transform) {
  if (transform.center.size() != data.p() || transform.scale.size() != data.p()) {
    throw Error(ErrorCategory::argument, "standardization does not match the covariate dimension");
  }
  return apply_affine(data, transform, true);
}

}  // namespace mixql
