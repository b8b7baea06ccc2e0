#include "reports.hpp"

#include "mixql/errors.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace mixql::cli {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  return format_double(v);
}

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
  return rows;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw Error(ErrorCategory::parse, "model coefficients must be a nonempty array");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Eigen::VectorXd row = vector_from(j[r]);
    if (row.size() != m.cols()) throw Error(ErrorCategory::parse, "ragged coefficient matrix in model");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

}  // namespace

std::string bic_table_csv(const std::vector<LambdaRow>& table) {
  std::ostringstream os;
  os << "lambda,K,BIC,converged\n";
  for (const auto& row : table) {
    os << num(row.lambda) << ',';
    if (row.failed) {
      os << "NA,NA,false\n";
    } else {
      os << row.K << ',' << num(row.bic) << ',' << (row.converged ? "true" : "false") << '\n';
    }
  }
  return os.str();
}

std::string trace_csv(const MixtureFit& fit) {
  std::ostringstream os;
  os << "iteration,objective,K\n";
  for (std::size_t t = 0; t < fit.objective_trace.size(); ++t) {
    os << t << ',' << num(fit.objective_trace[t]) << ',' << fit.components_trace[t] << '\n';
  }
  return os.str();
}

std::string posteriors_csv(const LongitudinalDataset& data, const Eigen::MatrixXd& posterior) {
  std::ostringstream os;
  os << "id,label";
  for (Eigen::Index k = 0; k < posterior.cols(); ++k) os << ",u" << k + 1;
  os << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    Eigen::Index best = 0;
    posterior.row(i).maxCoeff(&best);
    os << quoted(data.subject(i).id) << ',' << best + 1;
    for (Eigen::Index k = 0; k < posterior.cols(); ++k) os << ',' << num(posterior(i, k));
    os << '\n';
  }
  return os.str();
}

std::string estimates_csv(const MixtureFit& fit, const std::vector<std::string>& columns,
                          const std::optional<SandwichResult>& sandwich) {
  std::ostringstream os;
  os << "component,parameter,estimate,std_error\n";
  const auto p = fit.p();
  for (Eigen::Index k = 0; k < fit.K(); ++k) {
    for (Eigen::Index c = 0; c < p; ++c) {
      const double se = sandwich ? sandwich->standard_errors(k * p + c) : std::nan("");
      os << k + 1 << ",beta:" << quoted(columns[static_cast<std::size_t>(c)]) << ',' << num(fit.beta(k, c)) << ','
         << num(se) << '\n';
    }
    os << k + 1 << ",phi," << num(fit.phi(k)) << ",NA\n";
    double se = std::nan("");
    if (sandwich) {
      // pi_K is determined by the others: its variance is 1' Cov 1 over the pi block.
      const auto offset = fit.K() * p;
      const auto m = fit.K() - 1;
      if (k < m) {
        se = sandwich->standard_errors(offset + k);
      } else if (m > 0) {
        se = std::sqrt(std::max(0.0, sandwich->covariance.block(offset, offset, m, m).sum()));
      }
    }
    os << k + 1 << ",pi," << num(fit.pi(k)) << ',' << num(se) << '\n';
  }
  return os.str();
}

std::string refined_csv(const RefinedFit& refined, const std::vector<std::string>& columns) {
  std::ostringstream os;
  os << "component,parameter,estimate\n";
  for (Eigen::Index k = 0; k < refined.beta.rows(); ++k) {
    for (Eigen::Index c = 0; c < refined.beta.cols(); ++c) {
      os << k + 1 << ",beta:" << quoted(columns[static_cast<std::size_t>(c)]) << ',' << num(refined.beta(k, c)) << '\n';
    }
    os << k + 1 << ",phi," << num(refined.phi(k)) << '\n';
    os << k + 1 << ",rho," << num(refined.rho(k)) << '\n';
    os << k + 1 << ",pi," << num(refined.pi(k)) << '\n';
  }
  return os.str();
}

std::string fit_summary(const FitSummaryInput& in) {
  const MixtureFit& fit = *in.fit;
  std::ostringstream os;
  os << "family: " << in.family << '\n'
     << "subjects: " << in.n << "  observations: " << in.observations << '\n'
     << "selected lambda: " << num(in.lambda) << '\n'
     << "components: " << fit.K() << '\n'
     << "BIC: " << num(in.bic) << '\n'
     << "EM iterations: " << fit.iterations << (fit.converged ? " (converged)" : " (not converged)") << '\n';
  if (!in.sandwich) os << "standard errors unavailable: " << in.sandwich_error << '\n';
  const auto p = fit.p();
  std::size_t width = 6;
  for (const auto& c : in.columns) width = std::max(width, c.size());
  for (Eigen::Index k = 0; k < fit.K(); ++k) {
    os << "\ncomponent " << k + 1 << "  pi = " << fixed(fit.pi(k), 4) << "  phi = " << fixed(fit.phi(k), 4) << '\n';
    os << "  " << std::left << std::setw(static_cast<int>(width)) << "term" << std::right << std::setw(14) << "estimate"
       << std::setw(14) << "std.error" << '\n';
    for (Eigen::Index c = 0; c < p; ++c) {
      const double se = in.sandwich ? in.sandwich->standard_errors(k * p + c) : std::nan("");
      os << "  " << std::left << std::setw(static_cast<int>(width)) << in.columns[static_cast<std::size_t>(c)]
         << std::right << std::setw(14) << fixed(fit.beta(k, c), 6) << std::setw(14) << fixed(se, 6) << '\n';
    }
  }
  if (in.refined) {
    const auto& r = *in.refined;
    os << "\nGEE refinement (" << correlation_kind_name(r.kind) << " working correlation)\n";
    for (Eigen::Index k = 0; k < r.beta.rows(); ++k) {
      os << "component " << k + 1 << "  phi = " << fixed(r.phi(k), 4) << "  rho = " << fixed(r.rho(k), 4) << '\n';
      for (Eigen::Index c = 0; c < p; ++c) {
        os << "  " << std::left << std::setw(static_cast<int>(width)) << in.columns[static_cast<std::size_t>(c)]
           << std::right << std::setw(14) << fixed(r.beta(k, c), 6) << '\n';
      }
    }
  }
  return os.str();
}

nlohmann::json model_to_json(const SavedModel& model) {
  nlohmann::json j;
  j["format"] = "mixql-model";
  j["version"] = 1;
  j["family"] = model.family;
  j["id_column"] = model.id_column;
  j["response_column"] = model.response_column;
  j["covariate_columns"] = model.covariate_columns;
  j["lambda"] = model.lambda;
  j["pi"] = vector_json(model.fit.pi);
  j["beta"] = matrix_json(model.fit.beta);
  j["phi"] = vector_json(model.fit.phi);
  if (model.standardization) {
    const auto& s = *model.standardization;
    j["standardization"] = {{"center", vector_json(s.center)},
                            {"scale", vector_json(s.scale)},
                            {"response", model.standardized_response},
                            {"response_center", s.response_center},
                            {"response_scale", s.response_scale}};
  } else {
    j["standardization"] = nullptr;
  }
  if (model.refined) {
    const auto& r = *model.refined;
    j["refined"] = {{"correlation", std::string(correlation_kind_name(r.kind))},
                    {"beta", matrix_json(r.beta)},
                    {"phi", vector_json(r.phi)},
                    {"rho", vector_json(r.rho)}};
  } else {
    j["refined"] = nullptr;
  }
  return j;
}

SavedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "mixql-model") throw Error(ErrorCategory::parse, "not a model file");
    SavedModel m;
    m.family = j.at("family").get<std::string>();
    m.id_column = j.at("id_column").get<std::string>();
    m.response_column = j.at("response_column").get<std::string>();
    m.covariate_columns = j.at("covariate_columns").get<std::vector<std::string>>();
    m.lambda = j.at("lambda").get<double>();
    m.fit.pi = vector_from(j.at("pi"));
    m.fit.beta = matrix_from(j.at("beta"));
    m.fit.phi = vector_from(j.at("phi"));
    m.fit.converged = true;
    validate_fit(m.fit);
    if (static_cast<std::size_t>(m.fit.p()) != m.covariate_columns.size()) {
      throw Error(ErrorCategory::parse, "model coefficients do not match its covariate columns");
    }
    if (const auto& s = j.at("standardization"); !s.is_null()) {
      Standardization t;
      t.center = vector_from(s.at("center"));
      t.scale = vector_from(s.at("scale"));
      t.response_center = s.at("response_center").get<double>();
      t.response_scale = s.at("response_scale").get<double>();
      m.standardized_response = s.at("response").get<bool>();
      m.standardization = t;
    }
    if (const auto& r = j.at("refined"); !r.is_null()) {
      RefinedFit refined;
      refined.kind = parse_correlation_kind(r.at("correlation").get<std::string>());
      refined.pi = m.fit.pi;
      refined.beta = matrix_from(r.at("beta"));
      refined.phi = vector_from(r.at("phi"));
      refined.rho = vector_from(r.at("rho"));
      m.refined = refined;
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::parse, std::string("malformed model file: ") + e.what());
  }
}

std::string classes_csv(const LongitudinalDataset& data, const std::vector<Classification>& classes) {
  std::ostringstream os;
  os << "id,label";
  const auto K = classes.empty() ? 0 : classes.front().posterior.size();
  for (Eigen::Index k = 0; k < K; ++k) os << ",u" << k + 1;
  os << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const auto& c = classes[static_cast<std::size_t>(i)];
    os << quoted(data.subject(i).id) << ',' << c.label + 1;
    for (Eigen::Index k = 0; k < K; ++k) os << ',' << num(c.posterior(k));
    os << '\n';
  }
  return os.str();
}

std::string predictions_csv(const LongitudinalDataset& data, const std::vector<Eigen::VectorXd>& means) {
  std::ostringstream os;
  os << "id,visit,observed,predicted\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const auto& s = data.subject(i);
    for (Eigen::Index j = 0; j < s.m(); ++j) {
      os << quoted(s.id) << ',' << j + 1 << ',' << num(s.y(j)) << ',' << num(means[static_cast<std::size_t>(i)](j))
         << '\n';
    }
  }
  return os.str();
}

std::string labels_csv(const LongitudinalDataset& data, const std::vector<int>& labels) {
  std::ostringstream os;
  os << "id,label\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    os << quoted(data.subject(i).id) << ',' << labels[static_cast<std::size_t>(i)] + 1 << '\n';
  }
  return os.str();
}

std::string replications_csv(const ReplicationReport& report) {
  std::ostringstream os;
  os << "replication,seed,status,K,lambda,converged,iterations,misclassification_pql,misclassification_pql2,"
        "achieved_rho,message\n";
  for (const auto& r : report.replications) {
    os << r.index + 1 << ',' << r.seed << ',' << (r.failed ? "failed" : "ok") << ',';
    if (r.failed) {
      os << "NA,NA,NA,NA,NA,NA,NA," << quoted(r.error) << '\n';
      continue;
    }
    os << r.K_hat << ',' << num(r.lambda) << ',' << (r.converged ? "true" : "false") << ',' << r.iterations << ','
       << num(r.misclassification_pql) << ',' << num(r.misclassification_pql2) << ',' << num(r.achieved_rho) << ','
       << quoted(r.pql2_error) << '\n';
  }
  return os.str();
}

std::string histogram_csv(const ReplicationReport& report) {
  std::ostringstream os;
  const double total = static_cast<double>(report.replications.size());
  os << "K,count,share\n";
  for (const auto& [k, count] : report.histogram) os << k << ',' << count << ',' << num(count / total) << '\n';
  if (report.failures > 0) os << "failed," << report.failures << ',' << num(report.failures / total) << '\n';
  os << "selection_rate_K" << report.design.K() << ",," << num(report.selection_rate) << '\n';
  return os.str();
}

std::string parameter_table_csv(const BiasMseTable& table, const std::vector<std::string>& names,
                                const Eigen::VectorXd& truth) {
  std::ostringstream os;
  os << "parameter,true,mean,bias_x100,mse_x100\n";
  for (std::size_t j = 0; j < names.size(); ++j) {
    os << names[j] << ',' << num(truth(static_cast<Eigen::Index>(j))) << ',';
    if (table.empty()) {
      os << "NA,NA,NA\n";
      continue;
    }
    const auto& row = table.rows[j];
    os << fixed(row.mean, 3) << ',' << fixed(row.bias100, 3) << ',' << fixed(row.mse100, 3) << '\n';
  }
  return os.str();
}

std::string misclassification_csv(const ReplicationReport& report) {
  std::ostringstream os;
  os << "method,replications,median,lower_2.5,upper_97.5\n";
  const auto row = [&](const char* name, const MisclassificationSummary& s) {
    os << name << ',' << s.count << ',' << fixed(s.median, 3) << ',' << fixed(s.lower, 3) << ',' << fixed(s.upper, 3)
       << '\n';
  };
  row("PQL", report.misclassification_pql);
  row("PQL2", report.misclassification_pql2);
  return os.str();
}

std::string bench_summary(const ReplicationReport& report) {
  std::ostringstream os;
  const auto& d = report.design;
  os << "design: " << d.name << " (" << d.family.name() << ", n = " << d.n << ", K0 = " << d.K() << ")\n"
     << "replications: " << report.replications.size() << "  failed: " << report.failures << '\n'
     << "selection rate of K0: " << fixed(report.selection_rate, 3) << '\n'
     << "selected K:";
  for (const auto& [k, count] : report.histogram) os << "  " << k << " x" << count;
  os << '\n';
  const auto mis = [&](const char* name, const MisclassificationSummary& s) {
    os << "misclassification " << name << ": median " << fixed(s.median, 3) << "  95% [" << fixed(s.lower, 3) << ", "
       << fixed(s.upper, 3) << "]\n";
  };
  mis("PQL ", report.misclassification_pql);
  mis("PQL2", report.misclassification_pql2);
  if (d.family.kind() != FamilyKind::gaussian_identity) {
    os << "achieved lag-1 residual correlation: " << fixed(report.mean_achieved_rho, 3) << '\n';
  }
  os << "\n" << std::left << std::setw(12) << "parameter" << std::right << std::setw(10) << "true" << std::setw(10)
     << "PQL mean" << std::setw(10) << "bias100" << std::setw(10) << "MSE100" << std::setw(11) << "PQL2 mean"
     << std::setw(10) << "bias100" << std::setw(10) << "MSE100" << '\n';
  for (std::size_t j = 0; j < report.parameter_names.size(); ++j) {
    os << std::left << std::setw(12) << report.parameter_names[j] << std::right << std::setw(10)
       << fixed(report.truth(static_cast<Eigen::Index>(j)), 3);
    for (const auto* table : {&report.pql, &report.pql2}) {
      if (table->empty()) {
        os << std::setw(10) << "NA" << std::setw(10) << "NA" << std::setw(10) << "NA";
      } else {
        const auto& row = table->rows[j];
        os << std::setw(table == &report.pql ? 10 : 11) << fixed(row.mean, 3) << std::setw(10) << fixed(row.bias100, 3)
           << std::setw(10) << fixed(row.mse100, 3);
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace mixql::cli
