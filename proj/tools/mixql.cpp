// mixql: command-line front end for penalized quasi-likelihood mixture regression.

#include "artifacts.hpp"
#include "reports.hpp"

#include "mixql/data.hpp"
#include "mixql/em.hpp"
#include "mixql/errors.hpp"
#include "mixql/family.hpp"
#include "mixql/gee.hpp"
#include "mixql/random.hpp"
#include "mixql/sandwich.hpp"
#include "mixql/selection.hpp"
#include "mixql/simulate.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace mixql;
using mixql::cli::ArtifactSet;

struct Options {
  std::string data;
  std::string out = "mixql-out";
  std::string family = "gaussian";
  std::string id_col = "id";
  std::string y_col = "y";
  std::string x_cols;
  std::string exempt_cols;
  bool standardize = false;
  bool standardize_response = false;
  std::optional<double> lambda;
  int max_iter = 500;
  double tol_obj = 1e-8;
  double tol_param = 1e-6;
  std::uint64_t seed = 20240607;
  int k_init = 10;
  std::string grid = "auto";
  std::string refine = "none";
  std::string bench_refine = "ar1";
  int jobs = 1;
  std::string model;
  bool use_refined = false;
  std::string example = "ex1";
  int reps = 1;
};

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::argument: return 2;
    case ErrorCategory::settings: return 3;
    case ErrorCategory::schema: return 4;
    case ErrorCategory::parse: return 5;
    case ErrorCategory::empty_input: return 6;
    case ErrorCategory::degenerate_column: return 7;
    case ErrorCategory::io: return 8;
    case ErrorCategory::domain: return 9;
    case ErrorCategory::numerical: return 10;
    case ErrorCategory::rank_deficiency: return 11;
    case ErrorCategory::inner_solver: return 12;
    case ErrorCategory::collapse: return 13;
    case ErrorCategory::design: return 14;
  }
  return 1;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

double parse_number(const std::string& text, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCategory::settings, "cannot read " + what + " value '" + text + "'");
  }
  return v;
}

EmSettings em_settings(const Options& o) {
  EmSettings s;
  s.max_iterations = o.max_iter;
  s.objective_tolerance = o.tol_obj;
  s.parameter_tolerance = o.tol_param;
  s.seed = o.seed;
  if (o.lambda) s.lambda = *o.lambda;
  s.validate();
  return s;
}

LambdaGrid lambda_grid(const Options& o, Eigen::Index n) {
  if (o.k_init < 1) throw Error(ErrorCategory::settings, "--k-init must be at least 1");
  LambdaGrid grid;
  if (o.lambda) {
    grid.values = {*o.lambda};
  } else if (o.grid == "auto") {
    grid = default_lambda_grid(n, o.k_init);
  } else {
    for (const auto& item : split_list(o.grid)) grid.values.push_back(parse_number(item, "--grid"));
    if (grid.values.empty()) throw Error(ErrorCategory::settings, "--grid list is empty");
  }
  grid.validate(o.k_init);
  return grid;
}

std::optional<CorrelationKind> refine_kind(const std::string& name) {
  if (name == "none") return std::nullopt;
  try {
    return parse_correlation_kind(name);
  } catch (const Error&) {
    throw Error(ErrorCategory::settings, "--refine must be ar1, cs, ind or none");
  }
}

struct LoadedData {
  LongitudinalDataset data;
  std::vector<std::string> covariates;
  std::optional<Standardization> transform;
};

LoadedData load_data(const Options& o) {
  if (o.data.empty()) throw Error(ErrorCategory::argument, "--data is required");
  CsvSchema schema;
  schema.id_column = o.id_col;
  schema.response_column = o.y_col;
  schema.covariate_columns = split_list(o.x_cols);
  schema.exempt_columns = split_list(o.exempt_cols);
  if (schema.covariate_columns.empty()) throw Error(ErrorCategory::argument, "--x-cols is required");
  LoadedData out{load_csv(o.data, schema), schema.covariate_columns, std::nullopt};
  if (o.standardize || o.standardize_response) {
    if (o.standardize_response && !o.standardize) {
      throw Error(ErrorCategory::settings, "--standardize-response needs --standardize");
    }
    auto s = standardize(out.data, o.standardize_response, schema.exempt_columns);
    out.data = std::move(s.data);
    out.transform = s.transform;
  }
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- subcommands -----------------------------------------------------------

void cmd_fit(const Options& o, ArtifactSet& out) {
  const ModelFamily family = ModelFamily::from_name(o.family);
  const EmSettings em = em_settings(o);
  const auto refine = refine_kind(o.refine);
  const LoadedData loaded = load_data(o);
  const LongitudinalDataset& data = loaded.data;
  const LambdaGrid grid = lambda_grid(o, data.n());

  const SelectionResult sel = select_lambda(data, family, grid, o.k_init, em, o.jobs);
  const MixtureFit& fit = sel.fit;

  cli::FitSummaryInput summary;
  summary.family = family.name();
  summary.n = data.n();
  summary.observations = data.total_observations();
  summary.lambda = sel.lambda;
  summary.bic = bic(data, family, fit);
  summary.fit = &fit;
  summary.columns = loaded.covariates;
  try {
    summary.sandwich = sandwich_covariance(data, family, fit);
  } catch (const Error& e) {
    summary.sandwich_error = e.what();
  }
  std::optional<RefinedFit> refined;
  if (refine) {
    refined = mixql::refine(data, fit, family, *refine);
    summary.refined = &*refined;
  }

  const std::string text = cli::fit_summary(summary);
  out.add("summary.txt", text);
  out.add("estimates.csv", cli::estimates_csv(fit, loaded.covariates, summary.sandwich));
  out.add("posteriors.csv", cli::posteriors_csv(data, e_step(data, family, fit).u));
  out.add("bic_table.csv", cli::bic_table_csv(sel.table));
  out.add("trace.csv", cli::trace_csv(fit));
  if (refined) out.add("refined.csv", cli::refined_csv(*refined, loaded.covariates));

  cli::SavedModel model;
  model.family = family.name();
  model.id_column = o.id_col;
  model.response_column = o.y_col;
  model.covariate_columns = loaded.covariates;
  model.standardization = loaded.transform;
  model.standardized_response = o.standardize_response;
  model.lambda = sel.lambda;
  model.fit = fit;
  model.refined = refined;
  out.add("model.json", cli::model_to_json(model).dump(2) + "\n");
  std::cout << text;
}

void cmd_select(const Options& o, ArtifactSet& out) {
  const ModelFamily family = ModelFamily::from_name(o.family);
  const EmSettings em = em_settings(o);
  const LoadedData loaded = load_data(o);
  const LambdaGrid grid = lambda_grid(o, loaded.data.n());
  const SelectionResult sel = select_lambda(loaded.data, family, grid, o.k_init, em, o.jobs);
  std::ostringstream os;
  os << "lambda,K,BIC\n"
     << format_double(sel.lambda) << ',' << sel.fit.K() << ',' << format_double(bic(loaded.data, family, sel.fit))
     << '\n';
  out.add("bic_table.csv", cli::bic_table_csv(sel.table));
  out.add("selected.csv", os.str());
  std::cout << "selected lambda " << format_double(sel.lambda) << " with K = " << sel.fit.K() << '\n';
}

void cmd_classify(const Options& o, const CLI::App& sub, ArtifactSet& out) {
  if (o.model.empty()) throw Error(ErrorCategory::argument, "--model is required");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(o.model));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCategory::parse, std::string("model file is not JSON: ") + e.what());
  }
  const cli::SavedModel model = cli::model_from_json(j);
  const ModelFamily family = ModelFamily::from_name(model.family);
  if (o.data.empty()) throw Error(ErrorCategory::argument, "--data is required");
  CsvSchema schema;
  schema.id_column = sub.count("--id-col") ? o.id_col : model.id_column;
  schema.response_column = sub.count("--y-col") ? o.y_col : model.response_column;
  schema.covariate_columns = sub.count("--x-cols") ? split_list(o.x_cols) : model.covariate_columns;
  LongitudinalDataset data = load_csv(o.data, schema);
  if (model.standardization) data = apply_standardization(data, *model.standardization);

  MixtureFit fit = model.fit;
  if (o.use_refined) {
    if (!model.refined) throw Error(ErrorCategory::argument, "model has no refined fit");
    fit = model.refined->as_mixture();
  }
  std::vector<Classification> classes;
  std::vector<Eigen::VectorXd> means;
  for (const auto& s : data.subjects()) {
    classes.push_back(classify(fit, family, s));
    means.push_back(predict_mean(fit, family, s, classes.back().label));
  }
  out.add("classes.csv", cli::classes_csv(data, classes));
  out.add("predictions.csv", cli::predictions_csv(data, means));
  std::cout << "classified " << data.n() << " subjects into " << fit.K() << " components\n";
}

void cmd_simulate(const Options& o, ArtifactSet& out) {
  const SimDesign design = example_design(o.example);
  if (o.reps < 1) throw Error(ErrorCategory::settings, "--reps must be positive");
  const int width = static_cast<int>(std::to_string(o.reps).size());
  for (int r = 0; r < o.reps; ++r) {
    // Same derivation as bench, so replication r of simulate is the training set of bench.
    const SimulatedData sim = generate(design, derive_seed(derive_seed(o.seed, static_cast<std::uint64_t>(r)), 0));
    char tag[32];
    std::snprintf(tag, sizeof tag, "%0*d", width, r + 1);
    std::ostringstream data_csv;
    write_csv(data_csv, sim.data);
    out.add(std::string("data_") + tag + ".csv", data_csv.str());
    out.add(std::string("labels_") + tag + ".csv", cli::labels_csv(sim.data, sim.labels));
  }
  std::ostringstream truth;
  truth << "parameter,true\n";
  const auto names = design.parameter_names();
  const auto values = design.true_parameters();
  for (std::size_t j = 0; j < names.size(); ++j) {
    truth << names[j] << ',' << format_double(values(static_cast<Eigen::Index>(j))) << '\n';
  }
  out.add("truth.csv", truth.str());
  std::cout << "simulated " << o.reps << " data set(s) from " << design.name << " (n = " << design.n << ", K = "
            << design.K() << ")\n";
}

void cmd_bench(const Options& o, ArtifactSet& out) {
  const SimDesign design = example_design(o.example);
  if (o.reps < 1) throw Error(ErrorCategory::settings, "--reps must be positive");
  FitConfig config;
  config.K_init = o.k_init;
  config.em = em_settings(o);
  config.refine = refine_kind(o.bench_refine);
  config.jobs = o.jobs;
  if (o.lambda || o.grid != "auto") config.grid = lambda_grid(o, design.n);
  const ReplicationReport report = run_replications(design, o.reps, config, o.seed);
  const std::string text = cli::bench_summary(report);
  out.add("summary.txt", text);
  out.add("replications.csv", cli::replications_csv(report));
  out.add("histogram.csv", cli::histogram_csv(report));
  out.add("pql_table.csv", cli::parameter_table_csv(report.pql, report.parameter_names, report.truth));
  out.add("pql2_table.csv", cli::parameter_table_csv(report.pql2, report.parameter_names, report.truth));
  out.add("misclassification.csv", cli::misclassification_csv(report));
  std::cout << text;
}

// ---- config handling ---------------------------------------------------------

// Rewrites `--config FILE` into `--key=value` tokens placed before the other
// flags, so explicit flags (parsed later, last value wins) override the file.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> from_file;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw Error(ErrorCategory::argument, "--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    std::istringstream in(read_text(path));
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto b = line.find_first_not_of(" \t");
      if (b == std::string::npos || line[b] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCategory::settings, path + ":" + std::to_string(number) + ": expected key=value");
      }
      auto key = line.substr(b, eq - b);
      key.erase(key.find_last_not_of(" \t") + 1);
      auto value = line.substr(eq + 1);
      value.erase(0, value.find_first_not_of(" \t"));
      value.erase(value.find_last_not_of(" \t") + 1);
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      from_file.push_back("--" + key + "=" + value);
    }
  }
  if (from_file.empty()) return rest;
  // Subcommand name stays first.
  std::vector<std::string> merged;
  std::size_t start = 0;
  if (!rest.empty() && rest.front().rfind("-", 0) != 0) merged.push_back(rest[start++]);
  merged.insert(merged.end(), from_file.begin(), from_file.end());
  merged.insert(merged.end(), rest.begin() + static_cast<std::ptrdiff_t>(start), rest.end());
  return merged;
}

std::string config_text(const CLI::App& sub) {
  std::ostringstream os;
  os << "# mixql " << sub.get_name() << '\n';
  for (const CLI::Option* opt : sub.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help" || names.front() == "out") continue;
    std::string value;
    if (opt->get_expected_max() == 0) {
      value = opt->count() > 0 && opt->as<bool>() ? "true" : "false";
    } else if (opt->count() > 0) {
      value = opt->results().back();
    } else {
      value = opt->get_default_str();
      if (value.empty()) continue;
    }
    os << names.front() << '=' << value << '\n';
  }
  return os.str();
}

void add_common(CLI::App* sub, Options& o, bool data_options) {
  if (data_options) {
    sub->add_option("--data", o.data, "long-format CSV, one row per observation");
    sub->add_option("--id-col", o.id_col, "subject id column")->capture_default_str();
    sub->add_option("--y-col", o.y_col, "response column")->capture_default_str();
    sub->add_option("--x-cols", o.x_cols, "comma-separated covariate columns");
  }
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
}

void add_model_options(CLI::App* sub, Options& o) {
  sub->add_option("--family", o.family, "gaussian | poisson | binomial")->capture_default_str();
  sub->add_option("--exempt-cols", o.exempt_cols, "covariates left unstandardized (e.g. an intercept)");
  sub->add_flag("--standardize", o.standardize, "center and scale covariates (pooled moments)");
  sub->add_flag("--standardize-response", o.standardize_response, "also center and scale the response");
}

void add_em_options(CLI::App* sub, Options& o) {
  sub->add_option("--lambda", o.lambda, "single tuning value (skips the grid)");
  sub->add_option("--max-iter", o.max_iter, "EM iteration cap")->capture_default_str();
  sub->add_option("--tol-obj", o.tol_obj, "relative objective tolerance")->capture_default_str();
  sub->add_option("--tol-param", o.tol_param, "max parameter change tolerance")->capture_default_str();
  sub->add_option("--seed", o.seed, "master seed")->capture_default_str();
  sub->add_option("--k-init", o.k_init, "initial number of components")->capture_default_str();
  sub->add_option("--grid", o.grid, "\"auto\" or comma-separated lambda values")->capture_default_str();
  sub->add_option("--jobs", o.jobs, "worker threads")->capture_default_str();
}

void set_policies(CLI::App* sub) {
  for (CLI::Option* opt : sub->get_options()) {
    if (opt->get_expected_max() != 0) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalized quasi-likelihood mixture regression for longitudinal data", "mixql"};
  app.require_subcommand(1);
  Options o;

  auto* fit = app.add_subcommand("fit", "select lambda by BIC, fit, and report estimates");
  add_common(fit, o, true);
  add_model_options(fit, o);
  add_em_options(fit, o);
  fit->add_option("--refine", o.refine, "GEE refinement: ar1 | cs | ind | none")->capture_default_str();

  auto* select = app.add_subcommand("select", "run the lambda grid and write the BIC table");
  add_common(select, o, true);
  add_model_options(select, o);
  add_em_options(select, o);

  auto* classify_cmd = app.add_subcommand("classify", "assign new subjects with a saved model");
  add_common(classify_cmd, o, true);
  classify_cmd->add_option("--model", o.model, "model.json written by fit");
  classify_cmd->add_flag("--refined", o.use_refined, "use the GEE-refined coefficients");

  auto* simulate = app.add_subcommand("simulate", "write simulated data sets");
  add_common(simulate, o, false);
  simulate->add_option("--example", o.example, "ex1 | ex2:<rho> | ex3")->capture_default_str();
  simulate->add_option("--reps", o.reps, "number of data sets")->capture_default_str();
  simulate->add_option("--seed", o.seed, "master seed")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Monte Carlo replications with selection and accuracy tables");
  add_common(bench, o, false);
  bench->add_option("--example", o.example, "ex1 | ex2:<rho> | ex3")->capture_default_str();
  bench->add_option("--reps", o.reps, "number of replications")->capture_default_str();
  add_em_options(bench, o);
  bench->add_option("--refine", o.bench_refine, "GEE refinement: ar1 | cs | ind | none")->capture_default_str();

  for (auto* sub : {fit, select, classify_cmd, simulate, bench}) set_policies(sub);

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const Error& e) {
    std::cerr << "mixql: error [" << category_name(e.category()) << "]: " << e.what() << '\n';
    return exit_code(e.category());
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "mixql: error [settings]: " << e.what() << '\n';
    return exit_code(ErrorCategory::settings);
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    ArtifactSet out(o.out);
    if (active == fit) cmd_fit(o, out);
    else if (active == select) cmd_select(o, out);
    else if (active == classify_cmd) cmd_classify(o, *classify_cmd, out);
    else if (active == simulate) cmd_simulate(o, out);
    else cmd_bench(o, out);
    out.commit(config_text(*active));
  } catch (const Error& e) {
    std::cerr << "mixql: error [" << category_name(e.category()) << "]: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "mixql: error [internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
