#include "mixql/simulate.hpp"

#include "mixql/errors.hpp"
#include "mixql/parallel.hpp"
#include "mixql/random.hpp"

#include <boost/math/distributions/negative_binomial.hpp>
#include <boost/math/distributions/poisson.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <random>

namespace mixql {

namespace {

using DiscretePolicy = boost::math::policies::policy<
    boost::math::policies::discrete_quantile<boost::math::policies::integer_round_up>>;

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

int SimDesign::p() const {
  if (covariates == CovariateLaw::pbc_visits) return 4;
  return uniform_covariates + (intercept ? 1 : 0);
}

std::vector<std::string> SimDesign::column_names() const {
  if (covariates == CovariateLaw::pbc_visits) return {"trt", "age", "sex", "time"};
  std::vector<std::string> names;
  if (intercept) names.emplace_back("intercept");
  for (int c = 1; c <= uniform_covariates; ++c) names.push_back("x" + std::to_string(c));
  return names;
}

void SimDesign::validate() const {
  if (components.empty()) throw Error(ErrorCategory::design, "design has no components");
  if (n < 1) throw Error(ErrorCategory::design, "design needs n >= 1");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0)) throw Error(ErrorCategory::design, "component weights must be positive");
    if (c.beta.size() != p()) throw Error(ErrorCategory::design, "component coefficients do not match the covariates");
    if (!(c.dispersion >= 0.0)) throw Error(ErrorCategory::design, "dispersion must be nonnegative");
    if (family.kind() != FamilyKind::gaussian_identity && c.dispersion < 1.0) {
      throw Error(ErrorCategory::design, "count margins need dispersion >= 1 (underdispersion unsupported)");
    }
    const Eigen::Index max_m = covariates == CovariateLaw::pbc_visits ? 6 : 64;
    if (!WorkingCorrelation{c.correlation, c.rho}.positive_definite_up_to(max_m)) {
      throw Error(ErrorCategory::design, "component correlation is not positive definite");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCategory::design, "component weights must sum to one");
}

Eigen::VectorXd SimDesign::true_parameters() const {
  const int K = this->K();
  const int P = p();
  Eigen::VectorXd t(K * P + 2 * K);
  for (int k = 0; k < K; ++k) t.segment(k * P, P) = components[static_cast<std::size_t>(k)].beta;
  for (int k = 0; k < K; ++k) {
    t(K * P + k) = components[static_cast<std::size_t>(k)].dispersion;
    t(K * P + K + k) = components[static_cast<std::size_t>(k)].weight;
  }
  return t;
}

std::vector<std::string> SimDesign::parameter_names() const {
  std::vector<std::string> names;
  const int first = (covariates == CovariateLaw::uniform_time_varying && intercept) ? 0 : 1;
  const std::string dispersion = family.kind() == FamilyKind::gaussian_identity ? "sigma2" : "phi";
  for (int k = 1; k <= K(); ++k) {
    for (int j = 0; j < p(); ++j) names.push_back("beta" + std::to_string(k) + std::to_string(j + first));
  }
  for (int k = 1; k <= K(); ++k) names.push_back(dispersion + "_" + std::to_string(k));
  for (int k = 1; k <= K(); ++k) names.push_back("pi_" + std::to_string(k));
  return names;
}

SimDesign example_design(std::string_view spec) {
  SimDesign d;
  if (spec == "ex1") {
    d.example = ExampleId::ex1;
    d.name = "ex1";
    d.family = ModelFamily(FamilyKind::gaussian_identity);
    d.n = 300;
    d.covariates = CovariateLaw::pbc_visits;
    d.intercept = false;
    d.components = {
        {0.5, vec({0.08, -0.01, -0.4, 0.06}), 0.5, CorrelationKind::ar1, 0.6},
        {0.5, vec({-0.1, -0.05, 3.0, 0.3}), 0.8, CorrelationKind::ar1, 0.6},
    };
  } else if (spec.starts_with("ex2")) {
    double rho = 0.3;
    if (spec.size() > 3) {
      if (spec[3] != ':') throw Error(ErrorCategory::argument, "example spec must look like ex2:<rho>");
      const auto text = spec.substr(4);
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), rho);
      if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(ErrorCategory::argument, "cannot read rho in '" + std::string(spec) + "'");
      }
    }
    d.example = ExampleId::ex2;
    d.name = "ex2:" + format_double(rho);
    d.family = ModelFamily(FamilyKind::poisson_log);
    d.n = 150;
    d.covariates = CovariateLaw::uniform_time_varying;
    d.uniform_covariates = 3;
    d.intercept = true;
    d.components = {
        {1.0 / 3.0, vec({0.0, 3.0, -1.0, 1.0}), 2.0, CorrelationKind::ar1, rho},
        {2.0 / 3.0, vec({4.0, -2.0, 0.0, 1.0}), 1.0, CorrelationKind::ar1, rho},
    };
  } else if (spec == "ex3") {
    d.example = ExampleId::ex3;
    d.name = "ex3";
    d.family = ModelFamily(FamilyKind::gaussian_identity);
    d.n = 500;
    d.covariates = CovariateLaw::uniform_time_varying;
    d.uniform_covariates = 4;
    d.intercept = true;
    d.components = {
        {0.25, vec({2.0, 1.0, -1.0, 1.5, 1.0}), 0.5, CorrelationKind::ar1, 0.6},
        {0.25, vec({-4.0, 2.0, 1.0, -2.0, 0.0}), 0.3, CorrelationKind::ar1, 0.6},
        {0.15, vec({-2.0, -2.0, 1.0, 0.0, 1.0}), 0.1, CorrelationKind::exchangeable, 0.3},
        {0.15, vec({0.0, 1.0, 0.0, 1.0, 1.0}), 0.15, CorrelationKind::exchangeable, 0.3},
        {0.20, vec({-4.0, 0.0, -1.0, -1.0, -1.5}), 0.6, CorrelationKind::independence, 0.0},
    };
  } else {
    throw Error(ErrorCategory::argument, "unknown example '" + std::string(spec) + "' (ex1, ex2:<rho>, ex3)");
  }
  d.validate();
  return d;
}

namespace {

std::vector<int> draw_labels(const SimDesign& design, std::mt19937_64& rng, const std::optional<std::vector<int>>& counts) {
  std::vector<int> labels;
  if (counts) {
    if (static_cast<int>(counts->size()) != design.K()) throw Error(ErrorCategory::design, "one count per component required");
    for (int k = 0; k < design.K(); ++k) labels.insert(labels.end(), static_cast<std::size_t>((*counts)[static_cast<std::size_t>(k)]), k);
    return labels;
  }
  std::vector<double> w;
  for (const auto& c : design.components) w.push_back(c.weight);
  std::discrete_distribution<int> pick(w.begin(), w.end());
  labels.resize(static_cast<std::size_t>(design.n));
  for (auto& l : labels) l = pick(rng);
  return labels;
}

Eigen::MatrixXd draw_covariates(const SimDesign& design, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (design.covariates == CovariateLaw::pbc_visits) {
    static constexpr double windows[5][2] = {{350, 390}, {710, 770}, {1080, 1160}, {1450, 1550}, {1820, 1930}};
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> age(30.0, 80.0);
    const double trt = coin(rng) ? 1.0 : 0.0;
    const double a = age(rng);
    const double sex = coin(rng) ? 1.0 : 0.0;
    Eigen::MatrixXd X(6, 4);
    X.col(0).setConstant(trt);
    X.col(1).setConstant(a);
    X.col(2).setConstant(sex);
    X(0, 3) = 0.0;
    for (int v = 0; v < 5; ++v) {
      std::uniform_real_distribution<double> day(windows[v][0], windows[v][1]);
      X(v + 1, 3) = day(rng) / 30.5;
    }
    return X;
  }
  std::poisson_distribution<int> extra(3.0);
  const Eigen::Index m = 2 + extra(rng);
  Eigen::MatrixXd X(m, design.p());
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index c = 0;
    if (design.intercept) X(j, c++) = 1.0;
    for (int q = 0; q < design.uniform_covariates; ++q) X(j, c++) = unit(rng);
  }
  return X;
}

Eigen::VectorXd correlated_normals(const ComponentSpec& comp, Eigen::Index m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(m);
  for (Eigen::Index j = 0; j < m; ++j) z(j) = normal(rng);
  const Eigen::MatrixXd R = WorkingCorrelation{comp.correlation, comp.rho}.matrix(m);
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) throw Error(ErrorCategory::design, "within-subject correlation is not positive definite");
  return llt.matrixL() * z;
}

template <typename ResponseDraw>
SimulatedData simulate_with(const SimDesign& design, std::uint64_t seed, const std::optional<std::vector<int>>& counts,
                            ResponseDraw&& draw_response) {
  design.validate();
  std::mt19937_64 rng(seed);
  SimulatedData out;
  out.labels = draw_labels(design, rng, counts);
  std::vector<SubjectBlock> subjects;
  subjects.reserve(out.labels.size());
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    const auto& comp = design.components[static_cast<std::size_t>(out.labels[i])];
    SubjectBlock s;
    s.id = std::to_string(i + 1);
    s.X = draw_covariates(design, rng);
    s.y = draw_response(comp, s.X, rng);
    subjects.push_back(std::move(s));
  }
  out.data = LongitudinalDataset(std::move(subjects), design.column_names());
  return out;
}

}  // namespace

SimulatedData gen_gaussian_mixture(const SimDesign& design, std::uint64_t seed, const std::optional<std::vector<int>>& counts) {
  if (design.family.kind() != FamilyKind::gaussian_identity) {
    throw Error(ErrorCategory::design, "gaussian generator needs the gaussian family");
  }
  return simulate_with(design, seed, counts, [](const ComponentSpec& comp, const Eigen::MatrixXd& X, std::mt19937_64& rng) {
    const Eigen::VectorXd mean = X * comp.beta;
    const Eigen::VectorXd noise = correlated_normals(comp, X.rows(), rng);
    if (comp.dispersion == 0.0) return mean;
    return Eigen::VectorXd(mean + std::sqrt(comp.dispersion) * noise);
  });
}

SimulatedData gen_count_mixture(const SimDesign& design, std::uint64_t seed, const std::optional<std::vector<int>>& counts) {
  if (design.family.kind() != FamilyKind::poisson_log) {
    throw Error(ErrorCategory::design, "count generator needs the poisson family");
  }
  return simulate_with(design, seed, counts, [&](const ComponentSpec& comp, const Eigen::MatrixXd& X, std::mt19937_64& rng) {
    const Eigen::VectorXd z = correlated_normals(comp, X.rows(), rng);
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index j = 0; j < X.rows(); ++j) {
      const double mu = std::exp(X.row(j).dot(comp.beta));
      const double u = std::clamp(0.5 * std::erfc(-z(j) / std::sqrt(2.0)), 1e-15, 1.0 - 1e-15);
      if (comp.dispersion == 1.0) {
        y(j) = boost::math::quantile(boost::math::poisson_distribution<double, DiscretePolicy>(mu), u);
      } else {
        const double size = mu / (comp.dispersion - 1.0);
        const double prob = size / (size + mu);
        y(j) = boost::math::quantile(boost::math::negative_binomial_distribution<double, DiscretePolicy>(size, prob), u);
      }
    }
    return y;
  });
}

SimulatedData generate(const SimDesign& design, std::uint64_t seed, const std::optional<std::vector<int>>& counts) {
  switch (design.family.kind()) {
    case FamilyKind::gaussian_identity: return gen_gaussian_mixture(design, seed, counts);
    case FamilyKind::poisson_log: return gen_count_mixture(design, seed, counts);
    case FamilyKind::binomial_logit: break;
  }
  throw Error(ErrorCategory::design, "no generator for the " + design.family.name() + " family");
}

double achieved_lag1_correlation(const SimDesign& design, const SimulatedData& sim) {
  double num = 0.0;
  double pairs = 0.0;
  for (Eigen::Index i = 0; i < sim.data.n(); ++i) {
    const auto& s = sim.data.subject(i);
    const auto& comp = design.components[static_cast<std::size_t>(sim.labels[static_cast<std::size_t>(i)])];
    Eigen::VectorXd e(s.m());
    for (Eigen::Index j = 0; j < s.m(); ++j) {
      const double mu = design.family.mean(s.X.row(j).dot(comp.beta));
      e(j) = (s.y(j) - mu) / std::sqrt(std::max(comp.dispersion, 1e-300) * design.family.variance(mu));
    }
    if (s.m() < 2) continue;
    num += e.head(s.m() - 1).dot(e.tail(s.m() - 1));
    pairs += static_cast<double>(s.m() - 1);
  }
  return pairs > 0.0 ? num / pairs : 0.0;
}

namespace {

// Report layout for a fit whose components are already matched to the truth.
Eigen::VectorXd report_vector(const MixtureFit& fit) {
  const auto K = fit.K();
  const auto p = fit.p();
  Eigen::VectorXd v(K * p + 2 * K);
  for (Eigen::Index k = 0; k < K; ++k) v.segment(k * p, p) = fit.beta.row(k).transpose();
  v.segment(K * p, K) = fit.phi;
  v.segment(K * p + K, K) = fit.pi;
  return v;
}

// Permutation mapping true component k to the estimated component closest in beta.
std::vector<Eigen::Index> align_to_truth(const SimDesign& design, const MixtureFit& fit) {
  const int K = design.K();
  Eigen::MatrixXd cost(K, K);
  for (int a = 0; a < K; ++a) {
    for (int b = 0; b < K; ++b) {
      cost(a, b) = (design.components[static_cast<std::size_t>(a)].beta - fit.beta.row(b).transpose()).squaredNorm();
    }
  }
  const auto match = hungarian_assignment(cost);
  return {match.begin(), match.end()};
}

ReplicationRecord run_one(const SimDesign& design, int index, const FitConfig& config, std::uint64_t master_seed) {
  ReplicationRecord rec;
  rec.index = index;
  rec.seed = derive_seed(master_seed, static_cast<std::uint64_t>(index));
  rec.misclassification_pql = std::numeric_limits<double>::quiet_NaN();
  rec.misclassification_pql2 = std::numeric_limits<double>::quiet_NaN();
  try {
    const SimulatedData train = generate(design, derive_seed(rec.seed, 0));
    rec.achieved_rho = achieved_lag1_correlation(design, train);
    EmSettings em = config.em;
    em.seed = derive_seed(rec.seed, 2);
    const LambdaGrid grid = config.grid.value_or(default_lambda_grid(train.data.n(), config.K_init));
    const SelectionResult selection = select_lambda(train.data, design.family, grid, config.K_init, em, 1);
    const MixtureFit fit = order_labels(selection.fit);
    rec.K_hat = static_cast<int>(fit.K());
    rec.lambda = selection.lambda;
    rec.converged = fit.converged;
    rec.iterations = fit.iterations;
    if (rec.K_hat != design.K()) return rec;

    const auto align = align_to_truth(design, fit);
    rec.pql = report_vector(select_components(fit, align));
    const std::vector<int> per_component(static_cast<std::size_t>(design.K()), design.test_per_component);
    const SimulatedData test = generate(design, derive_seed(rec.seed, 1), per_component);
    rec.misclassification_pql =
        misclassification(test.labels, classify_all(fit, design.family, test.data), design.K(), rec.K_hat).rate;

    if (config.refine) {
      try {
        const RefinedFit refined = refine(train.data, fit, design.family, *config.refine);
        const MixtureFit as_fit = refined.as_mixture();
        rec.pql2 = report_vector(select_components(as_fit, align));
        rec.misclassification_pql2 =
            misclassification(test.labels, classify_all(as_fit, design.family, test.data), design.K(), rec.K_hat).rate;
        rec.pql2_ok = true;
      } catch (const Error& e) {
        rec.pql2_error = e.what();
      }
    }
  } catch (const Error& e) {
    rec.failed = true;
    rec.error = e.what();
  }
  return rec;
}

MisclassificationSummary summarize_rates(const std::vector<double>& rates) {
  MisclassificationSummary s;
  s.count = rates.size();
  if (rates.empty()) {
    s.median = s.lower = s.upper = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.median = quantile(rates, 0.5);
  s.lower = quantile(rates, 0.025);
  s.upper = quantile(rates, 0.975);
  return s;
}

}  // namespace

ReplicationReport summarize_replications(const SimDesign& design, std::vector<ReplicationRecord> records) {
  ReplicationReport report;
  report.design = design;
  report.parameter_names = design.parameter_names();
  report.truth = design.true_parameters();
  std::vector<int> selected;
  std::vector<Eigen::VectorXd> pql, pql2;
  std::vector<double> rate_pql, rate_pql2;
  double rho_sum = 0.0;
  int rho_count = 0;
  int correct = 0;
  for (const auto& r : records) {
    if (r.failed) {
      ++report.failures;
      continue;
    }
    selected.push_back(r.K_hat);
    rho_sum += r.achieved_rho;
    ++rho_count;
    if (r.K_hat != design.K()) continue;
    ++correct;
    pql.push_back(r.pql);
    rate_pql.push_back(r.misclassification_pql);
    if (r.pql2_ok) {
      pql2.push_back(r.pql2);
      rate_pql2.push_back(r.misclassification_pql2);
    }
  }
  report.histogram = selection_histogram(selected);
  report.selection_rate = records.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(records.size());
  report.pql = bias_mse_table(pql, report.truth, report.parameter_names);
  report.pql2 = bias_mse_table(pql2, report.truth, report.parameter_names);
  report.misclassification_pql = summarize_rates(rate_pql);
  report.misclassification_pql2 = summarize_rates(rate_pql2);
  report.mean_achieved_rho = rho_count > 0 ? rho_sum / rho_count : 0.0;
  report.replications = std::move(records);
  return report;
}

ReplicationReport run_replications(const SimDesign& design, int replications, const FitConfig& config,
                                   std::uint64_t master_seed) {
  if (replications < 1) throw Error(ErrorCategory::argument, "need at least one replication");
  design.validate();
  std::vector<ReplicationRecord> records(static_cast<std::size_t>(replications));
  parallel_for(records.size(), config.jobs, [&](std::size_t r) {
    records[r] = run_one(design, static_cast<int>(r), config, master_seed);
  });
  return summarize_replications(design, std::move(records));
}

}  // namespace mixql
