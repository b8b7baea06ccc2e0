#include "mixql/selection.hpp"

#include "mixql/errors.hpp"
#include "mixql/glm.hpp"
#include "mixql/parallel.hpp"
#include "mixql/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace mixql {

namespace {

std::vector<int> assign_to_centers(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centers, double* inertia) {
  std::vector<int> labels(static_cast<std::size_t>(points.rows()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    Eigen::Index best = 0;
    const double d = (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    total += d;
  }
  if (inertia) *inertia = total;
  return labels;
}

Eigen::MatrixXd plus_plus_seeding(const Eigen::MatrixXd& points, int K, std::mt19937_64& rng) {
  const auto n = points.rows();
  Eigen::MatrixXd centers(K, points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = points.row(pick(rng));
  Eigen::VectorXd d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < K; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (chosen = 0; chosen < n - 1; ++chosen) {
        target -= d2(chosen);
        if (target <= 0.0) break;
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = points.row(chosen);
    d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

// One Lloyd run; returns false if a cluster became empty.
bool lloyd(const Eigen::MatrixXd& points, int K, std::mt19937_64& rng, int max_iterations, KMeansResult& out) {
  Eigen::MatrixXd centers = plus_plus_seeding(points, K, rng);
  std::vector<int> labels = assign_to_centers(points, centers, nullptr);
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, points.cols());
    std::vector<int> counts(static_cast<std::size_t>(K), 0);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const int l = labels[static_cast<std::size_t>(i)];
      sums.row(l) += points.row(i);
      ++counts[static_cast<std::size_t>(l)];
    }
    for (int c = 0; c < K; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) return false;
      centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    }
    std::vector<int> next = assign_to_centers(points, centers, nullptr);
    if (next == labels) break;
    labels = std::move(next);
  }
  std::vector<int> counts(static_cast<std::size_t>(K), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  if (std::find(counts.begin(), counts.end(), 0) != counts.end()) return false;
  out.labels = assign_to_centers(points, centers, &out.inertia);
  out.centers = centers;
  return true;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int K, std::uint64_t seed, int restarts, int max_iterations) {
  const auto n = points.rows();
  if (K < 1 || K > n) throw Error(ErrorCategory::argument, "k-means needs 1 <= K <= number of points");
  for (int attempt = 0; attempt < 10; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
      KMeansResult run;
      if (lloyd(points, K, rng, max_iterations, run) && run.inertia < best.inertia) best = std::move(run);
    }
    if (std::isfinite(best.inertia)) return best;
  }
  std::mt19937_64 rng(derive_seed(seed, 10));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  KMeansResult out;
  out.labels.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index r = 0; r < n; ++r) out.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = static_cast<int>(r % K);
  out.centers = Eigen::MatrixXd::Zero(K, points.cols());
  std::vector<int> counts(static_cast<std::size_t>(K), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.centers.row(out.labels[static_cast<std::size_t>(i)]) += points.row(i);
    ++counts[static_cast<std::size_t>(out.labels[static_cast<std::size_t>(i)])];
  }
  for (int c = 0; c < K; ++c) out.centers.row(c) /= counts[static_cast<std::size_t>(c)];
  assign_to_centers(points, out.centers, &out.inertia);
  return out;
}

Eigen::MatrixXd subject_features(const LongitudinalDataset& data, const ModelFamily& family) {
  const auto n = data.n();
  const auto p = data.p();
  Eigen::MatrixXd features;

  bool estimable = true;
  for (const auto& s : data.subjects()) {
    if (s.m() <= p || Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(s.X).rank() < p) {
      estimable = false;
      break;
    }
  }
  if (estimable) {
    features.resize(n, p);
    QuasiScoreSettings qs;
    for (Eigen::Index i = 0; i < n && estimable; ++i) {
      const auto& s = data.subject(i);
      try {
        const auto r = solve_quasi_score(s.X, s.y, Eigen::VectorXd::Ones(s.m()), family, std::nullopt, qs,
                                         "subject '" + s.id + "'");
        features.row(i) = r.beta.transpose();
      } catch (const Error&) {
        estimable = false;
      }
    }
  }
  if (!estimable) {
    features = Eigen::MatrixXd::Zero(n, std::max<Eigen::Index>(p, 2));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& s = data.subject(i);
      Eigen::VectorXd z(s.m());
      for (Eigen::Index j = 0; j < s.m(); ++j) z(j) = family.linear_predictor(family.starting_mean(s.y(j)));
      const double mean = z.mean();
      features(i, 0) = mean;
      features(i, 1) = s.m() > 1 ? std::sqrt((z.array() - mean).square().sum() / static_cast<double>(s.m() - 1)) : 0.0;
    }
  }
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const double mean = features.col(c).mean();
    const double sd = std::sqrt((features.col(c).array() - mean).square().mean());
    if (sd > 0.0) features.col(c) = (features.col(c).array() - mean) / sd;
  }
  return features;
}

namespace {

Eigen::VectorXd fit_rows(const LongitudinalDataset& data, const ModelFamily& family, const Eigen::VectorXd& weights,
                         const std::string& label) {
  QuasiScoreSettings qs;
  try {
    return solve_quasi_score(data.stacked_X(), data.stacked_y(), weights, family, std::nullopt, qs, label).beta;
  } catch (const Error&) {
    const Eigen::MatrixXd gram = data.stacked_X().transpose() * weights.asDiagonal() * data.stacked_X();
    qs.ridge = 1e-6 * std::max(gram.diagonal().mean(), 1e-12);
    return solve_quasi_score(data.stacked_X(), data.stacked_y(), weights, family, std::nullopt, qs, label).beta;
  }
}

}  // namespace

MixtureFit init_from_partition(const LongitudinalDataset& data, const ModelFamily& family,
                               const std::vector<int>& labels, int K, double phi_floor) {
  const auto n = data.n();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw Error(ErrorCategory::argument, "one label per subject required");
  MixtureFit fit;
  fit.pi = Eigen::VectorXd::Zero(K);
  fit.beta = Eigen::MatrixXd::Zero(K, data.p());
  fit.phi = Eigen::VectorXd::Ones(K);
  std::optional<Eigen::VectorXd> pooled;

  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(n, K);
  for (Eigen::Index i = 0; i < n; ++i) U(i, labels[static_cast<std::size_t>(i)]) = 1.0;
  for (int c = 0; c < K; ++c) {
    Eigen::VectorXd w(data.total_observations());
    for (Eigen::Index i = 0; i < n; ++i) w.segment(data.offset(i), data.m(i)).setConstant(U(i, c));
    try {
      fit.beta.row(c) = fit_rows(data, family, w, "initial cluster " + std::to_string(c)).transpose();
    } catch (const Error&) {
      if (!pooled) pooled = fit_rows(data, family, Eigen::VectorXd::Ones(data.total_observations()), "pooled fit");
      fit.beta.row(c) = pooled->transpose();
    }
    fit.pi(c) = std::max(U.col(c).sum() / static_cast<double>(n), 0.5 / static_cast<double>(n));
  }
  fit.pi /= fit.pi.sum();
  fit.phi = m_step_phi(data, family, PosteriorMatrix{U}, fit.beta, phi_floor);
  return fit;
}

MixtureFit init_kmeans(const LongitudinalDataset& data, const ModelFamily& family, int K_init, std::uint64_t seed) {
  if (K_init < 1 || K_init > data.n()) {
    throw Error(ErrorCategory::argument, "K_init = " + std::to_string(K_init) + " must lie in [1, n = " +
                                             std::to_string(data.n()) + "]");
  }
  std::vector<int> labels(static_cast<std::size_t>(data.n()), 0);
  if (K_init > 1) labels = kmeans(subject_features(data, family), K_init, seed).labels;
  return init_from_partition(data, family, labels, K_init);
}

void LambdaGrid::validate(int K_init) const {
  if (values.empty()) throw Error(ErrorCategory::settings, "lambda grid is empty");
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (!(values[j] >= 0.0) || !std::isfinite(values[j])) throw Error(ErrorCategory::settings, "lambda values must be >= 0");
    if (j > 0 && !(values[j] > values[j - 1])) throw Error(ErrorCategory::settings, "lambda grid must be strictly increasing");
    if (!(values[j] * K_init < 1.0)) {
      throw Error(ErrorCategory::settings, "lambda " + std::to_string(values[j]) + " violates lambda * K_init < 1");
    }
  }
}

LambdaGrid default_lambda_grid(Eigen::Index n, int K_init) {
  if (n < 2) throw Error(ErrorCategory::argument, "lambda grid needs n >= 2");
  LambdaGrid grid;
  const double root_n = std::sqrt(static_cast<double>(n));
  for (int j = 0; j < 20; ++j) {
    const double a = 0.05 * std::pow(100.0, static_cast<double>(j) / 19.0);
    const double lambda = a / root_n;
    if (lambda * K_init < 0.99) grid.values.push_back(lambda);
  }
  return grid;
}

double bic(const LongitudinalDataset& data, const ModelFamily& family, const MixtureFit& fit) {
  const double fit_term = -2.0 * log_mixture_rows(component_log_scores(data, family, fit.beta, fit.phi), fit.pi).sum();
  return fit_term + static_cast<double>(fit.K() * (fit.p() + 2)) * std::log(static_cast<double>(data.n()));
}

SelectionResult select_lambda_from(const LongitudinalDataset& data, const ModelFamily& family, const LambdaGrid& grid,
                                   const MixtureFit& init, const EmSettings& settings, int jobs) {
  grid.validate(static_cast<int>(init.K()));
  const std::size_t G = grid.values.size();
  std::vector<LambdaRow> rows(G);
  std::vector<MixtureFit> fits(G);
  parallel_for(G, jobs, [&](std::size_t j) {
    EmSettings s = settings;
    s.lambda = grid.values[j];
    rows[j].lambda = s.lambda;
    try {
      fits[j] = fit_em(data, family, init, s);
      rows[j].K = static_cast<int>(fits[j].K());
      rows[j].converged = fits[j].converged;
      rows[j].bic = bic(data, family, fits[j]);
      if (!std::isfinite(rows[j].bic)) throw Error(ErrorCategory::numerical, "BIC is not finite");
    } catch (const Error& e) {
      rows[j].failed = true;
      rows[j].converged = false;
      rows[j].error = e.what();
    }
  });

  auto pick = [&](bool require_converged) {
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < G; ++j) {
      if (rows[j].failed || (require_converged && !rows[j].converged)) continue;
      if (!best || rows[j].bic <= rows[*best].bic) best = j;  // later (larger) lambda wins ties
    }
    return best;
  };
  auto best = pick(true);
  if (!best) best = pick(false);
  if (!best) {
    std::ostringstream os;
    os << "every lambda failed:";
    for (const auto& r : rows) os << " [lambda=" << r.lambda << ": " << r.error << "]";
    throw Error(ErrorCategory::collapse, os.str());
  }
  SelectionResult out;
  out.lambda = grid.values[*best];
  out.fit = fits[*best];
  out.init = init;
  out.table = std::move(rows);
  return out;
}

SelectionResult select_lambda(const LongitudinalDataset& data, const ModelFamily& family, const LambdaGrid& grid,
                              int K_init, const EmSettings& settings, int jobs) {
  return select_lambda_from(data, family, grid, init_kmeans(data, family, K_init, settings.seed), settings, jobs);
}

Classification classify(const MixtureFit& fit, const ModelFamily& family, const SubjectBlock& subject) {
  if (subject.X.cols() != fit.p() || subject.X.rows() != subject.m()) {
    throw Error(ErrorCategory::argument, "subject '" + subject.id + "' does not match the fit's covariate dimension");
  }
  const auto K = fit.K();
  Eigen::VectorXd logw(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::VectorXd q = quasi_log_densities(subject.X, subject.y, family, fit.beta.row(k).transpose());
    double sat = 0.0;
    for (Eigen::Index j = 0; j < subject.m(); ++j) sat += family.saturated_quasi_log_density(subject.y(j));
    logw(k) = std::log(fit.pi(k)) + (q.sum() - sat) / fit.phi(k);
  }
  Classification out;
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < K; ++k) {
    if (logw(k) > logw(best)) best = k;
  }
  if (!std::isfinite(logw(best))) {
    throw Error(ErrorCategory::numerical, "no finite class score for subject '" + subject.id + "'");
  }
  out.label = static_cast<int>(best);
  out.posterior = (logw.array() - logw(best)).exp().matrix();
  out.posterior /= out.posterior.sum();
  return out;
}

std::vector<int> classify_all(const MixtureFit& fit, const ModelFamily& family, const LongitudinalDataset& data) {
  std::vector<int> labels;
  labels.reserve(data.subjects().size());
  for (const auto& s : data.subjects()) labels.push_back(classify(fit, family, s).label);
  return labels;
}

Eigen::VectorXd predict_mean(const MixtureFit& fit, const ModelFamily& family, const SubjectBlock& subject, int label) {
  const Eigen::VectorXd eta = subject.X * fit.beta.row(label).transpose();
  return eta.unaryExpr([&](double e) { return family.mean(e); });
}

}  // namespace mixql
