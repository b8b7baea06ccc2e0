#include "mixql/mixture.hpp"

#include "mixql/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mixql {

void validate_fit(const MixtureFit& fit) {
  const auto K = fit.K();
  if (K < 1) throw Error(ErrorCategory::argument, "fit has no components");
  if (fit.beta.rows() != K || fit.phi.size() != K || fit.beta.cols() < 1) {
    throw Error(ErrorCategory::argument, "fit parameter shapes disagree");
  }
  if (!fit.pi.allFinite() || !fit.beta.allFinite() || !fit.phi.allFinite()) {
    throw Error(ErrorCategory::argument, "fit has non-finite parameters");
  }
  if ((fit.pi.array() <= 0.0).any() || std::abs(fit.pi.sum() - 1.0) > 1e-10) {
    throw Error(ErrorCategory::argument, "mixing proportions must be positive and sum to one");
  }
  if ((fit.phi.array() <= 0.0).any()) {
    throw Error(ErrorCategory::argument, "dispersions must be positive");
  }
}

MixtureFit select_components(const MixtureFit& fit, const std::vector<Eigen::Index>& order) {
  MixtureFit out = fit;
  const auto K = static_cast<Eigen::Index>(order.size());
  out.pi.resize(K);
  out.phi.resize(K);
  out.beta.resize(K, fit.beta.cols());
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    out.pi(k) = fit.pi(src);
    out.phi(k) = fit.phi(src);
    out.beta.row(k) = fit.beta.row(src);
  }
  return out;
}

std::vector<Eigen::Index> label_order(const MixtureFit& fit) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(fit.K()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const bool has_second = fit.beta.cols() > 1;
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (fit.beta(a, 0) != fit.beta(b, 0)) return fit.beta(a, 0) < fit.beta(b, 0);
    if (has_second && fit.beta(a, 1) != fit.beta(b, 1)) return fit.beta(a, 1) < fit.beta(b, 1);
    return fit.pi(a) > fit.pi(b);
  });
  return order;
}

MixtureFit order_labels(const MixtureFit& fit) { return select_components(fit, label_order(fit)); }

}  // namespace mixql
