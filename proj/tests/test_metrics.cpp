#include "mixql/metrics.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace mixql;

TEST_SUITE("metrics") {

TEST_CASE("hungarian assignment finds the cheapest permutation") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(0.0, 10.0);
  for (int rep = 0; rep < 50; ++rep) {
    const int K = 1 + rep % 6;
    Eigen::MatrixXd cost(K, K);
    for (Eigen::Index i = 0; i < cost.size(); ++i) cost(i) = std::floor(unit(rng));
    std::vector<int> perm(static_cast<std::size_t>(K));
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
      double c = 0.0;
      for (int r = 0; r < K; ++r) c += cost(r, perm[static_cast<std::size_t>(r)]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto match = hungarian_assignment(cost);
    double got = 0.0;
    std::vector<int> seen(static_cast<std::size_t>(K), 0);
    for (int r = 0; r < K; ++r) {
      got += cost(r, match[static_cast<std::size_t>(r)]);
      ++seen[static_cast<std::size_t>(match[static_cast<std::size_t>(r)])];
    }
    CHECK(got == best);
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  }
}

TEST_CASE("misclassification reference cases") {
  const std::vector<int> truth = {0, 0, 1, 1, 1, 0};
  CHECK(misclassification(truth, truth, 2, 2).rate == 0.0);
  const std::vector<int> swapped = {1, 1, 0, 0, 0, 1};
  const auto s = misclassification(truth, swapped, 2, 2);
  CHECK(s.rate == 0.0);
  CHECK(s.matching == std::vector<int>{1, 0});
  CHECK(s.confusion.sum() == 6);

  const std::vector<int> three = {0, 0, 0, 1, 1, 1, 2, 2, 2, 2};
  std::vector<int> flipped = {2, 2, 2, 0, 0, 0, 1, 1, 1, 1};
  flipped[4] = 1;
  CHECK(misclassification(three, flipped, 3, 3).rate == doctest::Approx(0.1));

  const auto off = misclassification(truth, {0, 1, 2, 0, 1, 2}, 2, 3);
  CHECK_FALSE(off.comparable);
  CHECK(std::isnan(off.rate));
}

TEST_CASE("bias and MSE tables") {
  const Eigen::VectorXd truth = support::vec({1.0, -2.0});
  const std::vector<std::string> names = {"a", "b"};
  const auto exact = bias_mse_table({truth, truth, truth}, truth, names);
  CHECK(exact.replications == 3);
  CHECK(exact.rows[0].bias100 == 0.0);
  CHECK(exact.rows[1].mse100 == 0.0);

  const double delta = 0.3;
  const auto alt = bias_mse_table({truth.array() + delta, truth.array() - delta}, truth, names);
  CHECK(std::abs(alt.rows[0].bias100) <= 1e-12);
  CHECK(alt.rows[0].mse100 == doctest::Approx(delta * delta * 100));

  CHECK(bias_mse_table({}, truth, names).empty());
}

TEST_CASE("MSE equals squared bias plus variance") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.3, 1.7);
  const Eigen::VectorXd truth = support::vec({0.0, 5.0, -1.0});
  std::vector<Eigen::VectorXd> draws;
  for (int r = 0; r < 37; ++r) draws.push_back(truth + support::vec({normal(rng), normal(rng), normal(rng)}));
  const auto table = bias_mse_table(draws, truth, {"a", "b", "c"});
  for (int j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (const auto& d : draws) mean += d(j) / draws.size();
    double var = 0.0;
    for (const auto& d : draws) var += (d(j) - mean) * (d(j) - mean) / draws.size();
    const double bias = mean - truth(j);
    CHECK(table.rows[static_cast<std::size_t>(j)].mse100 / 100 == doctest::Approx(bias * bias + var).epsilon(1e-10));
    CHECK(table.rows[static_cast<std::size_t>(j)].mean == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("quantiles and histograms") {
  CHECK(quantile({3, 1, 2}, 0.5) == 2.0);
  CHECK(quantile({0, 10}, 0.975) == doctest::Approx(9.75));
  CHECK(quantile({4}, 0.025) == 4.0);
  const auto h = selection_histogram({2, 2, 3, 1, 2});
  CHECK(h.at(2) == 3);
  CHECK(h.at(1) == 1);
  CHECK(h.size() == 3);
}

}  // TEST_SUITE
