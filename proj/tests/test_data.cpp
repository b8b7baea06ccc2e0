#include "mixql/data.hpp"
#include "mixql/errors.hpp"

#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace mixql;

namespace {

std::filesystem::path write_text(const std::filesystem::path& dir, const std::string& name, const std::string& text) {
  const auto path = dir / name;
  std::ofstream(path) << text;
  return path;
}

const CsvSchema two_covariates{"id", "y", {"a", "b"}, {}};

}  // namespace

TEST_SUITE("data") {

TEST_CASE("load groups rows by subject and keeps their order") {
  const auto dir = support::scratch_dir("load");
  const auto path = write_text(dir, "d.csv",
                               "id,y,a,b\n"
                               "7,1.5,0,1\n"
                               "3,2,1,1\n"
                               "7,2.5,0,2\n"
                               "3,4,1,2\n"
                               "7,3.5,0,3\n"
                               "3,6,1,3\n");
  const auto d = load_csv(path, two_covariates);
  REQUIRE(d.n() == 2);
  CHECK(d.p() == 2);
  CHECK(d.m(0) == 3);
  CHECK(d.m(1) == 3);
  CHECK(d.subject(0).id == "7");
  CHECK(d.subject(1).id == "3");
  CHECK(d.subject(0).y(1) == 2.5);
  CHECK(d.subject(1).X(2, 1) == 3.0);
  CHECK(d.column_names() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("unbalanced visits are kept as given") {
  const auto dir = support::scratch_dir("unbalanced");
  std::string text = "id,y,a,b\n1,0,0,0\n1,1,1,0\n";
  for (int j = 0; j < 5; ++j) text += "2," + std::to_string(j) + ",1," + std::to_string(j) + "\n";
  const auto d = load_csv(write_text(dir, "d.csv", text), two_covariates);
  CHECK(d.m(0) == 2);
  CHECK(d.m(1) == 5);
  CHECK(d.total_observations() == 7);
}

TEST_CASE("a NaN cell is a parse error at its row") {
  const auto dir = support::scratch_dir("nan");
  const auto path = write_text(dir, "d.csv", "id,y,a,b\n1,0,0,0\n1,NaN,1,0\n");
  try {
    load_csv(path, two_covariates);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
    CHECK(e.category() == ErrorCategory::parse);
  }
  CHECK_THROWS_AS(load_csv(write_text(dir, "e.csv", "id,y,a,b\n1,x,0,0\n"), two_covariates), ParseError);
  CHECK_THROWS_AS(load_csv(write_text(dir, "f.csv", "id,y,a,b\n1,1,0\n"), two_covariates), ParseError);
}

TEST_CASE("schema and empty-input errors") {
  const auto dir = support::scratch_dir("schema");
  auto category_of = [](const auto& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.category();
    }
    return ErrorCategory::argument;
  };
  const auto missing = write_text(dir, "m.csv", "id,y,a\n1,0,0\n");
  CHECK(category_of([&] { load_csv(missing, two_covariates); }) == ErrorCategory::schema);
  const auto empty = write_text(dir, "e.csv", "");
  CHECK(category_of([&] { load_csv(empty, two_covariates); }) == ErrorCategory::empty_input);
  const auto header_only = write_text(dir, "h.csv", "id,y,a,b\n");
  CHECK(category_of([&] { load_csv(header_only, two_covariates); }) == ErrorCategory::empty_input);
  CHECK(category_of([&] { load_csv(dir / "absent.csv", two_covariates); }) == ErrorCategory::io);
}

TEST_CASE("write then load reproduces the data bit for bit") {
  std::mt19937_64 rng(11);
  const auto d = support::random_data(rng, ModelFamily(FamilyKind::gaussian_identity), 9, 3, 1, 5);
  const auto dir = support::scratch_dir("roundtrip");
  write_csv(dir / "a.csv", d);
  const auto back = load_csv(dir / "a.csv", {"id", "y", d.column_names(), {}});
  REQUIRE(back.n() == d.n());
  CHECK(back.stacked_y() == d.stacked_y());
  CHECK(back.stacked_X() == d.stacked_X());
  write_csv(dir / "b.csv", back);
  std::ifstream a(dir / "a.csv"), b(dir / "b.csv");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("shortest decimal formatting parses back exactly") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("standardize centers and scales with pooled moments") {
  const auto d = support::make_dataset({support::vec({1, 2}), support::vec({3})},
                                       {(Eigen::MatrixXd(2, 1) << 1, 2).finished(), Eigen::MatrixXd::Constant(1, 1, 3)});
  const auto s = standardize(d, false);
  CHECK(s.data.stacked_X().col(0).isApprox(support::vec({-1, 0, 1})));
  CHECK(std::abs(s.data.stacked_X().col(0).mean()) <= 1e-15);
  CHECK(s.transform.center(0) == 2.0);
  CHECK(s.transform.scale(0) == 1.0);
  CHECK(s.data.stacked_y() == d.stacked_y());
}

TEST_CASE("standardize is idempotent and invertible") {
  std::mt19937_64 rng(5);
  const auto d = support::random_data(rng, ModelFamily(FamilyKind::gaussian_identity), 20, 4, 2, 6);
  const auto once = standardize(d, true, {"x1"});
  const auto twice = standardize(once.data, true, {"x1"});
  CHECK((twice.data.stacked_X() - once.data.stacked_X()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((twice.data.stacked_y() - once.data.stacked_y()).cwiseAbs().maxCoeff() <= 1e-12);
  const auto back = destandardize(once.data, once.transform);
  CHECK((back.stacked_X() - d.stacked_X()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((back.stacked_y() - d.stacked_y()).cwiseAbs().maxCoeff() <= 1e-10);
  // the exempt intercept column is untouched
  CHECK(once.data.stacked_X().col(0) == d.stacked_X().col(0));
  const auto again = apply_standardization(d, once.transform);
  CHECK(again.stacked_X() == once.data.stacked_X());
}

TEST_CASE("a constant column must be exempted") {
  std::mt19937_64 rng(5);
  const auto d = support::random_data(rng, ModelFamily(FamilyKind::gaussian_identity), 6, 2, 2, 3);
  try {
    standardize(d, false);
    FAIL("expected a degenerate-column error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::degenerate_column);
  }
  CHECK_NOTHROW(standardize(d, false, {"x1"}));
}

TEST_CASE("dataset invariants are enforced") {
  CHECK_THROWS_AS(LongitudinalDataset({}, {}), Error);
  SubjectBlock bad{"a", support::vec({1.0, std::nan("")}), Eigen::MatrixXd::Ones(2, 1)};
  CHECK_THROWS_AS(LongitudinalDataset({bad}, {}), Error);
  SubjectBlock wrong{"a", support::vec({1.0}), Eigen::MatrixXd::Ones(2, 1)};
  CHECK_THROWS_AS(LongitudinalDataset({wrong}, {}), Error);
}

}  // TEST_SUITE
