#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <set>

#include "doctest.h"
#include "gbdtbp/datasets.hpp"
#include "gbdtbp/error.hpp"
#include "gbdtbp/metrics.hpp"

using namespace gbdtbp;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("gen_circle: radii, balance and separability") {
  const Dataset d = gen_circle(2000, 11);
  REQUIRE(d.x.rows() == 2000);
  REQUIRE(d.x.cols() == 2);
  REQUIRE(d.y.cols() == 1);
  std::size_t inner = 0, correct = 0;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    const double norm = std::hypot(d.x(r, 0), d.x(r, 1));
    if (d.y(r, 0) == 1.0) {
      ++inner;
      CHECK(norm >= 0.4 - 1e-12);
      CHECK(norm <= 0.6 + 1e-12);
    } else {
      CHECK(d.y(r, 0) == 0.0);
      CHECK(norm >= 0.8 - 1e-12);
      CHECK(norm <= 1.0 + 1e-12);
    }
    correct += (norm < 0.7) == (d.y(r, 0) == 1.0);
  }
  CHECK(inner == 1000);
  CHECK(correct == 2000);
  CHECK(d.task == Task::Classification);
  CHECK_THROWS_AS(gen_circle(7, 1), Error);
}

TEST_CASE("gen_curve: shape and noise properties") {
  const Dataset d = gen_curve(5000, 3);
  REQUIRE(d.x.cols() == 3);
  CHECK(d.x == d.y);
  std::size_t near = 0;
  double ring = 0.0;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    CHECK(d.x(r, 0) > -1.0);
    CHECK(d.x(r, 0) < 1.0);
    near += std::abs(d.x(r, 1) - std::sin(d.x(r, 0))) <= 0.25;
    ring += d.x(r, 1) * d.x(r, 1) + d.x(r, 2) * d.x(r, 2);
  }
  CHECK(static_cast<double>(near) / 5000 > 0.999);
  ring /= 5000;
  CHECK(ring >= 0.95);
  CHECK(ring <= 1.1);
}

TEST_CASE("gen_random_nn: determinism and input range") {
  const Dataset a = gen_random_nn(300, 5);
  const Dataset b = gen_random_nn(300, 5);
  const Dataset c = gen_random_nn(300, 6);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.x != c.x);
  CHECK(a.x.cols() == 32);
  CHECK(a.y.cols() == 1);
  for (double v : a.x.data()) {
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
  // The target varies with the input.
  double lo = INFINITY, hi = -INFINITY;
  for (double v : a.y.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi > lo);
  CHECK(gen_circle(100, 1).x != gen_circle(100, 2).x);
  CHECK(gen_curve(100, 1).x == gen_curve(100, 1).x);
}

TEST_CASE("parse_csv: numeric passthrough") {
  const Dataset d = parse_csv("a,y\n1.5,2\n-3,4e-1\n", {"y"}, {}, Task::Regression);
  CHECK(d.x == Matrix::from_rows({{1.5}, {-3}}));
  CHECK(d.y == Matrix::from_rows({{2}, {0.4}}));
  CHECK(d.feature_names == std::vector<std::string>{"a"});
}

TEST_CASE("parse_csv: categorical one-hot in lexicographic order") {
  const Dataset d =
      parse_csv("color,x,label\nred,1,b\nblue,2,a\ngreen,3,c\nred,4,a\n", {"label"}, {"color"},
                Task::Classification);
  REQUIRE(d.x.cols() == 4);
  CHECK(d.feature_names == std::vector<std::string>{"color=blue", "color=green", "color=red", "x"});
  for (std::size_t r = 0; r < 4; ++r) CHECK(d.x(r, 0) + d.x(r, 1) + d.x(r, 2) == 1.0);
  CHECK(d.x(0, 2) == 1.0);
  CHECK(d.x(1, 0) == 1.0);
  REQUIRE(d.y.cols() == 3);
  CHECK(d.y == Matrix::from_rows({{0, 1, 0}, {1, 0, 0}, {0, 0, 1}, {1, 0, 0}}));
  CHECK(d.encoding.classes == std::vector<std::string>{"a", "b", "c"});

  // A category unseen at fit time encodes as all zeros.
  const Dataset e = parse_csv("color,x,label\npurple,5,a\nblue,6,c\n", d.encoding);
  CHECK(e.x(0, 0) == 0.0);
  CHECK(e.x(0, 1) == 0.0);
  CHECK(e.x(0, 2) == 0.0);
  CHECK(e.x(0, 3) == 5.0);
  CHECK(e.x(1, 0) == 1.0);
}

TEST_CASE("parse_csv: two classes stay a single indicator column") {
  const Dataset d = parse_csv("x,t\n1,no\n2,yes\n3,no\n", {"t"}, {}, Task::Classification);
  REQUIRE(d.y.cols() == 1);
  CHECK(d.y == Matrix::from_rows({{0}, {1}, {0}}));
}

TEST_CASE("parse_csv: errors") {
  CHECK(code_of([] { parse_csv("a,y\n1,2\nfoo,3\n", {"y"}, {}, Task::Regression); }) ==
        ErrorCode::ParseError);
  CHECK(code_of([] { parse_csv("a,y\n1,2\n3\n", {"y"}, {}, Task::Regression); }) ==
        ErrorCode::ParseError);
  CHECK(code_of([] { parse_csv("a,y\n1,\n", {"y"}, {}, Task::Regression); }) ==
        ErrorCode::ParseError);
  CHECK(code_of([] { parse_csv("a,y\n1,2\n", {"z"}, {}, Task::Regression); }) !=
        ErrorCode::SingularSystem);
  CHECK(code_of([] { parse_csv("", {"y"}, {}, Task::Regression); }) != ErrorCode::SingularSystem);
  try {
    parse_csv("a,y\n1,2\n3,x\n", {"y"}, {}, Task::Regression);
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("'y'") != std::string::npos);
  }
}

TEST_CASE("write_csv and load_csv round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "gbdtbp_test_datasets";
  std::filesystem::create_directories(dir);
  const auto path = dir / "curve.csv";
  const Dataset d = gen_curve(50, 2);
  Dataset regression = d;
  write_csv(path, regression);
  const Dataset back = load_csv(path, regression.target_names, {}, Task::Regression);
  CHECK(back.x == d.x);
  CHECK(back.y == d.y);

  const auto cpath = dir / "circle.csv";
  const Dataset c = gen_circle(40, 1);
  write_csv(cpath, c);
  const Dataset cback = load_csv(cpath, c.encoding.target_columns, {}, Task::Classification);
  CHECK(cback.x == c.x);
  CHECK(cback.y == c.y);
  CHECK(code_of([&] { load_csv(dir / "missing.csv", {"y"}, {}, Task::Regression); }) ==
        ErrorCode::IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("kfold: sizes, partition and errors") {
  const FoldPlan ten = kfold(10, 10, 1);
  for (std::size_t s : ten.fold_sizes()) CHECK(s == 1);

  const FoldPlan plan = kfold(1484, 10, 3);
  for (std::size_t s : plan.fold_sizes()) CHECK((s == 148 || s == 149));
  std::multiset<std::size_t> seen;
  for (std::size_t f = 0; f < 10; ++f) {
    const auto test = plan.test_rows(f);
    const auto train = plan.train_rows(f);
    CHECK(test.size() + train.size() == 1484);
    seen.insert(test.begin(), test.end());
  }
  CHECK(seen.size() == 1484);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 1484);

  for (std::size_t n : {1u, 5u, 17u, 100u})
    for (std::size_t k = 1; k <= n && k <= 12; ++k) {
      const FoldPlan p = kfold(n, k, n + k);
      std::size_t total = 0;
      for (std::size_t s : p.fold_sizes()) total += s;
      CHECK(total == n);
    }
  CHECK(kfold(100, 10, 1).assignments == kfold(100, 10, 1).assignments);
  CHECK(kfold(100, 10, 1).assignments != kfold(100, 10, 2).assignments);
  CHECK(code_of([] { kfold(5, 6, 1); }) == ErrorCode::InvalidK);
  CHECK(code_of([] { kfold(5, 0, 1); }) == ErrorCode::InvalidK);
}

TEST_CASE("rmse and accuracy") {
  const Matrix y = Matrix::from_rows({{0, 1}, {1, 0}});
  CHECK(rmse(y, y) == 0.0);
  CHECK(accuracy(y, y) == 1.0);
  CHECK(rmse(Matrix::from_rows({{0, 2}}), Matrix::from_rows({{0, 0}})) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(accuracy(Matrix::from_rows({{0.4, 0.6}}), Matrix::from_rows({{0, 1}})) == 1.0);
  // Ties go to the lowest index.
  CHECK(accuracy(Matrix::from_rows({{0.5, 0.5}}), Matrix::from_rows({{1, 0}})) == 1.0);
  CHECK(accuracy(Matrix::from_rows({{0.7}, {0.2}, {0.6}}), Matrix::from_rows({{1}, {0}, {0}})) ==
        doctest::Approx(2.0 / 3));
  CHECK(accuracy(Matrix::from_rows({{0.2}}), Matrix::from_rows({{1}}), 0.0) == 1.0);
  CHECK(code_of([] { rmse(Matrix(2, 1), Matrix(1, 2)); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([] { accuracy(Matrix(2, 1), Matrix(3, 1)); }) == ErrorCode::DimensionMismatch);
}
