#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "dkgp/data.hpp"
#include "dkgp/errors.hpp"
#include "oracles.hpp"

namespace dkgp::data {
namespace {

namespace fs = std::filesystem;

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dkgp_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Csv, ParsesSmallFile) {
  const Dataset d = parse_csv("a,b,t\n1,2,3\n4,5,6\n", "tiny");
  ASSERT_EQ(d.rows(), 2u);
  ASSERT_EQ(d.dims(), 2u);
  EXPECT_EQ(d.X(0, 0), 1.0);
  EXPECT_EQ(d.X(0, 1), 2.0);
  EXPECT_EQ(d.X(1, 0), 4.0);
  EXPECT_EQ(d.X(1, 1), 5.0);
  EXPECT_EQ(d.y(0), 3.0);
  EXPECT_EQ(d.y(1), 6.0);
  EXPECT_EQ(d.name, "tiny");
}

TEST(Csv, AcceptsMissingTrailingNewlineAndCrlf) {
  const Dataset a = parse_csv("a,b,t\n1,2,3\n4,5,6");
  const Dataset b = parse_csv("a,b,t\r\n1,2,3\r\n4,5,6\r\n");
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.y, b.y);
  const Dataset c = parse_csv("x,t\n-1.5e-3,2.25\n7,8\n");
  EXPECT_EQ(c.X(0, 0), -1.5e-3);
}

TEST(Csv, NanCellNamesItsPosition) {
  const std::string msg = message_of([] { parse_csv("a,b,t\n1,2,3\n4,NaN,6\n"); });
  EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
  EXPECT_THROW(parse_csv("a,b,t\n1,2,3\n4,NaN,6\n"), ParseError);
  EXPECT_THROW(parse_csv("a,b,t\n1,x,3\n"), ParseError);
  EXPECT_THROW(parse_csv("a,b,t\n1,inf,3\n"), ParseError);
}

TEST(Csv, StructuralErrors) {
  EXPECT_THROW(parse_csv(""), DataError);
  EXPECT_NE(message_of([] { parse_csv(""); }).find("EmptyFile"), std::string::npos);
  EXPECT_THROW(parse_csv("t\n1\n2\n"), DataError);
  EXPECT_NE(message_of([] { parse_csv("t\n1\n2\n"); }).find("SchemaError"), std::string::npos);
  EXPECT_THROW(parse_csv("a,b,t\n1,2,3\n4,5\n"), DataError);
  EXPECT_NE(message_of([] { parse_csv("a,b,t\n1,2,3\n4,5\n"); }).find("RaggedRows"), std::string::npos);
  EXPECT_THROW(parse_csv("a,b,t\n"), DataError);
}

TEST(Csv, LoadFromDiskAndMissingFile) {
  const fs::path dir = scratch_dir("load");
  {
    std::ofstream(dir / "d.csv") << "a,t\n0.5,1\n0.25,2\n";
  }
  const Dataset d = load_csv(dir / "d.csv");
  EXPECT_EQ(d.rows(), 2u);
  EXPECT_EQ(d.y(1), 2.0);
  const std::string msg = message_of([&] { load_csv(dir / "missing.csv"); });
  EXPECT_NE(msg.find("missing.csv"), std::string::npos);
  EXPECT_THROW(load_csv(dir / "missing.csv"), DataError);
}

TEST(Dataset, SelectKeepsOrder) {
  const Dataset d = parse_csv("a,t\n1,10\n2,20\n3,30\n");
  const Dataset s = d.select({2, 0});
  EXPECT_EQ(s.X(0, 0), 3.0);
  EXPECT_EQ(s.y(1), 10.0);
}

TEST(Ecdf, HandExample) {
  Matrix X(3, 1);
  X << 3, 1, 2;
  const Matrix T = ecdf_transform(ecdf_fit(X), X);
  EXPECT_NEAR(T(0, 0), 2.5 / 3.0, 1e-15);
  EXPECT_NEAR(T(1, 0), 0.5 / 3.0, 1e-15);
  EXPECT_NEAR(T(2, 0), 1.5 / 3.0, 1e-15);
}

TEST(Ecdf, ClampingAndInterpolation) {
  const std::vector<double> sorted{1.0, 2.0, 4.0, 8.0};
  EXPECT_DOUBLE_EQ(ecdf_value(sorted, -100.0), 0.5 / 4);
  EXPECT_DOUBLE_EQ(ecdf_value(sorted, 100.0), 3.5 / 4);
  EXPECT_DOUBLE_EQ(ecdf_value(sorted, 3.0), 0.5 * (1.5 / 4 + 2.5 / 4));
  EXPECT_DOUBLE_EQ(ecdf_value(sorted, 6.0), 3.0 / 4);
  EXPECT_DOUBLE_EQ(ecdf_value(sorted, 5.0), 0.75 * 2.5 / 4 + 0.25 * 3.5 / 4);
}

TEST(Ecdf, TiesAverageAndConstantColumn) {
  EXPECT_DOUBLE_EQ(ecdf_value({5.0, 5.0, 5.0, 5.0}, 5.0), 0.5);
  EXPECT_DOUBLE_EQ(ecdf_value({5.0, 5.0, 5.0, 5.0}, 7.0), 3.5 / 4);
  // Positions 2 and 3 of 4: average of 1.5/4 and 2.5/4.
  EXPECT_DOUBLE_EQ(ecdf_value({1.0, 2.0, 2.0, 3.0}, 2.0), 0.5);
}

// KS distance of a sample against U(0, 1), computed from its order statistics.
double ks_uniform(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    d = std::max(d, std::max((static_cast<double>(i) + 1) / n - v[i], v[i] - static_cast<double>(i) / n));
  }
  return d;
}

TEST(Ecdf, TrainingMarginalsAreUniform) {
  for (std::size_t n : {100, 1000}) {
    std::mt19937_64 rng(n);
    std::lognormal_distribution<double> skewed(0.0, 1.5);
    Matrix X(static_cast<Eigen::Index>(n), 3);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      X(i, 0) = skewed(rng);
      X(i, 1) = std::floor(10 * skewed(rng));  // heavy ties
      X(i, 2) = -skewed(rng);
    }
    const Matrix T = ecdf_transform(ecdf_fit(X), X);
    for (Eigen::Index c : {0, 2}) {
      std::vector<double> col(T.col(c).data(), T.col(c).data() + n);
      EXPECT_LE(ks_uniform(col), 1.63 / std::sqrt(static_cast<double>(n))) << n << " col " << c;
    }
  }
}

TEST(Ecdf, MonotoneAndBoundedOnProbes) {
  const Matrix train = oracle::random_matrix(250, 2, 3, -4, 9);
  const EcdfMap map = ecdf_fit(train);
  Matrix probes = oracle::random_matrix(10000, 2, 4, -10, 15);
  const Matrix T = ecdf_transform(map, probes);
  const double lo = 0.5 / 250, hi = 1 - 0.5 / 250;
  EXPECT_GE(T.minCoeff(), lo);
  EXPECT_LE(T.maxCoeff(), hi);
  for (Eigen::Index c = 0; c < 2; ++c) {
    std::vector<std::pair<double, double>> pairs;
    for (Eigen::Index i = 0; i < probes.rows(); ++i) pairs.emplace_back(probes(i, c), T(i, c));
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t i = 1; i < pairs.size(); ++i) {
      ASSERT_LE(pairs[i - 1].second, pairs[i].second);
    }
  }
}

TEST(Ecdf, ShapeMismatch) {
  const EcdfMap map = ecdf_fit(Matrix::Ones(5, 2));
  EXPECT_THROW(ecdf_transform(map, Matrix::Ones(3, 3)), ShapeError);
}

TEST(Partition, FiveNinetyTenSplits) {
  const SplitPlan plan = partition(100, 5, 0.9, 0);
  ASSERT_EQ(plan.splits.size(), 5u);
  for (const Split& s : plan.splits) {
    EXPECT_EQ(s.train.size(), 90u);
    EXPECT_EQ(s.test.size(), 10u);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all.size(), 100u);
    EXPECT_EQ(*all.rbegin(), 99u);
  }
  EXPECT_NE(plan.splits[0].test, plan.splits[1].test);
}

TEST(Partition, DeterministicAndSeedOffsets) {
  const SplitPlan a = partition(57, 3, 0.8, 11);
  const SplitPlan b = partition(57, 3, 0.8, 11);
  const SplitPlan c = partition(57, 1, 0.8, 12);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.splits[i].train, b.splits[i].train);
    EXPECT_EQ(a.splits[i].test, b.splits[i].test);
  }
  // Split i uses seed + i, so split 1 of seed 11 equals split 0 of seed 12.
  EXPECT_EQ(a.splits[1].test, c.splits[0].test);
  EXPECT_EQ(a.splits[0].test.size(), 57u - 46u);
}

TEST(Partition, Errors) {
  EXPECT_THROW(partition(10, 1, 0.99, 0), DataError);
  EXPECT_NE(message_of([] { partition(10, 1, 0.99, 0); }).find("TooFewRows"), std::string::npos);
  EXPECT_THROW(partition(10, 0, 0.5, 0), InvalidArgument);
  EXPECT_THROW(partition(10, 1, 1.0, 0), InvalidArgument);
  EXPECT_THROW(partition(10, 1, 0.0, 0), InvalidArgument);
}

TEST(Rmse, ClosedForms) {
  Vector a(3), b(3);
  a << 1, 2, 3;
  EXPECT_EQ(rmse(a, a), 0.0);
  b = a.array() + 1.0;
  EXPECT_DOUBLE_EQ(rmse(a, b), 1.0);
  Vector p(2), q(2);
  p << 1, 2;
  q << 3, 2;
  EXPECT_DOUBLE_EQ(rmse(p, q), std::sqrt(2.0));
  EXPECT_THROW(rmse(a, p), ShapeError);
  EXPECT_NE(message_of([&] { rmse(a, p); }).find("DimensionMismatch"), std::string::npos);
}

TEST(Registry, ResolvesRelativeToManifest) {
  const fs::path dir = scratch_dir("registry");
  fs::create_directories(dir / "sub");
  {
    std::ofstream(dir / "sub" / "m.json") << R"({"solar": "solar.csv", "abs": "/tmp/x.csv"})";
  }
  const Registry r = load_registry(dir / "sub" / "m.json");
  EXPECT_EQ(r.at("solar"), dir / "sub" / "solar.csv");
  EXPECT_EQ(r.at("abs"), fs::path("/tmp/x.csv"));
}

}  // namespace
}  // namespace dkgp::data
