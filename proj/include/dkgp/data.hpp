#pragma once

// Dataset ingestion, ECDF input normalization, train/test partitions and RMSE.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dkgp/linalg.hpp"

namespace dkgp::data {

struct Dataset {
  std::string name;
  Matrix X;  // n x d
  Vector y;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(X.cols()); }
  // Subset of rows, in the given order.
  Dataset select(const std::vector<std::size_t>& rows) const;
  void validate() const;
};

// Header row, comma separated, last column is the target. Row and column
// numbers in errors are 1-based and count the header as row 1.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(const std::string& text, const std::string& name = "");

// Sorted training values per input column.
struct EcdfMap {
  std::vector<std::vector<double>> columns;

  std::size_t dims() const { return columns.size(); }
};

EcdfMap ecdf_fit(const Matrix& X_train);
// (r - 0.5)/n plotting positions, tie-averaged, linear between training
// values and clamped to [0.5/n, 1 - 0.5/n].
Matrix ecdf_transform(const EcdfMap& map, const Matrix& X);
double ecdf_value(const std::vector<double>& sorted, double x);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct SplitPlan {
  std::size_t k = 1;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  std::vector<Split> splits;
};

// k shuffles seeded seed + i, each cut at round(f * n).
SplitPlan partition(std::size_t n, std::size_t k, double train_fraction, std::uint64_t seed);

double rmse(const Vector& predicted, const Vector& actual);

// Dataset registry: JSON object mapping name -> CSV path. Relative paths are
// resolved against the manifest's directory.
using Registry = std::map<std::string, std::filesystem::path>;
Registry load_registry(const std::filesystem::path& manifest);

}  // namespace dkgp::data
