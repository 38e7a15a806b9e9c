#include "dkgp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dkgp::data {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, std::size_t col) {
  const std::string s = trim(raw);
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (!s.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (s.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("cannot parse '" + s + "' as a decimal number", row, col);
  }
  if (!std::isfinite(value)) {
    throw ParseError("non-finite value '" + s + "'", row, col);
  }
  return value;
}

}  // namespace

Dataset Dataset::select(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.name = name;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= this->rows()) throw ShapeError("Dataset::select: row index out of range");
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
    out.y(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

void Dataset::validate() const {
  if (X.rows() != y.size()) throw ShapeError("Dataset: X and y row counts differ");
  if (X.rows() < 2) throw DataError("Dataset '" + name + "': needs at least 2 rows");
  if (X.cols() < 1) throw DataError("Dataset '" + name + "': no feature columns");
  if (!X.allFinite() || !y.allFinite()) throw DataError("Dataset '" + name + "': non-finite values");
}

Dataset parse_csv(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError("EmptyFile: '" + name + "' has no header row");
  if (header.size() < 2) {
    throw DataError("SchemaError: '" + name + "' has a single column and no features");
  }
  const std::size_t width = header.size();
  std::vector<double> values;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != width) {
      throw ParseError("RaggedRows: expected " + std::to_string(width) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no, std::min(cells.size(), width) + 1);
    }
    for (std::size_t c = 0; c < width; ++c) values.push_back(parse_cell(cells[c], line_no, c + 1));
    ++n;
  }
  if (n == 0) throw DataError("EmptyFile: '" + name + "' has no data rows");
  Dataset ds;
  ds.name = name;
  ds.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width - 1));
  ds.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c + 1 < width; ++c) {
      ds.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = values[i * width + c];
    }
    ds.y(static_cast<Eigen::Index>(i)) = values[i * width + width - 1];
  }
  ds.validate();
  return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open dataset file " + path.string());
  std::ostringstream buf;
  buf << file.rdbuf();
  return parse_csv(buf.str(), path.stem().string());
}

EcdfMap ecdf_fit(const Matrix& X_train) {
  if (X_train.rows() < 1) throw ShapeError("ecdf_fit: no rows");
  EcdfMap map;
  for (Eigen::Index c = 0; c < X_train.cols(); ++c) {
    std::vector<double> col(X_train.col(c).data(), X_train.col(c).data() + X_train.rows());
    std::sort(col.begin(), col.end());
    map.columns.push_back(std::move(col));
  }
  return map;
}

double ecdf_value(const std::vector<double>& sorted, double x) {
  const auto n = static_cast<double>(sorted.size());
  const double lo = 0.5 / n;
  const double hi = 1.0 - 0.5 / n;
  if (x < sorted.front()) return lo;
  if (x > sorted.back()) return hi;
  // Tie-averaged plotting position of a value present in the training column.
  auto position = [&](std::size_t idx) {
    const double v = sorted[idx];
    const auto first = std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin();
    const auto last = std::upper_bound(sorted.begin(), sorted.end(), v) - sorted.begin();
    const double rank = 0.5 * static_cast<double>(first + 1 + last);  // mean of first+1 .. last
    return (rank - 0.5) / n;
  };
  const auto up = std::lower_bound(sorted.begin(), sorted.end(), x);
  const auto j = static_cast<std::size_t>(up - sorted.begin());
  if (*up == x) return std::clamp(position(j), lo, hi);
  const std::size_t i = j - 1;
  const double p0 = position(i);
  const double p1 = position(j);
  const double t = (x - sorted[i]) / (sorted[j] - sorted[i]);
  return std::clamp(p0 + t * (p1 - p0), lo, hi);
}

Matrix ecdf_transform(const EcdfMap& map, const Matrix& X) {
  if (static_cast<std::size_t>(X.cols()) != map.dims()) {
    throw ShapeError("ecdf_transform: " + std::to_string(X.cols()) + " columns, map has " +
                     std::to_string(map.dims()));
  }
  Matrix out(X.rows(), X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const auto& sorted = map.columns[static_cast<std::size_t>(c)];
    for (Eigen::Index r = 0; r < X.rows(); ++r) out(r, c) = ecdf_value(sorted, X(r, c));
  }
  return out;
}

SplitPlan partition(std::size_t n, std::size_t k, double train_fraction, std::uint64_t seed) {
  if (k < 1) throw InvalidArgument("partition: k must be at least 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument("partition: train fraction must lie in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train >= n) {
    throw DataError("TooFewRows: " + std::to_string(n) + " rows leave an empty test set at fraction " +
                    std::to_string(train_fraction));
  }
  if (n_train == 0) throw DataError("TooFewRows: empty training set");
  SplitPlan plan{k, train_fraction, seed, {}};
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed + i);
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's shuffle implementation.
    for (std::size_t a = n; a-- > 1;) {
      const std::size_t b = static_cast<std::size_t>(rng() % (a + 1));
      std::swap(idx[a], idx[b]);
    }
    Split s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    plan.splits.push_back(std::move(s));
  }
  return plan;
}

double rmse(const Vector& predicted, const Vector& actual) {
  if (predicted.size() != actual.size() || predicted.size() < 1) {
    throw ShapeError("rmse: DimensionMismatch (" + std::to_string(predicted.size()) + " vs " +
                     std::to_string(actual.size()) + ")");
  }
  return std::sqrt((predicted - actual).squaredNorm() / static_cast<double>(predicted.size()));
}

Registry load_registry(const std::filesystem::path& manifest) {
  std::ifstream file(manifest);
  if (!file) throw DataError("cannot open dataset registry " + manifest.string());
  nlohmann::json j;
  try {
    file >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset registry " + manifest.string() + ": " + e.what());
  }
  if (!j.is_object()) throw DataError("dataset registry must be a JSON object");
  Registry reg;
  for (const auto& [name, value] : j.items()) {
    if (!value.is_string()) throw DataError("dataset registry entry '" + name + "' is not a path");
    std::filesystem::path p = value.get<std::string>();
    if (p.is_relative()) p = manifest.parent_path() / p;
    reg.emplace(name, p);
  }
  return reg;
}

}  // namespace dkgp::data
