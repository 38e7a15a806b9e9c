#pragma once

#include <string>
#include <vector>

#include "dkgp/linalg.hpp"

namespace dkgp {

// A named, contiguous block of trainable values (column-major when it is a
// matrix). Slots point into the owning parameter struct and are invalidated
// when that struct is resized or moved.
struct ParamSlot {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Map<Matrix> map() const { return {data, rows, cols}; }
  Eigen::Index size() const { return rows * cols; }
};

inline ParamSlot slot(std::string name, Matrix& m) {
  return {std::move(name), m.data(), m.rows(), m.cols()};
}
inline ParamSlot slot(std::string name, Vector& v) {
  return {std::move(name), v.data(), v.size(), 1};
}
inline ParamSlot slot(std::string name, double& x) { return {std::move(name), &x, 1, 1}; }

}  // namespace dkgp
