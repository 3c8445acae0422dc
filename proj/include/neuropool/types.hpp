// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace neuropool {

// All numerics run in 64-bit floating point end to end.
using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using SpMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;
using Index = Eigen::Index;

// Binary file formats are little-endian on disk; we only target LE hosts.
static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

/// Malformed or inconsistent input data (files, shapes, vocabularies).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (non-finite values where finite ones are required).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Throws NumericError if any entry of `m` is NaN or infinite.
inline void check_finite(const Eigen::Ref<const Matrix>& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericError(std::string(what) + ": non-finite entry");
  }
}

}  // namespace neuropool
