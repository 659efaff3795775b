#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace driftguard {

// Row-major storage everywhere: one sample per row, contiguous in memory.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixXd = MatrixX<double>;
using MatrixXf = MatrixX<float>;
using VectorXd = VectorX<double>;

using SampleId = std::uint64_t;
using IdList = std::vector<SampleId>;

/// Base of every error raised by the library. `exit_code()` is the CLI status
/// the error maps to.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code = 3)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

// Malformed file contents.
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format error: " + w, 4) {}
};
// Well-formed but semantically invalid data (non-finite, duplicate ids, ...).
struct DataError : Error {
  explicit DataError(const std::string& w) : Error("data error: " + w, 2) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error("I/O error: " + w, 4) {}
};
struct CapacityError : Error {
  explicit CapacityError(const std::string& w) : Error("capacity error: " + w, 2) {}
};
struct SpecError : Error {
  explicit SpecError(const std::string& w) : Error("spec error: " + w, 2) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config error: " + w, 2) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error("dimension mismatch: " + w, 2) {}
};
struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error("training error: " + w, 3) {}
};
struct EmptyNegativePool : Error {
  EmptyNegativePool() : Error("contrastive loss needs at least one negative sample", 3) {}
};
struct UndefinedMetric : Error {
  explicit UndefinedMetric(const std::string& w) : Error("undefined metric: " + w, 3) {}
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace driftguard
