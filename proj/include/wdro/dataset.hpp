#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace wdro {

enum class Task { regression, binary, multiclass };

/// Covariates (one row per sample) plus responses. For `binary` the response
/// is a label in {-1, +1}; for `multiclass` it is the class index.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::uint8_t> shifted;
  Task task = Task::regression;
  int num_classes = 0;  // multiclass only

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }

  /// Rows selected by `idx`, in that order.
  Dataset subset(const std::vector<std::size_t>& idx) const;

  /// Order-sensitive content hash over every field.
  std::uint64_t hash() const;
};

}  // namespace wdro
