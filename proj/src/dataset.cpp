#include "wdro/dataset.hpp"

#include <cstring>

#include "wdro/error.hpp"

namespace wdro {

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset out;
  out.task = task;
  out.num_classes = num_classes;
  out.x.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(idx.size()));
  out.shifted.resize(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= size()) throw ParameterError("subset index out of range");
    const auto i = static_cast<Eigen::Index>(idx[r]);
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(i);
    out.y(static_cast<Eigen::Index>(r)) = y(i);
    out.shifted[r] = shifted.empty() ? 0 : shifted[idx[r]];
  }
  return out;
}

namespace {

// FNV-1a over raw bytes.
struct Fnv {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  }
  void value(double v) { bytes(&v, sizeof v); }
};

}  // namespace

std::uint64_t Dataset::hash() const {
  Fnv f;
  const auto rows = x.rows(), cols = x.cols();
  f.bytes(&rows, sizeof rows);
  f.bytes(&cols, sizeof cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) f.value(x(i, j));
  for (Eigen::Index i = 0; i < y.size(); ++i) f.value(y(i));
  f.bytes(shifted.data(), shifted.size());
  const int t = static_cast<int>(task);
  f.bytes(&t, sizeof t);
  f.bytes(&num_classes, sizeof num_classes);
  return f.h;
}

}  // namespace wdro
