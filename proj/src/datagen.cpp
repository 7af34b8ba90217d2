#include "wdro/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "wdro/error.hpp"
#include "wdro/notice.hpp"
#include "wdro/rng.hpp"

namespace wdro {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(ShiftKind k) {
  switch (k) {
    case ShiftKind::synthetic_regression: return "synthetic_regression";
    case ShiftKind::synthetic_label_flip: return "synthetic_label_flip";
    case ShiftKind::mnist_occlusion: return "mnist_occlusion";
    case ShiftKind::mnist_corner: return "mnist_corner";
    case ShiftKind::mnist_noise: return "mnist_noise";
  }
  return "?";
}

ShiftKind parse_shift_kind(const std::string& s) {
  for (ShiftKind k : {ShiftKind::synthetic_regression, ShiftKind::synthetic_label_flip, ShiftKind::mnist_occlusion,
                      ShiftKind::mnist_corner, ShiftKind::mnist_noise})
    if (s == to_string(k)) return k;
  throw ParameterError("unknown shift kind '" + s + "'");
}

double f0(const VectorXd& x) {
  constexpr double pi = std::numbers::pi;
  return 3 * x(0) * x(0) - 2 * x(1) + 4 * x(2) * x(6) + 2 * std::sin(2 * pi * x(3)) + std::cos(3 * pi * x(8)) +
         std::exp(x(4) * x(7)) / 10;
}

double f_shifted(const VectorXd& x) {
  constexpr double pi = std::numbers::pi;
  return x(0) * x(0) + 2 * x(2) * x(6) + 2 * std::sin(2 * pi * x(3)) + std::cos(3 * pi * x(8)) +
         std::exp(x(4) * x(7)) / 10;
}

namespace {

void check_prob(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("shift probability must lie in [0,1]");
}

double to_label(double y) { return y > 0.0 ? 1.0 : -1.0; }

}  // namespace

Dataset gen_synthetic(std::size_t n, const ShiftSpec& shift, Task task, const NoiseScales& noise) {
  check_prob(shift.shift_prob);
  if (n == 0) throw ParameterError("sample size must be positive");
  if (task == Task::multiclass) throw ParameterError("the synthetic generator has no multiclass task");
  const bool label_flip = shift.kind == ShiftKind::synthetic_label_flip;
  if (label_flip && task != Task::binary) throw ParameterError("label-flip shift requires the binary task");
  if (!label_flip && shift.kind != ShiftKind::synthetic_regression)
    throw ParameterError(std::string("shift kind ") + to_string(shift.kind) + " does not apply to synthetic data");

  static const double offset[5] = {0.3, -0.2, 0.25, -0.15, 0.2};
  std::mt19937_64 rng(shift.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::bernoulli_distribution coin(0.5), shifted_draw(shift.shift_prob);
  std::normal_distribution<double> eps(0.0, noise.clean), e(0.0, noise.shifted);

  Dataset d;
  d.task = task;
  d.x.resize(static_cast<Index>(n), kSyntheticDim);
  d.y.resize(static_cast<Index>(n));
  d.shifted.assign(n, 0);
  VectorXd x(kSyntheticDim);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < 5; ++j) x(j) = unif(rng);
    for (int j = 5; j < kSyntheticDim; ++j) x(j) = coin(rng) ? 1.0 : 0.0;
    const bool shifted = shifted_draw(rng);
    double y;
    if (shifted && !label_flip) {
      for (int j = 0; j < 5; ++j) x(j) = std::clamp(x(j) + offset[j], 0.0, 1.0);
      if (coin(rng)) x(5) = 1.0 - x(5);
      if (coin(rng)) x(7) = 1.0 - x(7);
      y = f_shifted(x) + e(rng);
    } else {
      y = f0(x) + eps(rng);
    }
    if (task == Task::binary) {
      y = to_label(y);
      if (shifted && label_flip) y = -y;
    }
    d.x.row(static_cast<Index>(i)) = x.transpose();
    d.y(static_cast<Index>(i)) = y;
    d.shifted[i] = shifted ? 1 : 0;
  }
  return d;
}

Dataset flip_positive_labels(const Dataset& d, double fraction, std::uint64_t seed) {
  check_prob(fraction);
  if (d.task != Task::binary) throw ParameterError("label flipping needs binary labels");
  Dataset out = d;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(fraction);
  for (Index i = 0; i < out.y.size(); ++i) {
    if (out.y(i) > 0.0 && flip(rng)) {
      out.y(i) = -1.0;
      out.shifted[static_cast<std::size_t>(i)] = 1;
    }
  }
  return out;
}

TestSets make_test_sets(double base_shift_prob, ShiftKind kind, Task task, bool with_imbalanced, std::uint64_t seed,
                        std::size_t n, const NoiseScales& noise) {
  check_prob(base_shift_prob);
  if (with_imbalanced && task != Task::binary) throw ParameterError("imbalanced test set requires the binary task");
  double doubled = 2.0 * base_shift_prob;
  if (doubled > 1.0) {
    notice("perturbed test shift probability " + std::to_string(doubled) + " clamped to 1");
    doubled = 1.0;
  }
  TestSets t;
  t.standard = gen_synthetic(n, {0.0, kind, derive_seed(seed, 0)}, task, noise);
  t.perturbed = gen_synthetic(n, {doubled, kind, derive_seed(seed, 1)}, task, noise);
  if (with_imbalanced) t.imbalanced = flip_positive_labels(t.standard, 0.5, derive_seed(seed, 2));
  return t;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
  if (b.size() < off + 4) throw ParseError(path, b.size(), "truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void put32(std::ostream& os, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                         static_cast<char>(v)};
  os.write(bytes, 4);
}

}  // namespace

Dataset load_idx(const std::string& path_images, const std::string& path_labels, std::size_t subsample,
                 std::uint64_t seed) {
  const auto img = slurp(path_images);
  const auto lab = slurp(path_labels);

  const std::uint32_t im = be32(img, 0, path_images);
  if (im != kIdxImageMagic)
    throw ParseError(path_images, 0, "expected image magic 2051, found " + std::to_string(im));
  const std::size_t n = be32(img, 4, path_images);
  const std::uint32_t rows = be32(img, 8, path_images), cols = be32(img, 12, path_images);
  if (rows != kMnistSide) throw ParseError(path_images, 8, "expected 28 rows, found " + std::to_string(rows));
  if (cols != kMnistSide) throw ParseError(path_images, 12, "expected 28 columns, found " + std::to_string(cols));
  const std::size_t d = kMnistSide * kMnistSide;
  if (img.size() < 16 + n * d)
    throw ParseError(path_images, img.size(), "truncated pixel data: " + std::to_string(n) + " images declared");

  const std::uint32_t lm = be32(lab, 0, path_labels);
  if (lm != kIdxLabelMagic) throw ParseError(path_labels, 0, "expected label magic 2049, found " + std::to_string(lm));
  const std::size_t nl = be32(lab, 4, path_labels);
  if (nl != n)
    throw ParseError(path_labels, 4, "label count " + std::to_string(nl) + " does not match image count " +
                                         std::to_string(n));
  if (lab.size() < 8 + n) throw ParseError(path_labels, lab.size(), "truncated label data");

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (subsample > 0) {
    if (subsample > n)
      throw ParameterError("subsample " + std::to_string(subsample) + " exceeds " + std::to_string(n) + " samples");
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < subsample; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(subsample);
  }

  Dataset out;
  out.task = Task::multiclass;
  out.num_classes = 10;
  out.x.resize(static_cast<Index>(idx.size()), static_cast<Index>(d));
  out.y.resize(static_cast<Index>(idx.size()));
  out.shifted.assign(idx.size(), 0);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t src = idx[r];
    const unsigned label = lab[8 + src];
    if (label > 9) throw ParseError(path_labels, 8 + src, "label " + std::to_string(label) + " outside 0..9");
    out.y(static_cast<Index>(r)) = label;
    const unsigned char* px = img.data() + 16 + src * d;
    for (std::size_t j = 0; j < d; ++j) out.x(static_cast<Index>(r), static_cast<Index>(j)) = px[j] / 255.0;
  }
  return out;
}

void write_idx(const Dataset& d, const std::string& path_images, const std::string& path_labels) {
  const std::size_t dim = kMnistSide * kMnistSide;
  if (d.dim() != dim) throw ParameterError("IDX export needs 784 pixels per sample");
  std::ofstream img(path_images, std::ios::binary), lab(path_labels, std::ios::binary);
  if (!img) throw IoError("cannot write " + path_images);
  if (!lab) throw IoError("cannot write " + path_labels);
  put32(img, kIdxImageMagic);
  put32(img, static_cast<std::uint32_t>(d.size()));
  put32(img, kMnistSide);
  put32(img, kMnistSide);
  put32(lab, kIdxLabelMagic);
  put32(lab, static_cast<std::uint32_t>(d.size()));
  std::vector<char> row(dim);
  for (Index i = 0; i < d.x.rows(); ++i) {
    for (std::size_t j = 0; j < dim; ++j)
      row[j] = static_cast<char>(std::lround(std::clamp(d.x(i, static_cast<Index>(j)), 0.0, 1.0) * 255.0));
    img.write(row.data(), static_cast<std::streamsize>(dim));
    const long label = std::lround(d.y(i));
    if (label < 0 || label > 9) throw ParameterError("label outside 0..9");
    lab.put(static_cast<char>(label));
  }
  if (!img || !lab) throw IoError("write failed for " + path_images);
}

int confusion_label(int label) {
  switch (label) {
    case 3: return 5;
    case 5: return 8;
    case 8: return 3;
    case 1: return 2;
    case 2: return 7;
    case 7: return 1;
    default: return label;
  }
}

Dataset perturb_mnist(const Dataset& d, const ShiftSpec& spec) {
  check_prob(spec.shift_prob);
  if (spec.kind != ShiftKind::mnist_occlusion && spec.kind != ShiftKind::mnist_corner &&
      spec.kind != ShiftKind::mnist_noise)
    throw ParameterError(std::string("shift kind ") + to_string(spec.kind) + " is not an image perturbation");
  if (d.task != Task::multiclass || d.dim() != static_cast<std::size_t>(kMnistSide * kMnistSide))
    throw ParameterError("perturb_mnist needs 28x28 multiclass data");

  Dataset out = d;
  if (out.shifted.size() != out.size()) out.shifted.assign(out.size(), 0);
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution pick(spec.shift_prob);
  std::uniform_int_distribution<int> anchor(0, kMnistSide - kOcclusionSide);
  std::normal_distribution<double> noise(0.0, kPixelNoise);
  for (Index i = 0; i < out.x.rows(); ++i) {
    if (!pick(rng)) continue;
    auto px = [&](int r, int c) -> double& { return out.x(i, r * kMnistSide + c); };
    switch (spec.kind) {
      case ShiftKind::mnist_occlusion: {
        const int r0 = anchor(rng), c0 = anchor(rng);
        for (int r = r0; r < r0 + kOcclusionSide; ++r)
          for (int c = c0; c < c0 + kOcclusionSide; ++c) px(r, c) = 0.0;
        break;
      }
      case ShiftKind::mnist_corner:
        for (int r = 0; r < kCornerSide; ++r)
          for (int c = 0; c < kCornerSide; ++c) px(r, c) = 1.0;
        break;
      default:
        for (Index j = 0; j < out.x.cols(); ++j) out.x(i, j) = std::clamp(out.x(i, j) + noise(rng), 0.0, 1.0);
        break;
    }
    out.y(i) = confusion_label(static_cast<int>(std::lround(out.y(i))));
    out.shifted[static_cast<std::size_t>(i)] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  for (std::size_t j = 0; j < d.dim(); ++j) os << 'x' << j + 1 << ',';
  os << "y,shifted\n" << std::setprecision(17);
  for (Index i = 0; i < d.x.rows(); ++i) {
    for (Index j = 0; j < d.x.cols(); ++j) os << d.x(i, j) << ',';
    const bool s = static_cast<std::size_t>(i) < d.shifted.size() && d.shifted[static_cast<std::size_t>(i)];
    os << d.y(i) << ',' << (s ? 1 : 0) << '\n';
  }
  if (!os) throw IoError("write failed for " + path);
}

Dataset read_csv(const std::string& path, Task task, int num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw ParseError(path, 0, "missing header");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const std::size_t cols = header.size();
  if (cols < 2 || header[cols - 2] != "y" || header[cols - 1] != "shifted")
    throw ParseError(path, 0, "header must end with y,shifted");
  for (std::size_t j = 0; j + 2 < cols; ++j)
    if (header[j] != "x" + std::to_string(j + 1)) throw ParseError(path, 0, "unexpected column '" + header[j] + "'");
  const std::size_t d = cols - 2;
  offset += line.size() + 1;

  std::vector<double> values;
  std::vector<std::uint8_t> shifted;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const std::size_t raw = line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      offset += raw;
      continue;
    }
    std::vector<std::size_t> starts{0};
    for (std::size_t k = 0; k < line.size(); ++k)
      if (line[k] == ',') starts.push_back(k + 1);
    if (starts.size() != cols)
      throw ParseError(path, offset, "expected " + std::to_string(cols) + " fields, found " + std::to_string(starts.size()));
    for (std::size_t field = 0; field < cols; ++field) {
      const std::size_t pos = starts[field];
      const std::size_t end = field + 1 < cols ? starts[field + 1] - 1 : line.size();
      const std::string cell = line.substr(pos, end - pos);
      char* stop = nullptr;
      const double v = std::strtod(cell.c_str(), &stop);
      if (cell.empty() || *stop != '\0') throw ParseError(path, offset + pos, "bad number '" + cell + "'");
      if (field + 1 == cols) {
        if (v != 0.0 && v != 1.0) throw ParseError(path, offset + pos, "shifted flag must be 0 or 1");
        shifted.push_back(v == 1.0 ? 1 : 0);
      } else {
        values.push_back(v);
      }
    }
    ++rows;
    offset += raw;
  }

  Dataset out;
  out.task = task;
  out.num_classes = num_classes;
  out.x.resize(static_cast<Index>(rows), static_cast<Index>(d));
  out.y.resize(static_cast<Index>(rows));
  out.shifted = std::move(shifted);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.x(static_cast<Index>(i), static_cast<Index>(j)) = values[i * (d + 1) + j];
    out.y(static_cast<Index>(i)) = values[i * (d + 1) + d];
  }
  return out;
}

}  // namespace wdro
