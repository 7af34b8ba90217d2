#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>

#include "wdro/dataset.hpp"

namespace wdro {

enum class ShiftKind { synthetic_regression, synthetic_label_flip, mnist_occlusion, mnist_corner, mnist_noise };

const char* to_string(ShiftKind k);
ShiftKind parse_shift_kind(const std::string& s);

struct ShiftSpec {
  double shift_prob = 0.0;
  ShiftKind kind = ShiftKind::synthetic_regression;
  std::uint64_t seed = 0;
};

/// Standard deviations of the additive response noise.
struct NoiseScales {
  double clean = 0.5;
  double shifted = 0.6;
};

constexpr int kSyntheticDim = 10;

/// Regression function of the clean population; x has 10 entries.
double f0(const Eigen::VectorXd& x);
/// Regression function of the shifted population.
double f_shifted(const Eigen::VectorXd& x);

/// Synthetic sample of size n. x1..x5 ~ U(0,1), x6..x10 ~ Bernoulli(1/2).
///
/// A sample is shifted with probability `shift.shift_prob`. Under
/// `synthetic_regression` a shifted sample has its continuous block moved by a
/// fixed vector (then clipped), x6 and x8 flipped independently with
/// probability 1/2 and its response drawn from f_shifted. Under
/// `synthetic_label_flip` (binary task only) a shifted sample keeps the clean
/// covariates and its label is negated. Binary labels are sign(Y) in {-1, +1}
/// with 0 mapped to -1.
Dataset gen_synthetic(std::size_t n, const ShiftSpec& shift, Task task, const NoiseScales& noise = {});

struct TestSets {
  Dataset standard;
  Dataset perturbed;
  std::optional<Dataset> imbalanced;
};

/// Standard (no shift), perturbed (twice `base_shift_prob`, clamped to 1) and
/// optionally imbalanced (standard with each +1 label flipped w.p. 1/2) sets.
TestSets make_test_sets(double base_shift_prob, ShiftKind kind, Task task, bool with_imbalanced,
                        std::uint64_t seed, std::size_t n = 500, const NoiseScales& noise = {});

/// Flips each +1 label to -1 independently with probability `fraction` and
/// marks the flipped samples as shifted.
Dataset flip_positive_labels(const Dataset& d, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// MNIST

constexpr std::uint32_t kIdxImageMagic = 2051;
constexpr std::uint32_t kIdxLabelMagic = 2049;
constexpr int kMnistSide = 28;
constexpr int kOcclusionSide = 12;
constexpr int kCornerSide = 6;
constexpr double kPixelNoise = 0.3;

/// Reads an IDX image/label pair into a 10-class dataset with pixels scaled
/// to [0,1]. `subsample` > 0 keeps that many samples drawn without
/// replacement (in draw order); 0 keeps everything.
Dataset load_idx(const std::string& path_images, const std::string& path_labels, std::size_t subsample = 0,
                 std::uint64_t seed = 0);

/// Writes a 10-class, 784-dimensional dataset as an IDX pair; pixels are
/// rounded to bytes.
void write_idx(const Dataset& d, const std::string& path_images, const std::string& path_labels);

/// Confusion map 3->5->8->3 and 1->2->7->1; identity elsewhere.
int confusion_label(int label);

/// Applies the image corruption of `spec.kind` to each sample selected with
/// probability `spec.shift_prob`, together with the confusion label map.
Dataset perturb_mnist(const Dataset& d, const ShiftSpec& spec);

// ---------------------------------------------------------------------------
// CSV exchange: header x1..xd,y,shifted

void write_csv(const Dataset& d, const std::string& path);
Dataset read_csv(const std::string& path, Task task = Task::regression, int num_classes = 0);

}  // namespace wdro
