#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wdro/datagen.hpp"
#include "wdro/dataset.hpp"
#include "wdro/losses.hpp"
#include "wdro/nn.hpp"
#include "wdro/train.hpp"

namespace wdro {

struct Metric {
  enum class Kind { mse, huber, check, accuracy };
  Kind kind = Kind::mse;
  double tau = 1.0;  // huber
  double rho = 0.5;  // check

  static Metric parse(const std::string& s);  // mse | huber[:TAU] | check[:RHO] | accuracy
  std::string to_string() const;
};

/// Natural test metric for a training loss: its own loss for regression,
/// accuracy for bce.
Metric metric_for(const LossKind& loss);

/// Mean metric over the dataset. Accuracy predicts sign(f) for binary data
/// and argmax for multiclass data and is reported in percent.
double evaluate(const Mlp& net, const Dataset& data, const Metric& metric);

struct ExperimentConfig {
  Task task = Task::regression;
  std::vector<LossKind> losses{LossKind::quadratic()};
  std::vector<double> shift_probs{0.1};
  std::vector<double> delta_grid{0.0, 0.05, 0.1, 0.15, 0.2, 0.25};
  int trials = 20;
  std::size_t n_train = 1000;
  std::size_t n_test = 500;
  int cv_folds = 3;
  NoiseScales noise;
  /// Architecture, optimizer and budget settings; `delta`, `loss` and `seed`
  /// are overwritten per trial.
  TrainConfig train;
  std::uint64_t seed = 0;
  std::string output_dir;
  unsigned threads = 0;

  void validate() const;
  /// Desk-scale defaults for a task; `fast` shrinks trials and sample sizes.
  static ExperimentConfig defaults(Task task, bool fast = false);
};

/// Reads and writes the JSON form; missing keys keep the values of `base`.
ExperimentConfig config_from_json(const std::string& text, const ExperimentConfig& base);
std::string config_to_json(const ExperimentConfig& c);

struct ResultRow {
  std::string loss;
  std::string test_set;
  double shift_prob = 0.0;
  double erm_mean = 0.0;
  double erm_sd = 0.0;
  double wdro_mean = 0.0;
  double wdro_sd = 0.0;
  double improvement_mean = 0.0;
  double improvement_sd = 0.0;
  int trials = 0;
};

/// One trained pair evaluated on one test set.
struct TrialRecord {
  double shift_prob = 0.0;
  int trial = 0;
  std::string loss;
  std::string test_set;
  double delta = 0.0;  // cross-validated
  double erm = 0.0;
  double wdro = 0.0;
  double improvement = 0.0;
  std::uint64_t train_hash_erm = 0;
  std::uint64_t train_hash_wdro = 0;
  std::uint64_t test_hash = 0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<TrialRecord> trials;  // sorted by (shift_prob, trial, loss, test set)
};

/// Per-trial improvement: relative loss reduction in percent for loss
/// metrics, accuracy gain in points for accuracy.
double improvement(const Metric& metric, double erm, double wdro);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single value
};
/// Two-pass mean and standard deviation.
MeanSd mean_sd(const std::vector<double>& v);

ExperimentResult run_experiment(const ExperimentConfig& config);

enum class ReportFormat { csv, json };
ReportFormat parse_report_format(const std::string& s);

/// Six significant digits; CSV has a header even when `rows` is empty.
std::string format_report(const std::vector<ResultRow>& rows, ReportFormat format);
void emit_report(const std::vector<ResultRow>& rows, ReportFormat format, const std::string& path);
std::vector<ResultRow> read_report_csv(const std::string& path);

struct MnistConfig {
  std::string dir;  // holds train-/t10k- images-idx3-ubyte and labels-idx1-ubyte
  std::size_t n_train = 3000;
  std::size_t n_test = 600;
  ShiftKind kind = ShiftKind::mnist_occlusion;
  double shift_prob = 0.1;
  /// Used when `cross_validate` is set; otherwise `delta` is trained directly.
  std::vector<double> delta_grid{0.0, 0.1, 0.2, 0.3};
  bool cross_validate = false;
  int cv_folds = 3;
  double delta = 0.1;
  TrainConfig train = default_train();
  std::uint64_t seed = 0;

  /// bce, widths (128, 64), 20 epochs, 3 inner steps, no norm cap.
  static TrainConfig default_train();
};

struct MnistResult {
  double delta = 0.0;
  double erm_clean = 0.0, erm_perturbed = 0.0;
  double wdro_clean = 0.0, wdro_perturbed = 0.0;
  std::size_t n_train = 0, n_test = 0;

  std::string to_json() const;
};

/// Trains ERM and WDRO on a perturbed training subsample and reports
/// accuracy (percent) on the clean test subsample and on a copy perturbed
/// with twice the shift probability.
MnistResult run_mnist(const MnistConfig& config);

/// JSON-lines dump of the per-trial records.
void write_trials(const std::vector<TrialRecord>& trials, const std::string& path);

}  // namespace wdro
