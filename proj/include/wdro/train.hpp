#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wdro/dataset.hpp"
#include "wdro/losses.hpp"
#include "wdro/nn.hpp"

namespace wdro {

enum class OptimizerKind { sgd, adam };

/// How the perturbation budget is measured over a mini-batch.
///   per_sample: every sample moves at most r in the inf-norm.
///   batch_mean: the mean of the per-sample inf-norm moves is at most r.
enum class BudgetMode { per_sample, batch_mean };

using Interval = std::pair<double, double>;

struct TrainConfig {
  double delta = 0.0;
  int inner_steps = 5;
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  double k_lip = 10.0;
  BudgetMode budget_mode = BudgetMode::per_sample;
  /// Fraction of delta spent on covariates; the rest goes to responses.
  double covariate_share = 0.5;
  /// Box the perturbed covariates are clamped to; nullopt disables clamping.
  std::optional<Interval> domain = Interval{0.0, 1.0};

  LossKind loss = LossKind::quadratic();
  std::vector<int> widths{32, 16, 8};
  int order = 1;
  std::optional<double> truncation;

  /// Throws ParameterError on an inconsistent configuration.
  void validate() const;
};

const char* to_string(OptimizerKind k);
const char* to_string(BudgetMode m);
OptimizerKind parse_optimizer(const std::string& s);
BudgetMode parse_budget_mode(const std::string& s);

struct EpochRecord {
  int epoch = 0;
  double clean_loss = 0.0;  // mean loss over the full training set after the epoch
  double adv_loss = 0.0;    // mean adversarial mini-batch loss during the epoch
  double kappa = 0.0;
};

struct FitResult {
  Mlp net;
  std::vector<EpochRecord> log;
};

/// JSON-lines form of one training-log record.
std::string to_json_line(const EpochRecord& r);

/// Maximiser of <grad, v> over the inf-norm ball of the given radius.
Eigen::VectorXd lmo(const Eigen::VectorXd& grad, double radius);

/// Frank-Wolfe ascent on the mean batch loss over covariate perturbations of
/// size `radius`. Returns the perturbed covariates (one row per sample).
Eigen::MatrixXd frank_wolfe_covariates(const Mlp& net, const Dataset& batch, const LossKind& kind,
                                       double radius, int steps,
                                       BudgetMode mode = BudgetMode::per_sample,
                                       const std::optional<Interval>& domain = std::nullopt);

/// One signed step on the responses. Labels (binary, multiclass) are returned
/// unchanged.
Eigen::VectorXd perturb_responses(const Mlp& net, const Dataset& batch, const LossKind& kind,
                                  double radius, BudgetMode mode = BudgetMode::per_sample);

/// Covariates and responses after the full inner maximisation with the
/// configured budget split.
Dataset adversarial_batch(const Mlp& net, const Dataset& batch, const TrainConfig& config);

/// The network `fit` starts from.
Mlp initial_network(const TrainConfig& config, const Dataset& data);

/// Mini-batch adversarial training. With delta = 0 every inner step is skipped.
FitResult fit(const TrainConfig& config, const Dataset& data);
/// Plain empirical risk minimisation with the same initialisation, batching
/// and optimizer as `fit`.
FitResult fit_erm(const TrainConfig& config, const Dataset& data);

/// Mean loss of `net` on the adversarially perturbed copy of `data`.
double adversarial_loss(const Mlp& net, const Dataset& data, const TrainConfig& config);

/// k-fold selection of delta by mean validation loss; ties go to the smaller
/// delta. Folds are trained in parallel on `threads` workers (0 = all cores).
double cross_validate_delta(const TrainConfig& config, const Dataset& data,
                            const std::vector<double>& grid, int folds, unsigned threads = 0);

}  // namespace wdro
