#include "wdro/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "wdro/error.hpp"
#include "wdro/notice.hpp"
#include "wdro/parallel.hpp"

namespace wdro {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void TrainConfig::validate() const {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw ParameterError("delta must be a finite nonnegative number");
  if (delta > 0.0 && inner_steps < 1) throw ParameterError("inner_steps must be >= 1 when delta > 0");
  if (epochs < 0) throw ParameterError("epochs must be nonnegative");
  if (batch_size < 1) throw ParameterError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
  if (!(k_lip > 0.0)) throw ParameterError("k_lip must be positive");
  if (!(covariate_share >= 0.0 && covariate_share <= 1.0)) throw ParameterError("covariate_share must lie in [0,1]");
  if (optimizer == OptimizerKind::adam &&
      !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0))
    throw ParameterError("invalid Adam hyperparameters");
  if (domain && !(domain->first <= domain->second)) throw ParameterError("empty clamp domain");
  if (order < 1) throw ParameterError("activation order must be >= 1");
  for (int w : widths)
    if (w < 1) throw ParameterError("hidden widths must be positive");
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }
const char* to_string(BudgetMode m) { return m == BudgetMode::per_sample ? "per_sample" : "batch_mean"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ParameterError("unknown optimizer '" + s + "'");
}

BudgetMode parse_budget_mode(const std::string& s) {
  if (s == "per_sample") return BudgetMode::per_sample;
  if (s == "batch_mean") return BudgetMode::batch_mean;
  throw ParameterError("unknown budget mode '" + s + "'");
}

std::string to_json_line(const EpochRecord& r) {
  std::ostringstream os;
  os << std::setprecision(17) << "{\"epoch\":" << r.epoch << ",\"clean_loss\":" << r.clean_loss
     << ",\"adv_loss\":" << r.adv_loss << ",\"kappa\":" << r.kappa << "}";
  return os.str();
}

Eigen::VectorXd lmo(const VectorXd& grad, double radius) {
  if (!(radius >= 0.0)) throw ParameterError("lmo radius must be nonnegative");
  VectorXd s(grad.size());
  for (Index i = 0; i < grad.size(); ++i) s(i) = grad(i) > 0 ? radius : (grad(i) < 0 ? -radius : 0.0);
  return s;
}

namespace {

// Linear maximisation over the product of per-sample balls, or over the
// set {sum_i ||d_i||_inf <= n r}, whose maximiser spends the whole budget on
// the sample with the largest dual (1-)norm.
MatrixXd batch_lmo(const MatrixXd& g, double radius, BudgetMode mode) {
  MatrixXd s = MatrixXd::Zero(g.rows(), g.cols());
  if (mode == BudgetMode::per_sample) {
    for (Index i = 0; i < g.rows(); ++i) s.row(i) = lmo(g.row(i).transpose(), radius).transpose();
    return s;
  }
  Index best = 0;
  const VectorXd norms = g.rowwise().lpNorm<1>();
  norms.maxCoeff(&best);
  if (norms(best) > 0.0)
    s.row(best) = lmo(g.row(best).transpose(), radius * static_cast<double>(g.rows())).transpose();
  return s;
}

void clamp_to(MatrixXd& x, const std::optional<Interval>& domain) {
  if (domain) x = x.cwiseMax(domain->first).cwiseMin(domain->second);
}

bool is_label_task(const Dataset& d, const LossKind& kind) {
  return d.task != Task::regression || kind.tag == LossKind::Tag::bce;
}

}  // namespace

Eigen::MatrixXd frank_wolfe_covariates(const Mlp& net, const Dataset& batch, const LossKind& kind, double radius,
                                       int steps, BudgetMode mode, const std::optional<Interval>& domain) {
  if (steps < 1) throw ParameterError("frank_wolfe_covariates needs at least one step");
  if (!(radius >= 0.0)) throw ParameterError("perturbation radius must be nonnegative");
  MatrixXd adv = batch.x;
  if (radius == 0.0) return adv;
  for (int k = 0; k < steps; ++k) {
    const GradientBundle g = backward(net, adv, batch.y, kind, batch.task);
    const MatrixXd s = batch_lmo(g.input_grad, radius, mode);
    const double gamma = 2.0 / (k + 2.0);
    // Convex combination with the vertex x + s keeps the iterate inside the
    // budget set around the clean covariates.
    adv = (1.0 - gamma) * adv + gamma * (batch.x + s);
    clamp_to(adv, domain);
  }
  return adv;
}

Eigen::VectorXd perturb_responses(const Mlp& net, const Dataset& batch, const LossKind& kind, double radius,
                                  BudgetMode mode) {
  if (!(radius >= 0.0)) throw ParameterError("perturbation radius must be nonnegative");
  if (is_label_task(batch, kind)) {
    if (radius > 0.0) notice_once("responses are class labels; response perturbation skipped");
    return batch.y;
  }
  if (radius == 0.0) return batch.y;
  const GradientBundle g = backward(net, batch.x, batch.y, kind, batch.task);
  const MatrixXd step = batch_lmo(g.response_grad, radius, mode);
  return batch.y + step.col(0);
}

Dataset adversarial_batch(const Mlp& net, const Dataset& batch, const TrainConfig& config) {
  Dataset adv = batch;
  if (config.delta == 0.0) return adv;
  const double rx = config.delta * config.covariate_share;
  const double ry = config.delta - rx;
  if (rx > 0.0)
    adv.x = frank_wolfe_covariates(net, batch, config.loss, rx, config.inner_steps, config.budget_mode, config.domain);
  if (ry > 0.0 && !is_label_task(batch, config.loss))
    adv.y = perturb_responses(net, adv, config.loss, ry, config.budget_mode);
  return adv;
}

Mlp initial_network(const TrainConfig& config, const Dataset& data) {
  const int out = data.task == Task::multiclass ? data.num_classes : 1;
  if (out < 1) throw ParameterError("multiclass data needs num_classes >= 1");
  Mlp net = Mlp::uniform_init(static_cast<int>(data.dim()), config.widths, out, config.order, config.truncation,
                              config.seed);
  return enforce_constraint(net, config.k_lip);
}

namespace {

class Optimizer {
 public:
  Optimizer(const TrainConfig& c, const Mlp& net)
      : c_(c), m_(MlpGrads::zeros_like(net)), v_(MlpGrads::zeros_like(net)) {}

  void step(Mlp& net, const MlpGrads& g) {
    ++t_;
    if (c_.optimizer == OptimizerKind::sgd) {
      for (std::size_t l = 0; l < net.depth(); ++l) {
        net.hidden_layer(l).weight -= c_.learning_rate * g.hidden[l].weight;
        net.hidden_layer(l).bias -= c_.learning_rate * g.hidden[l].bias;
      }
      net.output_weight() -= c_.learning_rate * g.output;
      return;
    }
    const double c1 = 1.0 - std::pow(c_.beta1, t_);
    const double c2 = 1.0 - std::pow(c_.beta2, t_);
    for (std::size_t l = 0; l < net.depth(); ++l) {
      adam(net.hidden_layer(l).weight, g.hidden[l].weight, m_.hidden[l].weight, v_.hidden[l].weight, c1, c2);
      adam(net.hidden_layer(l).bias, g.hidden[l].bias, m_.hidden[l].bias, v_.hidden[l].bias, c1, c2);
    }
    adam(net.output_weight(), g.output, m_.output, v_.output, c1, c2);
  }

 private:
  template <class P, class G>
  void adam(P& p, const G& g, G& m, G& v, double c1, double c2) const {
    m = c_.beta1 * m + (1.0 - c_.beta1) * g;
    v = c_.beta2 * v + (1.0 - c_.beta2) * g.cwiseProduct(g);
    p.array() -= c_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + c_.epsilon);
  }

  const TrainConfig& c_;
  MlpGrads m_, v_;
  int t_ = 0;
};

// Both trainers draw from this stream only for shuffling.
std::mt19937_64 shuffle_stream(std::uint64_t seed) { return std::mt19937_64(seed ^ 0x5bd1e9955bd1e995ULL); }

void shuffle(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
}

std::vector<std::size_t> batch_indices(const std::vector<std::size_t>& order, std::size_t start, std::size_t size) {
  const std::size_t end = std::min(order.size(), start + size);
  return {order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

void check_start(const TrainConfig& config, const Dataset& data) {
  config.validate();
  if (data.size() == 0) throw ParameterError("cannot train on an empty dataset");
  if (data.y.size() != data.x.rows()) throw ParameterError("response count does not match covariate rows");
}

void require_finite(double v, int epoch, std::size_t step) {
  if (!std::isfinite(v))
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
}

EpochRecord close_epoch(const Mlp& net, const Dataset& data, const LossKind& kind, int epoch, double adv_sum,
                        std::size_t steps) {
  EpochRecord r;
  r.epoch = epoch;
  r.clean_loss = mean_loss(net, data.x, data.y, kind, data.task);
  require_finite(r.clean_loss, epoch, steps);
  r.adv_loss = adv_sum / static_cast<double>(data.size());
  r.kappa = kappa(net);
  return r;
}

}  // namespace

FitResult fit(const TrainConfig& config, const Dataset& data) {
  check_start(config, data);
  FitResult res{initial_network(config, data), {}};
  Optimizer opt(config, res.net);
  std::mt19937_64 rng = shuffle_stream(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    double adv_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++step) {
      const Dataset batch = data.subset(batch_indices(order, start, bs));
      const Dataset adv = config.delta > 0.0 ? adversarial_batch(res.net, batch, config) : batch;
      const GradientBundle g = backward(res.net, adv, config.loss);
      const double batch_loss = g.losses.sum();
      require_finite(batch_loss, epoch, step);
      adv_sum += batch_loss;
      opt.step(res.net, g.params);
      res.net = enforce_constraint(res.net, config.k_lip);
    }
    res.log.push_back(close_epoch(res.net, data, config.loss, epoch, adv_sum, step));
  }
  return res;
}

FitResult fit_erm(const TrainConfig& config, const Dataset& data) {
  check_start(config, data);
  FitResult res{initial_network(config, data), {}};
  Optimizer opt(config, res.net);
  std::mt19937_64 rng = shuffle_stream(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++step) {
      const GradientBundle g = backward(res.net, data.subset(batch_indices(order, start, bs)), config.loss);
      const double batch_loss = g.losses.sum();
      require_finite(batch_loss, epoch, step);
      loss_sum += batch_loss;
      opt.step(res.net, g.params);
      res.net = enforce_constraint(res.net, config.k_lip);
    }
    res.log.push_back(close_epoch(res.net, data, config.loss, epoch, loss_sum, step));
  }
  return res;
}

double adversarial_loss(const Mlp& net, const Dataset& data, const TrainConfig& config) {
  config.validate();
  const Dataset adv = adversarial_batch(net, data, config);
  return mean_loss(net, adv.x, adv.y, config.loss, adv.task);
}

double cross_validate_delta(const TrainConfig& config, const Dataset& data, const std::vector<double>& grid,
                            int folds, unsigned threads) {
  if (grid.empty()) throw ParameterError("delta grid is empty");
  if (folds < 2) throw ParameterError("cross-validation needs at least 2 folds");
  if (static_cast<std::size_t>(folds) > data.size())
    throw ParameterError("more folds (" + std::to_string(folds) + ") than samples (" + std::to_string(data.size()) + ")");
  const std::set<double> unique(grid.begin(), grid.end());
  const std::vector<double> deltas(unique.begin(), unique.end());
  if (deltas.size() == 1) return deltas.front();

  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed ^ 0xc2b2ae3d27d4eb4fULL);
  shuffle(perm, rng);
  std::vector<std::vector<std::size_t>> train_idx(static_cast<std::size_t>(folds)), val_idx(train_idx.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t f = 0; f < train_idx.size(); ++f) (i % train_idx.size() == f ? val_idx : train_idx)[f].push_back(perm[i]);

  const std::size_t nf = train_idx.size();
  std::vector<double> val_loss(deltas.size() * nf);
  parallel_for(
      val_loss.size(),
      [&](std::size_t job) {
        const std::size_t d = job / nf, f = job % nf;
        TrainConfig c = config;
        c.delta = deltas[d];
        const Mlp net = fit(c, data.subset(train_idx[f])).net;
        const Dataset val = data.subset(val_idx[f]);
        val_loss[job] = mean_loss(net, val.x, val.y, config.loss, val.task);
      },
      threads);

  double best = std::numeric_limits<double>::infinity();
  double chosen = deltas.front();
  for (std::size_t d = 0; d < deltas.size(); ++d) {
    double sum = 0.0;
    for (std::size_t f = 0; f < nf; ++f) sum += val_loss[d * nf + f];
    const double mean = sum / static_cast<double>(nf);
    if (mean < best) {
      best = mean;
      chosen = deltas[d];
    }
  }
  return chosen;
}

}  // namespace wdro
