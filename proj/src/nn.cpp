#include "wdro/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "wdro/error.hpp"

namespace wdro {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double repu(double x, int m) {
  if (x <= 0.0) return 0.0;
  double r = x;
  for (int i = 1; i < m; ++i) r *= x;
  return r;
}

double repu_prime(double x, int m) {
  if (x <= 0.0) return 0.0;
  if (m == 1) return 1.0;
  return static_cast<double>(m) * repu(x, m - 1);
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::vector<DenseLayer> hidden, MatrixXd output, int order,
         std::optional<double> truncation)
    : hidden_(std::move(hidden)), output_(std::move(output)), order_(order),
      truncation_(truncation) {
  validate();
}

void Mlp::validate() const {
  if (order_ < 1) throw ParameterError("activation order must be >= 1");
  if (truncation_ && !(*truncation_ > 0.0)) throw ParameterError("truncation level must be positive");
  if (output_.rows() < 1 || output_.cols() < 1) throw DimensionError(hidden_.size(), "empty output layer");
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    const auto& layer = hidden_[l];
    if (layer.weight.rows() < 1 || layer.weight.cols() < 1) throw DimensionError(l, "empty weight matrix");
    if (layer.bias.size() != layer.weight.rows()) {
      throw DimensionError(l, "bias has " + std::to_string(layer.bias.size()) + " entries, weight has " +
                                  std::to_string(layer.weight.rows()) + " rows");
    }
    if (l > 0 && layer.weight.cols() != hidden_[l - 1].weight.rows()) {
      throw DimensionError(l, "expects input width " + std::to_string(layer.weight.cols()) +
                                  " but previous layer emits " + std::to_string(hidden_[l - 1].weight.rows()));
    }
  }
  if (!hidden_.empty() && output_.cols() != hidden_.back().weight.rows()) {
    throw DimensionError(hidden_.size(), "output layer expects " + std::to_string(output_.cols()) +
                                             " inputs but last hidden layer emits " +
                                             std::to_string(hidden_.back().weight.rows()));
  }
}

Mlp Mlp::uniform_init(int input_dim, const std::vector<int>& hidden_widths, int output_dim, int order,
                      std::optional<double> truncation, std::uint64_t seed) {
  if (input_dim < 1 || output_dim < 1) throw ParameterError("network dimensions must be positive");
  std::mt19937_64 rng(seed);
  auto fill = [&rng](MatrixXd& m, double a) {
    std::uniform_real_distribution<double> u(-a, a);
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  };
  std::vector<DenseLayer> hidden;
  int fan_in = input_dim;
  for (int w : hidden_widths) {
    if (w < 1) throw ParameterError("hidden widths must be positive");
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer layer{MatrixXd(w, fan_in), VectorXd(w)};
    fill(layer.weight, a);
    std::uniform_real_distribution<double> u(-a, a);
    for (Index i = 0; i < w; ++i) layer.bias(i) = u(rng);
    hidden.push_back(std::move(layer));
    fan_in = w;
  }
  MatrixXd out(output_dim, fan_in);
  fill(out, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  return Mlp(std::move(hidden), std::move(out), order, truncation);
}

std::size_t Mlp::width() const {
  std::size_t w = 0;
  for (const auto& l : hidden_) w = std::max<std::size_t>(w, static_cast<std::size_t>(l.weight.rows()));
  return w;
}

std::size_t Mlp::size() const {
  std::size_t s = 0;
  for (const auto& l : hidden_) s += static_cast<std::size_t>(l.weight.rows() * (l.weight.cols() + 1));
  return s;
}

int Mlp::input_dim() const {
  return static_cast<int>(hidden_.empty() ? output_.cols() : hidden_.front().weight.cols());
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.order_ != b.order_ || a.truncation_ != b.truncation_ || a.hidden_.size() != b.hidden_.size()) return false;
  auto same = [](const auto& p, const auto& q) {
    return p.rows() == q.rows() && p.cols() == q.cols() && p == q;
  };
  for (std::size_t l = 0; l < a.hidden_.size(); ++l) {
    if (!same(a.hidden_[l].weight, b.hidden_[l].weight) || !same(a.hidden_[l].bias, b.hidden_[l].bias)) return false;
  }
  return same(a.output_, b.output_);
}

MlpGrads MlpGrads::zeros_like(const Mlp& net) {
  MlpGrads g;
  for (const auto& l : net.hidden()) {
    g.hidden.push_back({MatrixXd::Zero(l.weight.rows(), l.weight.cols()), VectorXd::Zero(l.bias.size())});
  }
  g.output = MatrixXd::Zero(net.output().rows(), net.output().cols());
  return g;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

// Column-major activations: one column per sample.
struct Trace {
  std::vector<MatrixXd> pre;   // A_l h_l + b_l
  std::vector<MatrixXd> post;  // h_0 = x^T, h_{l+1} = sigma(pre_l)
  MatrixXd raw;                // A_L h_L
  MatrixXd out;                // truncated raw
};

Trace run_forward(const Mlp& net, const MatrixXd& x) {
  if (x.cols() != net.input_dim()) {
    throw DimensionError(0, "input has dimension " + std::to_string(x.cols()) + ", network expects " +
                                std::to_string(net.input_dim()));
  }
  const int m = net.order();
  Trace t;
  t.post.push_back(x.transpose());
  for (const auto& layer : net.hidden()) {
    MatrixXd z = layer.weight * t.post.back();
    z.colwise() += layer.bias;
    MatrixXd h = z.unaryExpr([m](double v) { return repu(v, m); });
    t.pre.push_back(std::move(z));
    t.post.push_back(std::move(h));
  }
  t.raw = net.output() * t.post.back();
  t.out = t.raw;
  if (const auto& trunc = net.truncation()) {
    const double M = *trunc;
    t.out = t.raw.unaryExpr([M](double v) { return std::clamp(v, -M, M); });
  }
  return t;
}

void check_finite(const MatrixXd& out) {
  for (Index j = 0; j < out.cols(); ++j) {
    if (!out.col(j).allFinite()) throw NumericError("non-finite network output at sample " + std::to_string(j));
  }
}

// Per-sample loss and its derivative with respect to the network outputs.
void output_loss(const LossKind& kind, Task task, const MatrixXd& out, const VectorXd& y, VectorXd& losses,
                 MatrixXd* d_out, VectorXd* d_y) {
  const Index n = out.cols();
  losses.resize(n);
  if (d_out) d_out->resize(out.rows(), n);
  if (d_y) d_y->setZero(n);
  if (task == Task::multiclass) {
    if (!kind.is_classification()) throw ParameterError("multiclass task requires the bce loss");
    for (Index j = 0; j < n; ++j) {
      const auto label = static_cast<Index>(y(j));
      if (label < 0 || label >= out.rows()) {
        throw ParameterError("class label " + std::to_string(label) + " out of range at sample " + std::to_string(j));
      }
      double total = 0.0;
      for (Index c = 0; c < out.rows(); ++c) {
        const double s = c == label ? 1.0 : -1.0;
        const double t = out(c, j) * s;
        total += loss_value(kind, t);
        if (d_out) (*d_out)(c, j) = s * loss_deriv(kind, t);
      }
      losses(j) = total;
    }
    return;
  }
  if (out.rows() != 1) throw DimensionError(0, "scalar task requires a single network output");
  for (Index j = 0; j < n; ++j) {
    const double a = loss_argument(kind, out(0, j), y(j));
    losses(j) = loss_value(kind, a);
    const double dl = loss_deriv(kind, a);
    if (kind.is_classification()) {
      if (d_out) (*d_out)(0, j) = y(j) * dl;
    } else {
      if (d_out) (*d_out)(0, j) = dl;
      if (d_y) (*d_y)(j) = -dl;
    }
  }
}

// Backpropagates per-sample output gradients `g` (out x n). Returns input
// gradients (d x n); accumulates parameter gradients scaled by `param_scale`.
MatrixXd run_backward(const Mlp& net, const Trace& t, MatrixXd g, MlpGrads* grads, double param_scale) {
  const int m = net.order();
  if (const auto& trunc = net.truncation()) {
    const double M = *trunc;
    for (Index j = 0; j < g.cols(); ++j)
      for (Index i = 0; i < g.rows(); ++i)
        if (std::abs(t.raw(i, j)) > M) g(i, j) = 0.0;
  }
  if (grads) grads->output.noalias() = param_scale * (g * t.post.back().transpose());
  MatrixXd delta = net.output().transpose() * g;
  for (std::size_t l = net.depth(); l-- > 0;) {
    const MatrixXd& z = t.pre[l];
    delta.array() *= z.unaryExpr([m](double v) { return repu_prime(v, m); }).array();
    if (grads) {
      grads->hidden[l].weight.noalias() = param_scale * (delta * t.post[l].transpose());
      grads->hidden[l].bias = param_scale * delta.rowwise().sum();
    }
    delta = net.hidden()[l].weight.transpose() * delta;
  }
  return delta;
}

}  // namespace

Eigen::MatrixXd forward_batch(const Mlp& net, const MatrixXd& x) {
  return run_forward(net, x).out.transpose();
}

Eigen::VectorXd forward_vector(const Mlp& net, const VectorXd& x) {
  return run_forward(net, x.transpose()).out.col(0);
}

double forward(const Mlp& net, const VectorXd& x) {
  if (net.output_dim() != 1) throw DimensionError(net.depth(), "forward() requires a scalar-output network");
  return run_forward(net, x.transpose()).out(0, 0);
}

std::vector<Eigen::VectorXd> hidden_activations(const Mlp& net, const VectorXd& x) {
  Trace t = run_forward(net, x.transpose());
  std::vector<VectorXd> out;
  for (std::size_t l = 1; l < t.post.size(); ++l) out.push_back(t.post[l].col(0));
  return out;
}

Eigen::VectorXd sample_losses(const Mlp& net, const MatrixXd& x, const VectorXd& y, const LossKind& kind,
                              Task task) {
  const Trace t = run_forward(net, x);
  check_finite(t.out);
  VectorXd losses;
  output_loss(kind, task, t.out, y, losses, nullptr, nullptr);
  return losses;
}

double mean_loss(const Mlp& net, const MatrixXd& x, const VectorXd& y, const LossKind& kind, Task task) {
  return sample_losses(net, x, y, kind, task).mean();
}

GradientBundle backward(const Mlp& net, const MatrixXd& x, const VectorXd& y, const LossKind& kind, Task task) {
  if (x.rows() == 0) throw ParameterError("backward() on an empty batch");
  if (y.size() != x.rows()) throw ParameterError("response count does not match covariate rows");
  const Trace t = run_forward(net, x);
  for (std::size_t l = 0; l < t.post.size(); ++l) {
    for (Index j = 0; j < t.post[l].cols(); ++j) {
      if (!t.post[l].col(j).allFinite()) {
        throw NumericError("non-finite activation in layer " + std::to_string(l) + " at sample " + std::to_string(j));
      }
    }
  }
  check_finite(t.out);
  GradientBundle b;
  MatrixXd d_out;
  output_loss(kind, task, t.out, y, b.losses, &d_out, &b.response_grad);
  b.params = MlpGrads::zeros_like(net);
  b.input_grad = run_backward(net, t, std::move(d_out), &b.params, 1.0 / static_cast<double>(x.rows())).transpose();
  return b;
}

GradientBundle backward(const Mlp& net, const Dataset& batch, const LossKind& kind) {
  return backward(net, batch.x, batch.y, kind, batch.task);
}

Eigen::VectorXd input_gradient(const Mlp& net, const VectorXd& x) {
  if (net.output_dim() != 1) throw DimensionError(net.depth(), "input_gradient() requires a scalar-output network");
  const Trace t = run_forward(net, x.transpose());
  return run_backward(net, t, MatrixXd::Ones(1, 1), nullptr, 1.0).col(0);
}

// ---------------------------------------------------------------------------
// Norm functionals

double augmented_inf_norm(const DenseLayer& layer) {
  return (layer.weight.cwiseAbs().rowwise().sum() + layer.bias.cwiseAbs()).maxCoeff();
}

namespace {

double inf_norm(const MatrixXd& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

double ipow(double base, std::size_t e) {
  double r = 1.0;
  for (std::size_t i = 0; i < e; ++i) r *= base;
  return r;
}

}  // namespace

double kappa(const Mlp& net) {
  const std::size_t L = net.depth();
  const double m = net.order();
  double k = ipow(m, L) * inf_norm(net.output());
  for (std::size_t s = 0; s < L; ++s) {
    const double r = std::max(augmented_inf_norm(net.hidden()[s]), 1.0);
    k *= std::pow(r, ipow(m, L - s));
  }
  return k;
}

Mlp enforce_constraint(const Mlp& net, double k_max) {
  if (!(k_max > 0.0)) throw ParameterError("constraint level must be positive");
  if (kappa(net) <= k_max) return net;
  constexpr double shrink = 1.0 - std::numeric_limits<double>::epsilon();
  Mlp out = net;
  for (std::size_t s = 0; s < out.depth(); ++s) {
    DenseLayer& layer = out.hidden_layer(s);
    const double n = augmented_inf_norm(layer);
    if (n <= 1.0) continue;
    layer.weight /= n;
    layer.bias /= n;
    while (augmented_inf_norm(layer) > 1.0) {
      layer.weight *= shrink;
      layer.bias *= shrink;
    }
  }
  const double k = kappa(out);
  if (k > k_max) {
    out.output_weight() *= k_max / k;
    while (kappa(out) > k_max) out.output_weight() *= shrink;
  }
  return out;
}

Mlp reparameterize(const Mlp& net) {
  const int m = net.order();
  std::vector<DenseLayer> hidden;
  double carry = 1.0;  // scale of the current layer input relative to the original
  for (const auto& layer : net.hidden()) {
    const double r = std::max(augmented_inf_norm(layer), 1.0);
    DenseLayer scaled{layer.weight / r, layer.bias * (carry / r)};
    hidden.push_back(std::move(scaled));
    carry = repu(carry / r, m);
  }
  return Mlp(std::move(hidden), net.output() / carry, m, net.truncation());
}

double lipschitz_empirical(const Mlp& net, int trials, std::uint64_t seed) {
  if (trials < 1) throw ParameterError("lipschitz_empirical needs at least one trial");
  const Index d = net.input_dim();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-1e-3, 1e-3);
  // Half the pairs are far apart, half are local probes of the gradient.
  MatrixXd a(trials, d), b(trials, d);
  for (int t = 0; t < trials; ++t) {
    const bool local = (t % 2) == 1;
    for (Index i = 0; i < d; ++i) {
      a(t, i) = unit(rng);
      b(t, i) = local ? std::clamp(a(t, i) + jitter(rng), 0.0, 1.0) : unit(rng);
    }
  }
  const MatrixXd ga = forward_batch(net, a);
  const MatrixXd gb = forward_batch(net, b);
  double best = 0.0;
  for (int t = 0; t < trials; ++t) {
    const double dist = (a.row(t) - b.row(t)).cwiseAbs().maxCoeff();
    if (dist <= 0.0) continue;
    best = std::max(best, (ga.row(t) - gb.row(t)).cwiseAbs().maxCoeff() / dist);
  }
  return best;
}

double hessian_bound(const Mlp& net) {
  if (net.order() < 2) throw ParameterError("Hessian bound undefined for ReLU order");
  const Mlp normalized = reparameterize(net);
  const std::size_t L = net.depth();
  return static_cast<double>(L) * ipow(net.order(), 2 * L) * inf_norm(normalized.output());
}

}  // namespace wdro
