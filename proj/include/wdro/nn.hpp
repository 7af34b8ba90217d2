#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "wdro/dataset.hpp"
#include "wdro/losses.hpp"

namespace wdro {

/// Rectified power unit (max{x,0})^m.
double repu(double x, int m);
/// Derivative of `repu`; 0 at the kink for m = 1.
double repu_prime(double x, int m);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Feedforward RePU network g = g_L o ... o g_0 with hidden layers
/// g_l(h) = sigma_m(A_l h + b_l), a bias-free linear output layer A_L and an
/// optional output clamp to [-M, M].
class Mlp {
 public:
  Mlp(std::vector<DenseLayer> hidden, Eigen::MatrixXd output, int order,
      std::optional<double> truncation = std::nullopt);

  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Mlp uniform_init(int input_dim, const std::vector<int>& hidden_widths, int output_dim,
                          int order, std::optional<double> truncation, std::uint64_t seed);

  int order() const { return order_; }
  const std::optional<double>& truncation() const { return truncation_; }

  /// Number of hidden layers (L).
  std::size_t depth() const { return hidden_.size(); }
  /// Widest hidden layer (W); 0 when there are no hidden layers.
  std::size_t width() const;
  /// Hidden-layer parameter count (S).
  std::size_t size() const;
  int input_dim() const;
  int output_dim() const { return static_cast<int>(output_.rows()); }

  const std::vector<DenseLayer>& hidden() const { return hidden_; }
  const Eigen::MatrixXd& output() const { return output_; }

  // Mutable access is reserved for training steps and constraint passes.
  DenseLayer& hidden_layer(std::size_t i) { return hidden_[i]; }
  Eigen::MatrixXd& output_weight() { return output_; }

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  void validate() const;

  std::vector<DenseLayer> hidden_;
  Eigen::MatrixXd output_;
  int order_;
  std::optional<double> truncation_;
};

/// Parameter-shaped container (gradients, optimizer moments).
struct MlpGrads {
  std::vector<DenseLayer> hidden;
  Eigen::MatrixXd output;

  static MlpGrads zeros_like(const Mlp& net);
};

struct GradientBundle {
  MlpGrads params;                // gradient of the mean batch loss
  Eigen::MatrixXd input_grad;     // n x d, per-sample loss gradient in x
  Eigen::VectorXd response_grad;  // per-sample loss gradient in y
  Eigen::VectorXd losses;         // per-sample loss values
};

/// Scalar-output evaluation of one point.
double forward(const Mlp& net, const Eigen::VectorXd& x);
Eigen::VectorXd forward_vector(const Mlp& net, const Eigen::VectorXd& x);
/// Rows of `x` are samples; result is n x output_dim.
Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& x);

/// Post-activation outputs of every hidden layer for one point.
std::vector<Eigen::VectorXd> hidden_activations(const Mlp& net, const Eigen::VectorXd& x);

/// Per-sample losses for covariates `x` and responses `y` of the given task.
Eigen::VectorXd sample_losses(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const LossKind& kind, Task task = Task::regression);
double mean_loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                 const LossKind& kind, Task task = Task::regression);

/// Gradients of the batch loss with respect to parameters, covariates and
/// responses. Truncation passes gradients inside [-M, M] and blocks them
/// outside. Class labels carry no response gradient.
GradientBundle backward(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const LossKind& kind, Task task = Task::regression);
GradientBundle backward(const Mlp& net, const Dataset& batch, const LossKind& kind);

/// Gradient of a scalar-output network with respect to its input.
Eigen::VectorXd input_gradient(const Mlp& net, const Eigen::VectorXd& x);

/// ||(A, b)||_inf with the bias appended as a column.
double augmented_inf_norm(const DenseLayer& layer);

/// m^L ||A_L||_inf prod_s max{||(A_s,b_s)||_inf, 1}^(m^(L-s)).
double kappa(const Mlp& net);

/// Returns `net` if kappa(net) <= k_max, otherwise a rescaled network with
/// every hidden layer normalised to augmented norm <= 1 and the output layer
/// shrunk until kappa <= k_max holds exactly.
Mlp enforce_constraint(const Mlp& net, double k_max);

/// Function-preserving rescaling with normalised hidden layers; relies on the
/// m-homogeneity of sigma_m.
Mlp reparameterize(const Mlp& net);

/// Largest |g(x1)-g(x2)| / ||x1-x2||_inf over random pairs in [0,1]^d.
double lipschitz_empirical(const Mlp& net, int trials, std::uint64_t seed);

/// L m^(2L) ||A_L||_inf of the reparameterised network (requires m >= 2).
double hessian_bound(const Mlp& net);

}  // namespace wdro
