#include "wdro/composed_loss.hpp"

#include "wdro/error.hpp"

namespace wdro {

Eigen::VectorXd composed_gradient(const Mlp& net, const LossKind& kind, const Eigen::VectorXd& x, double y) {
  const Eigen::Index d = x.size();
  const double f = forward(net, x);
  const double arg = loss_argument(kind, f, y);
  const double dl = loss_deriv(kind, arg);
  Eigen::VectorXd g(d + 1);
  const Eigen::VectorXd grad_f = input_gradient(net, x);
  if (kind.is_classification()) {
    g.head(d) = dl * y * grad_f;
    g(d) = dl * f;
  } else {
    g.head(d) = dl * grad_f;
    g(d) = -dl;
  }
  return g;
}

double composed_loss(const Mlp& net, const LossKind& kind, const Eigen::VectorXd& z) {
  const Eigen::Index d = net.input_dim();
  if (z.size() != d + 1) throw DimensionError(0, "stacked point must have dimension d+1");
  return loss_value(kind, loss_argument(kind, forward(net, z.head(d)), z(d)));
}

}  // namespace wdro
