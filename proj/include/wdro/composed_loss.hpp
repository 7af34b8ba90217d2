#pragma once

#include <Eigen/Dense>

#include "wdro/losses.hpp"
#include "wdro/nn.hpp"

namespace wdro {

/// Gradient of z = (x, y) -> loss(f(x) - y) stacked as a (d+1)-vector,
/// i.e. loss'(f(x)-y) * (grad f(x), -1). For bce the margin f(x)*y is
/// differentiated instead.
Eigen::VectorXd composed_gradient(const Mlp& net, const LossKind& kind, const Eigen::VectorXd& x, double y);

/// Composed loss evaluated at a stacked point z = (x, y).
double composed_loss(const Mlp& net, const LossKind& kind, const Eigen::VectorXd& z);

}  // namespace wdro
