#pragma once

// Shared generators and finite-difference oracles for the test suites.
// Nothing here calls into the gradient code under test.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>

#include "wdro/nn.hpp"

namespace wdro::testing {

inline Mlp random_net(std::mt19937_64& rng, int input_dim, int max_depth, int max_width, int order,
                      double scale = 1.0) {
  std::uniform_int_distribution<int> depth_d(1, max_depth), width_d(1, max_width);
  std::vector<int> widths(static_cast<std::size_t>(depth_d(rng)));
  for (auto& w : widths) w = width_d(rng);
  Mlp net = Mlp::uniform_init(input_dim, widths, 1, order, std::nullopt, rng());
  if (scale == 1.0) return net;
  std::vector<DenseLayer> hidden = net.hidden();
  for (auto& l : hidden) {
    l.weight *= scale;
    l.bias *= scale;
  }
  return Mlp(std::move(hidden), net.output() * scale, order);
}

inline Eigen::VectorXd random_point(std::mt19937_64& rng, Eigen::Index d, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd x(d);
  for (Eigen::Index i = 0; i < d; ++i) x(i) = u(rng);
  return x;
}

/// Central difference of a scalar function along coordinate i.
inline double central_diff(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                           Eigen::Index i, double h) {
  const double x0 = x(i);
  x(i) = x0 + h;
  const double fp = f(x);
  x(i) = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

/// Second mixed central difference d^2 f / dx_i dx_j.
inline double second_diff(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                          Eigen::Index i, Eigen::Index j, double h) {
  auto at = [&](double si, double sj) {
    Eigen::VectorXd p = x;
    p(i) += si * h;
    p(j) += sj * h;
    return f(p);
  };
  return (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * h);
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace wdro::testing
