#pragma once

#include <optional>
#include <string>

namespace wdro {

/// Loss families. Regression kinds act on the residual u = f(x) - y,
/// the classification kind acts on the margin t = f(x) * y.
struct LossKind {
  enum class Tag { quadratic, huber, check, bce };

  Tag tag = Tag::quadratic;
  double tau = 1.0;  // huber threshold
  double rho = 0.5;  // check quantile level

  static LossKind quadratic() { return {}; }
  static LossKind huber(double tau);
  static LossKind check(double rho);
  static LossKind bce() { return {Tag::bce, 1.0, 0.5}; }

  /// Parses `quadratic | huber:TAU | check:RHO | bce`.
  static LossKind parse(const std::string& text);

  bool is_classification() const { return tag == Tag::bce; }
  std::string to_string() const;

  friend bool operator==(const LossKind&, const LossKind&) = default;
};

double loss_value(const LossKind& kind, double u);
double loss_deriv(const LossKind& kind, double u);

/// Global Lipschitz constant of the scalar loss; nullopt when unbounded.
std::optional<double> lipschitz_constant(const LossKind& kind);

/// Residual for regression kinds, margin for bce.
inline double loss_argument(const LossKind& kind, double prediction, double response) {
  return kind.is_classification() ? prediction * response : prediction - response;
}

}  // namespace wdro
