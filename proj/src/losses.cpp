#include "wdro/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "wdro/error.hpp"

namespace wdro {

LossKind LossKind::huber(double tau) {
  if (!(tau > 0.0)) throw ParameterError("huber threshold must be positive");
  return {Tag::huber, tau, 0.5};
}

LossKind LossKind::check(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw ParameterError("check level must lie in (0,1)");
  return {Tag::check, 1.0, rho};
}

namespace {

double parse_number(const std::string& text, const std::string& whole) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw ParameterError("bad loss spec '" + whole + "'");
  }
  return v;
}

}  // namespace

LossKind LossKind::parse(const std::string& text) {
  if (text == "quadratic") return quadratic();
  if (text == "bce") return bce();
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string head = text.substr(0, colon);
    const double v = parse_number(text.substr(colon + 1), text);
    if (head == "huber") return huber(v);
    if (head == "check") return check(v);
  }
  throw ParameterError("unknown loss '" + text + "' (expected quadratic | huber:TAU | check:RHO | bce)");
}

std::string LossKind::to_string() const {
  char buf[64];
  switch (tag) {
    case Tag::quadratic:
      return "quadratic";
    case Tag::huber:
      std::snprintf(buf, sizeof buf, "huber:%g", tau);
      return buf;
    case Tag::check:
      std::snprintf(buf, sizeof buf, "check:%g", rho);
      return buf;
    case Tag::bce:
      return "bce";
  }
  return "?";
}

double loss_value(const LossKind& kind, double u) {
  switch (kind.tag) {
    case LossKind::Tag::quadratic:
      return u * u;
    case LossKind::Tag::huber: {
      const double a = std::abs(u);
      return a <= kind.tau ? 0.5 * u * u : kind.tau * a - 0.5 * kind.tau * kind.tau;
    }
    case LossKind::Tag::check:
      return u * (kind.rho - (u <= 0.0 ? 1.0 : 0.0));
    case LossKind::Tag::bce:
      // log(1 + exp(-t)) without overflow for large |t|
      return u > 0.0 ? std::log1p(std::exp(-u)) : -u + std::log1p(std::exp(u));
  }
  return 0.0;
}

double loss_deriv(const LossKind& kind, double u) {
  switch (kind.tag) {
    case LossKind::Tag::quadratic:
      return 2.0 * u;
    case LossKind::Tag::huber:
      return std::min(std::max(-kind.tau, u), kind.tau);
    case LossKind::Tag::check:
      return kind.rho - (u <= 0.0 ? 1.0 : 0.0);
    case LossKind::Tag::bce:
      // -1/(1+e^t), written so neither branch overflows
      if (u >= 0.0) {
        const double e = std::exp(-u);
        return -e / (1.0 + e);
      }
      return -1.0 / (1.0 + std::exp(u));
  }
  return 0.0;
}

std::optional<double> lipschitz_constant(const LossKind& kind) {
  switch (kind.tag) {
    case LossKind::Tag::quadratic:
      return std::nullopt;
    case LossKind::Tag::huber:
      return kind.tau;
    case LossKind::Tag::check:
      return std::max(kind.rho, 1.0 - kind.rho);
    case LossKind::Tag::bce:
      return 1.0;
  }
  return std::nullopt;
}

}  // namespace wdro
