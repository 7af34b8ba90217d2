#pragma once

// Randomised numerical checks of the worst-case risk identities and bounds.
// Each sweep reports the largest violation found; violations are data, not
// errors.

#include <cstdint>
#include <string>
#include <vector>

namespace wdro {

struct LemmaCheck {
  std::string lemma;
  int instances = 0;
  double max_violation = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

/// |dual - brute-force primal| on random piecewise-linear instances with at
/// most 3 atoms and 200 grid points, orders 1 and 2, radii {0.05, 0.1, 0.3}.
LemmaCheck check_strong_duality(std::uint64_t seed, int instances, unsigned threads = 0);

/// k = 1 gap against [0, delta * Lip(loss) * (kappa + 1)] for random
/// constrained networks (kappa <= 10) under huber(1) and check(0.5).
LemmaCheck check_lipschitz_bound(std::uint64_t seed, int instances, unsigned threads = 0);

/// Linear composed losses, where the k = 1 gap equals delta times the slope.
LemmaCheck check_lipschitz_equality(std::uint64_t seed, int instances);

/// Piecewise-linear 1-d losses where the essential supremum of the gradient
/// norm, its attainment set and a Holder modulus (q = 1) are known, so the
/// gap must lie in [delta G - delta^2 E[H 1_A] / P(A)^2, delta Lip].
LemmaCheck check_gradient_sandwich(std::uint64_t seed, int instances);

/// Residual |gap - delta G| of the k = 2 first-order expansion on smooth
/// (m = 2) networks, halving delta over {0.1, ..., 0.0125}. The violation is
/// how far the smallest observed decay order falls below 1.8.
LemmaCheck check_first_order_expansion(std::uint64_t seed, int instances, unsigned threads = 0);

/// Zero radius gives a gap of exactly zero.
LemmaCheck check_zero_radius(std::uint64_t seed, int instances);

struct VerificationReport {
  std::vector<LemmaCheck> checks;
  bool all_pass() const;
  std::string to_json() const;
};

/// Every sweep with `instance_count` instances each (the first-order sweep
/// is capped at 20 because each instance solves four fine-grid problems).
VerificationReport verify_lemmas(std::uint64_t seed, int instance_count, unsigned threads = 0);

}  // namespace wdro
