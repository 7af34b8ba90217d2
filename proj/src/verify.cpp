#include "wdro/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "wdro/error.hpp"
#include "wdro/nn.hpp"
#include "wdro/oracle.hpp"
#include "wdro/parallel.hpp"
#include "wdro/rng.hpp"

namespace wdro {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kDeltas[] = {0.05, 0.1, 0.3};

double unif(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Signed sum of hinges plus a linear part on R^2.
PointLoss random_hinge_loss(std::mt19937_64& rng) {
  struct Hinge {
    double a0, a1, b, c;
  };
  std::vector<Hinge> hs(4);
  for (auto& h : hs) h = {unif(rng, -1, 1), unif(rng, -1, 1), unif(rng, -0.5, 0.5), unif(rng, -2, 2)};
  const double l0 = unif(rng, -1, 1), l1 = unif(rng, -1, 1);
  return [hs, l0, l1](const VectorXd& z) {
    double v = l0 * z(0) + l1 * z(1);
    for (const auto& h : hs) v += h.c * std::max(0.0, h.a0 * z(0) + h.a1 * z(1) - h.b);
    return v;
  };
}

WorstCaseProblem random_duality_instance(std::mt19937_64& rng, double order, double delta) {
  const int n = std::uniform_int_distribution<int>(1, 3)(rng);
  MatrixXd atoms(n, 2);
  for (Index i = 0; i < atoms.size(); ++i) atoms.data()[i] = unif(rng, 0, 1);
  const double width = std::max(atoms.col(0).maxCoeff() - atoms.col(0).minCoeff(),
                                atoms.col(1).maxCoeff() - atoms.col(1).minCoeff()) + 4.0 * delta;
  GridSpec spec;
  spec.margin = 2.0 * delta;
  spec.spacing = width / 13.0;  // 14 x 14 lattice, plus the atoms
  spec.max_points = 196;
  Grid g = build_grid(atoms, spec);
  return WorstCaseProblem(atoms, std::move(g.points), pointwise(random_hinge_loss(rng)), order, delta);
}

Mlp random_constrained_net(std::mt19937_64& rng, int order) {
  const int depth = std::uniform_int_distribution<int>(1, 3)(rng);
  std::vector<int> widths(static_cast<std::size_t>(depth));
  for (auto& w : widths) w = std::uniform_int_distribution<int>(1, 6)(rng);
  const Mlp init = Mlp::uniform_init(1, widths, 1, order, std::nullopt, rng());
  const double scale = unif(rng, 0.5, 4.0);
  std::vector<DenseLayer> hidden = init.hidden();
  for (auto& l : hidden) {
    l.weight *= scale;
    l.bias *= scale;
  }
  return enforce_constraint(Mlp(std::move(hidden), init.output() * scale, order), 10.0);
}

LemmaCheck finish(std::string name, int instances, double worst, double tol, std::string detail = {}) {
  LemmaCheck c;
  c.lemma = std::move(name);
  c.instances = instances;
  c.max_violation = worst;
  c.tolerance = tol;
  c.pass = worst <= tol;
  c.detail = std::move(detail);
  return c;
}

double max_of(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

}  // namespace

LemmaCheck check_strong_duality(std::uint64_t seed, int instances, unsigned threads) {
  std::vector<double> viol(static_cast<std::size_t>(std::max(instances, 0)));
  parallel_for(
      viol.size(),
      [&](std::size_t i) {
        std::mt19937_64 rng(derive_seed(seed, i));
        const WorstCaseProblem p = random_duality_instance(rng, 1.0 + static_cast<double>(i % 2), kDeltas[i % 3]);
        viol[i] = std::abs(dual_worst_case(p).value - primal_bruteforce(p));
      },
      threads);
  return finish("strong_duality", instances, max_of(viol), 1e-6, "|dual - primal| on guarded instances");
}

LemmaCheck check_lipschitz_bound(std::uint64_t seed, int instances, unsigned threads) {
  const LossKind kinds[] = {LossKind::huber(1.0), LossKind::check(0.5)};
  std::vector<double> viol(static_cast<std::size_t>(std::max(instances, 0)));
  parallel_for(
      viol.size(),
      [&](std::size_t i) {
        std::mt19937_64 rng(derive_seed(seed, 1000003 + i));
        const Mlp net = random_constrained_net(rng, 1 + static_cast<int>(i % 2));
        Dataset s;
        s.x.resize(3, 1);
        s.y.resize(3);
        for (Index j = 0; j < 3; ++j) {
          s.x(j, 0) = unif(rng, 0, 1);
          s.y(j) = forward(net, s.x.row(j).transpose()) + unif(rng, -2, 2);
        }
        const double delta = kDeltas[i % 3];
        GridSpec spec = GridSpec::standard(delta, 20000);
        spec.clip = {std::make_pair(0.0, 1.0), std::nullopt};
        const LossKind& kind = kinds[(i / 2) % 2];
        const double gap = regularizer_gap(net, kind, s, 1.0, delta, spec);
        const double bound = delta * *lipschitz_constant(kind) * (kappa(net) + 1.0);
        viol[i] = std::max({0.0, -gap, gap - bound});
      },
      threads);
  return finish("lipschitz_regularization_bound", instances, max_of(viol), 1e-9,
                "0 <= gap <= delta * Lip(loss) * (kappa + 1), k = 1");
}

LemmaCheck check_lipschitz_equality(std::uint64_t seed, int instances) {
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    std::mt19937_64 rng(derive_seed(seed, 2000003 + static_cast<std::uint64_t>(i)));
    const double w = unif(rng, -2, 2), rho = unif(rng, 0.1, 0.9), delta = kDeltas[i % 3];
    const int n = std::uniform_int_distribution<int>(1, 3)(rng);
    Dataset s;
    s.x.resize(n, 1);
    s.y.resize(n);
    for (Index j = 0; j < n; ++j) {
      s.x(j, 0) = unif(rng, 0, 1);
      s.y(j) = -5.0 - unif(rng, 0, 1);  // residual stays positive on the whole grid
    }
    GridSpec spec;
    spec.local = true;
    spec.margin = 2.0 * delta;
    spec.spacing = delta / 10.0;
    const Mlp linear({}, MatrixXd::Constant(1, 1, w), 1);
    const double gap = regularizer_gap(linear, LossKind::check(rho), s, 1.0, delta, spec);
    worst = std::max(worst, std::abs(gap - delta * rho * (std::abs(w) + 1.0)));
  }
  return finish("lipschitz_regularization_equality", instances, worst, 1e-6, "linear loss: gap = delta * slope");
}

LemmaCheck check_gradient_sandwich(std::uint64_t seed, int instances) {
  double worst = 0.0;
  int informative = 0;
  for (int i = 0; i < instances; ++i) {
    std::mt19937_64 rng(derive_seed(seed, 3000017 + static_cast<std::uint64_t>(i)));
    const int kinks = std::uniform_int_distribution<int>(1, 4)(rng);
    std::vector<double> c(static_cast<std::size_t>(kinks)), slope(static_cast<std::size_t>(kinks + 1));
    for (auto& v : c) v = unif(rng, 0, 1);
    std::sort(c.begin(), c.end());
    for (auto& v : slope) v = unif(rng, -2, 2);
    // Continuous piecewise-linear function with slope[j] right of c[j-1].
    auto piece = [c](double z) {
      return static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), z) - c.begin());
    };
    auto loss = [c, slope, piece](const VectorXd& z) {
      const double t = z(0);
      const std::size_t p = piece(t);
      double v = 0.0;
      if (p == 0) return slope[0] * (t - c[0]);
      for (std::size_t j = 1; j < p; ++j) v += slope[j] * (c[j] - c[j - 1]);
      return v + slope[p] * (t - c[p - 1]);
    };

    const int n = std::uniform_int_distribution<int>(3, 8)(rng);
    MatrixXd atoms(n, 1);
    std::vector<double> r(static_cast<std::size_t>(n)), g(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
      double z, dist;
      do {
        z = unif(rng, 0, 1);
        dist = 1e300;
        for (double k : c) dist = std::min(dist, std::abs(z - k));
      } while (dist < 0.02);
      atoms(j, 0) = z;
      r[static_cast<std::size_t>(j)] = dist;
      g[static_cast<std::size_t>(j)] = std::abs(slope[piece(z)]);
    }
    const double gmax = *std::max_element(g.begin(), g.end());
    double lip = 0.0;
    for (double s : slope) lip = std::max(lip, std::abs(s));
    int in_a = 0;
    double h_sum = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (g[j] != gmax) continue;
      ++in_a;
      h_sum += 2.0 * lip / r[j];  // gradient jumps by at most 2 Lip, none within distance r
    }
    const double pa = static_cast<double>(in_a) / n;
    const double delta = 0.01 * (1 + i % 3);
    const double move = delta / pa;

    // Uniform lattice plus the exact targets of the sandwich transport plan.
    const double lo = atoms.minCoeff() - move - 2 * delta, hi = atoms.maxCoeff() + move + 2 * delta;
    const double h = delta / 20.0;
    const int count = static_cast<int>(std::ceil((hi - lo) / h)) + 1;
    MatrixXd grid(count + 2 * n, 1);
    for (int k = 0; k < count; ++k) grid(k, 0) = lo + k * h;
    for (Index j = 0; j < n; ++j) {
      grid(count + 2 * j, 0) = atoms(j, 0) + move;
      grid(count + 2 * j + 1, 0) = atoms(j, 0) - move;
    }
    const WorstCaseProblem p(atoms, grid, pointwise(loss), 1.0, delta);
    const double gap = dual_worst_case(p).value - p.empirical_risk();
    const double lower = delta * gmax - delta * delta * (h_sum / n) / (pa * pa);
    const double upper = delta * lip;
    worst = std::max({worst, lower - gap, gap - upper});
    if (lower > 0.0) ++informative;
  }
  std::ostringstream detail;
  detail << "delta G - delta^2 E[H 1_A]/P(A)^2 <= gap <= delta Lip on piecewise-linear 1-d losses; lower bound positive in "
         << informative << " instances";
  return finish("gradient_norm_sandwich", instances, std::max(worst, 0.0), 1e-9, detail.str());
}

LemmaCheck check_first_order_expansion(std::uint64_t seed, int instances, unsigned threads) {
  static const double deltas[] = {0.1, 0.05, 0.025, 0.0125};
  std::vector<double> orders(static_cast<std::size_t>(std::max(instances, 0)));
  parallel_for(
      orders.size(),
      [&](std::size_t i) {
        std::mt19937_64 rng(derive_seed(seed, 4000037 + i));
        const Mlp net = enforce_constraint(Mlp::uniform_init(1, {4}, 1, 2, std::nullopt, rng()), 10.0);
        Dataset s;
        s.x.resize(3, 1);
        s.y.resize(3);
        for (Index j = 0; j < 3; ++j) {
          s.x(j, 0) = unif(rng, 0.3, 0.7);
          s.y(j) = forward(net, s.x.row(j).transpose()) + (j % 2 ? 1.0 : -1.0) * unif(rng, 0.3, 0.6);
        }
        const double G = gradient_norm_regularizer(net, LossKind::quadratic(), s, 2.0);
        double prev = 0.0, min_order = 1e300;
        for (std::size_t k = 0; k < 4; ++k) {
          const double d = deltas[k];
          GridSpec spec;
          spec.local = true;
          spec.margin = 4 * d;
          spec.spacing = 0.2 * std::pow(d, 1.5);
          spec.max_points = 2000000;
          const double res = std::abs(regularizer_gap(net, LossKind::quadratic(), s, 2.0, d, spec) - d * G);
          if (k > 0) min_order = std::min(min_order, std::log2(prev / res));
          prev = res;
        }
        orders[i] = min_order;
      },
      threads);
  double worst = 0.0, lowest = 1e300;
  for (double o : orders) {
    lowest = std::min(lowest, o);
    worst = std::max(worst, 1.8 - o);
  }
  std::ostringstream detail;
  detail << "smallest observed decay order " << lowest << " (required >= 1.8), k = 2, m = 2";
  return finish("first_order_expansion", instances, std::max(worst, 0.0), 0.0, detail.str());
}

LemmaCheck check_zero_radius(std::uint64_t seed, int instances) {
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    std::mt19937_64 rng(derive_seed(seed, 5000011 + static_cast<std::uint64_t>(i)));
    const WorstCaseProblem p = random_duality_instance(rng, 1.0 + i % 2, 0.0);
    worst = std::max(worst, std::abs(dual_worst_case(p).value - p.empirical_risk()));
  }
  return finish("zero_radius", instances, worst, 0.0, "gap at delta = 0");
}

bool VerificationReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const LemmaCheck& c) { return c.pass; });
}

std::string VerificationReport::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    arr.push_back({{"lemma", c.lemma},
                   {"instances", c.instances},
                   {"max_violation", c.max_violation},
                   {"tolerance", c.tolerance},
                   {"pass", c.pass},
                   {"detail", c.detail}});
  }
  return arr.dump(2);
}

VerificationReport verify_lemmas(std::uint64_t seed, int instance_count, unsigned threads) {
  if (instance_count < 1) throw ParameterError("instance_count must be >= 1");
  VerificationReport r;
  r.checks.push_back(check_strong_duality(seed, instance_count, threads));
  r.checks.push_back(check_lipschitz_bound(seed, instance_count, threads));
  r.checks.push_back(check_lipschitz_equality(seed, instance_count));
  r.checks.push_back(check_gradient_sandwich(seed, instance_count));
  r.checks.push_back(check_first_order_expansion(seed, std::min(instance_count, 20), threads));
  r.checks.push_back(check_zero_radius(seed, instance_count));
  return r;
}

}  // namespace wdro
