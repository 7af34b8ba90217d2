#include "wdro/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "wdro/composed_loss.hpp"
#include "wdro/error.hpp"

namespace wdro {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

BatchLoss pointwise(PointLoss loss) {
  return [loss = std::move(loss)](const MatrixXd& z) {
    VectorXd v(z.rows());
    for (Index i = 0; i < z.rows(); ++i) v(i) = loss(z.row(i).transpose());
    return v;
  };
}

BatchLoss network_loss(const Mlp& net, const LossKind& kind) {
  return [net, kind](const MatrixXd& z) {
    const Index d = net.input_dim();
    if (z.cols() != d + 1) throw DimensionError(0, "stacked points must have dimension d+1");
    const MatrixXd f = forward_batch(net, z.leftCols(d));
    VectorXd v(z.rows());
    for (Index i = 0; i < z.rows(); ++i) v(i) = loss_value(kind, loss_argument(kind, f(i, 0), z(i, d)));
    return v;
  };
}

// ---------------------------------------------------------------------------
// Grid construction

GridSpec GridSpec::standard(double delta, std::size_t max_points) {
  GridSpec g;
  g.margin = 2.0 * delta;
  g.spacing = delta / 10.0;
  g.max_points = max_points;
  return g;
}

namespace {

std::pair<double, double> clip_bounds(const GridSpec& spec, Index j, double lo, double hi) {
  if (static_cast<std::size_t>(j) < spec.clip.size() && spec.clip[static_cast<std::size_t>(j)]) {
    lo = std::max(lo, spec.clip[static_cast<std::size_t>(j)]->first);
    hi = std::min(hi, spec.clip[static_cast<std::size_t>(j)]->second);
  }
  return {lo, hi};
}

bool inside_clip(const GridSpec& spec, const VectorXd& p) {
  for (std::size_t j = 0; j < spec.clip.size() && j < static_cast<std::size_t>(p.size()); ++j) {
    if (!spec.clip[j]) continue;
    const double v = p(static_cast<Index>(j));
    if (v < spec.clip[j]->first || v > spec.clip[j]->second) return false;
  }
  return true;
}

// Visits every multi-index of a tensor lattice with `counts[j]` points per axis.
template <typename F>
void for_each_lattice_point(const std::vector<Index>& counts, F&& visit) {
  std::vector<Index> idx(counts.size(), 0);
  while (true) {
    visit(idx);
    std::size_t j = 0;
    while (j < idx.size() && ++idx[j] == counts[j]) idx[j++] = 0;
    if (j == idx.size()) return;
  }
}

}  // namespace

Grid build_grid(const MatrixXd& atoms, const GridSpec& spec) {
  if (atoms.rows() == 0) throw ParameterError("grid needs at least one atom");
  const Index D = atoms.cols();
  if (spec.margin < 0.0) throw ParameterError("grid margin must be nonnegative");
  if (spec.margin == 0.0 || !(spec.spacing > 0.0)) return {atoms, 0.0};
  double h = spec.spacing;
  std::vector<VectorXd> pts;

  if (!spec.local) {
    std::vector<double> lo(static_cast<std::size_t>(D)), hi(static_cast<std::size_t>(D));
    for (Index j = 0; j < D; ++j) {
      auto [l, u] = clip_bounds(spec, j, atoms.col(j).minCoeff() - spec.margin, atoms.col(j).maxCoeff() + spec.margin);
      lo[static_cast<std::size_t>(j)] = l;
      hi[static_cast<std::size_t>(j)] = std::max(l, u);
    }
    std::vector<Index> counts(static_cast<std::size_t>(D));
    while (true) {
      double total = 1.0;
      for (Index j = 0; j < D; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        counts[sj] = static_cast<Index>(std::floor((hi[sj] - lo[sj]) / h + 1e-9)) + 1;
        total *= static_cast<double>(counts[sj]);
      }
      if (total <= static_cast<double>(spec.max_points)) break;
      h *= 1.05;
    }
    for_each_lattice_point(counts, [&](const std::vector<Index>& idx) {
      VectorXd p(D);
      for (Index j = 0; j < D; ++j) p(j) = lo[static_cast<std::size_t>(j)] + static_cast<double>(idx[static_cast<std::size_t>(j)]) * h;
      pts.push_back(std::move(p));
    });
  } else {
    Index half = 0;
    while (true) {
      half = static_cast<Index>(std::floor(spec.margin / h + 1e-9));
      const double per_atom = std::pow(static_cast<double>(2 * half + 1), static_cast<double>(D));
      if (per_atom * static_cast<double>(atoms.rows()) <= static_cast<double>(spec.max_points)) break;
      h *= 1.05;
    }
    const std::vector<Index> counts(static_cast<std::size_t>(D), 2 * half + 1);
    for (Index a = 0; a < atoms.rows(); ++a) {
      for_each_lattice_point(counts, [&](const std::vector<Index>& idx) {
        VectorXd p = atoms.row(a).transpose();
        for (Index j = 0; j < D; ++j) p(j) += static_cast<double>(idx[static_cast<std::size_t>(j)] - half) * h;
        if (inside_clip(spec, p)) pts.push_back(std::move(p));
      });
    }
  }

  MatrixXd out(static_cast<Index>(pts.size()), D);
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Index>(i)) = pts[i].transpose();
  return {std::move(out), h};
}

// ---------------------------------------------------------------------------
// Problem

WorstCaseProblem::WorstCaseProblem(MatrixXd atoms, MatrixXd grid, const BatchLoss& loss, double order, double radius)
    : atoms_(std::move(atoms)), order_(order), radius_(radius) {
  if (atoms_.rows() == 0) throw ParameterError("worst-case problem needs at least one atom");
  if (grid.rows() > 0 && grid.cols() != atoms_.cols()) throw ParameterError("grid and atoms differ in dimension");
  // Make sure every atom is a candidate.
  std::vector<Index> missing;
  atom_index_.resize(static_cast<std::size_t>(atoms_.rows()));
  for (Index i = 0; i < atoms_.rows(); ++i) {
    Index found = -1;
    for (Index g = 0; g < grid.rows() && found < 0; ++g) {
      if (grid.row(g) == atoms_.row(i)) found = g;
    }
    if (found < 0) {
      for (std::size_t k = 0; k < missing.size() && found < 0; ++k) {
        if (atoms_.row(missing[k]) == atoms_.row(i)) found = grid.rows() + static_cast<Index>(k);
      }
    }
    if (found < 0) {
      found = grid.rows() + static_cast<Index>(missing.size());
      missing.push_back(i);
    }
    atom_index_[static_cast<std::size_t>(i)] = static_cast<std::size_t>(found);
  }
  grid_.resize(grid.rows() + static_cast<Index>(missing.size()), atoms_.cols());
  if (grid.rows() > 0) grid_.topRows(grid.rows()) = grid;
  for (std::size_t k = 0; k < missing.size(); ++k) grid_.row(grid.rows() + static_cast<Index>(k)) = atoms_.row(missing[k]);
  grid_loss_ = loss(grid_);
  validate();
}

void WorstCaseProblem::validate() const {
  if (!(order_ >= 1.0)) throw ParameterError("Wasserstein order must be >= 1");
  if (!(radius_ >= 0.0) || !std::isfinite(radius_)) throw ParameterError("radius must be finite and nonnegative");
  if (grid_loss_.size() != grid_.rows()) throw ParameterError("loss returned the wrong number of values");
  if (!grid_loss_.allFinite()) throw ParameterError("loss is not finite on the candidate grid");
}

double WorstCaseProblem::empirical_risk() const {
  double s = 0.0;
  for (std::size_t i = 0; i < atom_count(); ++i) s += atom_loss(i);
  return s / static_cast<double>(atom_count());
}

WorstCaseProblem WorstCaseProblem::with(double order, double radius) const {
  WorstCaseProblem p = *this;
  p.order_ = order;
  p.radius_ = radius;
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Dual route

namespace {

double transport_cost(double dist, double order) { return order == 1.0 ? dist : std::pow(dist, order); }

VectorXd distances(const MatrixXd& grid, const VectorXd& z) {
  return (grid.rowwise() - z.transpose()).cwiseAbs().rowwise().maxCoeff();
}

// Candidates that are not dominated (cheaper-or-equal and at least as lossy)
// by another; phi is attained on this set for every gamma >= 0.
struct Frontier {
  std::vector<double> cost;
  std::vector<double> value;
};

Frontier dual_frontier(const VectorXd& cost, const VectorXd& value) {
  std::vector<Index> order(static_cast<std::size_t>(cost.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    return cost(a) < cost(b) || (cost(a) == cost(b) && value(a) > value(b));
  });
  Frontier f;
  double best = -std::numeric_limits<double>::infinity();
  for (Index i : order) {
    if (value(i) > best) {
      f.cost.push_back(cost(i));
      f.value.push_back(value(i));
      best = value(i);
    }
  }
  return f;
}

std::vector<Frontier> atom_frontiers(const WorstCaseProblem& p) {
  std::vector<Frontier> fs;
  for (std::size_t i = 0; i < p.atom_count(); ++i) {
    const VectorXd dist = distances(p.grid(), p.atoms().row(static_cast<Index>(i)).transpose());
    const VectorXd cost = dist.unaryExpr([&](double r) { return transport_cost(r, p.order()); });
    fs.push_back(dual_frontier(cost, p.grid_loss()));
  }
  return fs;
}

double objective(const std::vector<Frontier>& fs, double budget, double gamma) {
  double total = 0.0;
  for (const auto& f : fs) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < f.cost.size(); ++j) best = std::max(best, f.value[j] - gamma * f.cost[j]);
    total += best;
  }
  return gamma * budget + total / static_cast<double>(fs.size());
}

double infinite_order_value(const WorstCaseProblem& p) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.atom_count(); ++i) {
    const VectorXd dist = distances(p.grid(), p.atoms().row(static_cast<Index>(i)).transpose());
    double best = p.atom_loss(i);
    for (Index g = 0; g < dist.size(); ++g)
      if (dist(g) <= p.radius() * (1.0 + 1e-12)) best = std::max(best, p.grid_loss()(g));
    total += best;
  }
  return total / static_cast<double>(p.atom_count());
}

}  // namespace

PhiResult phi_gamma(const WorstCaseProblem& problem, const VectorXd& z, double gamma) {
  if (!(gamma >= 0.0)) throw ParameterError("gamma must be nonnegative");
  if (problem.grid_size() == 0) throw ParameterError("empty candidate grid");
  if (!std::isfinite(problem.order())) throw ParameterError("phi_gamma requires a finite order");
  const VectorXd dist = distances(problem.grid(), z);
  PhiResult r{-std::numeric_limits<double>::infinity(), 0};
  for (Index g = 0; g < dist.size(); ++g) {
    const double v = problem.grid_loss()(g) - gamma * transport_cost(dist(g), problem.order());
    if (v > r.value) r = {v, static_cast<std::size_t>(g)};
  }
  return r;
}

double dual_objective(const WorstCaseProblem& problem, double gamma) {
  if (!std::isfinite(problem.order())) throw ParameterError("dual objective requires a finite order");
  return objective(atom_frontiers(problem), transport_cost(problem.radius(), problem.order()), gamma);
}

DualResult dual_worst_case(const WorstCaseProblem& problem) {
  if (problem.radius() == 0.0) return {problem.empirical_risk(), std::numeric_limits<double>::infinity()};
  if (!std::isfinite(problem.order())) return {infinite_order_value(problem), std::numeric_limits<double>::quiet_NaN()};

  const auto fs = atom_frontiers(problem);
  const double budget = transport_cost(problem.radius(), problem.order());
  const double range = problem.grid_loss().maxCoeff() - problem.grid_loss().minCoeff();
  const double gamma_max = range / budget + 1.0;
  auto D = [&](double g) { return objective(fs, budget, g); };

  // Geometric scan down from gamma_max locates the bracket.
  std::vector<double> probes{0.0};
  for (int j = 80; j >= 0; --j) probes.push_back(gamma_max * std::ldexp(1.0, -j));
  std::vector<double> values(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) values[i] = D(probes[i]);
  const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
  double lo = probes[best == 0 ? 0 : best - 1];
  double hi = probes[std::min(best + 1, probes.size() - 1)];

  constexpr double inv_phi = 0.6180339887498949;
  double a = hi - inv_phi * (hi - lo), b = lo + inv_phi * (hi - lo);
  double fa = D(a), fb = D(b);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
    if (fa <= fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = D(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = D(b);
    }
  }
  DualResult r{fa, a};
  if (fb < r.value) r = {fb, b};
  if (values[best] < r.value) r = {values[best], probes[best]};

  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (values[i] < r.value - 1e-7) {
      throw ConsistencyError("dual profile not convex: D(" + std::to_string(probes[i]) + ") below the bracketed minimum");
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Primal route

double primal_bruteforce(const WorstCaseProblem& problem) {
  const std::size_t n = problem.atom_count();
  if (n > kBruteForceMaxAtoms || problem.grid_size() > kBruteForceMaxGrid) {
    throw ParameterError("instance too large for brute force");
  }
  if (!std::isfinite(problem.order())) return infinite_order_value(problem);
  const double budget = transport_cost(problem.radius(), problem.order());
  const double mass = 1.0 / static_cast<double>(n);

  // Per-atom candidate lists with dominated destinations removed.
  struct Option {
    double cost, value;
  };
  std::vector<std::vector<Option>> options(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Option> all;
    for (std::size_t g = 0; g < problem.grid_size(); ++g) {
      const double dist = (problem.grid().row(static_cast<Index>(g)) - problem.atoms().row(static_cast<Index>(i))).cwiseAbs().maxCoeff();
      all.push_back({mass * transport_cost(dist, problem.order()), mass * problem.grid_loss()(static_cast<Index>(g))});
    }
    for (const auto& o : all) {
      bool dominated = false;
      for (const auto& q : all) {
        if (q.cost <= o.cost && q.value >= o.value && (q.cost < o.cost || q.value > o.value)) {
          dominated = true;
          break;
        }
      }
      if (!dominated) options[i].push_back(o);
    }
    std::sort(options[i].begin(), options[i].end(), [](const Option& a, const Option& b) { return a.cost < b.cost; });
  }

  // A vertex of the transport polytope moves each atom to one destination,
  // except possibly one atom split between two destinations.
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(n, 0);
  for (std::size_t split = 0; split < n; ++split) {
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < n; ++i)
      if (i != split) others.push_back(i);
    std::fill(pick.begin(), pick.end(), 0);
    while (true) {
      double rest_cost = 0.0, rest_value = 0.0;
      for (std::size_t i : others) {
        rest_cost += options[i][pick[i]].cost;
        rest_value += options[i][pick[i]].value;
      }
      if (rest_cost <= budget) {
        const auto& opts = options[split];
        for (std::size_t a = 0; a < opts.size(); ++a) {
          if (rest_cost + opts[a].cost > budget) break;
          best = std::max(best, rest_value + opts[a].value);
          for (std::size_t b = a + 1; b < opts.size(); ++b) {
            if (rest_cost + opts[b].cost <= budget) continue;
            const double w = (rest_cost + opts[b].cost - budget) / (opts[b].cost - opts[a].cost);
            best = std::max(best, rest_value + w * opts[a].value + (1.0 - w) * opts[b].value);
          }
        }
      }
      std::size_t k = 0;
      while (k < others.size() && ++pick[others[k]] == options[others[k]].size()) pick[others[k++]] = 0;
      if (k == others.size()) break;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Network instances

MatrixXd stack_points(const Dataset& sample) {
  MatrixXd z(sample.x.rows(), sample.x.cols() + 1);
  z << sample.x, sample.y;
  return z;
}

GapReport regularizer_gap_report(const Mlp& net, const LossKind& kind, const Dataset& sample, double order,
                                 double delta, const GridSpec& grid_spec) {
  if (!(delta >= 0.0)) throw ParameterError("radius must be nonnegative");
  const MatrixXd atoms = stack_points(sample);
  Grid grid = build_grid(atoms, grid_spec);
  WorstCaseProblem problem(atoms, std::move(grid.points), network_loss(net, kind), order, delta);
  const DualResult dual = dual_worst_case(problem);
  const double emp = problem.empirical_risk();
  return {dual.value - emp, dual.value, emp, dual.gamma_star, problem.grid_size(), grid.spacing};
}

double regularizer_gap(const Mlp& net, const LossKind& kind, const Dataset& sample, double order, double delta,
                       const GridSpec& grid) {
  return regularizer_gap_report(net, kind, sample, order, delta, grid).gap;
}

double gradient_norm_regularizer(const Mlp& net, const LossKind& kind, const Dataset& sample, double order) {
  if (!(order > 1.0)) throw ParameterError("gradient-norm regularizer needs order k > 1");
  if (sample.size() == 0) throw ParameterError("empty sample");
  const double conj = std::isfinite(order) ? order / (order - 1.0) : 1.0;
  double acc = 0.0;
  for (Index i = 0; i < sample.x.rows(); ++i) {
    const double g1 = composed_gradient(net, kind, sample.x.row(i).transpose(), sample.y(i)).lpNorm<1>();
    acc += std::pow(g1, conj);
  }
  return std::pow(acc / static_cast<double>(sample.size()), 1.0 / conj);
}

}  // namespace wdro
