#pragma once

// Worst-case risk over a Wasserstein ball around a finite empirical
// distribution, restricted to a finite candidate support. Two independent
// routes are provided: the scalar dual in gamma and a brute-force transport
// program for small instances.

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "wdro/dataset.hpp"
#include "wdro/losses.hpp"
#include "wdro/nn.hpp"

namespace wdro {

inline constexpr double kInfiniteOrder = std::numeric_limits<double>::infinity();

/// Loss evaluated on a batch of stacked points z = (x, y), one per row.
using BatchLoss = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;
using PointLoss = std::function<double(const Eigen::VectorXd&)>;

BatchLoss pointwise(PointLoss loss);
/// z -> loss(f(x) - y) for a scalar-output network.
BatchLoss network_loss(const Mlp& net, const LossKind& kind);

/// Candidate-support construction. Coordinates are ordered (x_1..x_d, y).
struct GridSpec {
  double margin = 0.0;   // inflation per coordinate
  double spacing = 0.0;  // lattice step (coarsened to honour max_points)
  bool local = false;    // union of boxes centred on each atom instead of one bounding box
  std::size_t max_points = 200000;
  /// Optional [lo, hi] per coordinate; points outside are dropped.
  std::vector<std::optional<std::pair<double, double>>> clip;

  /// Bounding box inflated by 2*delta, spacing delta/10.
  static GridSpec standard(double delta, std::size_t max_points = 200000);
};

struct Grid {
  Eigen::MatrixXd points;  // one candidate per row
  double spacing = 0.0;    // step actually used
};

Grid build_grid(const Eigen::MatrixXd& atoms, const GridSpec& spec);

/// Finite-support instance: uniform atoms, candidate grid G (always
/// containing the atoms), order k and radius delta under the inf-norm
/// ground metric.
class WorstCaseProblem {
 public:
  WorstCaseProblem(Eigen::MatrixXd atoms, Eigen::MatrixXd grid, const BatchLoss& loss, double order, double radius);

  const Eigen::MatrixXd& atoms() const { return atoms_; }
  const Eigen::MatrixXd& grid() const { return grid_; }
  const Eigen::VectorXd& grid_loss() const { return grid_loss_; }
  double order() const { return order_; }
  double radius() const { return radius_; }
  std::size_t atom_count() const { return static_cast<std::size_t>(atoms_.rows()); }
  std::size_t grid_size() const { return static_cast<std::size_t>(grid_.rows()); }
  /// Grid row holding atom i.
  std::size_t atom_index(std::size_t i) const { return atom_index_[i]; }
  double atom_loss(std::size_t i) const { return grid_loss_(static_cast<Eigen::Index>(atom_index_[i])); }

  /// Mean loss over the atoms.
  double empirical_risk() const;

  /// Same atoms, grid and loss values with a different radius or order.
  WorstCaseProblem with(double order, double radius) const;

 private:
  WorstCaseProblem() = default;
  void validate() const;

  Eigen::MatrixXd atoms_;
  Eigen::MatrixXd grid_;
  Eigen::VectorXd grid_loss_;
  std::vector<std::size_t> atom_index_;
  double order_ = 1.0;
  double radius_ = 0.0;
};

struct PhiResult {
  double value;
  std::size_t argmax;  // grid row
};

/// max over the grid of loss(z') - gamma ||z' - z||_inf^k.
PhiResult phi_gamma(const WorstCaseProblem& problem, const Eigen::VectorXd& z, double gamma);

struct DualResult {
  double value;
  double gamma_star;  // +inf at zero radius, NaN for infinite order
};

/// inf_{gamma >= 0} gamma delta^k + mean_i phi_gamma(z_i) by golden-section
/// search; throws ConsistencyError if the sampled profile is not convex.
DualResult dual_worst_case(const WorstCaseProblem& problem);
/// The dual objective at a fixed gamma.
double dual_objective(const WorstCaseProblem& problem, double gamma);

/// Exact transport-program optimum by vertex enumeration. Requires at most
/// three atoms and 200 grid points.
double primal_bruteforce(const WorstCaseProblem& problem);

inline constexpr std::size_t kBruteForceMaxAtoms = 3;
inline constexpr std::size_t kBruteForceMaxGrid = 200;

/// Stacks covariates and responses into one point per row.
Eigen::MatrixXd stack_points(const Dataset& sample);

struct GapReport {
  double gap;        // worst-case minus empirical risk
  double worst_case;
  double empirical;
  double gamma_star;
  std::size_t grid_points;
  double spacing;
};

GapReport regularizer_gap_report(const Mlp& net, const LossKind& kind, const Dataset& sample, double order,
                                 double delta, const GridSpec& grid);
double regularizer_gap(const Mlp& net, const LossKind& kind, const Dataset& sample, double order, double delta,
                       const GridSpec& grid);

/// E[||grad_z loss||_1^{k*}]^{1/k*} over the sample, with 1/k + 1/k* = 1.
double gradient_norm_regularizer(const Mlp& net, const LossKind& kind, const Dataset& sample, double order);

}  // namespace wdro
