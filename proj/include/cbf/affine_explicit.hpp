#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "cbf/oracle.hpp"

namespace cbf {

// Parametric QP data with constant row normals and affine offsets/nominal:
// rows b_i^T u + gamma_i^T x + eta_i <= 0, nominal k(x) = K x + kappa.
struct AffineProblem {
  Eigen::MatrixXd normals;  // p x m, row i is b_i^T
  Eigen::MatrixXd gamma;    // p x n
  Eigen::VectorXd eta;      // p
  Eigen::MatrixXd gain;     // K, m x n
  Eigen::VectorXd offset;   // kappa, m
  Eigen::MatrixXd weight;   // R, m x m

  int rows() const { return static_cast<int>(eta.size()); }
  int state_dim() const { return static_cast<int>(gamma.cols()); }
  int input_dim() const { return static_cast<int>(normals.cols()); }

  void validate() const;  // throws std::invalid_argument on shape mismatch

  ConstraintSet constraints_at(const Eigen::VectorXd& x) const;
  Eigen::VectorXd nominal_at(const Eigen::VectorXd& x) const;
};

// One inequality of a region polyhedron: normal^T x + offset {<,<=} 0.
struct PolyhedronRow {
  Eigen::VectorXd normal;
  double offset = 0.0;
  bool strict = false;
};

// Precomputed affine law and polyhedron of one region: lambda_I(x) = G x + g,
// u_I(x) = K_I x + kappa_I. The polyhedron holds |I| non-strict dual rows
// (multipliers nonnegative) followed by p - |I| strict primal rows.
struct AffineRegionLaw {
  ActiveSet index_set;
  Eigen::MatrixXd multiplier_gain;    // G, |I| x n
  Eigen::VectorXd multiplier_offset;  // g
  Eigen::MatrixXd control_gain;       // K_I, m x n
  Eigen::VectorXd control_offset;     // kappa_I
  std::vector<PolyhedronRow> polyhedron;
  bool verified_empty = false;

  bool contains(const Eigen::VectorXd& x, const Tolerances& tol = {}) const;
};

std::optional<AffineRegionLaw> precompute_region(const AffineProblem& problem,
                                                 const ActiveSet& set,
                                                 const Tolerances& tol = {});

// All full-rank subsets with |I| <= m, each with its law. Regions whose
// closed relaxation is verifiably empty are flagged but retained. Subject
// to the same subset budget as the enumeration oracle.
std::vector<AffineRegionLaw> enumerate_regions(const AffineProblem& problem,
                                               const OracleOptions& opts = {});

// max ||K_I||_2 over retained laws (verifiably empty regions are skipped;
// `filter`, when set, further restricts the selection). Throws on an empty
// selection.
double lipschitz_constant(std::span<const AffineRegionLaw> laws,
                          const std::function<bool(const AffineRegionLaw&)>& filter = {});

struct AffineEvaluation {
  Eigen::VectorXd control;
  ActiveSet index_set;
};

// Region lookup with a per-evaluator last-hit cache. Returns nullopt when no
// region contains x (infeasible state or tolerance failure); callers fall
// back to an oracle in that case.
class AffineEvaluator {
 public:
  explicit AffineEvaluator(std::span<const AffineRegionLaw> laws, const Tolerances& tol = {});

  std::optional<AffineEvaluation> evaluate(const Eigen::VectorXd& x);

 private:
  std::span<const AffineRegionLaw> laws_;
  Tolerances tol_;
  std::size_t last_hit_ = 0;
};

// Stateless single lookup in subset enumeration order.
std::optional<AffineEvaluation> eval_affine(std::span<const AffineRegionLaw> laws,
                                            const Eigen::VectorXd& x,
                                            const Tolerances& tol = {});

// Versioned flat-file export of the precomputed laws (format documented in
// docs/region_table.md).
struct RegionTable {
  int state_dim = 0;
  int decision_dim = 0;
  int rows = 0;
  double lipschitz = 0.0;
  std::vector<AffineRegionLaw> laws;
};

void write_region_table(std::ostream& out, const RegionTable& table);
RegionTable read_region_table(std::istream& in);  // throws std::runtime_error on bad input

}  // namespace cbf
