#pragma once

#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "cbf/types.hpp"

namespace cbf {

// Input-space metric R of the projection cost 0.5 * ||u - k||_R^2.
// Must be symmetric (1e-12 relative) and positive definite; both are
// checked at construction, positive definiteness by a Cholesky
// factorization succeeding.
class WeightMatrix {
 public:
  explicit WeightMatrix(Eigen::MatrixXd r);

  static WeightMatrix identity(int m);

  int dim() const { return static_cast<int>(r_.rows()); }
  const Eigen::MatrixXd& matrix() const { return r_; }

  // R^{-1} * rhs
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const { return llt_.solve(rhs); }

  // R^{-1/2}, used by the metric-aware rank test
  const Eigen::MatrixXd& inverse_sqrt() const { return inv_sqrt_; }

 private:
  Eigen::MatrixXd r_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd inv_sqrt_;
};

// Stacked affine-in-input constraints b_i^T u + a_i <= 0. Row order is the
// constraint index order and is stable after construction.
class ConstraintSet {
 public:
  explicit ConstraintSet(int input_dim);
  ConstraintSet(Eigen::MatrixXd normals, Eigen::VectorXd offsets);

  int size() const { return static_cast<int>(offsets_.size()); }
  int input_dim() const { return static_cast<int>(normals_.cols()); }

  void add_row(const Eigen::VectorXd& normal, double offset);

  Eigen::VectorXd normal(int i) const { return normals_.row(i).transpose(); }
  double offset(int i) const { return offsets_(i); }
  const Eigen::MatrixXd& normals() const { return normals_; }  // p x m, row i is b_i^T
  const Eigen::VectorXd& offsets() const { return offsets_; }

  // b_i^T u + a_i for every row
  Eigen::VectorXd residuals(const Eigen::VectorXd& u) const;

  // Columns b_i for i in `indices` (m x k), and the matching offsets a_I.
  Eigen::MatrixXd gather_normals(std::span<const int> indices) const;
  Eigen::VectorXd gather_offsets(std::span<const int> indices) const;

 private:
  Eigen::MatrixXd normals_;
  Eigen::VectorXd offsets_;
};

// Strictly increasing, duplicate-free set of constraint indices. Arbitrary
// input order is normalized by sorting; duplicates and negatives throw.
class ActiveSet {
 public:
  ActiveSet() = default;
  explicit ActiveSet(std::vector<int> indices);
  ActiveSet(std::initializer_list<int> indices);

  int size() const { return static_cast<int>(indices_.size()); }
  bool empty() const { return indices_.empty(); }
  bool contains(int i) const;
  int operator[](int j) const { return indices_[static_cast<std::size_t>(j)]; }
  std::span<const int> indices() const { return indices_; }

  ActiveSet with(int i) const;
  ActiveSet without(int i) const;
  // Drops indices outside [0, p); used when a cached set outlives its problem.
  ActiveSet clipped(int p) const;
  ActiveSet complement(int p) const;

  bool operator==(const ActiveSet&) const = default;
  auto operator<=>(const ActiveSet&) const = default;

  std::string to_string(char sep = ';') const;

 private:
  std::vector<int> indices_;
};

// Factorization of the Gram matrix H_I = B_I^T R^{-1} B_I for a trial set
// whose B_I passed the full-column-rank test, together with the gathered
// pieces the candidate formulas need.
struct GramFactorization {
  Eigen::MatrixXd normals;           // B_I, m x k
  Eigen::MatrixXd weighted_normals;  // R^{-1} B_I
  Eigen::VectorXd offsets;           // a_I
  Eigen::LLT<Eigen::MatrixXd> gram_llt;
  double sigma_min = 0.0;  // singular values of R^{-1/2} B_I
  double sigma_max = 0.0;

  int set_size() const { return static_cast<int>(offsets.size()); }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;  // H_I^{-1} rhs
};

// Closed-form KKT quantities for a trial index set: lambda_I, u_I.
struct Candidate {
  Eigen::VectorXd multipliers;  // ordered like index_set.indices()
  Eigen::VectorXd control;
  ActiveSet index_set;
};

// The four KKT residual magnitudes of a candidate against the full row set,
// with multipliers extended by zeros off the index set. The reported values
// are raw; passes() checks them against tol * (1 + max |lambda|), since the
// attainable accuracy of the active equalities and complementarity products
// degrades with the multiplier scale.
struct KKTReport {
  double stationarity = 0.0;
  double max_primal_violation = 0.0;  // -inf sentinel when there are no rows
  double min_multiplier = 0.0;
  double max_complementarity = 0.0;
  double multiplier_scale = 0.0;  // max |lambda_i|

  // Worst of the four expressed as a nonnegative violation magnitude.
  double max_violation() const;
  bool passes(double tol) const { return max_violation() <= tol * (1.0 + multiplier_scale); }
};

// B_I is declared full column rank iff the smallest singular value of
// R^{-1/2} B_I exceeds tol.rank * max(largest singular value, 1).
// Returns nullopt on rank deficiency (a verdict, not an error).
// The empty set yields an empty factorization and never fails.
std::optional<GramFactorization> gram_factorize(const ConstraintSet& constraints,
                                                const WeightMatrix& weight, const ActiveSet& set,
                                                const Tolerances& tol = {});

// lambda_I = H_I^{-1} (B_I^T k + a_I), u_I = k - R^{-1} B_I lambda_I.
// For the empty set this is the identity on the nominal input.
std::optional<Candidate> candidate(const ConstraintSet& constraints,
                                   const Eigen::VectorXd& nominal, const WeightMatrix& weight,
                                   const ActiveSet& set, const Tolerances& tol = {});

KKTReport kkt_residuals(const Candidate& cand, const ConstraintSet& constraints,
                        const Eigen::VectorXd& nominal, const WeightMatrix& weight);

namespace detail {

// Order-sensitive variants: multiplier j corresponds to indices[j]. The
// public entry points pass the sorted ActiveSet order.
std::optional<GramFactorization> gram_factorize_ordered(const ConstraintSet& constraints,
                                                        const WeightMatrix& weight,
                                                        std::span<const int> indices,
                                                        const Tolerances& tol);

struct OrderedCandidate {
  Eigen::VectorXd multipliers;
  Eigen::VectorXd control;
};

std::optional<OrderedCandidate> candidate_ordered(const ConstraintSet& constraints,
                                                  const Eigen::VectorXd& nominal,
                                                  const WeightMatrix& weight,
                                                  std::span<const int> indices,
                                                  const Tolerances& tol);

Candidate candidate_from_gram(const GramFactorization& gram, const Eigen::VectorXd& nominal,
                              const ActiveSet& set);

}  // namespace detail

}  // namespace cbf
