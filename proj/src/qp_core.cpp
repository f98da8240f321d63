#include "cbf/qp_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace cbf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

WeightMatrix::WeightMatrix(Eigen::MatrixXd r) : r_(std::move(r)) {
  require(r_.rows() == r_.cols(), "WeightMatrix: matrix must be square");
  require(r_.allFinite(), "WeightMatrix: matrix must be finite");
  const double scale = std::max(1.0, r_.cwiseAbs().maxCoeff());
  require((r_ - r_.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
          "WeightMatrix: matrix must be symmetric");
  llt_.compute(r_);
  require(llt_.info() == Eigen::Success, "WeightMatrix: matrix must be positive definite");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r_);
  require(eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() > 0.0,
          "WeightMatrix: matrix must be positive definite");
  inv_sqrt_ = eig.eigenvectors() *
              eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
              eig.eigenvectors().transpose();
}

WeightMatrix WeightMatrix::identity(int m) {
  return WeightMatrix(Eigen::MatrixXd::Identity(m, m));
}

ConstraintSet::ConstraintSet(int input_dim)
    : normals_(0, input_dim), offsets_(0) {
  require(input_dim >= 0, "ConstraintSet: input dimension must be nonnegative");
}

ConstraintSet::ConstraintSet(Eigen::MatrixXd normals, Eigen::VectorXd offsets)
    : normals_(std::move(normals)), offsets_(std::move(offsets)) {
  require(normals_.rows() == offsets_.size(), "ConstraintSet: row count mismatch");
  require(normals_.allFinite() && offsets_.allFinite(), "ConstraintSet: rows must be finite");
}

void ConstraintSet::add_row(const Eigen::VectorXd& normal, double offset) {
  require(normal.size() == normals_.cols(), "ConstraintSet::add_row: dimension mismatch");
  require(normal.allFinite() && std::isfinite(offset), "ConstraintSet::add_row: non-finite row");
  normals_.conservativeResize(normals_.rows() + 1, Eigen::NoChange);
  normals_.row(normals_.rows() - 1) = normal.transpose();
  offsets_.conservativeResize(offsets_.size() + 1);
  offsets_(offsets_.size() - 1) = offset;
}

Eigen::VectorXd ConstraintSet::residuals(const Eigen::VectorXd& u) const {
  require(u.size() == normals_.cols(), "ConstraintSet::residuals: dimension mismatch");
  return normals_ * u + offsets_;
}

Eigen::MatrixXd ConstraintSet::gather_normals(std::span<const int> indices) const {
  Eigen::MatrixXd out(normals_.cols(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    require(indices[j] >= 0 && indices[j] < size(), "gather_normals: index out of range");
    out.col(static_cast<Eigen::Index>(j)) = normals_.row(indices[j]).transpose();
  }
  return out;
}

Eigen::VectorXd ConstraintSet::gather_offsets(std::span<const int> indices) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    require(indices[j] >= 0 && indices[j] < size(), "gather_offsets: index out of range");
    out(static_cast<Eigen::Index>(j)) = offsets_(indices[j]);
  }
  return out;
}

ActiveSet::ActiveSet(std::vector<int> indices) : indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  for (std::size_t j = 0; j < indices_.size(); ++j) {
    require(indices_[j] >= 0, "ActiveSet: negative index");
    require(j == 0 || indices_[j] != indices_[j - 1], "ActiveSet: duplicate index");
  }
}

ActiveSet::ActiveSet(std::initializer_list<int> indices)
    : ActiveSet(std::vector<int>(indices)) {}

bool ActiveSet::contains(int i) const {
  return std::binary_search(indices_.begin(), indices_.end(), i);
}

ActiveSet ActiveSet::with(int i) const {
  std::vector<int> out = indices_;
  out.push_back(i);
  return ActiveSet(std::move(out));
}

ActiveSet ActiveSet::without(int i) const {
  std::vector<int> out;
  out.reserve(indices_.size());
  for (int v : indices_)
    if (v != i) out.push_back(v);
  ActiveSet result;
  result.indices_ = std::move(out);  // already sorted and unique
  return result;
}

ActiveSet ActiveSet::clipped(int p) const {
  ActiveSet result;
  for (int v : indices_)
    if (v < p) result.indices_.push_back(v);
  return result;
}

ActiveSet ActiveSet::complement(int p) const {
  ActiveSet result;
  result.indices_.reserve(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i)
    if (!contains(i)) result.indices_.push_back(i);
  return result;
}

std::string ActiveSet::to_string(char sep) const {
  std::string out;
  for (std::size_t j = 0; j < indices_.size(); ++j) {
    if (j) out.push_back(sep);
    out += std::to_string(indices_[j]);
  }
  return out;
}

Eigen::MatrixXd GramFactorization::solve(const Eigen::MatrixXd& rhs) const {
  if (set_size() == 0) return Eigen::MatrixXd(0, rhs.cols());
  return gram_llt.solve(rhs);
}

namespace detail {

std::optional<GramFactorization> gram_factorize_ordered(const ConstraintSet& constraints,
                                                        const WeightMatrix& weight,
                                                        std::span<const int> indices,
                                                        const Tolerances& tol) {
  require(weight.dim() == constraints.input_dim(),
          "gram_factorize: weight/constraint dimension mismatch");
  GramFactorization gram;
  gram.normals = constraints.gather_normals(indices);
  gram.offsets = constraints.gather_offsets(indices);
  if (indices.empty()) {
    gram.weighted_normals = Eigen::MatrixXd(weight.dim(), 0);
    gram.sigma_min = kInf;
    gram.sigma_max = 0.0;
    return gram;
  }

  const Eigen::MatrixXd whitened = weight.inverse_sqrt() * gram.normals;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(whitened);
  gram.sigma_min = svd.singularValues().minCoeff();
  gram.sigma_max = svd.singularValues().maxCoeff();
  if (gram.normals.cols() > gram.normals.rows() ||
      gram.sigma_min <= tol.rank * std::max(gram.sigma_max, 1.0)) {
    return std::nullopt;
  }

  gram.weighted_normals = weight.solve(gram.normals);
  gram.gram_llt.compute(gram.normals.transpose() * gram.weighted_normals);
  if (gram.gram_llt.info() != Eigen::Success) return std::nullopt;
  return gram;
}

std::optional<OrderedCandidate> candidate_ordered(const ConstraintSet& constraints,
                                                  const Eigen::VectorXd& nominal,
                                                  const WeightMatrix& weight,
                                                  std::span<const int> indices,
                                                  const Tolerances& tol) {
  require(nominal.size() == constraints.input_dim(),
          "candidate: nominal/constraint dimension mismatch");
  auto gram = gram_factorize_ordered(constraints, weight, indices, tol);
  if (!gram) return std::nullopt;
  OrderedCandidate out;
  out.multipliers = gram->solve(gram->normals.transpose() * nominal + gram->offsets);
  out.control = nominal - gram->weighted_normals * out.multipliers;
  return out;
}

Candidate candidate_from_gram(const GramFactorization& gram, const Eigen::VectorXd& nominal,
                              const ActiveSet& set) {
  Candidate cand;
  cand.index_set = set;
  cand.multipliers = gram.solve(gram.normals.transpose() * nominal + gram.offsets);
  cand.control = nominal - gram.weighted_normals * cand.multipliers;
  return cand;
}

}  // namespace detail

std::optional<GramFactorization> gram_factorize(const ConstraintSet& constraints,
                                                const WeightMatrix& weight, const ActiveSet& set,
                                                const Tolerances& tol) {
  if (!set.empty())
    require(set[set.size() - 1] < constraints.size(), "gram_factorize: index out of range");
  return detail::gram_factorize_ordered(constraints, weight, set.indices(), tol);
}

std::optional<Candidate> candidate(const ConstraintSet& constraints,
                                   const Eigen::VectorXd& nominal, const WeightMatrix& weight,
                                   const ActiveSet& set, const Tolerances& tol) {
  auto gram = gram_factorize(constraints, weight, set, tol);
  if (!gram) return std::nullopt;
  return detail::candidate_from_gram(*gram, nominal, set);
}

KKTReport kkt_residuals(const Candidate& cand, const ConstraintSet& constraints,
                        const Eigen::VectorXd& nominal, const WeightMatrix& weight) {
  require(cand.multipliers.size() == cand.index_set.size(),
          "kkt_residuals: multiplier/index count mismatch");
  KKTReport report;

  const Eigen::MatrixXd b_active = constraints.gather_normals(cand.index_set.indices());
  report.stationarity =
      (weight.matrix() * (cand.control - nominal) + b_active * cand.multipliers).norm();
  report.multiplier_scale =
      cand.multipliers.size() ? cand.multipliers.cwiseAbs().maxCoeff() : 0.0;

  const int p = constraints.size();
  if (p == 0) {
    report.max_primal_violation = -kInf;
    report.min_multiplier = 0.0;
    report.max_complementarity = 0.0;
    return report;
  }

  const Eigen::VectorXd resid = constraints.residuals(cand.control);
  report.max_primal_violation = resid.maxCoeff();

  // multipliers extended by zeros off the index set
  double min_mult = cand.index_set.size() == p ? kInf : 0.0;
  if (cand.multipliers.size() > 0) min_mult = std::min(min_mult, cand.multipliers.minCoeff());
  report.min_multiplier = min_mult;

  double max_comp = 0.0;
  for (int j = 0; j < cand.index_set.size(); ++j)
    max_comp = std::max(max_comp, std::abs(cand.multipliers(j) * resid(cand.index_set[j])));
  report.max_complementarity = max_comp;
  return report;
}

double KKTReport::max_violation() const {
  double v = stationarity;
  if (std::isfinite(max_primal_violation)) v = std::max(v, max_primal_violation);
  v = std::max(v, -min_multiplier);
  v = std::max(v, max_complementarity);
  return std::max(v, 0.0);
}

}  // namespace cbf
