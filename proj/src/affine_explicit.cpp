#include "cbf/affine_explicit.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include <Eigen/SVD>

namespace cbf {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Lexicographic subsets of fixed cardinality, shared with the oracle's
// visiting order so boundary tie-breaks agree.
template <typename Fn>
void for_each_subset_of_size(int p, int k, Fn&& fn) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) idx[static_cast<std::size_t>(j)] = j;
  if (k == 0) {
    fn(idx);
    return;
  }
  if (k > p) return;
  while (true) {
    fn(idx);
    int j = k - 1;
    while (j >= 0 && idx[static_cast<std::size_t>(j)] == p - k + j) --j;
    if (j < 0) return;
    ++idx[static_cast<std::size_t>(j)];
    for (int r = j + 1; r < k; ++r)
      idx[static_cast<std::size_t>(r)] = idx[static_cast<std::size_t>(r - 1)] + 1;
  }
}

void write_matrix(std::ostream& out, const char* tag, const Eigen::MatrixXd& mat) {
  out << tag << ' ' << mat.rows() << ' ' << mat.cols();
  for (Eigen::Index r = 0; r < mat.rows(); ++r)
    for (Eigen::Index c = 0; c < mat.cols(); ++c) out << ' ' << mat(r, c);
  out << '\n';
}

Eigen::MatrixXd read_matrix(std::istream& in, const std::string& tag) {
  std::string seen;
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> seen >> rows >> cols) || seen != tag)
    throw std::runtime_error("region table: expected '" + tag + "' record");
  if (rows < 0 || cols < 0) throw std::runtime_error("region table: negative dimensions");
  Eigen::MatrixXd mat(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (!(in >> mat(r, c))) throw std::runtime_error("region table: truncated matrix");
  return mat;
}

}  // namespace

void AffineProblem::validate() const {
  require(normals.rows() == eta.size() && gamma.rows() == eta.size(),
          "AffineProblem: row count mismatch");
  require(gain.rows() == normals.cols() && offset.size() == normals.cols(),
          "AffineProblem: nominal shape mismatch");
  require(gain.cols() == gamma.cols(), "AffineProblem: state dimension mismatch");
  require(weight.rows() == normals.cols() && weight.cols() == normals.cols(),
          "AffineProblem: weight shape mismatch");
}

ConstraintSet AffineProblem::constraints_at(const Eigen::VectorXd& x) const {
  require(x.size() == state_dim(), "AffineProblem: state dimension mismatch");
  return ConstraintSet(normals, gamma * x + eta);
}

Eigen::VectorXd AffineProblem::nominal_at(const Eigen::VectorXd& x) const {
  require(x.size() == state_dim(), "AffineProblem: state dimension mismatch");
  return gain * x + offset;
}

bool AffineRegionLaw::contains(const Eigen::VectorXd& x, const Tolerances& tol) const {
  for (const PolyhedronRow& row : polyhedron) {
    const double v = row.normal.dot(x) + row.offset;
    if (row.strict ? (v >= tol.primal) : (v > tol.dual)) return false;
  }
  return true;
}

std::optional<AffineRegionLaw> precompute_region(const AffineProblem& problem,
                                                 const ActiveSet& set, const Tolerances& tol) {
  problem.validate();
  const int n = problem.state_dim();
  const int p = problem.rows();
  if (!set.empty()) require(set[set.size() - 1] < p, "precompute_region: index out of range");

  const WeightMatrix weight(problem.weight);
  const ConstraintSet rows_only(problem.normals, Eigen::VectorXd::Zero(p));
  auto gram = gram_factorize(rows_only, weight, set, tol);
  if (!gram) return std::nullopt;

  AffineRegionLaw law;
  law.index_set = set;

  const int k = set.size();
  Eigen::MatrixXd gamma_set(k, n);
  Eigen::VectorXd eta_set(k);
  for (int j = 0; j < k; ++j) {
    gamma_set.row(j) = problem.gamma.row(set[j]);
    eta_set(j) = problem.eta(set[j]);
  }

  // G = H^{-1} (B^T K + Gamma), g = H^{-1} (B^T kappa + eta)
  law.multiplier_gain = gram->solve(gram->normals.transpose() * problem.gain + gamma_set);
  law.multiplier_offset =
      gram->solve(gram->normals.transpose() * problem.offset + eta_set);
  law.control_gain = problem.gain - gram->weighted_normals * law.multiplier_gain;
  law.control_offset = problem.offset - gram->weighted_normals * law.multiplier_offset;

  // |I| non-strict dual rows: -(G x + g) <= 0
  for (int j = 0; j < k; ++j)
    law.polyhedron.push_back(PolyhedronRow{-law.multiplier_gain.row(j).transpose(),
                                           -law.multiplier_offset(j), false});
  // p - |I| strict primal rows: b_j^T (K_I x + kappa_I) + gamma_j^T x + eta_j < 0
  for (int j = 0; j < p; ++j) {
    if (set.contains(j)) continue;
    const Eigen::VectorXd b = problem.normals.row(j).transpose();
    law.polyhedron.push_back(
        PolyhedronRow{law.control_gain.transpose() * b + problem.gamma.row(j).transpose(),
                      b.dot(law.control_offset) + problem.eta(j), true});
  }
  return law;
}

std::vector<AffineRegionLaw> enumerate_regions(const AffineProblem& problem,
                                               const OracleOptions& opts) {
  problem.validate();
  const int p = problem.rows();
  const int n = problem.state_dim();
  const int kmax = std::min(p, problem.input_dim());

  const std::size_t needed = count_subsets(p, kmax, opts.subset_budget);
  if (needed > opts.subset_budget)
    throw BudgetExceededError("enumerate_regions", needed, opts.subset_budget);

  const WeightMatrix probe_weight = WeightMatrix::identity(n);
  const Eigen::VectorXd probe_nominal = Eigen::VectorXd::Zero(n);

  std::vector<AffineRegionLaw> laws;
  for (int k = 0; k <= kmax; ++k) {
    for_each_subset_of_size(p, k, [&](const std::vector<int>& idx) {
      auto law = precompute_region(problem, ActiveSet(idx), opts.tol);
      if (!law) return;
      // Emptiness probe over the closed relaxation of the polyhedron.
      if (!law->polyhedron.empty()) {
        Eigen::MatrixXd normals(static_cast<Eigen::Index>(law->polyhedron.size()), n);
        Eigen::VectorXd offsets(static_cast<Eigen::Index>(law->polyhedron.size()));
        for (std::size_t r = 0; r < law->polyhedron.size(); ++r) {
          normals.row(static_cast<Eigen::Index>(r)) = law->polyhedron[r].normal.transpose();
          offsets(static_cast<Eigen::Index>(r)) = law->polyhedron[r].offset;
        }
        const FeasibilityProbe probe = probe_feasibility(ConstraintSet(normals, offsets),
                                                         probe_nominal, probe_weight, opts);
        law->verified_empty = probe.known && !probe.feasible;
      }
      laws.push_back(std::move(*law));
    });
  }
  return laws;
}

double lipschitz_constant(std::span<const AffineRegionLaw> laws,
                          const std::function<bool(const AffineRegionLaw&)>& filter) {
  double best = -1.0;
  for (const AffineRegionLaw& law : laws) {
    if (law.verified_empty) continue;
    if (filter && !filter(law)) continue;
    const double norm =
        law.control_gain.size() == 0
            ? 0.0
            : Eigen::JacobiSVD<Eigen::MatrixXd>(law.control_gain).singularValues().maxCoeff();
    best = std::max(best, norm);
  }
  require(best >= 0.0, "lipschitz_constant: empty selection");
  return best;
}

AffineEvaluator::AffineEvaluator(std::span<const AffineRegionLaw> laws, const Tolerances& tol)
    : laws_(laws), tol_(tol) {}

std::optional<AffineEvaluation> AffineEvaluator::evaluate(const Eigen::VectorXd& x) {
  if (last_hit_ < laws_.size() && laws_[last_hit_].contains(x, tol_)) {
    const AffineRegionLaw& law = laws_[last_hit_];
    return AffineEvaluation{law.control_gain * x + law.control_offset, law.index_set};
  }
  for (std::size_t i = 0; i < laws_.size(); ++i) {
    if (i == last_hit_) continue;
    if (laws_[i].contains(x, tol_)) {
      last_hit_ = i;
      const AffineRegionLaw& law = laws_[i];
      return AffineEvaluation{law.control_gain * x + law.control_offset, law.index_set};
    }
  }
  return std::nullopt;
}

std::optional<AffineEvaluation> eval_affine(std::span<const AffineRegionLaw> laws,
                                            const Eigen::VectorXd& x, const Tolerances& tol) {
  for (const AffineRegionLaw& law : laws) {
    if (law.contains(x, tol))
      return AffineEvaluation{law.control_gain * x + law.control_offset, law.index_set};
  }
  return std::nullopt;
}

void write_region_table(std::ostream& out, const RegionTable& table) {
  const auto prec = out.precision(17);
  out << "cbf-region-table 1\n";
  out << "state_dim " << table.state_dim << '\n';
  out << "decision_dim " << table.decision_dim << '\n';
  out << "rows " << table.rows << '\n';
  out << "lipschitz " << table.lipschitz << '\n';
  out << "laws " << table.laws.size() << '\n';
  for (std::size_t i = 0; i < table.laws.size(); ++i) {
    const AffineRegionLaw& law = table.laws[i];
    out << "law " << i << '\n';
    out << "index_set " << law.index_set.size();
    for (int v : law.index_set.indices()) out << ' ' << v;
    out << '\n';
    out << "empty " << (law.verified_empty ? 1 : 0) << '\n';
    write_matrix(out, "multiplier_gain", law.multiplier_gain);
    write_matrix(out, "multiplier_offset", law.multiplier_offset);
    write_matrix(out, "control_gain", law.control_gain);
    write_matrix(out, "control_offset", law.control_offset);
    out << "polyhedron " << law.polyhedron.size() << '\n';
    for (const PolyhedronRow& row : law.polyhedron) {
      out << "prow " << (row.strict ? 1 : 0) << ' ' << row.offset;
      for (Eigen::Index j = 0; j < row.normal.size(); ++j) out << ' ' << row.normal(j);
      out << '\n';
    }
  }
  out.precision(prec);
}

RegionTable read_region_table(std::istream& in) {
  auto expect = [&in](const std::string& tag) {
    std::string seen;
    if (!(in >> seen) || seen != tag)
      throw std::runtime_error("region table: expected '" + tag + "', got '" + seen + "'");
  };

  expect("cbf-region-table");
  int version = 0;
  if (!(in >> version) || version != 1)
    throw std::runtime_error("region table: unsupported version");

  RegionTable table;
  std::size_t law_count = 0;
  expect("state_dim");
  in >> table.state_dim;
  expect("decision_dim");
  in >> table.decision_dim;
  expect("rows");
  in >> table.rows;
  expect("lipschitz");
  in >> table.lipschitz;
  expect("laws");
  in >> law_count;
  if (!in) throw std::runtime_error("region table: bad header");

  for (std::size_t i = 0; i < law_count; ++i) {
    expect("law");
    std::size_t idx = 0;
    in >> idx;
    if (!in || idx != i) throw std::runtime_error("region table: law index mismatch");

    AffineRegionLaw law;
    expect("index_set");
    int k = 0;
    in >> k;
    std::vector<int> indices(static_cast<std::size_t>(std::max(k, 0)));
    for (int& v : indices) in >> v;
    law.index_set = ActiveSet(std::move(indices));

    expect("empty");
    int empty_flag = 0;
    in >> empty_flag;
    law.verified_empty = empty_flag != 0;

    law.multiplier_gain = read_matrix(in, "multiplier_gain");
    law.multiplier_offset = read_matrix(in, "multiplier_offset");
    law.control_gain = read_matrix(in, "control_gain");
    law.control_offset = read_matrix(in, "control_offset");

    expect("polyhedron");
    std::size_t row_count = 0;
    in >> row_count;
    for (std::size_t r = 0; r < row_count; ++r) {
      expect("prow");
      PolyhedronRow row;
      int strict_flag = 0;
      in >> strict_flag >> row.offset;
      row.strict = strict_flag != 0;
      row.normal.resize(table.state_dim);
      for (int j = 0; j < table.state_dim; ++j) in >> row.normal(j);
      law.polyhedron.push_back(std::move(row));
    }
    if (!in) throw std::runtime_error("region table: truncated law record");
    table.laws.push_back(std::move(law));
  }
  return table;
}

}  // namespace cbf
