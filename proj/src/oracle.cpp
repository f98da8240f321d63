#include "cbf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

namespace cbf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lexicographic visit of all cardinality-k subsets of [0, p). Returns the
// subset for which `fn` returned true, if any.
template <typename Fn>
bool for_each_subset_of_size(int p, int k, Fn&& fn) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) idx[static_cast<std::size_t>(j)] = j;
  if (k == 0) return fn(idx);
  while (true) {
    if (fn(idx)) return true;
    int j = k - 1;
    while (j >= 0 && idx[static_cast<std::size_t>(j)] == p - k + j) --j;
    if (j < 0) return false;
    ++idx[static_cast<std::size_t>(j)];
    for (int r = j + 1; r < k; ++r)
      idx[static_cast<std::size_t>(r)] = idx[static_cast<std::size_t>(r - 1)] + 1;
  }
}

SolveResult make_optimal(const Candidate& cand, int p, long iterations) {
  SolveResult result;
  result.control = cand.control;
  result.multipliers = Eigen::VectorXd::Zero(p);
  for (int j = 0; j < cand.index_set.size(); ++j)
    result.multipliers(cand.index_set[j]) = cand.multipliers(j);
  result.active_set = cand.index_set;
  result.iterations = iterations;
  result.status = SolveStatus::Optimal;
  return result;
}

SolveResult theta_active_set_impl(const ConstraintSet& constraints,
                                  const Eigen::VectorXd& nominal, const WeightMatrix& weight,
                                  const ActiveSet& warm_start, const OracleOptions& opts,
                                  bool allow_probe);

FeasibilityProbe probe_feasibility_impl(const ConstraintSet& constraints,
                                        const Eigen::VectorXd& nominal,
                                        const WeightMatrix& weight, const OracleOptions& opts) {
  const int m = constraints.input_dim();
  const int p = constraints.size();

  Eigen::MatrixXd normals(p + 1, m + 1);
  normals.block(0, 0, p, m) = constraints.normals();
  normals.block(0, m, p, 1).setConstant(-1.0);
  normals.row(p).setZero();
  normals(p, m) = -1.0;  // s >= 0
  Eigen::VectorXd offsets(p + 1);
  offsets.head(p) = constraints.offsets();
  offsets(p) = 0.0;
  const ConstraintSet relaxed(std::move(normals), std::move(offsets));

  Eigen::VectorXd k_aug(m + 1);
  k_aug.head(m) = nominal;
  k_aug(m) = 0.0;

  // The finite penalty leaves a residual slack of roughly (sum of
  // multipliers) / M on feasible data, so escalate M until the verdict is
  // unambiguous: feasible slacks vanish with M, infeasible ones stall at
  // the geometric minimum.
  FeasibilityProbe probe;
  double previous_slack = std::numeric_limits<double>::infinity();
  ActiveSet warm;
  for (double big_m = opts.big_m; big_m <= opts.big_m * 1e6 + 1.0; big_m *= 1e3) {
    Eigen::MatrixXd r_aug = Eigen::MatrixXd::Zero(m + 1, m + 1);
    r_aug.topLeftCorner(m, m) = weight.matrix();
    r_aug(m, m) = big_m;

    const SolveResult sol = theta_active_set_impl(relaxed, k_aug, WeightMatrix(r_aug), warm,
                                                  opts, /*allow_probe=*/false);
    probe.known = sol.status == SolveStatus::Optimal;
    if (!probe.known) return probe;

    probe.slack = sol.control(m);
    probe.feasible = probe.slack <= opts.infeasibility_slack;
    probe.point = sol.control.head(m);
    if (probe.feasible) return probe;
    if (probe.slack > 0.1 * previous_slack) return probe;  // stalled: truly infeasible
    previous_slack = probe.slack;
    warm = sol.active_set;
  }
  return probe;
}

SolveResult infeasible_or_degenerate(const ConstraintSet& constraints,
                                     const Eigen::VectorXd& nominal, const WeightMatrix& weight,
                                     const OracleOptions& opts, bool allow_probe,
                                     long iterations) {
  SolveResult result;
  result.control = Eigen::VectorXd::Zero(constraints.input_dim());
  result.multipliers = Eigen::VectorXd::Zero(constraints.size());
  result.iterations = iterations;
  if (!allow_probe) {
    result.status = SolveStatus::DegenerateLICQ;
    return result;
  }
  const FeasibilityProbe probe = probe_feasibility_impl(constraints, nominal, weight, opts);
  if (probe.known && !probe.feasible) {
    result.status = SolveStatus::Infeasible;
    result.control = probe.point;
  } else {
    result.status = SolveStatus::DegenerateLICQ;
  }
  return result;
}

SolveResult theta_active_set_impl(const ConstraintSet& constraints,
                                  const Eigen::VectorXd& nominal, const WeightMatrix& weight,
                                  const ActiveSet& warm_start, const OracleOptions& opts,
                                  bool allow_probe) {
  const int p = constraints.size();

  // Prune the warm start: keep a maximal full-rank prefix of valid indices.
  ActiveSet working;
  const ActiveSet valid_warm = warm_start.clipped(p);
  for (int v : valid_warm.indices()) {
    ActiveSet trial = working.with(v);
    if (gram_factorize(constraints, weight, trial, opts.tol)) working = std::move(trial);
  }

  const long cap = static_cast<long>(opts.iteration_factor) * (p + 1);
  long exchanges = 0;
  bool bland = false;
  int stall = 0;
  double f_prev = kInf;
  std::set<std::vector<int>> visited;

  while (true) {
    auto gram = gram_factorize(constraints, weight, working, opts.tol);
    if (!gram) {
      // can only happen on pathological data drifting past the rank threshold
      return infeasible_or_degenerate(constraints, nominal, weight, opts, allow_probe,
                                      exchanges);
    }
    const Candidate cand = detail::candidate_from_gram(*gram, nominal, working);

    const Eigen::VectorXd diff = cand.control - nominal;
    const double f = 0.5 * diff.dot(weight.matrix() * diff);
    if (f >= f_prev - 1e-12 * (1.0 + std::abs(f_prev))) {
      if (++stall >= std::max(3, 3 * p) && !bland) {
        bland = true;
        visited.clear();
      }
    } else {
      stall = 0;
    }
    f_prev = f;

    if (bland) {
      std::vector<int> key(working.indices().begin(), working.indices().end());
      if (!visited.insert(std::move(key)).second) {
        return infeasible_or_degenerate(constraints, nominal, weight, opts, allow_probe,
                                        exchanges);
      }
    }

    // Dual step: drop a negative multiplier.
    if (!working.empty() && cand.multipliers.minCoeff() < -opts.tol.dual) {
      int drop_pos = -1;
      if (bland) {
        for (int j = 0; j < working.size(); ++j)
          if (cand.multipliers(j) < -opts.tol.dual) { drop_pos = j; break; }
      } else {
        double best = 0.0;
        for (int j = 0; j < working.size(); ++j)
          if (cand.multipliers(j) < best) { best = cand.multipliers(j); drop_pos = j; }
      }
      working = working.without(working[drop_pos]);
      if (++exchanges > cap)
        return infeasible_or_degenerate(constraints, nominal, weight, opts, allow_probe,
                                        exchanges);
      continue;
    }

    // Primal step: find the entering row among violated excluded rows.
    int enter = -1;
    double worst = opts.tol.primal;
    for (int i = 0; i < p; ++i) {
      if (working.contains(i)) continue;
      const double v = constraints.normal(i).dot(cand.control) + constraints.offset(i);
      if (v >= worst && (enter < 0 || v > worst)) {
        worst = v;
        enter = i;
        if (bland) break;  // lowest violated index wins under Bland's rule
      }
    }
    if (enter < 0) return make_optimal(cand, p, exchanges);

    ActiveSet extended = working.with(enter);
    if (gram_factorize(constraints, weight, extended, opts.tol)) {
      working = std::move(extended);
    } else {
      // Entering normal lies in the span of the working set: a dual ratio
      // step decides which row leaves, or certifies infeasibility (Farkas).
      const Eigen::VectorXd b_enter = constraints.normal(enter);
      const Eigen::VectorXd combo =
          gram->solve(gram->normals.transpose() * weight.solve(b_enter));
      const double combo_scale = std::max(1.0, combo.size() ? combo.cwiseAbs().maxCoeff() : 0.0);
      int leave_pos = -1;
      double best_ratio = kInf;
      for (int j = 0; j < working.size(); ++j) {
        if (combo(j) > 1e-10 * combo_scale) {
          const double ratio = cand.multipliers(j) / combo(j);
          if (ratio < best_ratio - 1e-15) {
            best_ratio = ratio;
            leave_pos = j;
          }
        }
      }
      if (leave_pos < 0) {
        // no row can leave: the violated row is implied infeasible
        return infeasible_or_degenerate(constraints, nominal, weight, opts, allow_probe,
                                        exchanges);
      }
      working = working.without(working[leave_pos]).with(enter);
      ++exchanges;
    }
    if (++exchanges > cap)
      return infeasible_or_degenerate(constraints, nominal, weight, opts, allow_probe,
                                      exchanges);
  }
}

}  // namespace

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::DegenerateLICQ: return "DegenerateLICQ";
  }
  return "?";
}

std::size_t count_subsets(int p, int k, std::size_t cap) {
  std::size_t total = 0;
  for (int c = 0; c <= k; ++c) {
    // binomial(p, c) with saturation
    double binom = 1.0;
    for (int j = 0; j < c; ++j) binom *= static_cast<double>(p - j) / (j + 1);
    if (binom > static_cast<double>(cap) || total > cap) return cap + 1;
    total += static_cast<std::size_t>(std::llround(binom));
    if (total > cap) return cap + 1;
  }
  return total;
}

FeasibilityProbe probe_feasibility(const ConstraintSet& constraints,
                                   const Eigen::VectorXd& nominal, const WeightMatrix& weight,
                                   const OracleOptions& opts) {
  return probe_feasibility_impl(constraints, nominal, weight, opts);
}

SolveResult theta_enumerate(const ConstraintSet& constraints, const Eigen::VectorXd& nominal,
                            const WeightMatrix& weight, const OracleOptions& opts) {
  const int p = constraints.size();
  const int kmax = std::min(p, constraints.input_dim());

  const std::size_t needed = count_subsets(p, kmax, opts.subset_budget);
  if (needed > opts.subset_budget)
    throw BudgetExceededError("theta_enumerate", needed, opts.subset_budget);

  long visited = 0;
  SolveResult result;
  bool found = false;
  for (int k = 0; k <= kmax && !found; ++k) {
    found = for_each_subset_of_size(p, k, [&](const std::vector<int>& idx) {
      ++visited;
      ActiveSet set(idx);
      const MembershipResult mr = membership(constraints, nominal, weight, set, opts.tol);
      if (!mr.in_region) return false;
      result = make_optimal(*mr.candidate, p, visited);
      return true;
    });
  }
  if (found) return result;
  return infeasible_or_degenerate(constraints, nominal, weight, opts, /*allow_probe=*/true,
                                  visited);
}

SolveResult theta_active_set(const ConstraintSet& constraints, const Eigen::VectorXd& nominal,
                             const WeightMatrix& weight, const ActiveSet& warm_start,
                             const OracleOptions& opts) {
  return theta_active_set_impl(constraints, nominal, weight, warm_start, opts,
                               /*allow_probe=*/true);
}

}  // namespace cbf
