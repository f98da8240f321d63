#pragma once

#include <cstdint>

#include "cbf/region.hpp"

namespace cbf {

enum class SolveStatus { Optimal, Infeasible, DegenerateLICQ };

const char* to_string(SolveStatus status);

// Output of a theta oracle: the optimizer, multipliers over all p rows
// (zeros off the active set), and the optimal active set. `iterations`
// counts subsets visited (enumeration) or working-set exchanges
// (active-set solver). Fields other than `status` are best-effort unless
// the status is Optimal.
struct SolveResult {
  Eigen::VectorXd control;
  Eigen::VectorXd multipliers;
  ActiveSet active_set;
  long iterations = 0;
  SolveStatus status = SolveStatus::Optimal;
};

struct OracleOptions {
  Tolerances tol{};
  std::size_t subset_budget = 1'000'000;
  int iteration_factor = 50;        // exchange cap is iteration_factor * (p + 1)
  double big_m = 1e6;               // slack penalty weight of the feasibility probe
  double infeasibility_slack = 1e-6;  // declare infeasible when optimal slack exceeds this
};

// Verdict of the big-M feasibility probe. `known` is false when the probe's
// own solve did not reach optimality (degenerate data).
struct FeasibilityProbe {
  bool known = false;
  bool feasible = false;
  double slack = 0.0;
  Eigen::VectorXd point;  // u-part of the probe optimum
};

// Minimizes 0.5*||u - k||_R^2 + 0.5*M*s^2 subject to b_i^T u + a_i <= s and
// s >= 0; the rows are infeasible iff the optimal s stays above the
// configured threshold.
FeasibilityProbe probe_feasibility(const ConstraintSet& constraints,
                                   const Eigen::VectorXd& nominal, const WeightMatrix& weight,
                                   const OracleOptions& opts = {});

// Reference oracle: visits subsets by increasing cardinality (then
// lexicographically) and returns the first Member. Throws
// BudgetExceededError when the subset count exceeds the budget; callers
// must fall back to theta_active_set in that case.
SolveResult theta_enumerate(const ConstraintSet& constraints, const Eigen::VectorXd& nominal,
                            const WeightMatrix& weight, const OracleOptions& opts = {});

// Primal active-set solver over the closed-form candidates. Starts from the
// warm-start working set pruned to full rank; drops the most negative
// multiplier, adds the most violated excluded row (with a dual ratio step
// deciding which row leaves when the entering row is dependent), and
// terminates at Member. Infeasibility is certified by the probe;
// DegenerateLICQ is reported, never silently resolved.
SolveResult theta_active_set(const ConstraintSet& constraints, const Eigen::VectorXd& nominal,
                             const WeightMatrix& weight, const ActiveSet& warm_start,
                             const OracleOptions& opts = {});

// Number of subsets of [0, p) with cardinality at most k, saturating at cap.
std::size_t count_subsets(int p, int k, std::size_t cap);

}  // namespace cbf
