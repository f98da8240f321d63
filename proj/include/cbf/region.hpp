#pragma once

#include <optional>

#include "cbf/qp_core.hpp"

namespace cbf {

// Trigger values certifying continued region membership: the minimum
// candidate multiplier and the maximum slack over rows outside the set.
// Sentinels: s1_min = +inf when the set is empty, s2_max = -inf when the
// set covers every row.
struct TriggerValues {
  double s1_min = 0.0;
  double s2_max = 0.0;
};

enum class MembershipReason { RankFailed, DualNegative, InactiveViolated, Member };

const char* to_string(MembershipReason reason);

// Verdict of the region test for one trial index set. The candidate and
// triggers are present whenever the rank test passed, so callers can reuse
// u_I without recomputing it.
struct MembershipResult {
  bool in_region = false;
  MembershipReason reason = MembershipReason::RankFailed;
  std::optional<Candidate> candidate;
  std::optional<TriggerValues> triggers;
};

// Evaluates, in order: the B_I rank test, the dual test
// min lambda_I >= -tol.dual, and the strict inactive test
// b_j^T u_I + a_j < tol.primal for every j outside the set. Returns the
// first failing reason, or Member.
MembershipResult membership(const ConstraintSet& constraints, const Eigen::VectorXd& nominal,
                            const WeightMatrix& weight, const ActiveSet& set,
                            const Tolerances& tol = {});

// Trigger values alone; nullopt when the rank test fails. membership() is
// equivalent to rank-pass && s1_min >= -tol.dual && s2_max < tol.primal.
std::optional<TriggerValues> triggers(const ConstraintSet& constraints,
                                      const Eigen::VectorXd& nominal, const WeightMatrix& weight,
                                      const ActiveSet& set, const Tolerances& tol = {});

}  // namespace cbf
