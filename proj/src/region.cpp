#include "cbf/region.hpp"

#include <limits>

namespace cbf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

const char* to_string(MembershipReason reason) {
  switch (reason) {
    case MembershipReason::RankFailed: return "RankFailed";
    case MembershipReason::DualNegative: return "DualNegative";
    case MembershipReason::InactiveViolated: return "InactiveViolated";
    case MembershipReason::Member: return "Member";
  }
  return "?";
}

MembershipResult membership(const ConstraintSet& constraints, const Eigen::VectorXd& nominal,
                            const WeightMatrix& weight, const ActiveSet& set,
                            const Tolerances& tol) {
  MembershipResult result;
  auto gram = gram_factorize(constraints, weight, set, tol);
  if (!gram) {
    result.reason = MembershipReason::RankFailed;
    return result;
  }

  result.candidate = detail::candidate_from_gram(*gram, nominal, set);

  TriggerValues tv;
  tv.s1_min = set.empty() ? kInf : result.candidate->multipliers.minCoeff();

  const ActiveSet outside = set.complement(constraints.size());
  if (outside.empty()) {
    tv.s2_max = -kInf;
  } else {
    const Eigen::MatrixXd b_out = constraints.gather_normals(outside.indices());
    const Eigen::VectorXd a_out = constraints.gather_offsets(outside.indices());
    tv.s2_max = (b_out.transpose() * result.candidate->control + a_out).maxCoeff();
  }
  result.triggers = tv;

  if (tv.s1_min < -tol.dual) {
    result.reason = MembershipReason::DualNegative;
    return result;
  }
  if (tv.s2_max >= tol.primal) {
    result.reason = MembershipReason::InactiveViolated;
    return result;
  }
  result.reason = MembershipReason::Member;
  result.in_region = true;
  return result;
}

std::optional<TriggerValues> triggers(const ConstraintSet& constraints,
                                      const Eigen::VectorXd& nominal, const WeightMatrix& weight,
                                      const ActiveSet& set, const Tolerances& tol) {
  return membership(constraints, nominal, weight, set, tol).triggers;
}

}  // namespace cbf
