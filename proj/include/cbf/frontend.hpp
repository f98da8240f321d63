#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cbf/qp_core.hpp"

namespace cbf {

// Extended class-K gain restricted to the parameterizations the scenarios
// need: alpha(s) = c*s or alpha(s) = c*s^3 with c > 0.
struct ClassKGain {
  enum class Kind { Linear, Cubic };
  Kind kind = Kind::Linear;
  double gain = 1.0;

  double operator()(double s) const;
  static ClassKGain linear(double c);
  static ClassKGain cubic(double c);
};

// Control-affine dynamics xdot = f(x) + g(x) u. The callables must be pure
// and safe for concurrent invocation; that is part of the registration
// contract for everything built on top of them.
struct ControlAffineSystem {
  int state_dim = 0;
  int input_dim = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift;         // f, n-vector
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> input_matrix;  // g, n x m
};

// One barrier h with its gradient and constraint recipe. RelDegreeOne emits
// the standard row from hdot + alpha(h) >= 0; ExponentialOrder2 emits the
// row enforcing hddot + (k1+k2) hdot + k1 k2 h >= 0 for barriers whose
// first derivative carries no input dependence. For the second-order kind,
// the gradient of hdot is taken from `hdot_gradient` when supplied and from
// central finite differences of x -> grad_h(x).f(x) otherwise.
struct BarrierSpec {
  enum class Kind { RelDegreeOne, ExponentialOrder2 };

  std::string label;
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  ClassKGain alpha{};
  Kind kind = Kind::RelDegreeOne;
  double k1 = 1.0;  // ExponentialOrder2 gains; defaults are arbitrary
  double k2 = 1.0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> hdot_gradient;  // optional
};

// Pole-placement helper: gains making the second-order barrier dynamics
// have real poles p1, p2 < 0.
std::pair<double, double> ecbf_gains_from_poles(double p1, double p2);

// Direct affine bound on an output y = c^T x + d^T u. Covers plant outputs
// with feedthrough, which cannot be written as a pure-state barrier.
// Infinite lo/hi entries drop the corresponding row.
struct OutputLimit {
  std::string label;
  Eigen::VectorXd state_row;  // c
  Eigen::VectorXd input_row;  // d
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

// Per-component input box; infinite entries drop the row.
struct InputBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

// Quadratic slack penalties. An engaged entry gives the corresponding row
// its own nonnegative slack variable delta with cost 0.5 * rho * delta^2.
struct SlackPolicy {
  std::vector<std::optional<double>> barrier_rho;  // one per barrier
  std::vector<std::optional<double>> output_rho;   // one per output limit (both rows)

  static SlackPolicy uniform(double rho, std::size_t barriers, std::size_t outputs);
};

// The full safety-filter problem. `exogenous_drift`, when set, adds a known
// time-dependent term e(t) to the drift; it is treated as piecewise
// constant in t (its time derivative is not differentiated into
// second-order rows).
struct FilterProblem {
  ControlAffineSystem system;
  std::vector<BarrierSpec> barriers;
  std::vector<OutputLimit> output_limits;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> nominal;  // k(x, t)
  Eigen::MatrixXd weight;  // R, m x m
  std::optional<InputBounds> input_bounds;
  std::optional<SlackPolicy> slack;
  std::function<Eigen::VectorXd(double)> exogenous_drift;

  int state_dim() const { return system.state_dim; }
  int input_dim() const { return system.input_dim; }
  int num_slacks() const;
  int decision_dim() const { return input_dim() + num_slacks(); }
};

struct ConstraintRow {
  Eigen::VectorXd normal;  // b, over the plant inputs only
  double offset = 0.0;     // a
  bool vanishing_control_direction = false;  // ||b|| < 1e-12
};

// The row for one barrier at state x: b = -(grad_h^T g)^T and
// a = -grad_h^T f - alpha(h) for relative degree one, and the second-order
// equivalent for ExponentialOrder2. `extra_drift` is an optional additive
// drift term (the exogenous input evaluated at the current time).
ConstraintRow constraint_row(const BarrierSpec& barrier, const ControlAffineSystem& system,
                             const Eigen::VectorXd& x,
                             const Eigen::VectorXd* extra_drift = nullptr);

struct RowInfo {
  enum class Kind { Barrier, OutputUpper, OutputLower, BoundLower, BoundUpper, SlackNonneg };
  Kind kind;
  int source = 0;      // index into the originating list
  int slack = -1;      // slack variable index, -1 when the row has none
  bool vanishing_control_direction = false;
};

// The state-dependent QP data at (x, t). Row order is stable and documented:
// barrier rows in registration order, then output-limit rows (upper before
// lower per limit), then input-bound rows (lower before upper per input),
// then slack nonnegativity rows in slack order. Slacked rows read
// b^T u - delta + a <= 0 over the augmented decision (u, delta); the
// augmented nominal is (k(x,t), 0) and the augmented weight is
// blockdiag(R, diag(rho)).
struct AssembledQP {
  ConstraintSet constraints;
  Eigen::VectorXd nominal;
  WeightMatrix weight;
  int input_dim = 0;
  int num_slacks = 0;
  std::vector<RowInfo> rows;
};

AssembledQP assemble(const FilterProblem& problem, const Eigen::VectorXd& x, double t);

// Registration self-checks: dimension audit, weight positive definiteness,
// gradient-vs-finite-difference comparison at perturbed states around
// x_ref. Returns human-readable findings; empty means all checks passed.
std::vector<std::string> validate_problem(const FilterProblem& problem,
                                          const Eigen::VectorXd& x_ref,
                                          std::uint64_t seed = 0x9e3779b97f4a7c15ull);

}  // namespace cbf
