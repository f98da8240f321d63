#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "cbf/frontend.hpp"
#include "cbf/oracle.hpp"

namespace cbf {

enum class ThetaMethod { Enumerate, ActiveSet };

// Cache carried across sampling instants: the last returned active set and
// the call counters. One FilterState per trajectory; not shareable across
// concurrent evaluations.
struct FilterState {
  ActiveSet cached_set;
  long theta_calls = 0;
  long total_steps = 0;
  MembershipReason last_reason = MembershipReason::Member;
};

struct StepOptions {
  ThetaMethod theta = ThetaMethod::ActiveSet;
  OracleOptions oracle{};
  // Active-set guess for the membership test; defaults to the cached set.
  std::function<ActiveSet(const FilterState&, const Eigen::VectorXd&, double)> guess;
};

struct StepResult {
  Eigen::VectorXd decision;  // (u, delta) over the augmented decision space
  ActiveSet active_set;
  bool theta_called = false;
  MembershipReason reason = MembershipReason::Member;
};

class SimulationError : public std::runtime_error {
 public:
  enum class Kind { Infeasible, Degenerate, NonFiniteState };

  SimulationError(Kind kind, long step, const std::string& what)
      : std::runtime_error(what), kind_(kind), step_(step) {}

  Kind kind() const noexcept { return kind_; }
  long step() const noexcept { return step_; }

 private:
  Kind kind_;
  long step_;
};

// One evaluation of the resource-aware controller: assembles the QP data at
// (x, t), runs the membership test with the cached set, and only on failure
// calls the selected theta oracle (warm-started with the cached set). The
// output always equals a fresh full solve.
StepResult step(FilterState& state, const FilterProblem& problem, const Eigen::VectorXd& x,
                double t, const StepOptions& opts = {});

// Fresh solve at (x, t) ignoring any cache; the reference the resource-aware
// path is measured against.
SolveResult solve_at(const FilterProblem& problem, const Eigen::VectorXd& x, double t,
                     ThetaMethod method, const OracleOptions& opts = {});

enum class Integrator { RK4, Euler };

struct SimulateOptions {
  Integrator integrator = Integrator::RK4;
  StepOptions step{};
};

// Sampled closed-loop record. All per-step vectors share one length; times
// are uniform with spacing dt. `values` holds the barrier values h_i(x_k)
// followed by the output-limit margins evaluated with the held input.
struct Trajectory {
  double dt = 0.0;
  int state_dim = 0;
  int input_dim = 0;
  int decision_dim = 0;
  int num_barriers = 0;
  int num_output_limits = 0;

  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> controls;  // full decision vectors
  std::vector<ActiveSet> active_sets;
  std::vector<char> theta_flags;
  std::vector<Eigen::VectorXd> values;

  Eigen::VectorXd final_state;
  double min_intersample_barrier = 0.0;  // worst h seen at RK4 stage states
  long theta_calls = 0;

  std::size_t steps() const { return times.size(); }
};

// Zero-order-hold loop: at each t_k = k*dt evaluates step(), then integrates
// xdot = f(x) + e(t) + g(x) u_k over [t_k, t_k + dt) with a single
// fixed-step RK4 (or Euler) update.
Trajectory simulate(const FilterProblem& problem, const Eigen::VectorXd& x0, double horizon,
                    double dt, const SimulateOptions& opts = {});

// CSV export: header row, then per step
// t, x_0..x_{n-1}, u_0..u_{m-1}[, s_0..], h_0..h_{p-1}, active_set, theta_called.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

}  // namespace cbf
