#include "cbf/runtime.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace cbf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SolveResult run_theta(const AssembledQP& qp, ThetaMethod method, const ActiveSet& warm,
                      const OracleOptions& opts) {
  if (method == ThetaMethod::Enumerate)
    return theta_enumerate(qp.constraints, qp.nominal, qp.weight, opts);
  return theta_active_set(qp.constraints, qp.nominal, qp.weight, warm, opts);
}

[[noreturn]] void raise(SolveStatus status, long step_index) {
  if (status == SolveStatus::Infeasible)
    throw SimulationError(SimulationError::Kind::Infeasible, step_index,
                          "safety filter infeasible at step " + std::to_string(step_index));
  throw SimulationError(SimulationError::Kind::Degenerate, step_index,
                        "degenerate active-set geometry at step " + std::to_string(step_index));
}

}  // namespace

StepResult step(FilterState& state, const FilterProblem& problem, const Eigen::VectorXd& x,
                double t, const StepOptions& opts) {
  const AssembledQP qp = assemble(problem, x, t);
  state.total_steps += 1;

  const ActiveSet trial = state.cached_set.clipped(qp.constraints.size());
  const MembershipResult mr =
      membership(qp.constraints, qp.nominal, qp.weight, trial, opts.oracle.tol);
  state.last_reason = mr.reason;

  if (mr.in_region) {
    state.cached_set = trial;
    return StepResult{mr.candidate->control, trial, false, mr.reason};
  }

  const ActiveSet warm = opts.guess ? opts.guess(state, x, t) : state.cached_set;
  const SolveResult sol = run_theta(qp, opts.theta, warm, opts.oracle);
  if (sol.status != SolveStatus::Optimal) raise(sol.status, state.total_steps - 1);

  state.cached_set = sol.active_set;
  state.theta_calls += 1;
  return StepResult{sol.control, sol.active_set, true, mr.reason};
}

SolveResult solve_at(const FilterProblem& problem, const Eigen::VectorXd& x, double t,
                     ThetaMethod method, const OracleOptions& opts) {
  const AssembledQP qp = assemble(problem, x, t);
  return run_theta(qp, method, ActiveSet{}, opts);
}

Trajectory simulate(const FilterProblem& problem, const Eigen::VectorXd& x0, double horizon,
                    double dt, const SimulateOptions& opts) {
  if (!(dt > 0.0)) throw std::invalid_argument("simulate: dt must be positive");
  if (horizon < dt) throw std::invalid_argument("simulate: horizon must cover one step");
  if (x0.size() != problem.state_dim())
    throw std::invalid_argument("simulate: initial state dimension mismatch");

  const long num_steps = static_cast<long>(std::floor(horizon / dt + 1e-9));
  const int n = problem.state_dim();
  const int m = problem.input_dim();
  const int nb = static_cast<int>(problem.barriers.size());
  const int nl = static_cast<int>(problem.output_limits.size());

  Trajectory traj;
  traj.dt = dt;
  traj.state_dim = n;
  traj.input_dim = m;
  traj.decision_dim = problem.decision_dim();
  traj.num_barriers = nb;
  traj.num_output_limits = nl;
  traj.min_intersample_barrier = kInf;
  traj.times.reserve(static_cast<std::size_t>(num_steps));

  auto barrier_floor = [&](const Eigen::VectorXd& x) {
    double worst = kInf;
    for (const BarrierSpec& barrier : problem.barriers)
      worst = std::min(worst, barrier.value(x));
    return worst;
  };

  FilterState state;
  StepOptions step_opts = opts.step;
  Eigen::VectorXd x = x0;

  for (long k = 0; k < num_steps; ++k) {
    const double t = static_cast<double>(k) * dt;

    const StepResult result = step(state, problem, x, t, step_opts);
    const Eigen::VectorXd u = result.decision.head(m);

    Eigen::VectorXd values(nb + nl);
    for (int i = 0; i < nb; ++i) values(i) = problem.barriers[static_cast<std::size_t>(i)].value(x);
    for (int i = 0; i < nl; ++i) {
      const OutputLimit& lim = problem.output_limits[static_cast<std::size_t>(i)];
      const double y = lim.state_row.dot(x) + lim.input_row.dot(u);
      double margin = kInf;
      if (std::isfinite(lim.hi)) margin = std::min(margin, lim.hi - y);
      if (std::isfinite(lim.lo)) margin = std::min(margin, y - lim.lo);
      values(nb + i) = margin;
    }

    traj.times.push_back(t);
    traj.states.push_back(x);
    traj.controls.push_back(result.decision);
    traj.active_sets.push_back(result.active_set);
    traj.theta_flags.push_back(result.theta_called ? 1 : 0);
    traj.values.push_back(std::move(values));

    auto field = [&](const Eigen::VectorXd& y, double tau) -> Eigen::VectorXd {
      Eigen::VectorXd out = problem.system.drift(y) + problem.system.input_matrix(y) * u;
      if (problem.exogenous_drift) out += problem.exogenous_drift(tau);
      return out;
    };

    if (opts.integrator == Integrator::Euler) {
      x = x + dt * field(x, t);
    } else {
      const Eigen::VectorXd k1 = field(x, t);
      const Eigen::VectorXd x2 = x + 0.5 * dt * k1;
      const Eigen::VectorXd k2 = field(x2, t + 0.5 * dt);
      const Eigen::VectorXd x3 = x + 0.5 * dt * k2;
      const Eigen::VectorXd k3 = field(x3, t + 0.5 * dt);
      const Eigen::VectorXd x4 = x + dt * k3;
      const Eigen::VectorXd k4 = field(x4, t + dt);
      if (nb > 0) {
        traj.min_intersample_barrier = std::min(
            {traj.min_intersample_barrier, barrier_floor(x2), barrier_floor(x3),
             barrier_floor(x4)});
      }
      x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    if (!x.allFinite())
      throw SimulationError(SimulationError::Kind::NonFiniteState, k,
                            "state became non-finite after step " + std::to_string(k));
    if (nb > 0) traj.min_intersample_barrier = std::min(traj.min_intersample_barrier,
                                                        barrier_floor(x));
  }

  traj.final_state = x;
  traj.theta_calls = state.theta_calls;
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  const auto prec = out.precision(17);
  out << "t";
  for (int i = 0; i < trajectory.state_dim; ++i) out << ",x_" << i;
  for (int i = 0; i < trajectory.input_dim; ++i) out << ",u_" << i;
  for (int i = 0; i < trajectory.decision_dim - trajectory.input_dim; ++i) out << ",s_" << i;
  for (int i = 0; i < trajectory.num_barriers + trajectory.num_output_limits; ++i)
    out << ",h_" << i;
  out << ",active_set,theta_called\n";

  for (std::size_t k = 0; k < trajectory.steps(); ++k) {
    out << trajectory.times[k];
    const Eigen::VectorXd& x = trajectory.states[k];
    for (Eigen::Index i = 0; i < x.size(); ++i) out << ',' << x(i);
    const Eigen::VectorXd& u = trajectory.controls[k];
    for (Eigen::Index i = 0; i < u.size(); ++i) out << ',' << u(i);
    const Eigen::VectorXd& h = trajectory.values[k];
    for (Eigen::Index i = 0; i < h.size(); ++i) out << ',' << h(i);
    out << ',' << trajectory.active_sets[k].to_string(';') << ','
        << (trajectory.theta_flags[k] ? 1 : 0) << '\n';
  }
  out.precision(prec);
}

}  // namespace cbf
