#include "cbf/frontend.hpp"

#include <cmath>
#include <random>

namespace cbf {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Central finite difference of a scalar field, step scaled per component.
Eigen::VectorXd central_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double step_scale) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step_scale * (1.0 + std::abs(x(i)));
    probe(i) = x(i) + h;
    const double hi = f(probe);
    probe(i) = x(i) - h;
    const double lo = f(probe);
    probe(i) = x(i);
    grad(i) = (hi - lo) / (2.0 * h);
  }
  return grad;
}

}  // namespace

double ClassKGain::operator()(double s) const {
  return kind == Kind::Linear ? gain * s : gain * s * s * s;
}

ClassKGain ClassKGain::linear(double c) {
  require(c > 0.0 && std::isfinite(c), "ClassKGain: gain must be positive");
  return ClassKGain{Kind::Linear, c};
}

ClassKGain ClassKGain::cubic(double c) {
  require(c > 0.0 && std::isfinite(c), "ClassKGain: gain must be positive");
  return ClassKGain{Kind::Cubic, c};
}

std::pair<double, double> ecbf_gains_from_poles(double p1, double p2) {
  require(p1 < 0.0 && p2 < 0.0, "ecbf_gains_from_poles: poles must be negative reals");
  return {-p1, -p2};
}

SlackPolicy SlackPolicy::uniform(double rho, std::size_t barriers, std::size_t outputs) {
  SlackPolicy policy;
  policy.barrier_rho.assign(barriers, rho);
  policy.output_rho.assign(outputs, rho);
  return policy;
}

int FilterProblem::num_slacks() const {
  if (!slack) return 0;
  int n = 0;
  for (std::size_t i = 0; i < barriers.size(); ++i)
    if (i < slack->barrier_rho.size() && slack->barrier_rho[i]) ++n;
  for (std::size_t i = 0; i < output_limits.size(); ++i) {
    if (i >= slack->output_rho.size() || !slack->output_rho[i]) continue;
    if (std::isfinite(output_limits[i].hi)) ++n;
    if (std::isfinite(output_limits[i].lo)) ++n;
  }
  return n;
}

ConstraintRow constraint_row(const BarrierSpec& barrier, const ControlAffineSystem& system,
                             const Eigen::VectorXd& x, const Eigen::VectorXd* extra_drift) {
  require(x.size() == system.state_dim, "constraint_row: state dimension mismatch");
  Eigen::VectorXd f = system.drift(x);
  if (extra_drift) f += *extra_drift;
  const Eigen::MatrixXd g = system.input_matrix(x);
  require(f.size() == system.state_dim && g.rows() == system.state_dim &&
              g.cols() == system.input_dim,
          "constraint_row: dynamics dimension mismatch");

  ConstraintRow row;
  const double h = barrier.value(x);
  const Eigen::VectorXd grad = barrier.gradient(x);

  if (barrier.kind == BarrierSpec::Kind::RelDegreeOne) {
    row.normal = -(grad.transpose() * g).transpose();
    row.offset = -grad.dot(f) - barrier.alpha(h);
  } else {
    // hdot(x) = grad_h . f; grad of hdot by FD unless supplied analytically.
    // The exogenous term is held constant inside the differencing.
    const double hdot = grad.dot(f);
    Eigen::VectorXd grad_hdot;
    if (barrier.hdot_gradient) {
      grad_hdot = barrier.hdot_gradient(x);
    } else {
      Eigen::VectorXd extra = extra_drift ? *extra_drift
                                          : Eigen::VectorXd::Zero(system.state_dim);
      grad_hdot = central_gradient(
          [&](const Eigen::VectorXd& y) {
            return barrier.gradient(y).dot(system.drift(y) + extra);
          },
          x, 1e-6);
    }
    const double sum = barrier.k1 + barrier.k2;
    const double prod = barrier.k1 * barrier.k2;
    row.normal = -(grad_hdot.transpose() * g).transpose();
    row.offset = -grad_hdot.dot(f) - sum * hdot - prod * h;
  }
  row.vanishing_control_direction = row.normal.norm() < 1e-12;
  return row;
}

AssembledQP assemble(const FilterProblem& problem, const Eigen::VectorXd& x, double t) {
  const int m = problem.input_dim();
  const int ns = problem.num_slacks();
  const int dim = m + ns;

  Eigen::VectorXd extra;
  const Eigen::VectorXd* extra_ptr = nullptr;
  if (problem.exogenous_drift) {
    extra = problem.exogenous_drift(t);
    require(extra.size() == problem.state_dim(), "assemble: exogenous drift dimension mismatch");
    extra_ptr = &extra;
  }

  std::vector<Eigen::VectorXd> normals;
  std::vector<double> offsets;
  std::vector<RowInfo> rows;
  std::vector<double> rho_by_slack;
  int next_slack = 0;

  auto slack_for_barrier = [&](std::size_t i) -> std::optional<double> {
    if (!problem.slack || i >= problem.slack->barrier_rho.size()) return std::nullopt;
    return problem.slack->barrier_rho[i];
  };
  auto slack_for_output = [&](std::size_t i) -> std::optional<double> {
    if (!problem.slack || i >= problem.slack->output_rho.size()) return std::nullopt;
    return problem.slack->output_rho[i];
  };

  auto push = [&](Eigen::VectorXd b_u, double a, RowInfo info, std::optional<double> rho) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(dim);
    full.head(m) = b_u;
    if (rho) {
      require(*rho > 0.0 && std::isfinite(*rho), "assemble: slack penalties must be positive");
      info.slack = next_slack++;
      full(m + info.slack) = -1.0;
      rho_by_slack.push_back(*rho);
    }
    normals.push_back(std::move(full));
    offsets.push_back(a);
    rows.push_back(info);
  };

  for (std::size_t i = 0; i < problem.barriers.size(); ++i) {
    const ConstraintRow row = constraint_row(problem.barriers[i], problem.system, x, extra_ptr);
    push(row.normal, row.offset,
         RowInfo{RowInfo::Kind::Barrier, static_cast<int>(i), -1,
                 row.vanishing_control_direction},
         slack_for_barrier(i));
  }

  for (std::size_t i = 0; i < problem.output_limits.size(); ++i) {
    const OutputLimit& lim = problem.output_limits[i];
    require(lim.state_row.size() == problem.state_dim() && lim.input_row.size() == m,
            "assemble: output limit dimension mismatch");
    const double y_state = lim.state_row.dot(x);
    const bool vanish = lim.input_row.norm() < 1e-12;
    if (std::isfinite(lim.hi))
      push(lim.input_row, y_state - lim.hi,
           RowInfo{RowInfo::Kind::OutputUpper, static_cast<int>(i), -1, vanish},
           slack_for_output(i));
    if (std::isfinite(lim.lo))
      push(-lim.input_row, lim.lo - y_state,
           RowInfo{RowInfo::Kind::OutputLower, static_cast<int>(i), -1, vanish},
           slack_for_output(i));
  }

  if (problem.input_bounds) {
    const InputBounds& bounds = *problem.input_bounds;
    require(bounds.lower.size() == m && bounds.upper.size() == m,
            "assemble: input bound dimension mismatch");
    for (int j = 0; j < m; ++j) {
      require(bounds.lower(j) <= bounds.upper(j), "assemble: crossed input bounds");
      if (std::isfinite(bounds.lower(j)))
        push(-Eigen::VectorXd::Unit(m, j), bounds.lower(j),
             RowInfo{RowInfo::Kind::BoundLower, j, -1, false}, std::nullopt);
      if (std::isfinite(bounds.upper(j)))
        push(Eigen::VectorXd::Unit(m, j), -bounds.upper(j),
             RowInfo{RowInfo::Kind::BoundUpper, j, -1, false}, std::nullopt);
    }
  }

  // delta_s >= 0 rows, in slack order
  for (int s = 0; s < ns; ++s) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(dim);
    full(m + s) = -1.0;
    normals.push_back(std::move(full));
    offsets.push_back(0.0);
    rows.push_back(RowInfo{RowInfo::Kind::SlackNonneg, s, s, false});
  }

  Eigen::MatrixXd normal_mat(static_cast<Eigen::Index>(normals.size()), dim);
  Eigen::VectorXd offset_vec(static_cast<Eigen::Index>(offsets.size()));
  for (std::size_t r = 0; r < normals.size(); ++r) {
    normal_mat.row(static_cast<Eigen::Index>(r)) = normals[r].transpose();
    offset_vec(static_cast<Eigen::Index>(r)) = offsets[r];
  }

  const Eigen::VectorXd k = problem.nominal(x, t);
  require(k.size() == m, "assemble: nominal dimension mismatch");
  Eigen::VectorXd k_aug = Eigen::VectorXd::Zero(dim);
  k_aug.head(m) = k;

  require(problem.weight.rows() == m && problem.weight.cols() == m,
          "assemble: weight dimension mismatch");
  Eigen::MatrixXd r_aug = Eigen::MatrixXd::Zero(dim, dim);
  r_aug.topLeftCorner(m, m) = problem.weight;
  for (int s = 0; s < ns; ++s) r_aug(m + s, m + s) = rho_by_slack[static_cast<std::size_t>(s)];

  return AssembledQP{ConstraintSet(std::move(normal_mat), std::move(offset_vec)),
                     std::move(k_aug), WeightMatrix(std::move(r_aug)), m, ns, std::move(rows)};
}

std::vector<std::string> validate_problem(const FilterProblem& problem,
                                          const Eigen::VectorXd& x_ref, std::uint64_t seed) {
  std::vector<std::string> issues;
  const int n = problem.state_dim();
  const int m = problem.input_dim();

  if (n <= 0 || m <= 0) issues.push_back("system dimensions must be positive");
  if (x_ref.size() != n) issues.push_back("reference state has wrong dimension");
  if (!problem.system.drift || !problem.system.input_matrix)
    issues.push_back("system dynamics callables are not set");
  if (!problem.nominal) issues.push_back("nominal controller is not set");
  if (!issues.empty()) return issues;

  if (problem.system.drift(x_ref).size() != n)
    issues.push_back("drift output has wrong dimension");
  const Eigen::MatrixXd g = problem.system.input_matrix(x_ref);
  if (g.rows() != n || g.cols() != m) issues.push_back("input matrix has wrong shape");
  if (problem.nominal(x_ref, 0.0).size() != m)
    issues.push_back("nominal output has wrong dimension");

  if (problem.weight.rows() != m || problem.weight.cols() != m) {
    issues.push_back("weight matrix has wrong shape");
  } else {
    try {
      WeightMatrix check(problem.weight);
      (void)check;
    } catch (const std::invalid_argument& err) {
      issues.push_back(std::string("weight matrix: ") + err.what());
    }
  }

  if (problem.input_bounds) {
    const InputBounds& bounds = *problem.input_bounds;
    if (bounds.lower.size() != m || bounds.upper.size() != m)
      issues.push_back("input bounds have wrong dimension");
    else
      for (int j = 0; j < m; ++j)
        if (bounds.lower(j) > bounds.upper(j))
          issues.push_back("input bounds cross at component " + std::to_string(j));
  }

  if (problem.slack) {
    if (problem.slack->barrier_rho.size() != problem.barriers.size())
      issues.push_back("slack policy barrier entries do not match barrier count");
    if (problem.slack->output_rho.size() != problem.output_limits.size())
      issues.push_back("slack policy output entries do not match output limit count");
    for (const auto& rho : problem.slack->barrier_rho)
      if (rho && (!std::isfinite(*rho) || *rho <= 0.0))
        issues.push_back("slack penalties must be positive");
    for (const auto& rho : problem.slack->output_rho)
      if (rho && (!std::isfinite(*rho) || *rho <= 0.0))
        issues.push_back("slack penalties must be positive");
  }

  for (std::size_t i = 0; i < problem.output_limits.size(); ++i) {
    const OutputLimit& lim = problem.output_limits[i];
    if (lim.state_row.size() != n || lim.input_row.size() != m)
      issues.push_back("output limit '" + lim.label + "' has wrong dimensions");
    if (lim.lo > lim.hi)
      issues.push_back("output limit '" + lim.label + "' has crossed bounds");
  }

  if (problem.exogenous_drift && problem.exogenous_drift(0.0).size() != n)
    issues.push_back("exogenous drift has wrong dimension");

  // Gradient self-check: central differences at perturbed states.
  std::mt19937_64 rng(seed);
  auto unit_noise = [&rng]() {
    // uniform in [-1, 1), pinned to the mt19937_64 bit stream
    return 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
  };
  for (std::size_t bi = 0; bi < problem.barriers.size(); ++bi) {
    const BarrierSpec& barrier = problem.barriers[bi];
    const std::string name = barrier.label.empty()
                                 ? "barrier[" + std::to_string(bi) + "]"
                                 : "barrier '" + barrier.label + "'";
    if (!barrier.value || !barrier.gradient) {
      issues.push_back(name + " is missing value or gradient");
      continue;
    }
    if (barrier.kind == BarrierSpec::Kind::ExponentialOrder2 &&
        (barrier.k1 <= 0.0 || barrier.k2 <= 0.0)) {
      issues.push_back(name + " has nonpositive second-order gains");
    }
    if (barrier.gradient(x_ref).size() != n) {
      issues.push_back(name + " gradient has wrong dimension");
      continue;
    }
    bool gradient_ok = true;
    for (int sample = 0; sample < 16 && gradient_ok; ++sample) {
      Eigen::VectorXd x = x_ref;
      for (int j = 0; j < n; ++j) x(j) += 0.1 * unit_noise();
      const Eigen::VectorXd analytic = barrier.gradient(x);
      const Eigen::VectorXd numeric = central_gradient(barrier.value, x, 1e-6);
      if ((analytic - numeric).norm() > 1e-5 * (1.0 + analytic.norm())) {
        issues.push_back(name + " gradient disagrees with finite differences");
        gradient_ok = false;
      }
    }
  }
  return issues;
}

}  // namespace cbf
