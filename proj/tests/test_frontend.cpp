#include <doctest.h>

#include <cmath>

#include "cbf/frontend.hpp"
#include "cbf/oracle.hpp"
#include "test_support.hpp"

using namespace cbf;
using test::TestRng;

namespace {

ControlAffineSystem single_integrator_2d() {
  return ControlAffineSystem{
      2, 2, [](const Eigen::VectorXd& x) { return Eigen::VectorXd::Zero(x.size()).eval(); },
      [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Identity(2, 2).eval(); }};
}

BarrierSpec halfspace_x1() {
  BarrierSpec barrier;
  barrier.label = "x1_nonnegative";
  barrier.value = [](const Eigen::VectorXd& x) { return x(0); };
  barrier.gradient = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    g(0) = 1.0;
    return g;
  };
  barrier.alpha = ClassKGain::linear(1.0);
  return barrier;
}

}  // namespace

TEST_SUITE_BEGIN("frontend");

TEST_CASE("class-K gains are validated and evaluate both shapes") {
  CHECK_THROWS_AS(ClassKGain::linear(0.0), std::invalid_argument);
  CHECK_THROWS_AS(ClassKGain::cubic(-2.0), std::invalid_argument);
  CHECK(ClassKGain::linear(3.0)(2.0) == doctest::Approx(6.0));
  CHECK(ClassKGain::cubic(2.0)(2.0) == doctest::Approx(16.0));
  CHECK(ClassKGain::linear(3.0)(0.0) == 0.0);
  const auto [k1, k2] = ecbf_gains_from_poles(-2.0, -5.0);
  CHECK(k1 == doctest::Approx(2.0));
  CHECK(k2 == doctest::Approx(5.0));
}

TEST_CASE("relative-degree-one row of the single integrator") {
  const auto system = single_integrator_2d();
  const BarrierSpec barrier = halfspace_x1();

  Eigen::Vector2d x(2.0, 0.0);
  ConstraintRow row = constraint_row(barrier, system, x);
  CHECK(row.normal(0) == doctest::Approx(-1.0));
  CHECK(row.normal(1) == doctest::Approx(0.0));
  CHECK(row.offset == doctest::Approx(-2.0));
  CHECK_FALSE(row.vanishing_control_direction);

  // boundary state: alpha(0) = 0 pins b.u <= 0
  x << 0.0, 0.0;
  row = constraint_row(barrier, system, x);
  CHECK(row.offset == doctest::Approx(0.0));
}

TEST_CASE("second-order row of the 1-D double integrator") {
  // state (p, v), dynamics pddot = u; h = p^2 - 1 with k1 = k2 = 1 at
  // (2, 0) gives the row -4u - 3 <= 0 (hand differentiation)
  ControlAffineSystem system{
      2, 1,
      [](const Eigen::VectorXd& x) {
        Eigen::VectorXd f(2);
        f << x(1), 0.0;
        return f;
      },
      [](const Eigen::VectorXd&) {
        Eigen::MatrixXd g(2, 1);
        g << 0.0, 1.0;
        return g;
      }};

  BarrierSpec barrier;
  barrier.label = "keep_out_unit_disc";
  barrier.kind = BarrierSpec::Kind::ExponentialOrder2;
  barrier.k1 = 1.0;
  barrier.k2 = 1.0;
  barrier.value = [](const Eigen::VectorXd& x) { return x(0) * x(0) - 1.0; };
  barrier.gradient = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(2);
    g << 2.0 * x(0), 0.0;
    return g;
  };

  Eigen::Vector2d x(2.0, 0.0);
  SUBCASE("finite-difference hdot gradient") {
    const ConstraintRow row = constraint_row(barrier, system, x);
    CHECK(row.normal(0) == doctest::Approx(-4.0).epsilon(1e-9));
    CHECK(row.offset == doctest::Approx(-3.0).epsilon(1e-9));
  }
  SUBCASE("analytic hdot gradient") {
    barrier.hdot_gradient = [](const Eigen::VectorXd& y) {
      Eigen::VectorXd g(2);
      g << 2.0 * y(1), 2.0 * y(0);
      return g;
    };
    const ConstraintRow row = constraint_row(barrier, system, x);
    CHECK(row.normal(0) == doctest::Approx(-4.0));
    CHECK(row.offset == doctest::Approx(-3.0));
  }
}

TEST_CASE("vanishing control direction is flagged") {
  const auto system = single_integrator_2d();
  BarrierSpec barrier = halfspace_x1();
  barrier.gradient = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Zero(x.size()).eval();
  };
  barrier.value = [](const Eigen::VectorXd&) { return 1.0; };
  const ConstraintRow row = constraint_row(barrier, system, Eigen::Vector2d(0, 0));
  CHECK(row.vanishing_control_direction);
}

TEST_CASE("assemble stacks barriers then bounds with a stable order") {
  FilterProblem problem;
  problem.system = single_integrator_2d();
  problem.barriers.push_back(halfspace_x1());
  BarrierSpec second = halfspace_x1();
  second.label = "x2_nonnegative";
  second.value = [](const Eigen::VectorXd& x) { return x(1); };
  second.gradient = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    g(1) = 1.0;
    return g;
  };
  problem.barriers.push_back(second);
  problem.nominal = [](const Eigen::VectorXd&, double) { return Eigen::Vector2d(0, 0).eval(); };
  problem.weight = Eigen::MatrixXd::Identity(2, 2);
  problem.input_bounds = InputBounds{Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)};

  const Eigen::Vector2d x(0.5, 0.5);
  const AssembledQP qp = assemble(problem, x, 0.0);
  CHECK(qp.constraints.size() == 6);  // 2 barriers + 4 bound rows
  CHECK(qp.constraints.input_dim() == 2);
  CHECK(qp.num_slacks == 0);
  CHECK(qp.rows[0].kind == RowInfo::Kind::Barrier);
  CHECK(qp.rows[1].kind == RowInfo::Kind::Barrier);
  CHECK(qp.rows[2].kind == RowInfo::Kind::BoundLower);
  CHECK(qp.rows[2].source == 0);
  CHECK(qp.rows[3].kind == RowInfo::Kind::BoundUpper);
  CHECK(qp.rows[4].kind == RowInfo::Kind::BoundLower);
  CHECK(qp.rows[4].source == 1);

  // bound rows are +-e_j with the bound as offset
  CHECK(qp.constraints.normal(2) == -Eigen::Vector2d::UnitX());
  CHECK(qp.constraints.offset(2) == doctest::Approx(-1.0));
  CHECK(qp.constraints.normal(3) == Eigen::Vector2d::UnitX());
  CHECK(qp.constraints.offset(3) == doctest::Approx(-1.0));

  // bit-identical re-assembly at the same (x, t)
  const AssembledQP again = assemble(problem, x, 0.0);
  CHECK(again.constraints.normals() == qp.constraints.normals());
  CHECK(again.constraints.offsets() == qp.constraints.offsets());
  CHECK(again.nominal == qp.nominal);
}

TEST_CASE("slack relaxation keeps a bound-conflicted barrier solvable") {
  // 1-D instance: barrier row requires u >= 1, bound forces u <= 0. With a
  // slack on the barrier row the optimum is u = 0, delta = 1 (first-order
  // conditions), active set {barrier row, bound row}.
  FilterProblem problem;
  problem.system = ControlAffineSystem{
      1, 1, [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1).eval(); },
      [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Identity(1, 1).eval(); }};
  BarrierSpec barrier;
  barrier.label = "requires_positive_input";
  barrier.value = [](const Eigen::VectorXd& x) { return x(0); };
  barrier.gradient = [](const Eigen::VectorXd&) {
    return Eigen::VectorXd::Ones(1).eval();
  };
  barrier.alpha = ClassKGain::linear(1.0);
  problem.barriers.push_back(barrier);
  problem.nominal = [](const Eigen::VectorXd&, double) {
    return Eigen::VectorXd::Zero(1).eval();
  };
  problem.weight = Eigen::MatrixXd::Identity(1, 1);
  problem.input_bounds = InputBounds{
      Eigen::VectorXd::Constant(1, -std::numeric_limits<double>::infinity()),
      Eigen::VectorXd::Zero(1)};
  problem.slack = SlackPolicy::uniform(1e3, 1, 0);

  // at x = -1 the unslacked row reads -u + 1 <= 0, i.e. u >= 1
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, -1.0);
  const AssembledQP qp = assemble(problem, x, 0.0);
  CHECK(qp.constraints.size() == 3);  // barrier, upper bound, slack nonneg
  CHECK(qp.constraints.input_dim() == 2);

  const SolveResult sol = theta_enumerate(qp.constraints, qp.nominal, qp.weight);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.control(0) == doctest::Approx(0.0).epsilon(1e-9));  // u
  CHECK(sol.control(1) == doctest::Approx(1.0).epsilon(1e-9));  // delta
  CHECK(sol.active_set == ActiveSet{0, 1});
}

TEST_CASE("slacks stay inactive on feasible problems with stiff penalties") {
  TestRng rng(512u);
  for (int trial = 0; trial < 50; ++trial) {
    FilterProblem problem;
    problem.system = single_integrator_2d();
    BarrierSpec barrier = halfspace_x1();
    problem.barriers.push_back(barrier);
    problem.nominal = [&](const Eigen::VectorXd&, double) {
      return Eigen::Vector2d(rng.uniform(-2, 2), rng.uniform(-2, 2)).eval();
    };
    problem.weight = Eigen::MatrixXd::Identity(2, 2);
    problem.slack = SlackPolicy::uniform(1e6, 1, 0);

    const Eigen::Vector2d x(rng.uniform(0.1, 3.0), rng.uniform(-1, 1));
    const AssembledQP qp = assemble(problem, x, 0.0);
    const SolveResult sol = theta_enumerate(qp.constraints, qp.nominal, qp.weight);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.control(2) <= 1e-5);  // delta
  }
}

TEST_CASE("validate_problem reports broken gradients by name") {
  FilterProblem problem;
  problem.system = single_integrator_2d();
  BarrierSpec barrier = halfspace_x1();
  barrier.gradient = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    g(0) = -1.0;  // deliberately wrong sign
    return g;
  };
  problem.barriers.push_back(barrier);
  problem.nominal = [](const Eigen::VectorXd&, double) { return Eigen::Vector2d(0, 0).eval(); };
  problem.weight = Eigen::MatrixXd::Identity(2, 2);

  const auto issues = validate_problem(problem, Eigen::Vector2d(1.0, 0.0));
  REQUIRE_FALSE(issues.empty());
  bool named = false;
  for (const auto& issue : issues)
    if (issue.find("x1_nonnegative") != std::string::npos &&
        issue.find("finite differences") != std::string::npos)
      named = true;
  CHECK(named);
}

TEST_CASE("validate_problem rejects an indefinite weight") {
  FilterProblem problem;
  problem.system = single_integrator_2d();
  problem.barriers.push_back(halfspace_x1());
  problem.nominal = [](const Eigen::VectorXd&, double) { return Eigen::Vector2d(0, 0).eval(); };
  problem.weight = Eigen::MatrixXd::Identity(2, 2);
  problem.weight(1, 1) = -1.0;

  const auto issues = validate_problem(problem, Eigen::Vector2d(1.0, 0.0));
  bool flagged = false;
  for (const auto& issue : issues)
    if (issue.find("weight") != std::string::npos) flagged = true;
  CHECK(flagged);
}

TEST_CASE("clean problems validate without findings") {
  FilterProblem problem;
  problem.system = single_integrator_2d();
  problem.barriers.push_back(halfspace_x1());
  problem.nominal = [](const Eigen::VectorXd&, double) { return Eigen::Vector2d(0, 0).eval(); };
  problem.weight = Eigen::MatrixXd::Identity(2, 2);
  CHECK(validate_problem(problem, Eigen::Vector2d(1.0, 0.0)).empty());
}

TEST_SUITE_END();
