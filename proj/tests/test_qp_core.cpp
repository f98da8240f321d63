#include <doctest.h>

#include <limits>

#include "cbf/qp_core.hpp"
#include "test_support.hpp"

using namespace cbf;
using test::TestRng;

namespace {

ConstraintSet two_axis_rows() {
  Eigen::MatrixXd normals(2, 2);
  normals << 1, 0, 0, 1;
  Eigen::VectorXd offsets(2);
  offsets << 1, 1;
  return ConstraintSet(normals, offsets);
}

}  // namespace

TEST_SUITE_BEGIN("qp_core");

TEST_CASE("weight matrix enforces symmetry and positive definiteness") {
  CHECK_NOTHROW(WeightMatrix::identity(3));

  Eigen::MatrixXd asym(2, 2);
  asym << 1, 0.5, 0.2, 1;
  CHECK_THROWS_AS(WeightMatrix{asym}, std::invalid_argument);

  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1, 0, 0, -1;
  CHECK_THROWS_AS(WeightMatrix{indefinite}, std::invalid_argument);

  Eigen::MatrixXd spd(2, 2);
  spd << 4, 1, 1, 2;
  const WeightMatrix weight(spd);
  const Eigen::MatrixXd inv_sqrt = weight.inverse_sqrt();
  CHECK((inv_sqrt * spd * inv_sqrt - Eigen::MatrixXd::Identity(2, 2)).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("active set normalizes order and rejects duplicates") {
  const ActiveSet a({3, 0, 2});
  CHECK(a.size() == 3);
  CHECK(a[0] == 0);
  CHECK(a[2] == 3);
  CHECK(a == ActiveSet({0, 2, 3}));
  CHECK(a.contains(2));
  CHECK_FALSE(a.contains(1));
  CHECK(a.complement(5) == ActiveSet({1, 4}));
  CHECK(a.without(2) == ActiveSet({0, 3}));
  CHECK(a.with(1) == ActiveSet({0, 1, 2, 3}));
  CHECK(a.to_string() == "0;2;3");
  CHECK_THROWS_AS(ActiveSet({1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(ActiveSet({-1}), std::invalid_argument);
}

TEST_CASE("gram factorization of the empty set is empty, never rank deficient") {
  const ConstraintSet cs = two_axis_rows();
  const auto gram = gram_factorize(cs, WeightMatrix::identity(2), ActiveSet{});
  REQUIRE(gram.has_value());
  CHECK(gram->set_size() == 0);
  CHECK(gram->normals.cols() == 0);
}

TEST_CASE("gram factorization of orthogonal unit rows is the identity") {
  const ConstraintSet cs = two_axis_rows();
  const auto gram = gram_factorize(cs, WeightMatrix::identity(2), ActiveSet{0, 1});
  REQUIRE(gram.has_value());
  const Eigen::MatrixXd h = gram->normals.transpose() * gram->weighted_normals;
  CHECK((h - Eigen::MatrixXd::Identity(2, 2)).norm() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("parallel rows are reported rank deficient") {
  Eigen::MatrixXd normals(2, 2);
  normals << 1, 0, 2, 0;
  const ConstraintSet cs(normals, Eigen::VectorXd::Zero(2));
  CHECK_FALSE(gram_factorize(cs, WeightMatrix::identity(2), ActiveSet{0, 1}).has_value());
}

TEST_CASE("candidate with empty set is the identity on the nominal input") {
  const ConstraintSet cs = two_axis_rows();
  Eigen::VectorXd k(2);
  k << 0.3, -1.7;
  const auto cand = candidate(cs, k, WeightMatrix::identity(2), ActiveSet{});
  REQUIRE(cand.has_value());
  CHECK(cand->control == k);
  CHECK(cand->multipliers.size() == 0);
}

TEST_CASE("single active row projects onto its hyperplane") {
  // frozen from the brute-force oracle: lambda = 1, u = (-1, 0)
  Eigen::MatrixXd normals(1, 2);
  normals << 1, 0;
  Eigen::VectorXd offsets(1);
  offsets << 1;
  const ConstraintSet cs(normals, offsets);
  const Eigen::VectorXd k = Eigen::VectorXd::Zero(2);

  const auto brute = test::brute_solve(cs, k, Eigen::MatrixXd::Identity(2, 2));
  REQUIRE(brute.has_value());
  CHECK(brute->control(0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(brute->control(1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(brute->multipliers(0) == doctest::Approx(1.0).epsilon(1e-12));

  const auto cand = candidate(cs, k, WeightMatrix::identity(2), ActiveSet{0});
  REQUIRE(cand.has_value());
  CHECK(cand->multipliers(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((cand->control - brute->control).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("two active rows reproduce the corner solution") {
  // frozen from the brute-force oracle: lambda = (1, 1), u = (-1, -1)
  const ConstraintSet cs = two_axis_rows();
  const Eigen::VectorXd k = Eigen::VectorXd::Zero(2);

  const auto brute = test::brute_solve(cs, k, Eigen::MatrixXd::Identity(2, 2));
  REQUIRE(brute.has_value());
  CHECK(brute->active_set == ActiveSet{0, 1});
  CHECK((brute->control - Eigen::Vector2d(-1, -1)).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));

  const auto cand = candidate(cs, k, WeightMatrix::identity(2), ActiveSet{0, 1});
  REQUIRE(cand.has_value());
  CHECK((cand->control - Eigen::Vector2d(-1, -1)).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK((cand->multipliers - Eigen::Vector2d(1, 1)).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kkt residuals vanish on an optimal candidate") {
  Eigen::MatrixXd normals(1, 2);
  normals << 1, 0;
  Eigen::VectorXd offsets(1);
  offsets << 1;
  const ConstraintSet cs(normals, offsets);
  const Eigen::VectorXd k = Eigen::VectorXd::Zero(2);
  const WeightMatrix weight = WeightMatrix::identity(2);

  const auto cand = candidate(cs, k, weight, ActiveSet{0});
  REQUIRE(cand.has_value());
  const KKTReport report = kkt_residuals(*cand, cs, k, weight);
  CHECK(report.stationarity <= 1e-12);
  CHECK(report.max_primal_violation <= 1e-12);
  CHECK(report.min_multiplier >= -1e-12);
  CHECK(report.max_complementarity <= 1e-12);
  CHECK(report.passes(1e-12));
}

TEST_CASE("kkt residuals flag a violated row for the empty candidate") {
  Eigen::MatrixXd normals(1, 2);
  normals << 1, 0;
  Eigen::VectorXd offsets(1);
  offsets << 1;
  const ConstraintSet cs(normals, offsets);
  const Eigen::VectorXd k = Eigen::VectorXd::Zero(2);
  const WeightMatrix weight = WeightMatrix::identity(2);

  const auto cand = candidate(cs, k, weight, ActiveSet{});
  REQUIRE(cand.has_value());
  const KKTReport report = kkt_residuals(*cand, cs, k, weight);
  CHECK(report.max_primal_violation == doctest::Approx(1.0));
  CHECK_FALSE(report.passes(1e-7));
}

TEST_CASE("kkt residuals on an empty problem use the no-rows sentinel") {
  const ConstraintSet cs(2);
  Eigen::VectorXd k(2);
  k << 0.5, 0.5;
  const WeightMatrix weight = WeightMatrix::identity(2);
  const auto cand = candidate(cs, k, weight, ActiveSet{});
  REQUIRE(cand.has_value());
  const KKTReport report = kkt_residuals(*cand, cs, k, weight);
  CHECK(report.stationarity == 0.0);
  CHECK(report.max_primal_violation == -std::numeric_limits<double>::infinity());
  CHECK(report.min_multiplier == 0.0);
  CHECK(report.max_complementarity == 0.0);
  CHECK(report.passes(0.0));
}

TEST_CASE("stationarity and active-row equality hold for random full-rank sets") {
  TestRng rng(11u);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + static_cast<int>(rng.raw() % 6);
    const int p = 1 + static_cast<int>(rng.raw() % 6);
    auto qp = test::random_qp(rng, m, p, trial % 3 == 0);
    const WeightMatrix weight(qp.weight);

    std::vector<int> pool;
    for (int i = 0; i < p; ++i) pool.push_back(i);
    std::vector<int> chosen;
    const int want = static_cast<int>(rng.raw() % static_cast<std::uint64_t>(std::min(m, p) + 1));
    for (int j = 0; j < want; ++j)
      chosen.push_back(pool[static_cast<std::size_t>(rng.raw() % pool.size())]);
    std::sort(chosen.begin(), chosen.end());
    chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());

    const ActiveSet set(chosen);
    const auto cand = candidate(qp.constraints, qp.nominal, weight, set);
    if (!cand) continue;  // rank-deficient draw

    const Eigen::VectorXd a_set = qp.constraints.gather_offsets(set.indices());
    const double scale = 1.0 + qp.nominal.norm() + a_set.norm();
    const KKTReport report = kkt_residuals(*cand, qp.constraints, qp.nominal, weight);
    CHECK(report.stationarity <= 1e-8 * scale);
    for (int j = 0; j < set.size(); ++j) {
      const double resid =
          qp.constraints.normal(set[j]).dot(cand->control) + qp.constraints.offset(set[j]);
      CHECK(std::abs(resid) <= 1e-8 * scale);
    }
  }
}

TEST_CASE("permuting the index order permutes multipliers and keeps the control") {
  TestRng rng(23u);
  auto qp = test::random_qp(rng, 3, 3);
  const WeightMatrix weight(qp.weight);

  const std::vector<int> fwd{0, 1, 2};
  const std::vector<int> rev{2, 0, 1};
  const auto a = detail::candidate_ordered(qp.constraints, qp.nominal, weight, fwd, {});
  const auto b = detail::candidate_ordered(qp.constraints, qp.nominal, weight, rev, {});
  if (!a || !b) return;  // rank-deficient draw; nothing to compare

  CHECK((a->control - b->control).norm() <= 1e-12 * (1.0 + a->control.norm()));
  for (std::size_t j = 0; j < rev.size(); ++j) {
    const auto pos = static_cast<std::size_t>(rev[j]);
    CHECK(b->multipliers(static_cast<Eigen::Index>(j)) ==
          doctest::Approx(a->multipliers(static_cast<Eigen::Index>(pos))).epsilon(1e-10));
  }
}

TEST_SUITE_END();
