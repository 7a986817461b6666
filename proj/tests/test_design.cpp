#include <doctest.h>

#include "apci/design.hpp"
#include "apci/errors.hpp"
#include "oracles.hpp"

using namespace apci;

TEST_CASE("effect coding codes the last level -1") {
  CHECK(code_level(1, 3, CodingKind::effect, 1) == std::vector<double>{1, 0});
  CHECK(code_level(2, 3, CodingKind::effect, 1) == std::vector<double>{0, 1});
  CHECK(code_level(3, 3, CodingKind::effect, 1) == std::vector<double>{-1, -1});
  CHECK(code_level(1, 3, CodingKind::dummy, 1) == std::vector<double>{0, 0});
  CHECK(code_level(3, 3, CodingKind::dummy, 1) == std::vector<double>{0, 1});
  CHECK(code_level(2, 3, CodingKind::dummy, 2) == std::vector<double>{0, 0});
  CHECK(code_level(3, 3, CodingKind::dummy, 2) == std::vector<double>{0, 1});
  CHECK_THROWS(code_level(4, 3, CodingKind::effect, 1));
  CHECK_THROWS(code_level(1, 1, CodingKind::effect, 1));
}

TEST_CASE("APC-I layout has 1 + (a-1) + (p-1) + (a-1)(p-1) = a*p columns") {
  for (auto [a, p] : {std::pair{2, 2}, {5, 5}, {9, 6}}) {
    const auto layout = TermLayout::apci(a, p, Coding::effect());
    CHECK(layout.size() == a * p);
    CHECK(TermLayout::main_effects(a, p, Coding::effect()).size() == a + p - 1);
    CHECK(TermLayout::accounting(a, p, Coding::effect()).size() == 2 * (a + p) - 3);
  }
  const auto layout = TermLayout::apci(3, 2, Coding::effect());
  const auto names = layout.names();
  CHECK(names.front() == "(Intercept)");
  CHECK(names.back() == "age:period[2,1]");
  CHECK(layout.index_of({Term::age, -1, 2}) == 2);
}

TEST_CASE("interaction columns are products of coded main effects") {
  const auto layout = TermLayout::apci(3, 3, Coding::effect());
  const auto r = layout.row({3, 2});
  // age[3] -> (-1,-1), period[2] -> (0,1)
  CHECK(r(1) == -1);
  CHECK(r(2) == -1);
  CHECK(r(3) == 0);
  CHECK(r(4) == 1);
  CHECK(r(5) == 0);  // age1*period1
  CHECK(r(6) == -1); // age1*period2
  CHECK(r(7) == 0);
  CHECK(r(8) == -1);
}

TEST_CASE("rank of accounting and APC-I designs agrees with an LU oracle") {
  for (auto [a, p] : {std::pair{2, 2}, {5, 5}, {9, 6}, {4, 7}}) {
    const auto spec = GridSpec::uniform(a, p);
    const auto cells = cell_records(spec);
    const auto acc = build_accounting_design(cells, spec, Coding::effect());
    const auto info = rank_and_nullspace(acc.X);
    CHECK(info.rank == acc.X.cols() - 1);
    CHECK(info.rank == oracle::rank_lu(acc.X));
    CHECK((acc.X * info.null_space).norm() < 1e-10);
    const auto full = build_apci_design(cells, spec, Coding::effect());
    CHECK(rank_and_nullspace(full.X).rank == a * p);
    CHECK(oracle::rank_lu(full.X) == a * p);
  }
}

TEST_CASE("interaction contrast recovers double-centred cell values in both codings") {
  const int a = 4, p = 3;
  for (auto coding : {Coding::effect(), Coding::dummy()}) {
    const auto layout = TermLayout::apci(a, p, coding);
    // Random coefficients define cell predictors eta = row . beta.
    Eigen::VectorXd beta = Eigen::VectorXd::LinSpaced(layout.size(), -1, 2).array().sin();
    Eigen::MatrixXd eta(a, p);
    for (int i = 1; i <= a; ++i)
      for (int j = 1; j <= p; ++j) eta(i - 1, j - 1) = layout.row({i, j}).dot(beta);
    const double g = eta.mean();
    for (int i = 1; i <= a; ++i)
      for (int j = 1; j <= p; ++j) {
        const double expected =
            eta(i - 1, j - 1) - eta.row(i - 1).mean() - eta.col(j - 1).mean() + g;
        CHECK(cell_contrast({i, j}, layout, ContrastPart::interaction_only).dot(beta) ==
              doctest::Approx(expected).epsilon(1e-12));
        CHECK(cell_contrast({i, j}, layout, ContrastPart::full_mean).dot(beta) ==
              doctest::Approx(eta(i - 1, j - 1)));
      }
    CHECK(intercept_contrast(layout).dot(beta) == doctest::Approx(g));
    CHECK(age_contrast(2, layout).dot(beta) == doctest::Approx(eta.row(1).mean() - g));
    CHECK(period_contrast(3, layout).dot(beta) == doctest::Approx(eta.col(2).mean() - g));
  }
}

TEST_CASE("under effect coding the contrasts pick out the coefficients") {
  const auto layout = TermLayout::apci(3, 3, Coding::effect());
  const auto c = cell_contrast({1, 2}, layout, ContrastPart::interaction_only);
  const int idx = layout.index_of({Term::interaction, -1, 1, 2});
  for (int n = 0; n < c.size(); ++n) CHECK(c(n) == (n == idx ? 1.0 : 0.0));
  const auto age1 = age_contrast(1, layout);
  CHECK(age1(layout.index_of({Term::age, -1, 1})) == doctest::Approx(1.0));
  CHECK(age1.cwiseAbs().sum() == doctest::Approx(1.0));
}

TEST_CASE("single-level covariates are rejected") {
  std::vector<CovariateFactor> cov{{"x", {"only"}}};
  CHECK_THROWS_AS(TermLayout::apci(3, 3, Coding::effect(), cov), DataError);
}

TEST_CASE("design rows validate covariate levels") {
  const auto spec = GridSpec::uniform(2, 2);
  std::vector<CovariateFactor> cov{{"x", {"a", "b"}}};
  auto recs = cell_records(spec);
  for (auto& r : recs) r.covariates = {0};
  recs[1].covariates = {2};
  CHECK_THROWS_AS(build_apci_design(recs, spec, Coding::effect(), cov), DataError);
}
