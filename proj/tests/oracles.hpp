#pragma once

// Reference implementations used only by the tests. Each one takes a
// different numerical route from the library code it checks.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "apci/grid.hpp"

namespace oracle {

using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

// Weighted least squares from the normal equations in extended precision.
inline Eigen::VectorXd wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& w) {
  const LMatrix Xl = X.cast<long double>();
  const LVector wl = w.cast<long double>();
  const LMatrix XtW = Xl.transpose() * wl.asDiagonal();
  const LMatrix A = XtW * Xl;
  const LVector b = XtW * y.cast<long double>();
  return A.ldlt().solve(b).cast<double>();
}

// Weighted logistic MLE by plain Newton-Raphson on the row-level
// log-likelihood, extended precision, run to a fixed point.
inline Eigen::VectorXd newton_logit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& w, int max_iter = 200) {
  const LMatrix Xl = X.cast<long double>();
  LVector beta = LVector::Zero(X.cols());
  for (int it = 0; it < max_iter; ++it) {
    const LVector eta = Xl * beta;
    LVector mu(eta.size()), h(eta.size());
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      mu(r) = 1.0L / (1.0L + std::exp(-eta(r)));
      h(r) = static_cast<long double>(w(r)) * mu(r) * (1.0L - mu(r));
    }
    const LVector score =
        Xl.transpose() * (w.cast<long double>().array() * (y.cast<long double>() - mu).array()).matrix();
    const LMatrix info = Xl.transpose() * h.asDiagonal() * Xl;
    const LVector step = info.ldlt().solve(score);
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-15L * (1.0L + beta.cwiseAbs().maxCoeff())) break;
  }
  return beta.cast<double>();
}

inline int rank_lu(const Eigen::MatrixXd& X) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(X);
  lu.setThreshold(1e-9);
  return static_cast<int>(lu.rank());
}

// Balanced two-way ANOVA: F for the A x B interaction from sums of squares.
// values[i][j] holds the replicates of cell (i, j).
struct AnovaF {
  double f = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;
};

inline AnovaF anova_interaction_f(const std::vector<std::vector<std::vector<double>>>& values) {
  const std::size_t a = values.size(), p = values.front().size();
  const std::size_t n = values.front().front().size();
  long double grand = 0;
  std::vector<long double> row(a, 0), col(p, 0);
  std::vector<std::vector<long double>> cell(a, std::vector<long double>(p, 0));
  long double sse = 0;
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      long double s = 0;
      for (double v : values[i][j]) s += v;
      cell[i][j] = s / n;
      for (double v : values[i][j]) sse += (v - cell[i][j]) * (v - cell[i][j]);
      row[i] += cell[i][j] / p;
      col[j] += cell[i][j] / a;
      grand += cell[i][j] / (a * p);
    }
  long double ssab = 0;
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      const long double d = cell[i][j] - row[i] - col[j] + grand;
      ssab += n * d * d;
    }
  AnovaF out;
  out.df1 = static_cast<double>((a - 1) * (p - 1));
  out.df2 = static_cast<double>(a * p * (n - 1));
  out.f = static_cast<double>((ssab / out.df1) / (sse / out.df2));
  return out;
}

// Tukey's nonadditivity F through the auxiliary regression: regress the
// table on row and column indicators plus the product of fitted row and
// column effects, and compare residual sums of squares with the additive fit.
inline double tukey_auxiliary_f(const Eigen::MatrixXd& t) {
  const Eigen::Index a = t.rows(), p = t.cols();
  const double grand = t.mean();
  const Eigen::VectorXd r = t.rowwise().mean().array() - grand;
  const Eigen::RowVectorXd c = t.colwise().mean().array() - grand;
  const Eigen::Index cols = 1 + (a - 1) + (p - 1);
  Eigen::MatrixXd X0 = Eigen::MatrixXd::Zero(a * p, cols);
  Eigen::MatrixXd X1 = Eigen::MatrixXd::Zero(a * p, cols + 1);
  Eigen::VectorXd y(a * p);
  for (Eigen::Index i = 0; i < a; ++i)
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::Index row = i * p + j;
      y(row) = t(i, j);
      X0(row, 0) = 1;
      if (i > 0) X0(row, i) = 1;
      if (j > 0) X0(row, (a - 1) + j) = 1;
      X1.row(row).head(cols) = X0.row(row);
      X1(row, cols) = r(i) * c(j);
    }
  auto rss = [&](const Eigen::MatrixXd& X) {
    const Eigen::VectorXd b = X.completeOrthogonalDecomposition().solve(y);
    return (y - X * b).squaredNorm();
  };
  const double rss0 = rss(X0), rss1 = rss(X1);
  const double df = static_cast<double>((a - 1) * (p - 1) - 1);
  return (rss0 - rss1) / (rss1 / df);
}

// Cell totals by sorting record keys, independent of the library's binning.
struct SortedCell {
  std::size_t records = 0;
  double weight = 0.0;
  double weighted_sum = 0.0;
};

inline std::map<std::pair<int, int>, SortedCell> sorted_aggregate(
    std::span<const apci::MicroRecord> records, const apci::GridSpec& spec) {
  auto locate = [](int v, const std::vector<int>& br) -> int {
    if (v < br.front() || v > br.back()) return 0;
    for (std::size_t b = 1; b < br.size(); ++b)
      if (v < br[b]) return static_cast<int>(b);
    return static_cast<int>(br.size()) - 1;
  };
  std::vector<std::tuple<int, int, double, double>> keyed;
  for (const auto& r : records) {
    const int i = locate(r.age_years, spec.age_breaks), j = locate(r.year, spec.period_breaks);
    if (i && j) keyed.emplace_back(i, j, r.weight, r.outcome);
  }
  std::sort(keyed.begin(), keyed.end());
  std::map<std::pair<int, int>, SortedCell> out;
  for (const auto& [i, j, w, y] : keyed) {
    auto& c = out[{i, j}];
    ++c.records;
    c.weight += w;
    c.weighted_sum += w * y;
  }
  return out;
}

} // namespace oracle
