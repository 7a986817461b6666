#include "apci/glm.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "apci/errors.hpp"

namespace apci {

std::string to_string(Family f) {
  return f == Family::binomial_logit ? "logit" : "gaussian";
}

Family family_from_string(const std::string& s) {
  if (s == "logit" || s == "binomial") return Family::binomial_logit;
  if (s == "gaussian" || s == "identity") return Family::gaussian_identity;
  throw ConfigError(fmt::format("unknown family '{}' (expected logit or gaussian)", s));
}

double inverse_link(Family f, double eta) {
  if (f == Family::gaussian_identity) return eta;
  return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

namespace {

// log(mu) and log(1 - mu) for mu = logistic(eta), without cancellation.
double log_mu(double eta) { return -std::log1p(std::exp(-eta)); }
double log_one_minus_mu(double eta) { return -std::log1p(std::exp(eta)); }

// Rows with positive weight collapsed onto their distinct design rows. The
// weighted likelihood depends on the data only through these sums, so the
// IRLS iterates, covariance and (binary-outcome) deviance are exactly those
// of the uncollapsed fit.
struct Groups {
  Eigen::MatrixXd X;
  Eigen::VectorXd weight;    // sum w
  Eigen::VectorXd mean;      // sum w y / sum w
  double within_ss = 0.0;    // sum w (y - group mean)^2, Gaussian only
  std::size_t n_obs = 0;
  double weight_sum = 0.0;
};

std::uint64_t hash_row(const double* row, Eigen::Index n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (Eigen::Index c = 0; c < n; ++c) {
    double v = row[c] == 0.0 ? 0.0 : row[c]; // fold -0.0
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h ^= bits + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

Groups collapse(const RowMatrix& X, std::span<const double> y, std::span<const double> w) {
  const Eigen::Index n = X.rows(), p = X.cols();
  std::unordered_map<std::uint64_t, std::vector<int>> buckets;
  std::vector<Eigen::Index> representative;
  std::vector<int> group_of(static_cast<std::size_t>(n), -1);
  std::vector<double> sw, swy;
  Groups g;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double wr = w[static_cast<std::size_t>(r)];
    if (!(wr > 0.0)) continue;
    const double* row = X.row(r).data();
    auto& bucket = buckets[hash_row(row, p)];
    int id = -1;
    for (int cand : bucket)
      if (std::equal(row, row + p, X.row(representative[static_cast<std::size_t>(cand)]).data())) {
        id = cand;
        break;
      }
    if (id < 0) {
      id = static_cast<int>(representative.size());
      representative.push_back(r);
      bucket.push_back(id);
      sw.push_back(0.0);
      swy.push_back(0.0);
    }
    group_of[static_cast<std::size_t>(r)] = id;
    sw[static_cast<std::size_t>(id)] += wr;
    swy[static_cast<std::size_t>(id)] += wr * y[static_cast<std::size_t>(r)];
    ++g.n_obs;
    g.weight_sum += wr;
  }
  const auto G = static_cast<Eigen::Index>(representative.size());
  g.X.resize(G, p);
  g.weight.resize(G);
  g.mean.resize(G);
  for (Eigen::Index k = 0; k < G; ++k) {
    g.X.row(k) = X.row(representative[static_cast<std::size_t>(k)]);
    g.weight(k) = sw[static_cast<std::size_t>(k)];
    g.mean(k) = swy[static_cast<std::size_t>(k)] / sw[static_cast<std::size_t>(k)];
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    const int id = group_of[static_cast<std::size_t>(r)];
    if (id < 0) continue;
    const double d = y[static_cast<std::size_t>(r)] - g.mean(id);
    g.within_ss += w[static_cast<std::size_t>(r)] * d * d;
  }
  return g;
}

Eigen::ColPivHouseholderQR<Eigen::MatrixXd> weighted_qr(const Eigen::MatrixXd& X,
                                                        const Eigen::VectorXd& ww,
                                                        const std::vector<std::string>& names) {
  const Eigen::MatrixXd A = ww.array().sqrt().matrix().asDiagonal() * X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
  qr.setThreshold(static_cast<double>(std::max(A.rows(), A.cols())) *
                  std::numeric_limits<double>::epsilon());
  qr.compute(A);
  const int rank = static_cast<int>(qr.rank());
  if (rank < A.cols()) {
    std::vector<int> aliased;
    std::string list;
    for (Eigen::Index c = rank; c < A.cols(); ++c) {
      const int col = qr.colsPermutation().indices()(c);
      aliased.push_back(col);
      if (!list.empty()) list += ", ";
      list += col < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(col)]
                                                   : std::to_string(col);
    }
    throw RankDeficientError(rank, aliased,
                             fmt::format("design is rank deficient (rank {} of {}); aliased: {}",
                                         rank, A.cols(), list));
  }
  return qr;
}

double logit_deviance(const Groups& g, const Eigen::VectorXd& eta) {
  double d = 0.0;
  for (Eigen::Index k = 0; k < eta.size(); ++k) {
    const double s1 = g.weight(k) * g.mean(k);
    const double s0 = g.weight(k) - s1;
    if (s1 > 0) d -= 2.0 * s1 * log_mu(eta(k));
    if (s0 > 0) d -= 2.0 * s0 * log_one_minus_mu(eta(k));
  }
  return d;
}

double gaussian_deviance(const Groups& g, const Eigen::VectorXd& eta) {
  return g.within_ss + (g.weight.array() * (g.mean - eta).array().square()).sum();
}

bool separated(const Groups& g, const Eigen::VectorXd& eta) {
  for (Eigen::Index k = 0; k < eta.size(); ++k) {
    const double m = g.mean(k);
    if ((m == 0.0 && eta(k) < -10.0) || (m == 1.0 && eta(k) > 10.0)) return true;
  }
  return false;
}

Eigen::MatrixXd unscaled_covariance(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
  const Eigen::Index p = qr.cols();
  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd inner = Rinv * Rinv.transpose();
  const auto& perm = qr.colsPermutation();
  Eigen::MatrixXd cov = perm * inner * perm.transpose();
  return 0.5 * (cov + cov.transpose());
}

} // namespace

FitResult fit(const RowMatrix& X, std::span<const double> y, std::span<const double> w,
              Family family, const FitOptions& opts, std::vector<std::string> names) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (y.size() != n || w.size() != n)
    throw std::invalid_argument(fmt::format("fit: X has {} rows but y has {} and w has {}", n,
                                            y.size(), w.size()));
  if (!X.allFinite()) throw DataError("design matrix has non-finite entries");
  for (std::size_t r = 0; r < n; ++r) {
    if (!(w[r] >= 0.0) || !std::isfinite(w[r]))
      throw DataError(fmt::format("row {}: weight must be finite and nonnegative", r));
    if (!std::isfinite(y[r])) throw DataError(fmt::format("row {}: non-finite outcome", r));
    if (family == Family::binomial_logit && y[r] != 0.0 && y[r] != 1.0)
      throw DataError(fmt::format("row {}: logit outcome must be 0 or 1, got {}", r, y[r]));
  }

  const Groups g = collapse(X, y, w);
  if (g.n_obs == 0) throw DataError("no observations with positive weight");

  FitResult res;
  res.family = family;
  res.names = std::move(names);
  res.n_obs = g.n_obs;
  res.weight_sum = g.weight_sum;
  const auto p = X.cols();
  res.residual_df = static_cast<double>(g.n_obs) - static_cast<double>(p);

  if (family == Family::gaussian_identity) {
    const auto qr = weighted_qr(g.X, g.weight, res.names);
    const Eigen::VectorXd rhs = g.weight.array().sqrt().matrix().cwiseProduct(g.mean);
    res.coefficients = qr.solve(rhs);
    res.deviance = gaussian_deviance(g, g.X * res.coefficients);
    res.iterations = 1;
    res.converged = true;
    res.dispersion = res.residual_df > 0 ? res.deviance / res.residual_df
                                         : std::numeric_limits<double>::quiet_NaN();
    res.covariance = res.dispersion * unscaled_covariance(qr);
    return res;
  }

  // Binomial-logit IRLS.
  Eigen::VectorXd eta(g.X.rows());
  for (Eigen::Index k = 0; k < eta.size(); ++k) {
    const double mu0 = (g.weight(k) * g.mean(k) + 0.5) / (g.weight(k) + 1.0);
    eta(k) = std::log(mu0 / (1.0 - mu0));
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double dev_old = logit_deviance(g, eta);
  bool have_beta = false;
  int small_steps = 0;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    Eigen::VectorXd ww(eta.size()), z(eta.size());
    for (Eigen::Index k = 0; k < eta.size(); ++k) {
      const double mu = inverse_link(family, eta(k));
      const double v = std::max(mu * (1.0 - mu), 1e-300);
      ww(k) = g.weight(k) * v;
      z(k) = eta(k) + (g.mean(k) - mu) / v;
    }
    const auto qr = weighted_qr(g.X, ww, res.names);
    Eigen::VectorXd beta_new = qr.solve(ww.array().sqrt().matrix().cwiseProduct(z));
    Eigen::VectorXd eta_new = g.X * beta_new;
    double dev = logit_deviance(g, eta_new);
    // Step halving guards against overshoot from poor starting values.
    for (int half = 0; have_beta && (!std::isfinite(dev) || dev > dev_old * (1 + 1e-12)) &&
                       half < 30;
         ++half) {
      beta_new = 0.5 * (beta_new + beta);
      eta_new = g.X * beta_new;
      dev = logit_deviance(g, eta_new);
    }
    const double change = std::abs(dev - dev_old) / (std::abs(dev) + 0.1);
    beta = beta_new;
    eta = eta_new;
    have_beta = true;
    res.iterations = it;
    dev_old = dev;
    // One extra Newton step after the deviance settles polishes the
    // coefficients to near machine precision at negligible cost.
    small_steps = change <= opts.tolerance ? small_steps + 1 : 0;
    if (small_steps >= 2) {
      res.converged = true;
      break;
    }
  }
  if (separated(g, eta))
    throw SeparationError(
        "perfect separation: fitted probabilities numerically 0 or 1; the maximum-likelihood "
        "estimate does not exist (some coefficients diverge)");
  if (!res.converged)
    throw ConvergenceError(
        fmt::format("IRLS did not converge in {} iterations", opts.max_iterations));

  Eigen::VectorXd ww(eta.size());
  for (Eigen::Index k = 0; k < eta.size(); ++k) {
    const double mu = inverse_link(family, eta(k));
    ww(k) = g.weight(k) * mu * (1.0 - mu);
  }
  res.coefficients = beta;
  res.deviance = dev_old;
  res.dispersion = 1.0;
  res.covariance = unscaled_covariance(weighted_qr(g.X, ww, res.names));
  return res;
}

Eigen::VectorXd FitResult::standard_errors() const {
  return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

nlohmann::json FitResult::to_json() const {
  const Eigen::VectorXd se = standard_errors();
  nlohmann::json coefs = nlohmann::json::array();
  for (Eigen::Index n = 0; n < coefficients.size(); ++n) {
    nlohmann::json c;
    c["term"] = n < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(n)]
                                                            : std::to_string(n);
    c["estimate"] = coefficients(n);
    c["se"] = std::isfinite(se(n)) ? nlohmann::json(se(n)) : nlohmann::json(nullptr);
    coefs.push_back(c);
  }
  return {{"family", to_string(family)},
          {"coefficients", coefs},
          {"deviance", deviance},
          {"dispersion", std::isfinite(dispersion) ? nlohmann::json(dispersion) : nlohmann::json()},
          {"residual_df", residual_df},
          {"n_obs", n_obs},
          {"weight_sum", weight_sum},
          {"log_weight_sum", weight_sum > 0 ? std::log(weight_sum) : 0.0},
          {"iterations", iterations},
          {"converged", converged}};
}

nlohmann::json TestResult::to_json() const {
  nlohmann::json j;
  j["kind"] = kind == TestKind::F ? "F" : kind == TestKind::t ? "t" : "wald_chi2";
  j["statistic"] = std::isfinite(statistic) ? nlohmann::json(statistic) : nlohmann::json("inf");
  j["df1"] = df1;
  if (kind == TestKind::F) j["df2"] = df2;
  j["p_value"] = p_value;
  return j;
}

double f_upper_tail(double f, double df1, double df2) {
  if (!(f > 0.0)) return 1.0;
  if (std::isinf(f)) return 0.0;
  const boost::math::fisher_f dist(df1, df2);
  return boost::math::cdf(boost::math::complement(dist, f));
}

double t_two_sided(double t, double df) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  const double at = std::abs(t);
  if (std::isinf(at)) return 0.0;
  if (df < 1.0) {
    const boost::math::normal z;
    return 2.0 * boost::math::cdf(boost::math::complement(z, at));
  }
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, at)));
}

TestResult deviance_f_test(const FitResult& null_fit, const FitResult& full_fit) {
  if (null_fit.family != full_fit.family)
    throw std::invalid_argument("deviance_f_test: families differ");
  if (null_fit.n_obs != full_fit.n_obs)
    throw std::invalid_argument("deviance_f_test: fits use different observations");
  const double df1 = null_fit.residual_df - full_fit.residual_df;
  if (df1 <= 0)
    throw std::invalid_argument(fmt::format(
        "deviance_f_test: null model is not nested in the full model (df1 = {})", df1));
  const double df2 = full_fit.residual_df;
  const double drop = null_fit.deviance - full_fit.deviance;
  if (drop < -1e-8 * (1.0 + full_fit.deviance))
    throw NumericalError(fmt::format(
        "deviance of the larger model exceeds the nested model's by {}; fit failure", -drop));
  TestResult t;
  t.kind = TestKind::F;
  t.df1 = df1;
  t.df2 = df2;
  const double num = std::max(drop, 0.0) / df1;
  if (num == 0.0) {
    t.statistic = 0.0;
    t.p_value = 1.0;
    return t;
  }
  const double disp = full_fit.dispersion;
  t.statistic = disp > 0 ? num / disp : std::numeric_limits<double>::infinity();
  t.p_value = df2 > 0 ? f_upper_tail(t.statistic, df1, df2)
                      : std::numeric_limits<double>::quiet_NaN();
  return t;
}

namespace {

std::pair<double, double> contrast_moments(const FitResult& fit,
                                           const Eigen::Ref<const Eigen::VectorXd>& c) {
  if (c.size() != fit.coefficients.size())
    throw std::invalid_argument(fmt::format("contrast has {} entries, fit has {} coefficients",
                                            c.size(), fit.coefficients.size()));
  const double est = c.dot(fit.coefficients);
  const double var = c.dot(fit.covariance * c);
  const Eigen::VectorXd sd = fit.standard_errors();
  const double scale = c.cwiseAbs().dot(sd);
  if (!(var > 1e-12 * scale * scale) || !(var > 0.0))
    throw DegenerateContrastError("contrast has zero variance; test undefined");
  return {est, std::sqrt(var)};
}

} // namespace

ContrastEstimate contrast_t_test(const FitResult& fit, const Eigen::Ref<const Eigen::VectorXd>& c) {
  const auto [est, se] = contrast_moments(fit, c);
  ContrastEstimate out;
  out.estimate = est;
  out.se = se;
  out.test.kind = TestKind::t;
  out.test.statistic = est / se;
  out.test.df1 = fit.residual_df;
  out.test.p_value = t_two_sided(out.test.statistic, fit.residual_df);
  return out;
}

ContrastEstimate contrast_wald_test(const FitResult& fit,
                                    const Eigen::Ref<const Eigen::VectorXd>& c) {
  const auto [est, se] = contrast_moments(fit, c);
  ContrastEstimate out;
  out.estimate = est;
  out.se = se;
  out.test.kind = TestKind::wald_chi2;
  out.test.statistic = (est / se) * (est / se);
  out.test.df1 = 1;
  const boost::math::chi_squared dist(1.0);
  out.test.p_value = boost::math::cdf(boost::math::complement(dist, out.test.statistic));
  return out;
}

Prediction predict(const FitResult& fit, const RowMatrix& X_new) {
  if (X_new.cols() != fit.coefficients.size())
    throw std::invalid_argument(fmt::format("predict: {} columns given, fit has {}", X_new.cols(),
                                            fit.coefficients.size()));
  Prediction out;
  out.eta = X_new * fit.coefficients;
  out.mean = out.eta.unaryExpr([f = fit.family](double e) { return inverse_link(f, e); });
  return out;
}

} // namespace apci
