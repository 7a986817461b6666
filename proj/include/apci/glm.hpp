#pragma once

// Weighted GLM fitting by iteratively reweighted least squares for the
// Gaussian-identity and binomial-logit families, plus nested-model deviance
// F tests and single-contrast t / Wald tests.
//
// Weights are precision (frequency) weights. The residual degrees of freedom
// count observations with positive weight, not the weight total, so scaling
// all weights by a constant leaves beta-hat and the dfs unchanged; for the
// logit family the covariance then scales by the inverse constant.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "apci/design.hpp"

namespace apci {

enum class Family { gaussian_identity, binomial_logit };

std::string to_string(Family f);
Family family_from_string(const std::string& s); // "gaussian" | "logit"

struct FitOptions {
  int max_iterations = 50;
  double tolerance = 1e-10; // relative deviance change
};

struct FitResult {
  Family family = Family::gaussian_identity;
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  double deviance = 0.0;
  double dispersion = 1.0; // 1 for logit, D / df for Gaussian (NaN when df = 0)
  double residual_df = 0.0;
  std::size_t n_obs = 0; // rows with positive weight
  double weight_sum = 0.0;
  int iterations = 0;
  bool converged = false;

  Eigen::VectorXd standard_errors() const;
  nlohmann::json to_json() const;
};

enum class TestKind { F, t, wald_chi2 };

struct TestResult {
  TestKind kind = TestKind::F;
  double statistic = 0.0;
  double df1 = 0.0; // numerator df (F), df (t), or chi-square df
  double df2 = 0.0; // denominator df (F only)
  double p_value = 1.0;

  nlohmann::json to_json() const;
};

// A linear combination c . beta with its t test.
struct ContrastEstimate {
  double estimate = 0.0;
  double se = 0.0;
  TestResult test;
};

// Throws RankDeficientError, SeparationError (logit MLE does not exist),
// ConvergenceError, or DataError for invalid outcomes/weights.
FitResult fit(const RowMatrix& X, std::span<const double> y, std::span<const double> w,
              Family family, const FitOptions& opts = {},
              std::vector<std::string> names = {});

// Generalized F: ((D0 - D1) / df1) / dispersion_full, referred to F(df1, df2)
// with df2 the full model's residual df. For Gaussian fits this is the
// classical nested-model F.
TestResult deviance_f_test(const FitResult& null_fit, const FitResult& full_fit);

// Two-sided t test of c . beta against 0 on the fit's residual df (normal
// reference when that df is below 1). Throws DegenerateContrastError when
// c' Sigma c vanishes.
ContrastEstimate contrast_t_test(const FitResult& fit, const Eigen::Ref<const Eigen::VectorXd>& c);

// Same contrast referred to chi-square(1).
ContrastEstimate contrast_wald_test(const FitResult& fit,
                                    const Eigen::Ref<const Eigen::VectorXd>& c);

struct Prediction {
  Eigen::VectorXd eta;
  Eigen::VectorXd mean;
};

Prediction predict(const FitResult& fit, const RowMatrix& X_new);

double inverse_link(Family f, double eta);

// p-value helpers (upper tail / two-sided).
double f_upper_tail(double f, double df1, double df2);
double t_two_sided(double t, double df);

} // namespace apci
