#pragma once

// The age-period-cohort-interaction model and its three-step inference:
//   1. global deviance test of the age x period interaction,
//   2. per-cohort deviation-magnitude tests,
//   3. average-deviation and life-course (orthogonal polynomial) contrasts,
// followed by the sign-based classification of intra-cohort dynamics.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "apci/design.hpp"
#include "apci/glm.hpp"
#include "apci/grid.hpp"

namespace apci {

struct ApciOptions {
  Family family = Family::binomial_logit;
  Coding coding;
  CohortScheme scheme;
  double alpha = 0.05;
  FitOptions glm;
  int threads = 1; // parallel Step 2 fits
};

struct EffectEstimate {
  double estimate = 0.0;
  double se = 0.0;
  double p_value = 1.0;
};

struct ApciFit {
  FitResult fit;
  TermLayout layout;
  GridSpec grid;
  CohortScheme scheme;

  // Sum-to-zero decomposition of the fitted cell predictors. These are the
  // coefficients themselves under effect coding and the equivalent
  // coding-free quantities otherwise.
  EffectEstimate intercept;
  std::vector<EffectEstimate> age;    // a entries
  std::vector<EffectEstimate> period; // p entries
  std::vector<std::vector<EffectEstimate>> covariate; // per factor, per level

  Eigen::MatrixXd interaction;    // a x p, implied cells included
  Eigen::MatrixXd interaction_se;
  Eigen::MatrixXd interaction_p;
  Eigen::MatrixXd cell_eta;       // fitted linear predictor, covariates averaged

  std::vector<std::string> warnings;

  // c such that c . beta is the interaction term of `cell`.
  Eigen::VectorXd interaction_contrast(CellIndex cell) const;
};

// Throws EmptyCellsError naming empty cells, plus the fitting errors of fit().
ApciFit fit_apci(std::span<const MicroRecord> records, const GridSpec& spec,
                 const std::vector<CovariateFactor>& covariates, const ApciOptions& opts);

// Main-effects submodel (intercept, age, period, covariates).
FitResult fit_main_effects(std::span<const MicroRecord> records, const GridSpec& spec,
                           const std::vector<CovariateFactor>& covariates,
                           const ApciOptions& opts);

TestResult step1_global_test(const FitResult& main_effects, const ApciFit& full);
TestResult step1_global_test(std::span<const MicroRecord> records, const GridSpec& spec,
                             const std::vector<CovariateFactor>& covariates,
                             const ApciOptions& opts);

// Main effects vs main effects plus one free indicator per cell of cohort k.
// Throws RankDeficientError when the augmented design is not of full rank.
TestResult step2_cohort_test(std::span<const MicroRecord> records, const GridSpec& spec, int k,
                             const std::vector<CovariateFactor>& covariates,
                             const ApciOptions& opts, const FitResult& main_effects);
TestResult step2_cohort_test(std::span<const MicroRecord> records, const GridSpec& spec, int k,
                             const std::vector<CovariateFactor>& covariates,
                             const ApciOptions& opts);

enum class PolyOrder { linear = 1, quadratic = 2 };

// Orthogonal polynomial contrast over n equally spaced points, unit Euclidean
// norm, positive leading coefficient (linear increases with position).
Eigen::VectorXd orthogonal_polynomial(int n, PolyOrder order);

struct WeightedCell {
  CellIndex cell;
  double weight = 0.0;
};

// Cell weights w such that sum w * interaction(cell) is cohort k's average
// deviation.
std::vector<WeightedCell> average_weights(int k, const GridSpec& spec, const CohortScheme& scheme);

// Cell weights for the life-course contrast. Cells are grouped by period
// (each period is one step along the cohort's life course; a single diagonal
// has one cell per period), averaged within a period, and the orthogonal
// polynomial is applied across periods. Throws ShortCohortError when the
// cohort spans too few periods for `order`.
std::vector<WeightedCell> life_course_weights(int k, const GridSpec& spec,
                                              const CohortScheme& scheme, PolyOrder order);

// Number of life-course positions (distinct periods) of cohort k.
int life_course_length(int k, const GridSpec& spec, const CohortScheme& scheme);

// Apply weights to an explicit a x p interaction matrix.
double apply_weights(std::span<const WeightedCell> weights, const Eigen::MatrixXd& interaction);

ContrastEstimate step3_average_deviation(const ApciFit& fit, int k);
ContrastEstimate step3_life_course_contrast(const ApciFit& fit, int k, PolyOrder order);

enum class Sign { negative = -1, zero = 0, positive = 1 };
enum class Classification {
  cumulative_advantage,
  cumulative_disadvantage,
  leveling,
  constant,
  no_clear_pattern
};

std::string to_string(Classification c);
Sign significance_sign(const ContrastEstimate& e, double alpha);
Classification classify_cohort(Sign average, Sign slope);
Classification classify_cohort(const ContrastEstimate& average, const ContrastEstimate& slope,
                               double alpha);

struct CohortReport {
  int id = 0;
  std::string label;
  int cells = 0; // o
  std::optional<TestResult> magnitude;
  std::optional<ContrastEstimate> average;
  std::optional<ContrastEstimate> slope;
  std::optional<ContrastEstimate> quadratic;
  std::optional<Classification> classification;
  bool short_cohort = false; // o <= 2
  bool no_slope = false;     // o == 1
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

CohortReport cohort_report(const ApciFit& fit, int k, std::optional<TestResult> magnitude,
                           double alpha);

struct Analysis {
  ApciFit fit;
  FitResult main_effects;
  TestResult global_test;
  std::vector<CohortReport> cohorts;
  std::vector<std::string> warnings;
  double alpha = 0.05;

  nlohmann::json to_json() const;
};

// Full three-step procedure; Step 2 refits run on opts.threads workers.
Analysis analyze(std::span<const MicroRecord> records, const GridSpec& spec,
                 const std::vector<CovariateFactor>& covariates, const ApciOptions& opts);

enum class PatternMode { age_by_period, period_by_age, mains_only };

struct PatternPoint {
  std::string curve; // period label, age label, or "age" / "period" for mains
  int i = 0;         // age group (0 when not applicable)
  int j = 0;         // period (0 when not applicable)
  double eta = 0.0;
  double value = 0.0; // response scale
};

// age_by_period: for each period j, mu + alpha_i + ab_ij over ages.
// period_by_age: for each age i, mu + beta_j + ab_ij over periods.
// mains_only: mu + alpha_i over ages, then mu + beta_j over periods.
std::vector<PatternPoint> extract_patterns(const ApciFit& fit, PatternMode mode);

struct TukeyResult {
  TestResult test;
  double ss_nonadditivity = 0.0;
  double ss_residual = 0.0;
  bool degenerate = false;   // all row or column effects zero; statistic set to 0
  bool exact_fit = false;    // nonadditivity explains all residual SS; statistic infinite
};

// One-degree-of-freedom test for nonadditivity on a table with one value per cell.
TukeyResult tukey_additivity_test(const Eigen::Ref<const Eigen::MatrixXd>& table);

// Ages whose period-to-period change of the fitted predictor has the
// opposite sign to the majority of ages for that step.
std::vector<std::string> crossover_warnings(const Eigen::MatrixXd& cell_eta, const GridSpec& spec);

} // namespace apci
