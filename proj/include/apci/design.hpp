#pragma once

// Coded design matrices for the APC-I model, its main-effects submodel, the
// per-cohort augmented models, and the classical accounting model.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "apci/grid.hpp"

namespace apci {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class CodingKind { effect, dummy };

// Effect coding drops the last level and codes it -1 in every column of the
// factor. Dummy coding drops the reference level (1-based, default first).
struct Coding {
  CodingKind kind = CodingKind::effect;
  int age_reference = 1;
  int period_reference = 1;
  int cohort_reference = 1;
  std::vector<int> covariate_reference; // missing entries mean level 1

  static Coding effect() { return {}; }
  static Coding dummy() {
    Coding c;
    c.kind = CodingKind::dummy;
    return c;
  }
};

// Coded columns for one level of an n-level factor (n - 1 entries).
std::vector<double> code_level(int level, int n_levels, CodingKind kind, int reference);

enum class Term { intercept, age, period, covariate, interaction, cohort, cell };

struct TermTag {
  Term term = Term::intercept;
  int factor = -1; // covariate index for Term::covariate
  int level = 0;   // coded column within the factor (1-based), or age group for cell/interaction
  int level2 = 0;  // period column for interaction, period for cell

  std::string name(std::span<const CovariateFactor> covariates = {}) const;
  friend bool operator==(const TermTag&, const TermTag&) = default;
};

class TermLayout {
public:
  // Intercept, age (a-1), period (p-1), covariate mains, age x period ((a-1)(p-1)).
  static TermLayout apci(int ages, int periods, const Coding& coding,
                         std::vector<CovariateFactor> covariates = {});
  // Intercept, age, period and covariate mains only.
  static TermLayout main_effects(int ages, int periods, const Coding& coding,
                                 std::vector<CovariateFactor> covariates = {});
  // Main effects plus one unconstrained indicator per listed cell.
  static TermLayout with_cell_indicators(int ages, int periods, const Coding& coding,
                                         std::vector<CovariateFactor> covariates,
                                         std::span<const CellIndex> cells);
  // Intercept, age, period, cohort (a+p-2) columns.
  static TermLayout accounting(int ages, int periods, const Coding& coding);

  int ages() const { return ages_; }
  int periods() const { return periods_; }
  const Coding& coding() const { return coding_; }
  const std::vector<CovariateFactor>& covariates() const { return covariates_; }
  const std::vector<TermTag>& columns() const { return columns_; }
  int size() const { return static_cast<int>(columns_.size()); }

  // -1 when absent.
  int index_of(const TermTag& tag) const;
  std::vector<std::string> names() const;
  nlohmann::json to_json() const;

  // One design row for an observation in `cell` with the given covariate
  // levels. An empty `covariate_levels` averages each covariate's coded
  // columns over its levels.
  Eigen::RowVectorXd row(CellIndex cell, std::span<const int> covariate_levels = {}) const;

private:
  TermLayout(int ages, int periods, Coding coding, std::vector<CovariateFactor> covariates)
      : ages_(ages), periods_(periods), coding_(std::move(coding)),
        covariates_(std::move(covariates)) {}
  void add_mains();
  int reference_for_covariate(int c) const;

  int ages_;
  int periods_;
  Coding coding_;
  std::vector<CovariateFactor> covariates_;
  std::vector<TermTag> columns_;
};

struct DesignMatrix {
  RowMatrix X;
  TermLayout layout;
};

// One row per record. Records must be on-grid (bin_record rejections propagate).
DesignMatrix build_design(std::span<const MicroRecord> records, const GridSpec& spec,
                          TermLayout layout);

DesignMatrix build_apci_design(std::span<const MicroRecord> records, const GridSpec& spec,
                               const Coding& coding, std::vector<CovariateFactor> covariates = {});

DesignMatrix build_accounting_design(std::span<const MicroRecord> records, const GridSpec& spec,
                                     const Coding& coding);

// One zero-outcome, unit-weight record per cell in row-major (i, j) order, at
// each bin's lower break.
std::vector<MicroRecord> cell_records(const GridSpec& spec);

struct RankInfo {
  int rank = 0;
  Eigen::VectorXd singular_values;
  Eigen::MatrixXd null_space; // orthonormal columns
  double tolerance = 0.0;
};

// Singular values at or below max(m, n) * eps * sigma_max count as zero.
RankInfo rank_and_nullspace(const Eigen::Ref<const Eigen::MatrixXd>& X);

enum class ContrastPart { interaction_only, full_mean };

// c such that c . beta is the cell's interaction term (implied cells
// included) or its full linear predictor with covariates at their average
// coded level. Works for either coding.
Eigen::VectorXd cell_contrast(CellIndex cell, const TermLayout& layout, ContrastPart part);

// Sum-to-zero main-effect contrasts derived from the cell predictors:
// intercept = grand mean, age_i = row mean - grand mean, period_j likewise.
Eigen::VectorXd intercept_contrast(const TermLayout& layout);
Eigen::VectorXd age_contrast(int i, const TermLayout& layout);
Eigen::VectorXd period_contrast(int j, const TermLayout& layout);
// Level effect relative to the average over levels.
Eigen::VectorXd covariate_contrast(int factor, int level, const TermLayout& layout);

} // namespace apci
