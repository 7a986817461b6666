#include "apci/design.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "apci/errors.hpp"

namespace apci {

std::vector<double> code_level(int level, int n_levels, CodingKind kind, int reference) {
  if (n_levels < 2) throw std::invalid_argument("factor needs at least two levels");
  if (level < 1 || level > n_levels)
    throw std::out_of_range(fmt::format("level {} outside 1..{}", level, n_levels));
  std::vector<double> out(static_cast<std::size_t>(n_levels - 1), 0.0);
  if (kind == CodingKind::effect) {
    if (level == n_levels)
      std::fill(out.begin(), out.end(), -1.0);
    else
      out[static_cast<std::size_t>(level - 1)] = 1.0;
    return out;
  }
  if (reference < 1 || reference > n_levels)
    throw std::out_of_range(fmt::format("reference level {} outside 1..{}", reference, n_levels));
  if (level != reference) out[static_cast<std::size_t>(level < reference ? level - 1 : level - 2)] = 1.0;
  return out;
}

namespace {

// Level number represented by coded column m.
int level_of_column(int m, CodingKind kind, int reference) {
  if (kind == CodingKind::effect) return m;
  return m < reference ? m : m + 1;
}

std::vector<double> averaged_coding(int n_levels, CodingKind kind, int reference) {
  std::vector<double> avg(static_cast<std::size_t>(n_levels - 1), 0.0);
  for (int l = 1; l <= n_levels; ++l) {
    const auto c = code_level(l, n_levels, kind, reference);
    for (std::size_t m = 0; m < c.size(); ++m) avg[m] += c[m] / n_levels;
  }
  return avg;
}

} // namespace

std::string TermTag::name(std::span<const CovariateFactor> covariates) const {
  switch (term) {
  case Term::intercept: return "(Intercept)";
  case Term::age: return fmt::format("age[{}]", level);
  case Term::period: return fmt::format("period[{}]", level);
  case Term::covariate: {
    const std::string fname = factor >= 0 && factor < static_cast<int>(covariates.size())
                                  ? covariates[static_cast<std::size_t>(factor)].name
                                  : fmt::format("cov{}", factor);
    return fmt::format("{}[{}]", fname, level);
  }
  case Term::interaction: return fmt::format("age:period[{},{}]", level, level2);
  case Term::cohort: return fmt::format("cohort[{}]", level);
  case Term::cell: return fmt::format("cell[{},{}]", level, level2);
  }
  return "?";
}

int TermLayout::reference_for_covariate(int c) const {
  const auto& refs = coding_.covariate_reference;
  return c < static_cast<int>(refs.size()) ? refs[static_cast<std::size_t>(c)] : 1;
}

void TermLayout::add_mains() {
  const auto k = coding_.kind;
  columns_.push_back({Term::intercept});
  for (int m = 1; m < ages_; ++m)
    columns_.push_back({Term::age, -1, level_of_column(m, k, coding_.age_reference)});
  for (int m = 1; m < periods_; ++m)
    columns_.push_back({Term::period, -1, level_of_column(m, k, coding_.period_reference)});
  for (int c = 0; c < static_cast<int>(covariates_.size()); ++c) {
    const auto& f = covariates_[static_cast<std::size_t>(c)];
    if (f.size() < 2)
      throw DataError(fmt::format("covariate '{}' has a single level; no contrast possible",
                                  f.name));
    for (int m = 1; m < f.size(); ++m)
      columns_.push_back({Term::covariate, c, level_of_column(m, k, reference_for_covariate(c))});
  }
}

TermLayout TermLayout::main_effects(int ages, int periods, const Coding& coding,
                                    std::vector<CovariateFactor> covariates) {
  TermLayout t(ages, periods, coding, std::move(covariates));
  t.add_mains();
  return t;
}

TermLayout TermLayout::apci(int ages, int periods, const Coding& coding,
                            std::vector<CovariateFactor> covariates) {
  TermLayout t = main_effects(ages, periods, coding, std::move(covariates));
  for (int m1 = 1; m1 < ages; ++m1)
    for (int m2 = 1; m2 < periods; ++m2)
      t.columns_.push_back({Term::interaction, -1,
                            level_of_column(m1, coding.kind, coding.age_reference),
                            level_of_column(m2, coding.kind, coding.period_reference)});
  return t;
}

TermLayout TermLayout::with_cell_indicators(int ages, int periods, const Coding& coding,
                                            std::vector<CovariateFactor> covariates,
                                            std::span<const CellIndex> cells) {
  TermLayout t = main_effects(ages, periods, coding, std::move(covariates));
  for (const auto& c : cells) t.columns_.push_back({Term::cell, -1, c.i, c.j});
  return t;
}

TermLayout TermLayout::accounting(int ages, int periods, const Coding& coding) {
  TermLayout t = main_effects(ages, periods, coding, {});
  for (int m = 1; m < ages + periods - 1; ++m)
    t.columns_.push_back(
        {Term::cohort, -1, level_of_column(m, coding.kind, coding.cohort_reference)});
  return t;
}

int TermLayout::index_of(const TermTag& tag) const {
  for (int n = 0; n < size(); ++n)
    if (columns_[static_cast<std::size_t>(n)] == tag) return n;
  return -1;
}

std::vector<std::string> TermLayout::names() const {
  std::vector<std::string> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) out.push_back(c.name(covariates_));
  return out;
}

nlohmann::json TermLayout::to_json() const {
  nlohmann::json cov = nlohmann::json::array();
  for (const auto& f : covariates_) cov.push_back({{"name", f.name}, {"levels", f.levels}});
  return {{"ages", ages_},
          {"periods", periods_},
          {"coding", coding_.kind == CodingKind::effect ? "effect" : "dummy"},
          {"covariates", cov},
          {"columns", names()}};
}

Eigen::RowVectorXd TermLayout::row(CellIndex cell, std::span<const int> covariate_levels) const {
  const auto kind = coding_.kind;
  const auto age = code_level(cell.i, ages_, kind, coding_.age_reference);
  const auto period = code_level(cell.j, periods_, kind, coding_.period_reference);
  std::vector<std::vector<double>> cov(covariates_.size());
  for (std::size_t c = 0; c < covariates_.size(); ++c) {
    const int n = covariates_[c].size();
    const int ref = reference_for_covariate(static_cast<int>(c));
    cov[c] = covariate_levels.empty() ? averaged_coding(n, kind, ref)
                                      : code_level(covariate_levels[c] + 1, n, kind, ref);
  }
  std::vector<double> cohort;
  const bool has_cohort = !columns_.empty() && columns_.back().term == Term::cohort;
  if (has_cohort)
    cohort = code_level(ages_ - cell.i + cell.j, ages_ + periods_ - 1, kind,
                        coding_.cohort_reference);

  // Position of a tag's column within its factor's coded block.
  auto column_of_level = [kind](int level, int reference) {
    return kind == CodingKind::effect ? level : (level < reference ? level : level - 1);
  };

  Eigen::RowVectorXd r(size());
  for (int n = 0; n < size(); ++n) {
    const auto& t = columns_[static_cast<std::size_t>(n)];
    double v = 0.0;
    switch (t.term) {
    case Term::intercept: v = 1.0; break;
    case Term::age: v = age[column_of_level(t.level, coding_.age_reference) - 1]; break;
    case Term::period: v = period[column_of_level(t.level, coding_.period_reference) - 1]; break;
    case Term::covariate:
      v = cov[static_cast<std::size_t>(t.factor)]
             [column_of_level(t.level, reference_for_covariate(t.factor)) - 1];
      break;
    case Term::interaction:
      v = age[column_of_level(t.level, coding_.age_reference) - 1] *
          period[column_of_level(t.level2, coding_.period_reference) - 1];
      break;
    case Term::cohort: v = cohort[column_of_level(t.level, coding_.cohort_reference) - 1]; break;
    case Term::cell: v = (cell.i == t.level && cell.j == t.level2) ? 1.0 : 0.0; break;
    }
    r(n) = v;
  }
  return r;
}

DesignMatrix build_design(std::span<const MicroRecord> records, const GridSpec& spec,
                          TermLayout layout) {
  if (layout.ages() != spec.ages() || layout.periods() != spec.periods())
    throw std::invalid_argument("layout dimensions do not match the grid");
  const auto ncov = layout.covariates().size();
  RowMatrix X(static_cast<Eigen::Index>(records.size()), layout.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.covariates.size() != ncov)
      throw DataError(fmt::format("record {}: expected {} covariate values, got {}", rec.id, ncov,
                                  rec.covariates.size()));
    for (std::size_t c = 0; c < ncov; ++c)
      if (rec.covariates[c] < 0 || rec.covariates[c] >= layout.covariates()[c].size())
        throw DataError(fmt::format("record {}: unknown level {} for covariate '{}'", rec.id,
                                    rec.covariates[c], layout.covariates()[c].name));
    X.row(static_cast<Eigen::Index>(r)) = layout.row(bin_record(rec, spec), rec.covariates);
  }
  return {std::move(X), std::move(layout)};
}

DesignMatrix build_apci_design(std::span<const MicroRecord> records, const GridSpec& spec,
                               const Coding& coding, std::vector<CovariateFactor> covariates) {
  return build_design(records, spec,
                      TermLayout::apci(spec.ages(), spec.periods(), coding, std::move(covariates)));
}

DesignMatrix build_accounting_design(std::span<const MicroRecord> records, const GridSpec& spec,
                                     const Coding& coding) {
  return build_design(records, spec, TermLayout::accounting(spec.ages(), spec.periods(), coding));
}

std::vector<MicroRecord> cell_records(const GridSpec& spec) {
  std::vector<MicroRecord> out;
  std::size_t id = 0;
  for (int i = 1; i <= spec.ages(); ++i)
    for (int j = 1; j <= spec.periods(); ++j) {
      MicroRecord r;
      r.id = id++;
      r.age_years = spec.age_breaks[static_cast<std::size_t>(i - 1)];
      r.year = spec.period_breaks[static_cast<std::size_t>(j - 1)];
      out.push_back(r);
    }
  return out;
}

RankInfo rank_and_nullspace(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  RankInfo info;
  const auto m = X.rows(), n = X.cols();
  if (n == 0) return info;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeFullV);
  info.singular_values = svd.singularValues();
  const double smax = info.singular_values.size() ? info.singular_values(0) : 0.0;
  info.tolerance = static_cast<double>(std::max(m, n)) * std::numeric_limits<double>::epsilon() * smax;
  for (Eigen::Index s = 0; s < info.singular_values.size(); ++s)
    if (info.singular_values(s) > info.tolerance) ++info.rank;
  info.null_space = svd.matrixV().rightCols(n - info.rank);
  return info;
}

Eigen::VectorXd cell_contrast(CellIndex cell, const TermLayout& layout, ContrastPart part) {
  const int a = layout.ages(), p = layout.periods();
  if (cell.i < 1 || cell.i > a || cell.j < 1 || cell.j > p)
    throw std::out_of_range(fmt::format("cell ({}, {}) outside {}x{} grid", cell.i, cell.j, a, p));
  if (part == ContrastPart::full_mean) return layout.row(cell).transpose();

  // Double-centre the cell predictors: eta_ij - eta_i. - eta_.j + eta_.. is
  // the interaction term under the sum-to-zero decomposition.
  Eigen::VectorXd own = layout.row(cell).transpose();
  Eigen::VectorXd row_mean = Eigen::VectorXd::Zero(layout.size());
  Eigen::VectorXd col_mean = Eigen::VectorXd::Zero(layout.size());
  Eigen::VectorXd grand = Eigen::VectorXd::Zero(layout.size());
  for (int i = 1; i <= a; ++i)
    for (int j = 1; j <= p; ++j) {
      const Eigen::VectorXd r = layout.row({i, j}).transpose();
      if (i == cell.i) row_mean += r / p;
      if (j == cell.j) col_mean += r / a;
      grand += r / (a * p);
    }
  Eigen::VectorXd c = own - row_mean - col_mean + grand;
  // Entries are small rationals; snap rounding noise so exact zeros stay exact.
  for (Eigen::Index n = 0; n < c.size(); ++n)
    if (std::abs(c(n)) < 1e-13) c(n) = 0.0;
  return c;
}

Eigen::VectorXd intercept_contrast(const TermLayout& layout) {
  const int a = layout.ages(), p = layout.periods();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(layout.size());
  for (int i = 1; i <= a; ++i)
    for (int j = 1; j <= p; ++j) c += layout.row({i, j}).transpose() / (a * p);
  return c;
}

Eigen::VectorXd age_contrast(int i, const TermLayout& layout) {
  const int p = layout.periods();
  Eigen::VectorXd c = -intercept_contrast(layout);
  for (int j = 1; j <= p; ++j) c += layout.row({i, j}).transpose() / p;
  return c;
}

Eigen::VectorXd period_contrast(int j, const TermLayout& layout) {
  const int a = layout.ages();
  Eigen::VectorXd c = -intercept_contrast(layout);
  for (int i = 1; i <= a; ++i) c += layout.row({i, j}).transpose() / a;
  return c;
}

Eigen::VectorXd covariate_contrast(int factor, int level, const TermLayout& layout) {
  const auto& covs = layout.covariates();
  if (factor < 0 || factor >= static_cast<int>(covs.size()))
    throw std::out_of_range("unknown covariate");
  std::vector<int> levels(covs.size(), 0);
  // Difference between a row at `level` and the covariate-averaged row; the
  // other covariates cancel because both rows use the same levels for them.
  Eigen::VectorXd c = Eigen::VectorXd::Zero(layout.size());
  const int n = covs[static_cast<std::size_t>(factor)].size();
  for (int l = 0; l < n; ++l) {
    levels[static_cast<std::size_t>(factor)] = l;
    c -= layout.row({1, 1}, levels).transpose() / n;
  }
  levels[static_cast<std::size_t>(factor)] = level;
  c += layout.row({1, 1}, levels).transpose();
  return c;
}

} // namespace apci
