#include "apci/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "apci/errors.hpp"

namespace apci {

namespace {

struct Response {
  std::vector<double> y;
  std::vector<double> w;
};

Response response_of(std::span<const MicroRecord> records) {
  Response r;
  r.y.reserve(records.size());
  r.w.reserve(records.size());
  for (const auto& rec : records) {
    r.y.push_back(rec.outcome);
    r.w.push_back(rec.weight);
  }
  return r;
}

FitResult fit_layout(std::span<const MicroRecord> records, const GridSpec& spec,
                     TermLayout layout, const ApciOptions& opts) {
  auto names = layout.names();
  const DesignMatrix d = build_design(records, spec, std::move(layout));
  const Response r = response_of(records);
  return fit(d.X, r.y, r.w, opts.family, opts.glm, std::move(names));
}

void require_nonempty_cells(std::span<const MicroRecord> records, const GridSpec& spec) {
  const CellTable table = aggregate(records, spec);
  if (table.dropped() > 0)
    throw OutOfGridError(table.dropped_ids().front(),
                         fmt::format("{} record(s) fall outside the grid (first id {})",
                                     table.dropped(), table.dropped_ids().front()));
  const auto empty = table.empty_cells();
  if (empty.empty()) return;
  std::vector<std::pair<int, int>> cells;
  std::string list;
  for (const auto& c : empty) {
    cells.emplace_back(c.i, c.j);
    if (!list.empty()) list += "; ";
    list += fmt::format("(age {}, period {})", spec.age_label(c.i), spec.period_label(c.j));
  }
  throw EmptyCellsError(std::move(cells),
                        fmt::format("{} empty cell(s) with zero weighted count: {}", empty.size(),
                                    list));
}

EffectEstimate estimate_of(const FitResult& fit, const Eigen::VectorXd& c) {
  EffectEstimate e;
  e.estimate = c.dot(fit.coefficients);
  const double var = c.dot(fit.covariance * c);
  e.se = var > 0 ? std::sqrt(var) : 0.0;
  e.p_value = e.se > 0 ? t_two_sided(e.estimate / e.se, fit.residual_df)
                       : std::numeric_limits<double>::quiet_NaN();
  return e;
}

} // namespace

Eigen::VectorXd ApciFit::interaction_contrast(CellIndex cell) const {
  return cell_contrast(cell, layout, ContrastPart::interaction_only);
}

ApciFit fit_apci(std::span<const MicroRecord> records, const GridSpec& spec,
                 const std::vector<CovariateFactor>& covariates, const ApciOptions& opts) {
  spec.validate();
  require_nonempty_cells(records, spec);
  TermLayout layout = TermLayout::apci(spec.ages(), spec.periods(), opts.coding, covariates);
  FitResult res = fit_layout(records, spec, layout, opts);

  const int a = spec.ages(), p = spec.periods();
  ApciFit out{std::move(res), std::move(layout), spec, opts.scheme, {}, {}, {}, {}, {}, {}, {}, {}, {}};
  const auto& f = out.fit;
  out.intercept = estimate_of(f, intercept_contrast(out.layout));
  for (int i = 1; i <= a; ++i) out.age.push_back(estimate_of(f, age_contrast(i, out.layout)));
  for (int j = 1; j <= p; ++j) out.period.push_back(estimate_of(f, period_contrast(j, out.layout)));
  for (int c = 0; c < static_cast<int>(covariates.size()); ++c) {
    std::vector<EffectEstimate> levels;
    for (int l = 0; l < covariates[static_cast<std::size_t>(c)].size(); ++l)
      levels.push_back(estimate_of(f, covariate_contrast(c, l, out.layout)));
    out.covariate.push_back(std::move(levels));
  }

  out.interaction.resize(a, p);
  out.interaction_se.resize(a, p);
  out.interaction_p.resize(a, p);
  out.cell_eta.resize(a, p);
  for (int i = 1; i <= a; ++i)
    for (int j = 1; j <= p; ++j) {
      const auto e = estimate_of(f, out.interaction_contrast({i, j}));
      out.interaction(i - 1, j - 1) = e.estimate;
      out.interaction_se(i - 1, j - 1) = e.se;
      out.interaction_p(i - 1, j - 1) = e.p_value;
      out.cell_eta(i - 1, j - 1) =
          cell_contrast({i, j}, out.layout, ContrastPart::full_mean).dot(f.coefficients);
    }
  out.warnings = crossover_warnings(out.cell_eta, spec);
  return out;
}

FitResult fit_main_effects(std::span<const MicroRecord> records, const GridSpec& spec,
                           const std::vector<CovariateFactor>& covariates,
                           const ApciOptions& opts) {
  spec.validate();
  return fit_layout(records, spec,
                    TermLayout::main_effects(spec.ages(), spec.periods(), opts.coding, covariates),
                    opts);
}

TestResult step1_global_test(const FitResult& main_effects, const ApciFit& full) {
  return deviance_f_test(main_effects, full.fit);
}

TestResult step1_global_test(std::span<const MicroRecord> records, const GridSpec& spec,
                             const std::vector<CovariateFactor>& covariates,
                             const ApciOptions& opts) {
  const ApciFit full = fit_apci(records, spec, covariates, opts);
  const FitResult main = fit_main_effects(records, spec, covariates, opts);
  return step1_global_test(main, full);
}

TestResult step2_cohort_test(std::span<const MicroRecord> records, const GridSpec& spec, int k,
                             const std::vector<CovariateFactor>& covariates,
                             const ApciOptions& opts, const FitResult& main_effects) {
  const auto cells = diagonal_cells(k, spec, opts.scheme);
  TermLayout layout = TermLayout::with_cell_indicators(spec.ages(), spec.periods(), opts.coding,
                                                       covariates, cells);
  FitResult alt;
  try {
    alt = fit_layout(records, spec, std::move(layout), opts);
  } catch (const RankDeficientError& e) {
    throw RankDeficientError(
        e.rank(), e.aliased_columns(),
        fmt::format("cohort {}: main effects plus {} cell indicators are not identifiable ({})",
                    cohort_label(k, spec, opts.scheme), cells.size(), e.what()));
  }
  return deviance_f_test(main_effects, alt);
}

TestResult step2_cohort_test(std::span<const MicroRecord> records, const GridSpec& spec, int k,
                             const std::vector<CovariateFactor>& covariates,
                             const ApciOptions& opts) {
  const FitResult main = fit_main_effects(records, spec, covariates, opts);
  return step2_cohort_test(records, spec, k, covariates, opts, main);
}

Eigen::VectorXd orthogonal_polynomial(int n, PolyOrder order) {
  const int deg = static_cast<int>(order);
  if (n < deg + 1)
    throw ShortCohortError(
        fmt::format("an order-{} contrast needs at least {} points, got {}", deg, deg + 1, n));
  // Gram-Schmidt on 1, x, x^2 over centred positions.
  Eigen::MatrixXd basis(n, deg + 1);
  for (int m = 0; m < n; ++m) {
    const double x = m - (n - 1) / 2.0;
    for (int d = 0; d <= deg; ++d) basis(m, d) = std::pow(x, d);
  }
  for (int d = 0; d <= deg; ++d) {
    for (int e = 0; e < d; ++e) basis.col(d) -= basis.col(e).dot(basis.col(d)) * basis.col(e);
    basis.col(d).normalize();
  }
  Eigen::VectorXd c = basis.col(deg);
  if (c(n - 1) < 0) c = -c;
  for (Eigen::Index m = 0; m < c.size(); ++m)
    if (std::abs(c(m)) < 1e-14) c(m) = 0.0;
  return c;
}

std::vector<WeightedCell> average_weights(int k, const GridSpec& spec,
                                          const CohortScheme& scheme) {
  const auto cells = diagonal_cells(k, spec, scheme);
  std::vector<WeightedCell> out;
  for (const auto& c : cells) out.push_back({c, 1.0 / static_cast<double>(cells.size())});
  return out;
}

namespace {

std::map<int, std::vector<CellIndex>> cells_by_period(int k, const GridSpec& spec,
                                                      const CohortScheme& scheme) {
  std::map<int, std::vector<CellIndex>> by_period;
  for (const auto& c : diagonal_cells(k, spec, scheme)) by_period[c.j].push_back(c);
  return by_period;
}

} // namespace

int life_course_length(int k, const GridSpec& spec, const CohortScheme& scheme) {
  return static_cast<int>(cells_by_period(k, spec, scheme).size());
}

std::vector<WeightedCell> life_course_weights(int k, const GridSpec& spec,
                                              const CohortScheme& scheme, PolyOrder order) {
  const auto by_period = cells_by_period(k, spec, scheme);
  const int n = static_cast<int>(by_period.size());
  if (n < static_cast<int>(order) + 1)
    throw ShortCohortError(fmt::format(
        "cohort {} spans {} period(s); a {} life-course contrast needs at least {}",
        cohort_label(k, spec, scheme), n, order == PolyOrder::linear ? "linear" : "quadratic",
        static_cast<int>(order) + 1));
  const Eigen::VectorXd poly = orthogonal_polynomial(n, order);
  std::vector<WeightedCell> out;
  int pos = 0;
  for (const auto& [j, cells] : by_period) {
    for (const auto& c : cells)
      out.push_back({c, poly(pos) / static_cast<double>(cells.size())});
    ++pos;
  }
  return out;
}

double apply_weights(std::span<const WeightedCell> weights, const Eigen::MatrixXd& interaction) {
  double s = 0.0;
  for (const auto& w : weights) s += w.weight * interaction(w.cell.i - 1, w.cell.j - 1);
  return s;
}

namespace {

ContrastEstimate weighted_contrast_test(const ApciFit& fit,
                                        std::span<const WeightedCell> weights) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(fit.layout.size());
  for (const auto& w : weights) c += w.weight * fit.interaction_contrast(w.cell);
  return contrast_t_test(fit.fit, c);
}

} // namespace

ContrastEstimate step3_average_deviation(const ApciFit& fit, int k) {
  return weighted_contrast_test(fit, average_weights(k, fit.grid, fit.scheme));
}

ContrastEstimate step3_life_course_contrast(const ApciFit& fit, int k, PolyOrder order) {
  return weighted_contrast_test(fit, life_course_weights(k, fit.grid, fit.scheme, order));
}

std::string to_string(Classification c) {
  switch (c) {
  case Classification::cumulative_advantage: return "cumulative_advantage";
  case Classification::cumulative_disadvantage: return "cumulative_disadvantage";
  case Classification::leveling: return "leveling";
  case Classification::constant: return "constant";
  case Classification::no_clear_pattern: return "no_clear_pattern";
  }
  return "?";
}

Sign significance_sign(const ContrastEstimate& e, double alpha) {
  if (!(e.test.p_value < alpha)) return Sign::zero;
  return e.estimate > 0 ? Sign::positive : e.estimate < 0 ? Sign::negative : Sign::zero;
}

Classification classify_cohort(Sign average, Sign slope) {
  if (slope == Sign::zero)
    return average == Sign::zero ? Classification::no_clear_pattern : Classification::constant;
  if (average == Sign::zero || average != slope) return Classification::leveling;
  return average == Sign::positive ? Classification::cumulative_advantage
                                   : Classification::cumulative_disadvantage;
}

Classification classify_cohort(const ContrastEstimate& average, const ContrastEstimate& slope,
                               double alpha) {
  return classify_cohort(significance_sign(average, alpha), significance_sign(slope, alpha));
}

CohortReport cohort_report(const ApciFit& fit, int k, std::optional<TestResult> magnitude,
                           double alpha) {
  CohortReport r;
  r.id = k;
  r.label = cohort_label(k, fit.grid, fit.scheme);
  r.cells = static_cast<int>(diagonal_cells(k, fit.grid, fit.scheme).size());
  r.magnitude = std::move(magnitude);
  const int positions = life_course_length(k, fit.grid, fit.scheme);
  r.short_cohort = r.cells <= 2;
  r.no_slope = positions < 2;
  try {
    r.average = step3_average_deviation(fit, k);
  } catch (const DegenerateContrastError& e) {
    r.notes.push_back(fmt::format("average deviation: {}", e.what()));
  }
  if (!r.no_slope) {
    try {
      r.slope = step3_life_course_contrast(fit, k, PolyOrder::linear);
    } catch (const DegenerateContrastError& e) {
      r.notes.push_back(fmt::format("linear slope: {}", e.what()));
    }
  } else {
    r.notes.push_back("single age-by-period cell: no life-course slope");
  }
  if (positions >= 3) {
    try {
      r.quadratic = step3_life_course_contrast(fit, k, PolyOrder::quadratic);
    } catch (const DegenerateContrastError& e) {
      r.notes.push_back(fmt::format("quadratic: {}", e.what()));
    }
  }
  if (r.short_cohort && !r.no_slope)
    r.notes.push_back("two or fewer age-by-period cells: interpret the slope with caution");
  if (r.magnitude && r.average && r.slope)
    r.classification = classify_cohort(*r.average, *r.slope, alpha);
  return r;
}

namespace {

nlohmann::json contrast_json(const ContrastEstimate& e) {
  return {{"estimate", e.estimate},
          {"se", e.se},
          {"t", e.test.statistic},
          {"df", e.test.df1},
          {"p_value", e.test.p_value}};
}

nlohmann::json effect_json(const EffectEstimate& e) {
  return {{"estimate", e.estimate},
          {"se", e.se},
          {"p_value", std::isfinite(e.p_value) ? nlohmann::json(e.p_value) : nlohmann::json()}};
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back(std::isfinite(m(i, j)) ? nlohmann::json(m(i, j)) : nlohmann::json());
    rows.push_back(row);
  }
  return rows;
}

} // namespace

nlohmann::json CohortReport::to_json() const {
  nlohmann::json j;
  j["id"] = id;
  j["label"] = label;
  j["cells"] = cells;
  j["magnitude"] = magnitude ? magnitude->to_json() : nlohmann::json();
  j["average"] = average ? contrast_json(*average) : nlohmann::json();
  j["slope"] = slope ? contrast_json(*slope) : nlohmann::json();
  j["quadratic"] = quadratic ? contrast_json(*quadratic) : nlohmann::json();
  j["classification"] = classification ? nlohmann::json(to_string(*classification))
                                       : nlohmann::json();
  j["short_cohort"] = short_cohort;
  j["no_slope"] = no_slope;
  j["notes"] = notes;
  return j;
}

Analysis analyze(std::span<const MicroRecord> records, const GridSpec& spec,
                 const std::vector<CovariateFactor>& covariates, const ApciOptions& opts) {
  ApciFit full = fit_apci(records, spec, covariates, opts);
  FitResult main = fit_main_effects(records, spec, covariates, opts);
  TestResult global = step1_global_test(main, full);

  const int K = opts.scheme.count(spec);
  std::vector<std::optional<TestResult>> magnitude(static_cast<std::size_t>(K));
  std::vector<std::string> step2_notes(static_cast<std::size_t>(K));
  std::atomic<int> next{1};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int k = next++; k <= K; k = next++) {
      try {
        magnitude[static_cast<std::size_t>(k - 1)] =
            step2_cohort_test(records, spec, k, covariates, opts, main);
      } catch (const RankDeficientError& e) {
        step2_notes[static_cast<std::size_t>(k - 1)] = e.what();
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(opts.threads, 1, K);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  Analysis out{std::move(full), std::move(main), global, {}, {}, opts.alpha};
  for (int k = 1; k <= K; ++k) {
    auto report = cohort_report(out.fit, k, magnitude[static_cast<std::size_t>(k - 1)], opts.alpha);
    if (!step2_notes[static_cast<std::size_t>(k - 1)].empty())
      report.notes.push_back("deviation magnitude test skipped: " +
                             step2_notes[static_cast<std::size_t>(k - 1)]);
    out.cohorts.push_back(std::move(report));
  }
  out.warnings = out.fit.warnings;
  return out;
}

nlohmann::json Analysis::to_json() const {
  const auto& g = fit.grid;
  nlohmann::json ages = nlohmann::json::array(), periods = nlohmann::json::array();
  for (int i = 1; i <= g.ages(); ++i) ages.push_back(g.age_label(i));
  for (int j = 1; j <= g.periods(); ++j) periods.push_back(g.period_label(j));

  nlohmann::json fit_json = fit.fit.to_json();
  fit_json["layout"] = fit.layout.to_json();

  nlohmann::json effects;
  effects["intercept"] = effect_json(fit.intercept);
  effects["age"] = nlohmann::json::array();
  for (const auto& e : fit.age) effects["age"].push_back(effect_json(e));
  effects["period"] = nlohmann::json::array();
  for (const auto& e : fit.period) effects["period"].push_back(effect_json(e));
  effects["covariates"] = nlohmann::json::array();
  for (std::size_t c = 0; c < fit.covariate.size(); ++c) {
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t l = 0; l < fit.covariate[c].size(); ++l) {
      auto e = effect_json(fit.covariate[c][l]);
      e["level"] = fit.layout.covariates()[c].levels[l];
      levels.push_back(e);
    }
    effects["covariates"].push_back(
        {{"name", fit.layout.covariates()[c].name}, {"levels", levels}});
  }

  nlohmann::json cohorts_json = nlohmann::json::array();
  for (const auto& c : cohorts) cohorts_json.push_back(c.to_json());

  return {
      {"fit", fit_json},
      {"grid", g.to_json()},
      {"age_groups", ages},
      {"periods", periods},
      {"main_effects_fit", main_effects.to_json()},
      {"effects", effects},
      {"interaction_matrix",
       {{"estimate", matrix_json(fit.interaction)},
        {"se", matrix_json(fit.interaction_se)},
        {"p_value", matrix_json(fit.interaction_p)}}},
      {"global_test", global_test.to_json()},
      {"cohorts", cohorts_json},
      {"alpha", alpha},
      {"warnings", warnings},
      {"metadata",
       {{"weights", "precision weights in the working weights; design-based (replicate-weight) "
                    "standard errors are not computed"},
        {"f_statistic", "generalized F = ((D0 - D1) / df1) / dispersion; dispersion fixed at 1 "
                        "for logit and D/df for Gaussian (inferred definition)"},
        {"step3_covariance", "full APC-I model covariance"},
        {"life_course_spacing", "equally spaced positions in period order"},
        {"orthogonal_polynomials", "unit Euclidean norm"}}},
  };
}

std::vector<PatternPoint> extract_patterns(const ApciFit& fit, PatternMode mode) {
  const auto& g = fit.grid;
  const int a = g.ages(), p = g.periods();
  const double mu = fit.intercept.estimate;
  const Family fam = fit.fit.family;
  std::vector<PatternPoint> out;
  auto push = [&](std::string curve, int i, int j, double eta) {
    out.push_back({std::move(curve), i, j, eta, inverse_link(fam, eta)});
  };
  switch (mode) {
  case PatternMode::age_by_period:
    for (int j = 1; j <= p; ++j)
      for (int i = 1; i <= a; ++i)
        push(g.period_label(j), i, j,
             mu + fit.age[static_cast<std::size_t>(i - 1)].estimate + fit.interaction(i - 1, j - 1));
    break;
  case PatternMode::period_by_age:
    for (int i = 1; i <= a; ++i)
      for (int j = 1; j <= p; ++j)
        push(g.age_label(i), i, j,
             mu + fit.period[static_cast<std::size_t>(j - 1)].estimate +
                 fit.interaction(i - 1, j - 1));
    break;
  case PatternMode::mains_only:
    for (int i = 1; i <= a; ++i)
      push("age", i, 0, mu + fit.age[static_cast<std::size_t>(i - 1)].estimate);
    for (int j = 1; j <= p; ++j)
      push("period", 0, j, mu + fit.period[static_cast<std::size_t>(j - 1)].estimate);
    break;
  }
  return out;
}

TukeyResult tukey_additivity_test(const Eigen::Ref<const Eigen::MatrixXd>& table) {
  const auto a = table.rows(), p = table.cols();
  if (a < 2 || p < 2) throw std::invalid_argument("Tukey test needs at least a 2x2 table");
  const double df_resid = static_cast<double>((a - 1) * (p - 1));
  const double df2 = df_resid - 1.0;
  if (df2 < 1) throw std::invalid_argument("Tukey test needs (a-1)(p-1) >= 2");

  const double grand = table.mean();
  const Eigen::VectorXd r = table.rowwise().mean().array() - grand;
  const Eigen::RowVectorXd c = table.colwise().mean().array() - grand;
  Eigen::MatrixXd e = table;
  e.array() -= grand;
  e.colwise() -= r;
  e.rowwise() -= c;

  TukeyResult out;
  out.test.kind = TestKind::F;
  out.test.df1 = 1;
  out.test.df2 = df2;
  out.ss_residual = e.squaredNorm();
  const double ss_total = (table.array() - grand).square().sum();
  // Residuals at rounding level relative to the table's spread: exactly additive.
  if (out.ss_residual <= 1e-20 * std::max(ss_total, 1e-300)) {
    out.test.statistic = 0.0;
    out.test.p_value = 1.0;
    return out;
  }
  const double denom = r.squaredNorm() * c.squaredNorm();
  if (!(denom > 1e-24 * ss_total * ss_total)) {
    out.degenerate = true;
    out.test.statistic = 0.0;
    out.test.p_value = 1.0;
    return out;
  }
  const double cross = r.transpose() * e * c.transpose();
  out.ss_nonadditivity = cross * cross / denom;
  const double remainder = out.ss_residual - out.ss_nonadditivity;
  if (!(remainder > 1e-12 * out.ss_residual)) {
    out.exact_fit = true;
    out.test.statistic = std::numeric_limits<double>::infinity();
    out.test.p_value = 0.0;
    return out;
  }
  out.test.statistic = out.ss_nonadditivity / (remainder / df2);
  out.test.p_value = f_upper_tail(out.test.statistic, 1.0, df2);
  return out;
}

std::vector<std::string> crossover_warnings(const Eigen::MatrixXd& cell_eta, const GridSpec& spec) {
  std::vector<std::string> out;
  const auto a = cell_eta.rows(), p = cell_eta.cols();
  for (Eigen::Index j = 0; j + 1 < p; ++j) {
    int up = 0, down = 0;
    for (Eigen::Index i = 0; i < a; ++i) {
      const double d = cell_eta(i, j + 1) - cell_eta(i, j);
      up += d > 0;
      down += d < 0;
    }
    if (up == 0 || down == 0 || up == down) continue;
    const bool majority_up = up > down;
    std::string ages;
    for (Eigen::Index i = 0; i < a; ++i) {
      const double d = cell_eta(i, j + 1) - cell_eta(i, j);
      if ((majority_up && d < 0) || (!majority_up && d > 0)) {
        if (!ages.empty()) ages += ", ";
        ages += spec.age_label(static_cast<int>(i + 1));
      }
    }
    out.push_back(fmt::format(
        "qualitative interaction: from {} to {} the fitted trend {} for most ages but reverses "
        "for {}; interpret period main effects with care",
        spec.period_label(static_cast<int>(j + 1)), spec.period_label(static_cast<int>(j + 2)),
        majority_up ? "rises" : "falls", ages));
  }
  return out;
}

} // namespace apci
