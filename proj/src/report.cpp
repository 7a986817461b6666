#include "apci/report.hpp"

#include <cmath>
#include <sstream>

#include <fmt/format.h>

namespace apci {

std::string stars(double p) {
  if (!(p >= 0)) return "";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

namespace {

std::string cell(double estimate, double p) {
  return fmt::format("{:>8.3f} {:<3}", estimate, stars(p));
}

std::string rule(std::size_t n) { return std::string(n, '-') + "\n"; }

} // namespace

std::string render_report(const Analysis& an, const ReportContext& ctx) {
  const auto& f = an.fit;
  const auto& g = f.grid;
  const int a = g.ages(), p = g.periods();
  std::ostringstream out;

  out << "APC-I model report\n" << rule(72);
  if (!ctx.input.empty()) out << fmt::format("input            {}\n", ctx.input);
  if (ctx.rows_read)
    out << fmt::format("rows read        {}  (dropped: {} missing, {} off-grid)\n", ctx.rows_read,
                       ctx.dropped_missing, ctx.dropped_off_grid);
  out << fmt::format("family           {}\n", to_string(f.fit.family));
  out << fmt::format("coding           {}\n",
                     f.layout.coding().kind == CodingKind::effect ? "effect (sum-to-zero)" : "dummy");
  out << fmt::format("observations     {}   weight total {:.3f}\n", f.fit.n_obs, f.fit.weight_sum);
  out << fmt::format("deviance         {:.4f}   residual df {}\n", f.fit.deviance,
                     f.fit.residual_df);
  out << fmt::format("IRLS iterations  {}\n\n", f.fit.iterations);

  out << "Main effects (sum-to-zero)\n" << rule(40);
  out << fmt::format("{:<16}{}\n", "Intercept", cell(f.intercept.estimate, f.intercept.p_value));
  for (std::size_t c = 0; c < f.covariate.size(); ++c) {
    const auto& factor = f.layout.covariates()[c];
    for (std::size_t l = 0; l < f.covariate[c].size(); ++l)
      out << fmt::format("{:<16}{}\n", factor.name + "=" + factor.levels[l],
                         cell(f.covariate[c][l].estimate, f.covariate[c][l].p_value));
  }
  for (int i = 1; i <= a; ++i)
    out << fmt::format("{:<16}{}\n", "age " + g.age_label(i),
                       cell(f.age[static_cast<std::size_t>(i - 1)].estimate,
                            f.age[static_cast<std::size_t>(i - 1)].p_value));
  for (int j = 1; j <= p; ++j)
    out << fmt::format("{:<16}{}\n", "period " + g.period_label(j),
                       cell(f.period[static_cast<std::size_t>(j - 1)].estimate,
                            f.period[static_cast<std::size_t>(j - 1)].p_value));
  out << "\n";

  out << "Age-by-period interaction terms\n" << rule(10 + 13 * static_cast<std::size_t>(p));
  out << fmt::format("{:<10}", "age");
  for (int j = 1; j <= p; ++j) out << fmt::format("{:>12} ", g.period_label(j));
  out << "\n";
  for (int i = 1; i <= a; ++i) {
    out << fmt::format("{:<10}", g.age_label(i));
    for (int j = 1; j <= p; ++j)
      out << fmt::format("{:>12} ", fmt::format("{:.3f} {:<3}", f.interaction(i - 1, j - 1),
                                                 stars(f.interaction_p(i - 1, j - 1))));
    out << "\n";
  }
  out << "\n";

  const auto& gt = an.global_test;
  out << fmt::format("Global interaction test: F = {:.3f} {}  df = ({}, {})  p = {:.4g}\n\n",
                     gt.statistic, stars(gt.p_value), gt.df1, gt.df2, gt.p_value);

  out << "Deviation magnitude tests by cohort\n" << rule(52);
  out << fmt::format("{:<10}{:>4}{:>14}{:>6}{:>14}\n", "cohort", "o", "F", "df1", "df2");
  for (const auto& c : an.cohorts) {
    if (c.magnitude)
      out << fmt::format("{:<10}{:>4}{:>10.3f} {:<3}{:>6}{:>14}\n", c.label, c.cells,
                         c.magnitude->statistic, stars(c.magnitude->p_value), c.magnitude->df1,
                         c.magnitude->df2);
    else
      out << fmt::format("{:<10}{:>4}{:>14}\n", c.label, c.cells, "n/a");
  }
  out << "\n";

  out << "Inter-cohort deviations and intra-cohort slopes\n" << rule(72);
  out << fmt::format("{:<10}{:>14}{:>14}{:>14}  {}\n", "cohort", "average", "slope", "quadratic",
                     "classification");
  auto fmt_contrast = [](const std::optional<ContrastEstimate>& e) {
    return e ? fmt::format("{:.3f} {:<3}", e->estimate, stars(e->test.p_value)) : std::string("NA");
  };
  for (const auto& c : an.cohorts) {
    out << fmt::format("{:<10}{:>14}{:>14}{:>14}  {}{}\n", c.label, fmt_contrast(c.average),
                       fmt_contrast(c.slope), fmt_contrast(c.quadratic),
                       c.classification ? to_string(*c.classification) : "-",
                       c.short_cohort ? " (short cohort)" : "");
  }
  out << "\n";
  out << fmt::format("Classification uses two-sided tests at alpha = {}.\n", an.alpha);
  out << "*** p < 0.001; ** p < 0.01; * p < 0.05\n";

  if (!an.warnings.empty()) {
    out << "\nWarnings\n" << rule(8);
    for (const auto& w : an.warnings) out << "- " << w << "\n";
  }
  bool any_note = false;
  for (const auto& c : an.cohorts)
    for (const auto& n : c.notes) {
      if (!any_note) out << "\nNotes\n" << rule(5);
      any_note = true;
      out << fmt::format("- cohort {}: {}\n", c.label, n);
    }
  return out.str();
}

std::string patterns_csv(const ApciFit& fit, PatternMode curves) {
  const auto& g = fit.grid;
  std::ostringstream out;
  out << "curve,age_group,period,linear_predictor,value\n";
  auto emit = [&](const std::vector<PatternPoint>& pts) {
    for (const auto& pt : pts)
      out << fmt::format("{},{},{},{:.10g},{:.10g}\n", pt.curve,
                         pt.i ? g.age_label(pt.i) : std::string(),
                         pt.j ? g.period_label(pt.j) : std::string(), pt.eta, pt.value);
  };
  emit(extract_patterns(fit, curves));
  // Main-effect-only curve for the same axis.
  std::vector<PatternPoint> mains;
  const bool ages = curves == PatternMode::age_by_period;
  for (const auto& pt : extract_patterns(fit, PatternMode::mains_only))
    if ((ages && pt.curve == "age") || (!ages && pt.curve == "period")) {
      auto copy = pt;
      copy.curve = "main effects";
      mains.push_back(copy);
    }
  emit(mains);
  return out.str();
}

std::string render_demo(const AccountingDemo& d, const PolyDemo& poly) {
  std::ostringstream out;
  const auto& g = d.grid;
  out << fmt::format("Accounting model on a {}x{} grid ({} cohorts)\n", g.ages(), g.periods(),
                     g.cohorts());
  out << fmt::format("rank {} of {}\n", d.rank, d.columns);
  out << "null vector:\n";
  for (int c = 0; c < d.columns; ++c)
    out << fmt::format("  {:<14}{:>12.6f}\n", d.names[static_cast<std::size_t>(c)], d.null_vector(c));
  out << fmt::format("\ntwo solutions (second = first + {} * null vector):\n", d.lambda);
  out << fmt::format("  {:<14}{:>12}{:>12}\n", "term", "solution A", "solution B");
  for (int c = 0; c < d.columns; ++c)
    out << fmt::format("  {:<14}{:>12.6f}{:>12.6f}\n", d.names[static_cast<std::size_t>(c)],
                       d.solution_a(c), d.solution_b(c));
  out << fmt::format("\nmax fitted-mean discrepancy {:.3e}\n", d.max_fitted_difference);

  out << "\nQuadratic age/period/cohort model with cohort = period - age\n";
  out << fmt::format("max |cohort form - expanded form| {:.3e}\n", poly.max_expansion_difference);
  out << fmt::format("max |cohort form - shifted (b1+{0}, b3-{0}, b5+{0})| {1:.3e}\n", poly.shift,
                     poly.max_shift_difference);
  const auto& k = poly.identified;
  out << fmt::format("identified: const {:.4g}, a {:.4g}, a^2 {:.4g}, p {:.4g}, p^2 {:.4g}, ap {:.4g}\n",
                     k[0], k[1], k[2], k[3], k[4], k[5]);
  return out.str();
}

} // namespace apci
