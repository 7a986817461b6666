#pragma once

// Human-readable report and plot-ready pattern tables.

#include <string>
#include <vector>

#include "apci/model.hpp"
#include "apci/sim.hpp"

namespace apci {

// "***" p < 0.001, "**" p < 0.01, "*" p < 0.05, otherwise empty.
std::string stars(double p_value);

struct ReportContext {
  std::string input;
  std::size_t rows_read = 0;
  std::size_t dropped_missing = 0;
  std::size_t dropped_off_grid = 0;
};

// Fixed-width blocks: main effects, interaction matrix, global test,
// deviation-magnitude tests, inter-/intra-cohort contrasts.
std::string render_report(const Analysis& analysis, const ReportContext& ctx = {});

// Columns: curve,age_group,period,linear_predictor,value
std::string patterns_csv(const ApciFit& fit, PatternMode curves);

std::string render_demo(const AccountingDemo& demo, const PolyDemo& poly);

} // namespace apci
