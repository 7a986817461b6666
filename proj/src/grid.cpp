#include "apci/grid.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "apci/errors.hpp"

namespace apci {

namespace {

void check_breaks(const std::vector<int>& breaks, const char* axis) {
  if (breaks.size() < 3)
    throw ConfigError(fmt::format("{}_breaks needs at least 3 entries (2 groups), got {}", axis,
                                  breaks.size()));
  for (std::size_t n = 1; n < breaks.size(); ++n)
    if (breaks[n] <= breaks[n - 1])
      throw ConfigError(fmt::format("{}_breaks must be strictly increasing ({} then {})", axis,
                                    breaks[n - 1], breaks[n]));
}

std::string bin_label(const std::vector<int>& breaks, int idx) {
  const int lo = breaks[idx - 1];
  const bool last = idx == static_cast<int>(breaks.size()) - 1;
  const int hi = last ? breaks[idx] : breaks[idx] - 1;
  if (hi == lo) return std::to_string(lo);
  return fmt::format("{}-{}", lo, hi);
}

} // namespace

void GridSpec::validate() const {
  check_breaks(age_breaks, "age");
  check_breaks(period_breaks, "period");
  if (static_cast<int>(cohort_labels.size()) != cohorts())
    throw ConfigError(fmt::format("cohort_labels needs a+p-1 = {} entries, got {}", cohorts(),
                                  cohort_labels.size()));
}

std::string GridSpec::age_label(int i) const { return bin_label(age_breaks, i); }
std::string GridSpec::period_label(int j) const { return bin_label(period_breaks, j); }

GridSpec GridSpec::uniform(int ages, int periods) {
  GridSpec g;
  for (int n = 0; n <= ages; ++n) g.age_breaks.push_back(n);
  for (int n = 0; n <= periods; ++n) g.period_breaks.push_back(n);
  for (int k = 1; k <= ages + periods - 1; ++k) g.cohort_labels.push_back(std::to_string(k));
  return g;
}

GridSpec GridSpec::default_lfp() {
  GridSpec g;
  g.age_breaks = {20, 25, 30, 35, 40, 45, 50, 55, 60, 64};
  g.period_breaks = {1990, 1995, 2000, 2005, 2010, 2015, 2017};
  for (int year = 1930; year <= 1995; year += 5) g.cohort_labels.push_back(std::to_string(year));
  return g;
}

GridSpec GridSpec::from_json(const nlohmann::json& j) {
  GridSpec g;
  try {
    g.age_breaks = j.at("age_breaks").get<std::vector<int>>();
    g.period_breaks = j.at("period_breaks").get<std::vector<int>>();
    if (j.contains("cohort_labels")) {
      for (const auto& label : j.at("cohort_labels"))
        g.cohort_labels.push_back(label.is_string() ? label.get<std::string>() : label.dump());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid grid specification: ") + e.what());
  }
  if (g.cohort_labels.empty() && g.age_breaks.size() >= 2 && g.period_breaks.size() >= 2) {
    // Earliest cell of each diagonal: period start minus age start.
    const int a = g.ages(), p = g.periods();
    for (int k = 1; k <= a + p - 1; ++k) {
      const int j = std::max(1, k - a + 1), i = a - k + j;
      g.cohort_labels.push_back(std::to_string(g.period_breaks[j - 1] - g.age_breaks[i - 1]));
    }
  }
  g.validate();
  return g;
}

nlohmann::json GridSpec::to_json() const {
  return {{"age_breaks", age_breaks},
          {"period_breaks", period_breaks},
          {"cohort_labels", cohort_labels}};
}

CohortScheme CohortScheme::custom(const GridSpec& spec, std::vector<int> band_of_cell) {
  const int a = spec.ages(), p = spec.periods();
  if (static_cast<int>(band_of_cell.size()) != a * p)
    throw ConfigError(fmt::format("custom cohort map needs {} cells, got {}", a * p,
                                  band_of_cell.size()));
  std::map<int, int> band_of_diag;
  for (int i = 1; i <= a; ++i) {
    for (int j = 1; j <= p; ++j) {
      const int band = band_of_cell[(i - 1) * p + (j - 1)];
      if (band < 1) throw ConfigError(fmt::format("cell ({}, {}) has no cohort band", i, j));
      const int k = a - i + j;
      auto [it, inserted] = band_of_diag.emplace(k, band);
      if (!inserted && it->second != band)
        throw ConfigError(fmt::format("diagonal {} is split across bands {} and {}", k,
                                      it->second, band));
    }
  }
  // Bands must be contiguous runs of diagonals, numbered 1..B.
  std::set<int> seen;
  int prev = 0;
  for (const auto& [k, band] : band_of_diag) {
    if (band != prev) {
      if (seen.contains(band))
        throw ConfigError(fmt::format("band {} covers non-contiguous diagonals", band));
      seen.insert(band);
      prev = band;
    }
  }
  const int bands = static_cast<int>(seen.size());
  if (*seen.begin() != 1 || *seen.rbegin() != bands)
    throw ConfigError("band ids must be numbered 1..B without gaps");

  CohortScheme s;
  s.mode_ = Mode::custom;
  s.map_ = std::move(band_of_cell);
  s.bands_ = bands;
  return s;
}

int CohortScheme::count(const GridSpec& spec) const {
  return mode_ == Mode::diagonal ? spec.cohorts() : bands_;
}

double CellStats::mean() const { return empty() ? 0.0 : weighted_sum / weight; }

CellTable::CellTable(int ages, int periods)
    : ages_(ages), periods_(periods), cells_(static_cast<std::size_t>(ages * periods)) {}

CellStats& CellTable::at(CellIndex c) {
  return cells_.at(static_cast<std::size_t>((c.i - 1) * periods_ + (c.j - 1)));
}
const CellStats& CellTable::at(CellIndex c) const {
  return cells_.at(static_cast<std::size_t>((c.i - 1) * periods_ + (c.j - 1)));
}

std::vector<CellIndex> CellTable::empty_cells() const {
  std::vector<CellIndex> out;
  for (int i = 1; i <= ages_; ++i)
    for (int j = 1; j <= periods_; ++j)
      if (at({i, j}).empty()) out.push_back({i, j});
  return out;
}

void CellTable::merge(const CellTable& other) {
  if (other.ages_ != ages_ || other.periods_ != periods_)
    throw std::invalid_argument("CellTable::merge: grid dimensions differ");
  for (std::size_t n = 0; n < cells_.size(); ++n) {
    cells_[n].records += other.cells_[n].records;
    cells_[n].weight += other.cells_[n].weight;
    cells_[n].weighted_sum += other.cells_[n].weighted_sum;
  }
  dropped_ids_.insert(dropped_ids_.end(), other.dropped_ids_.begin(), other.dropped_ids_.end());
}

std::optional<int> bin_value(int value, std::span<const int> breaks) {
  if (breaks.size() < 2 || value < breaks.front() || value > breaks.back()) return std::nullopt;
  // First break strictly greater than value; the closed top edge maps to the last bin.
  auto it = std::upper_bound(breaks.begin(), breaks.end(), value);
  int idx = static_cast<int>(it - breaks.begin());
  if (it == breaks.end()) idx = static_cast<int>(breaks.size()) - 1;
  return idx;
}

CellIndex bin_record(const MicroRecord& rec, const GridSpec& spec) {
  const auto i = bin_value(rec.age_years, spec.age_breaks);
  if (!i)
    throw OutOfGridError(rec.id, fmt::format("record {}: age {} outside [{}, {}]", rec.id,
                                             rec.age_years, spec.age_breaks.front(),
                                             spec.age_breaks.back()));
  const auto j = bin_value(rec.year, spec.period_breaks);
  if (!j)
    throw OutOfGridError(rec.id, fmt::format("record {}: year {} outside [{}, {}]", rec.id,
                                             rec.year, spec.period_breaks.front(),
                                             spec.period_breaks.back()));
  return {*i, *j};
}

int cohort_index(CellIndex cell, const GridSpec& spec, const CohortScheme& scheme) {
  if (scheme.mode() == CohortScheme::Mode::custom)
    return scheme.custom_map()[static_cast<std::size_t>((cell.i - 1) * spec.periods() +
                                                        (cell.j - 1))];
  return spec.ages() - cell.i + cell.j;
}

std::string cohort_label(int k, const GridSpec& spec, const CohortScheme& scheme) {
  if (k < 1 || k > scheme.count(spec))
    throw std::out_of_range(fmt::format("unknown cohort id {}", k));
  if (scheme.mode() == CohortScheme::Mode::custom) return fmt::format("band {}", k);
  return spec.cohort_labels[static_cast<std::size_t>(k - 1)];
}

std::vector<CellIndex> diagonal_cells(int k, const GridSpec& spec, const CohortScheme& scheme) {
  if (k < 1 || k > scheme.count(spec))
    throw std::out_of_range(fmt::format("unknown cohort id {}", k));
  const int a = spec.ages(), p = spec.periods();
  std::vector<CellIndex> out;
  if (scheme.mode() == CohortScheme::Mode::diagonal) {
    for (int j = 1; j <= p; ++j) {
      const int i = a - k + j;
      if (i >= 1 && i <= a) out.push_back({i, j});
    }
    return out;
  }
  for (int j = 1; j <= p; ++j)
    for (int i = a; i >= 1; --i)
      if (cohort_index({i, j}, spec, scheme) == k) out.push_back({i, j});
  return out;
}

CellTable aggregate(std::span<const MicroRecord> records, const GridSpec& spec) {
  CellTable table(spec.ages(), spec.periods());
  for (const auto& rec : records) {
    const auto i = bin_value(rec.age_years, spec.age_breaks);
    const auto j = bin_value(rec.year, spec.period_breaks);
    if (!i || !j) {
      table.add_dropped(rec.id);
      continue;
    }
    auto& cell = table.at({*i, *j});
    ++cell.records;
    cell.weight += rec.weight;
    cell.weighted_sum += rec.weight * rec.outcome;
  }
  return table;
}

} // namespace apci
