#pragma once

// Age-by-period grid: binning of micro records into cells and the diagonal
// cohort map k = a - i + j.
//
// Cell and cohort indices are 1-based throughout, matching the usual
// (i, j, k) notation of the model. Covariate levels are 0-based indices into
// the owning CovariateFactor's label list.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace apci {

struct CellIndex {
  int i = 1; // age group, 1..a
  int j = 1; // period, 1..p
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

// Breaks define half-open bins [lo, hi); the last bin on each axis is closed
// at its upper break so a shorter terminal interval stays representable.
struct GridSpec {
  std::vector<int> age_breaks;
  std::vector<int> period_breaks;
  std::vector<std::string> cohort_labels;

  int ages() const { return static_cast<int>(age_breaks.size()) - 1; }
  int periods() const { return static_cast<int>(period_breaks.size()) - 1; }
  int cohorts() const { return ages() + periods() - 1; }
  int cells() const { return ages() * periods(); }

  // Throws ConfigError describing the first violated invariant.
  void validate() const;

  std::string age_label(int i) const;
  std::string period_label(int j) const;

  // Unit-width grid 0..a, 0..p with cohort labels "1".."a+p-1".
  static GridSpec uniform(int ages, int periods);
  // Nine five-year age groups 20-64 and six periods 1990-2017; cohorts 1930..1995.
  static GridSpec default_lfp();

  // Missing cohort_labels default to the birth year of each diagonal's
  // earliest cell (period start minus age start).
  static GridSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

class CohortScheme {
public:
  enum class Mode { diagonal, custom };

  CohortScheme() = default;
  static CohortScheme diagonal() { return {}; }
  // band_of_cell is row-major over (i, j); band ids are 1..B. Every diagonal
  // must sit entirely inside one band and each band must cover a contiguous
  // run of diagonals.
  static CohortScheme custom(const GridSpec& spec, std::vector<int> band_of_cell);

  Mode mode() const { return mode_; }
  int count(const GridSpec& spec) const;
  const std::vector<int>& custom_map() const { return map_; }

private:
  Mode mode_ = Mode::diagonal;
  std::vector<int> map_;
  int bands_ = 0;
};

struct MicroRecord {
  std::size_t id = 0;
  double outcome = 0.0;
  int age_years = 0;
  int year = 0;
  double weight = 1.0;
  std::vector<int> covariates;
};

struct CovariateFactor {
  std::string name;
  std::vector<std::string> levels;
  int size() const { return static_cast<int>(levels.size()); }
};

struct CellStats {
  std::size_t records = 0; // seen, including zero-weight records
  double weight = 0.0;
  double weighted_sum = 0.0;

  bool empty() const { return !(weight > 0.0); }
  double mean() const;
};

class CellTable {
public:
  CellTable() = default;
  CellTable(int ages, int periods);

  int ages() const { return ages_; }
  int periods() const { return periods_; }

  CellStats& at(CellIndex c);
  const CellStats& at(CellIndex c) const;

  std::size_t dropped() const { return dropped_ids_.size(); }
  const std::vector<std::size_t>& dropped_ids() const { return dropped_ids_; }
  void add_dropped(std::size_t id) { dropped_ids_.push_back(id); }

  std::vector<CellIndex> empty_cells() const;

  // Merge a table built over the same grid from a disjoint chunk of records.
  void merge(const CellTable& other);

private:
  int ages_ = 0;
  int periods_ = 0;
  std::vector<CellStats> cells_;
  std::vector<std::size_t> dropped_ids_;
};

// Returns std::nullopt when `value` lies outside [breaks.front(), breaks.back()].
std::optional<int> bin_value(int value, std::span<const int> breaks);

// Throws OutOfGridError naming the record id when age or year is off-grid.
CellIndex bin_record(const MicroRecord& rec, const GridSpec& spec);

int cohort_index(CellIndex cell, const GridSpec& spec,
                 const CohortScheme& scheme = CohortScheme::diagonal());

std::string cohort_label(int k, const GridSpec& spec,
                         const CohortScheme& scheme = CohortScheme::diagonal());

// Cells belonging to cohort k ordered by increasing period (for a single
// diagonal this is also increasing age). Throws std::out_of_range for an
// unknown cohort id.
std::vector<CellIndex> diagonal_cells(int k, const GridSpec& spec,
                                      const CohortScheme& scheme = CohortScheme::diagonal());

// Off-grid records are counted in CellTable::dropped_ids rather than thrown.
CellTable aggregate(std::span<const MicroRecord> records, const GridSpec& spec);

} // namespace apci
