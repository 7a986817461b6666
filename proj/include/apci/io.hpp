#pragma once

// CSV ingest (`outcome,age,year[,weight][,covariates...]`, header required),
// JSON loading, and atomic artifact writes.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "apci/grid.hpp"

namespace apci {

struct Dataset {
  std::vector<MicroRecord> records;
  std::vector<CovariateFactor> covariates;
  std::size_t rows_read = 0;
  std::size_t dropped_missing = 0;  // missing or unparseable required fields
  std::size_t dropped_off_grid = 0; // age or year outside the grid
  std::vector<std::size_t> off_grid_rows;
};

// Row ids are 1-based data line numbers (header excluded). Covariate levels are
// sorted numerically when every label parses as a number, else lexically.
// Throws ConfigError for a missing required or requested column.
Dataset read_csv(std::istream& in, const GridSpec& spec,
                 const std::vector<std::string>& covariate_columns);
Dataset read_csv(const std::filesystem::path& path, const GridSpec& spec,
                 const std::vector<std::string>& covariate_columns);

void write_csv(std::ostream& out, const std::vector<MicroRecord>& records,
               const std::vector<CovariateFactor>& covariates);

nlohmann::json load_json(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

} // namespace apci
