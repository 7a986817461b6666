#include "apci/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <unistd.h>

#include "apci/errors.hpp"

namespace apci {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty() || s == "NA" || s == "NaN" || s == ".") return false;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_int(const std::string& s, int& out) {
  double d;
  if (!parse_double(s, d) || d != std::floor(d)) return false;
  out = static_cast<int>(d);
  return true;
}

std::vector<std::string> sorted_levels(const std::vector<std::string>& seen) {
  std::vector<std::string> levels = seen;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  const bool numeric = std::all_of(levels.begin(), levels.end(), [](const std::string& s) {
    double d;
    return parse_double(s, d);
  });
  if (numeric)
    std::sort(levels.begin(), levels.end(),
              [](const std::string& x, const std::string& y) { return std::stod(x) < std::stod(y); });
  return levels;
}

} // namespace

Dataset read_csv(std::istream& in, const GridSpec& spec,
                 const std::vector<std::string>& covariate_columns) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("input CSV is empty (header required)");
  const auto header = split(line);
  auto column = [&](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_outcome = column("outcome"), c_age = column("age"), c_year = column("year");
  for (const auto& [name, idx] : {std::pair{"outcome", c_outcome}, {"age", c_age}, {"year", c_year}})
    if (idx < 0) throw ConfigError(fmt::format("required column '{}' missing from CSV header", name));
  const int c_weight = column("weight");
  std::vector<int> c_cov;
  for (const auto& name : covariate_columns) {
    const int idx = column(name);
    if (idx < 0) throw ConfigError(fmt::format("covariate column '{}' missing from CSV header", name));
    c_cov.push_back(idx);
  }

  Dataset ds;
  struct Raw {
    MicroRecord rec;
    std::vector<std::string> cov;
  };
  std::vector<Raw> rows;
  std::vector<std::vector<std::string>> seen(covariate_columns.size());
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++line_no;
    ++ds.rows_read;
    const auto f = split(line);
    auto field = [&](int idx) -> std::string {
      return idx >= 0 && idx < static_cast<int>(f.size()) ? f[static_cast<std::size_t>(idx)]
                                                          : std::string();
    };
    Raw r;
    r.rec.id = line_no;
    bool ok = parse_double(field(c_outcome), r.rec.outcome) && parse_int(field(c_age), r.rec.age_years) &&
              parse_int(field(c_year), r.rec.year);
    if (ok && c_weight >= 0) ok = parse_double(field(c_weight), r.rec.weight) && r.rec.weight >= 0;
    for (std::size_t c = 0; ok && c < c_cov.size(); ++c) {
      auto v = field(c_cov[c]);
      if (v.empty() || v == "NA") ok = false;
      r.cov.push_back(std::move(v));
    }
    if (!ok) {
      ++ds.dropped_missing;
      continue;
    }
    if (!bin_value(r.rec.age_years, spec.age_breaks) || !bin_value(r.rec.year, spec.period_breaks)) {
      ++ds.dropped_off_grid;
      ds.off_grid_rows.push_back(line_no);
      continue;
    }
    for (std::size_t c = 0; c < r.cov.size(); ++c) seen[c].push_back(r.cov[c]);
    rows.push_back(std::move(r));
  }

  std::vector<std::map<std::string, int>> level_index(covariate_columns.size());
  for (std::size_t c = 0; c < covariate_columns.size(); ++c) {
    CovariateFactor f{covariate_columns[c], sorted_levels(seen[c])};
    for (int l = 0; l < f.size(); ++l) level_index[c][f.levels[static_cast<std::size_t>(l)]] = l;
    ds.covariates.push_back(std::move(f));
  }
  ds.records.reserve(rows.size());
  for (auto& r : rows) {
    for (std::size_t c = 0; c < r.cov.size(); ++c) r.rec.covariates.push_back(level_index[c][r.cov[c]]);
    ds.records.push_back(std::move(r.rec));
  }
  return ds;
}

Dataset read_csv(const std::filesystem::path& path, const GridSpec& spec,
                 const std::vector<std::string>& covariate_columns) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open input '{}'", path.string()));
  return read_csv(in, spec, covariate_columns);
}

void write_csv(std::ostream& out, const std::vector<MicroRecord>& records,
               const std::vector<CovariateFactor>& covariates) {
  out << "outcome,age,year,weight";
  for (const auto& c : covariates) out << ',' << c.name;
  out << '\n';
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{}", r.outcome, r.age_years, r.year, r.weight);
    for (std::size_t c = 0; c < r.covariates.size(); ++c)
      out << ',' << covariates[c].levels[static_cast<std::size_t>(r.covariates[c])];
    out << '\n';
  }
}

nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open '{}'", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + fmt::format(".tmp.{}", ::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp));
    out << content;
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error(fmt::format("write to '{}' failed", tmp));
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(fmt::format("cannot move '{}' into place: {}", path.string(), ec.message()));
  }
}

} // namespace apci
