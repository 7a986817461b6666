#include "apci/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "apci/errors.hpp"
#include "apci/io.hpp"
#include "apci/model.hpp"
#include "apci/report.hpp"
#include "apci/sim.hpp"

namespace apci::cli {

namespace fs = std::filesystem;

GridSpec parse_grid(const std::string& arg) {
  if (arg.empty() || arg == "default") return GridSpec::default_lfp();
  static const std::regex shape(R"((\d+)\s*[xX]\s*(\d+))");
  std::smatch m;
  if (std::regex_match(arg, m, shape)) {
    const int a = std::stoi(m[1]), p = std::stoi(m[2]);
    if (a < 2 || p < 2) throw ConfigError(fmt::format("grid '{}' needs at least 2x2 cells", arg));
    return GridSpec::uniform(a, p);
  }
  nlohmann::json j;
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && arg[first] == '{') {
    try {
      j = nlohmann::json::parse(arg);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("inline grid is not valid JSON: {}", e.what()));
    }
  } else {
    j = load_json(arg);
  }
  auto spec = GridSpec::from_json(j);
  spec.validate();
  return spec;
}

int threads_from_env() {
  const char* v = std::getenv("APCI_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError(fmt::format("APCI_THREADS='{}' is not a positive integer", v));
  return static_cast<int>(std::min<long>(n, 256));
}

namespace {

struct FitArgs {
  std::string input;
  std::string grid = "default";
  std::string family = "logit";
  std::string coding = "effect";
  std::vector<std::string> covariates;
  double alpha = 0.05;
  std::string out = ".";
  std::uint64_t seed = 0;
};

struct SimulateArgs {
  std::string effects;
  std::string scenario = "default";
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> n_per_cell;
};

struct DemoArgs {
  std::string grid = "5x5";
  double lambda = 1.0;
  std::uint64_t seed = 7;
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw ConfigError(fmt::format("cannot create output directory '{}'", dir));
}

int cmd_fit(const FitArgs& a, std::ostream& out) {
  if (!(a.alpha > 0.0 && a.alpha < 1.0))
    throw ConfigError(fmt::format("--alpha must lie in (0, 1), got {}", a.alpha));
  const auto spec = parse_grid(a.grid);
  ApciOptions opts;
  opts.family = family_from_string(a.family);
  if (a.coding == "effect")
    opts.coding = Coding::effect();
  else if (a.coding == "dummy")
    opts.coding = Coding::dummy();
  else
    throw ConfigError(fmt::format("unknown coding '{}' (expected effect or dummy)", a.coding));
  opts.alpha = a.alpha;
  opts.threads = threads_from_env();

  const auto ds = read_csv(fs::path(a.input), spec, a.covariates);
  if (ds.records.empty())
    throw DataError(fmt::format("no usable rows in '{}' ({} read, {} missing, {} off-grid)", a.input,
                                ds.rows_read, ds.dropped_missing, ds.dropped_off_grid));
  const auto analysis = analyze(ds.records, spec, ds.covariates, opts);

  auto json = analysis.to_json();
  json["input"] = {{"path", a.input},
                   {"rows_read", ds.rows_read},
                   {"dropped_missing", ds.dropped_missing},
                   {"dropped_off_grid", ds.dropped_off_grid},
                   {"records", ds.records.size()}};
  const ReportContext ctx{a.input, ds.rows_read, ds.dropped_missing, ds.dropped_off_grid};
  const auto report = render_report(analysis, ctx);
  const auto age_csv = patterns_csv(analysis.fit, PatternMode::age_by_period);
  const auto period_csv = patterns_csv(analysis.fit, PatternMode::period_by_age);

  ensure_dir(a.out);
  const fs::path dir(a.out);
  write_atomic(dir / "fit.json", json.dump(2) + "\n");
  write_atomic(dir / "report.txt", report);
  write_atomic(dir / "patterns_age.csv", age_csv);
  write_atomic(dir / "patterns_period.csv", period_csv);

  out << fmt::format("global interaction test: F = {:.3f}, df = ({}, {}), p = {:.4g}\n",
                     analysis.global_test.statistic, analysis.global_test.df1,
                     analysis.global_test.df2, analysis.global_test.p_value);
  out << fmt::format("wrote fit.json, report.txt, patterns_age.csv, patterns_period.csv to {}\n",
                     a.out);
  return ok;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  TrueEffects t;
  if (!a.effects.empty())
    t = TrueEffects::from_json(load_json(a.effects));
  else if (a.scenario == "default")
    t = TrueEffects::default_scenario();
  else if (a.scenario == "null")
    t = TrueEffects::null_scenario();
  else
    throw ConfigError(fmt::format("unknown scenario '{}' (expected default or null)", a.scenario));
  if (a.seed) t.seed = *a.seed;
  if (a.n_per_cell) t.n_per_cell = *a.n_per_cell;
  t.validate();

  const auto records = generate(t);
  std::ostringstream csv;
  write_csv(csv, records, t.covariate_factors());
  nlohmann::json meta = {{"seed", t.seed},
                         {"records", records.size()},
                         {"cells", t.grid.cells()},
                         {"generator", "mt19937_64 per cell, splitmix64 seeding"},
                         {"effects", t.to_json()}};

  ensure_dir(a.out);
  const fs::path dir(a.out);
  write_atomic(dir / "data.csv", csv.str());
  write_atomic(dir / "data.meta.json", meta.dump(2) + "\n");
  write_atomic(dir / "grid.json", t.grid.to_json().dump(2) + "\n");
  out << fmt::format("wrote {} records on a {}x{} grid (seed {}) to {}\n", records.size(),
                     t.grid.ages(), t.grid.periods(), t.seed, a.out);
  return ok;
}

int cmd_demo(const DemoArgs& a, std::ostream& out) {
  const auto spec = parse_grid(a.grid);
  const auto demo = accounting_demo(spec, a.lambda, a.seed);
  PolyDemoSpec ps;
  ps.beta = {0.4, 0.03, -0.0004, 0.01, 0.0002, 0.02, -0.0001};
  for (int age = 20; age <= 60; age += 5) ps.ages.push_back(age);
  for (int year = 1990; year <= 2015; year += 5) ps.periods.push_back(year);
  const auto poly = poly_demo(ps, 1.0);
  out << render_demo(demo, poly);
  return ok;
}

int dispatch_errors(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const EmptyCellsError& e) {
    err << "data error: " << e.what() << "\n";
    return data;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return data;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return config;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return numerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return config;
  }
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Age-period-cohort-interaction (APC-I) model toolkit", "apci"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit the APC-I model and run the three-step cohort analysis");
  fit->add_option("--input", fa.input, "CSV with outcome,age,year[,weight][,covariates]")->required();
  fit->add_option("--grid", fa.grid, "grid JSON file, inline JSON, 'default', or AxP");
  fit->add_option("--family", fa.family, "logit or gaussian")
      ->check(CLI::IsMember({"logit", "gaussian"}));
  fit->add_option("--coding", fa.coding, "effect or dummy")->check(CLI::IsMember({"effect", "dummy"}));
  fit->add_option("--covariates", fa.covariates, "categorical covariate columns")->delimiter(',');
  fit->add_option("--alpha", fa.alpha, "significance level for classification");
  fit->add_option("--out", fa.out, "output directory");
  fit->add_option("--seed", fa.seed, "accepted for symmetry; fitting is deterministic");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Generate micro data with known APC-I effects");
  sim->add_option("--effects", sa.effects, "true-effects JSON file");
  sim->add_option("--scenario", sa.scenario, "built-in scenario when --effects is absent")
      ->check(CLI::IsMember({"default", "null"}));
  sim->add_option("--seed", sa.seed, "override the seed");
  sim->add_option("--n-per-cell", sa.n_per_cell, "override records per cell");
  sim->add_option("--out", sa.out, "output directory");

  DemoArgs da;
  auto* demo = app.add_subcommand("demo", "Show the non-identifiability of the accounting model");
  demo->add_option("--grid", da.grid, "grid JSON file, inline JSON, 'default', or AxP");
  demo->add_option("--lambda", da.lambda, "multiple of the null vector added to the first solution");
  demo->add_option("--seed", da.seed, "seed for the first solution");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    const bool is_config = dynamic_cast<const CLI::ValidationError*>(&e) != nullptr;
    err << e.what() << "\n";
    if (!is_config) err << "run 'apci --help' for usage\n";
    return is_config ? config : usage;
  }

  if (*fit) return dispatch_errors([&] { return cmd_fit(fa, out); }, err);
  if (*sim) return dispatch_errors([&] { return cmd_simulate(sa, out); }, err);
  return dispatch_errors([&] { return cmd_demo(da, out); }, err);
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

} // namespace apci::cli
