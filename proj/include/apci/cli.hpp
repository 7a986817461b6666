#pragma once

// `apci fit | simulate | demo`.
//
// Exit codes: 0 success, 1 usage or I/O failure, 2 configuration error,
// 3 data error, 4 numerical failure.

#include <iosfwd>
#include <string>
#include <vector>

#include "apci/grid.hpp"

namespace apci::cli {

enum ExitCode : int { ok = 0, usage = 1, config = 2, data = 3, numerical = 4 };

// Accepts a JSON file path, inline JSON (starting with '{'), "default" for the
// 9x6 labor-force grid, or "AxP" (e.g. "5x5") for a unit-width grid.
GridSpec parse_grid(const std::string& arg);

// Worker count for Step 2 fits: APCI_THREADS when set, otherwise 1.
int threads_from_env();

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

} // namespace apci::cli
