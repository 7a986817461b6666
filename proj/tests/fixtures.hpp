#pragma once

// Published interaction estimates for the labor-force example (rows: ages
// 20-24..60-64, columns: periods 1990-94..2015-17) and the cohort averages
// and linear slopes reported alongside them. Cohorts run 1930..1995; NaN
// marks slopes that are not defined for single-cell cohorts.

#include <array>
#include <limits>

namespace fixtures {

constexpr double NA = std::numeric_limits<double>::quiet_NaN();

using Matrix96 = std::array<std::array<double, 6>, 9>;

constexpr Matrix96 white_interaction = {{
    {0.152, 0.097, 0.040, -0.050, -0.129, -0.109},
    {0.070, 0.061, -0.026, -0.060, -0.082, 0.038},
    {0.065, 0.029, -0.009, -0.044, -0.023, -0.018},
    {0.130, 0.071, -0.024, -0.085, -0.033, -0.059},
    {0.167, 0.085, 0.031, -0.032, -0.101, -0.149},
    {0.032, 0.074, 0.074, 0.005, -0.085, -0.099},
    {-0.118, -0.014, 0.069, 0.061, 0.041, -0.040},
    {-0.224, -0.151, -0.057, 0.111, 0.158, 0.164},
    {-0.274, -0.251, -0.097, 0.095, 0.254, 0.272},
}};

constexpr Matrix96 black_interaction = {{
    {0.000, 0.109, -0.012, -0.107, 0.019, -0.009},
    {-0.108, 0.123, 0.039, 0.015, -0.085, 0.015},
    {-0.004, 0.014, 0.081, 0.059, -0.134, -0.016},
    {0.051, 0.018, 0.062, -0.038, -0.042, -0.051},
    {0.161, -0.062, -0.020, -0.042, -0.018, -0.019},
    {0.033, -0.054, -0.031, 0.036, -0.017, 0.034},
    {0.019, 0.045, 0.022, -0.098, 0.011, 0.001},
    {-0.146, -0.030, -0.023, 0.084, 0.096, 0.019},
    {-0.005, -0.163, -0.118, 0.092, 0.171, 0.024},
}};

// Index 0 is the 1930 cohort (k = 1).
constexpr std::array<double, 14> white_average = {-0.274, -0.237, -0.122, 0.014,  0.135,
                                                  0.130,  0.063,  -0.014, -0.014, -0.031,
                                                  -0.025, -0.050, -0.046, -0.109};
constexpr std::array<double, 14> white_slope = {NA,     -0.019, 0.015,  0.033,  0.067,
                                                0.110,  0.045,  -0.107, -0.217, -0.158,
                                                -0.058, 0.023,  0.119,  NA};
constexpr std::array<double, 14> black_average = {-0.005, -0.155, -0.043, 0.037,  0.077,
                                                  -0.003, 0.010,  -0.015, 0.030,  0.029,
                                                  -0.045, -0.069, 0.017,  -0.009};
constexpr std::array<double, 14> black_slope = {NA,    -0.012, -0.097, 0.025,  0.050,
                                                0.033, 0.018,  0.042,  -0.045, -0.107,
                                                -0.060, 0.065, -0.002, NA};

// Step 2 numerator df per cohort on a 9 x 6 grid.
constexpr std::array<int, 14> cohort_cells = {1, 2, 3, 4, 5, 6, 6, 6, 6, 5, 4, 3, 2, 1};

} // namespace fixtures
