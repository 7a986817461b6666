#pragma once

// Synthetic micro data with known APC-I structure, and a demonstration that
// the additive age + period + cohort accounting model is not identified.
//
// Random numbers come from std::mt19937_64 (fully specified by the C++
// standard) with hand-written transforms, so a given seed yields the same
// records on every conforming implementation:
//   uniform  u = (x >> 11) * 2^-53            in [0, 1)
//   bernoulli(m) = u < m
//   normal   Box-Muller on (1 - u1, u2), cosine branch only
//   integer in [lo, hi] = lo + floor(u * (hi - lo + 1))
// Each cell (i, j) draws from its own engine seeded with
// splitmix64(seed + 0x9E3779B97F4A7C15 * (i * 1000 + j)).

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "apci/design.hpp"
#include "apci/glm.hpp"
#include "apci/grid.hpp"

namespace apci {

std::uint64_t splitmix64(std::uint64_t x);

class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  int integer(int lo, int hi) { return lo + static_cast<int>(uniform() * (hi - lo + 1)); }
  // Index drawn from a discrete distribution with the given probabilities.
  int categorical(const std::vector<double>& probs);

private:
  std::mt19937_64 engine_;
};

struct SimCovariate {
  std::string name;
  std::vector<double> effects;       // sums to zero
  std::vector<double> probabilities; // sums to one
};

enum class WeightKind { constant, uniform };

struct TrueEffects {
  GridSpec grid;
  Family family = Family::binomial_logit;
  double mu = 0.0;
  Eigen::VectorXd age;         // a, sums to zero
  Eigen::VectorXd period;      // p, sums to zero
  Eigen::MatrixXd interaction; // a x p, rows and columns sum to zero
  std::vector<SimCovariate> covariates;
  int n_per_cell = 100;
  double noise_sd = 1.0; // Gaussian family only
  WeightKind weights = WeightKind::constant;
  double weight_lo = 1.0;
  double weight_hi = 1.0;
  std::uint64_t seed = 1;

  // Throws ConfigError naming the offending margin or field.
  void validate() const;
  double linear_predictor(CellIndex cell, std::span<const int> covariate_levels = {}) const;
  std::vector<CovariateFactor> covariate_factors() const;

  static TrueEffects from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // Nine age groups by six periods (14 cohorts), logit, all effects within
  // +-0.3 and an interaction pattern concentrated on a few diagonals.
  static TrueEffects default_scenario();
  // Same grid with the interaction set to zero.
  static TrueEffects null_scenario();
};

// Records in cell order (i, then j); ids are consecutive from 0.
std::vector<MicroRecord> generate(const TrueEffects& effects);

struct AccountingDemo {
  GridSpec grid;
  int columns = 0;
  int rank = 0;
  std::vector<std::string> names;
  Eigen::VectorXd null_vector;
  Eigen::VectorXd solution_a;
  Eigen::VectorXd solution_b; // solution_a + lambda * null_vector
  double lambda = 0.0;
  Eigen::VectorXd fitted_a;   // one value per cell, row-major
  Eigen::VectorXd fitted_b;
  double max_fitted_difference = 0.0;
  // Full-length implied effects along the null direction (last level
  // included), for inspecting its linear age/period/cohort structure.
  Eigen::VectorXd null_age;
  Eigen::VectorXd null_period;
  Eigen::VectorXd null_cohort;
};

AccountingDemo accounting_demo(const GridSpec& spec, double lambda = 1.0,
                               std::uint64_t seed = 7);

// Continuous quadratic age/period/cohort model with cohort = period - age.
struct PolyDemoSpec {
  std::array<double, 7> beta{}; // intercept, age, age^2, period, period^2, cohort, cohort^2
  std::vector<double> ages;
  std::vector<double> periods;
};

struct PolyDemo {
  // One entry per (age, period) point, row-major.
  std::vector<double> with_cohort;      // beta0 + ... + b5 c + b6 c^2 with c = p - a
  std::vector<double> expanded;         // cohort terms multiplied out into a, p, a^2, p^2, ap
  std::vector<double> shifted;          // (b1 + t, b3 - t, b5 + t) in the cohort form
  double shift = 0.0;
  double max_expansion_difference = 0.0;
  double max_shift_difference = 0.0;
  // Identified coefficients of the expanded form: 1, a, a^2, p, p^2, ap.
  std::array<double, 6> identified{};
};

PolyDemo poly_demo(const PolyDemoSpec& spec, double shift = 1.0);

} // namespace apci
