#include "apci/sim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "apci/errors.hpp"

namespace apci {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double Rng::normal() {
  const double u1 = 1.0 - uniform(); // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::categorical(const std::vector<double>& probs) {
  const double u = uniform();
  double acc = 0.0;
  for (std::size_t n = 0; n < probs.size(); ++n) {
    acc += probs[n];
    if (u < acc) return static_cast<int>(n);
  }
  return static_cast<int>(probs.size()) - 1;
}

namespace {

constexpr double kSumTolerance = 1e-9;

void check_zero_sum(double sum, const std::string& what) {
  if (std::abs(sum) > kSumTolerance)
    throw ConfigError(fmt::format("{} sums to {:.6g}, not zero", what, sum));
}

Eigen::MatrixXd double_centre(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  out.colwise() -= m.rowwise().mean();
  out.rowwise() -= m.colwise().mean();
  out.array() += m.mean();
  return out;
}

} // namespace

void TrueEffects::validate() const {
  grid.validate();
  const int a = grid.ages(), p = grid.periods();
  if (age.size() != a) throw ConfigError(fmt::format("age effects need {} entries", a));
  if (period.size() != p) throw ConfigError(fmt::format("period effects need {} entries", p));
  if (interaction.rows() != a || interaction.cols() != p)
    throw ConfigError(fmt::format("interaction must be {}x{}", a, p));
  check_zero_sum(age.sum(), "age effects (alpha)");
  check_zero_sum(period.sum(), "period effects (beta)");
  for (int i = 0; i < a; ++i)
    check_zero_sum(interaction.row(i).sum(), fmt::format("interaction row {} (age {})", i + 1,
                                                         grid.age_label(i + 1)));
  for (int j = 0; j < p; ++j)
    check_zero_sum(interaction.col(j).sum(), fmt::format("interaction column {} (period {})",
                                                         j + 1, grid.period_label(j + 1)));
  for (const auto& c : covariates) {
    if (c.effects.size() < 2)
      throw ConfigError(fmt::format("covariate '{}' needs at least two levels", c.name));
    if (c.probabilities.size() != c.effects.size())
      throw ConfigError(fmt::format("covariate '{}': probabilities and effects differ in length",
                                    c.name));
    double es = 0.0, ps = 0.0;
    for (double e : c.effects) es += e;
    for (double q : c.probabilities) {
      if (q < 0) throw ConfigError(fmt::format("covariate '{}': negative probability", c.name));
      ps += q;
    }
    check_zero_sum(es, fmt::format("covariate '{}' effects", c.name));
    if (std::abs(ps - 1.0) > kSumTolerance)
      throw ConfigError(fmt::format("covariate '{}' probabilities sum to {:.6g}", c.name, ps));
  }
  if (n_per_cell < 1) throw ConfigError("n_per_cell must be at least 1");
  if (!(noise_sd >= 0)) throw ConfigError("noise_sd must be nonnegative");
  if (weights == WeightKind::uniform && !(weight_lo >= 0 && weight_hi >= weight_lo))
    throw ConfigError("uniform weights need 0 <= weight_lo <= weight_hi");
  if (!std::isfinite(mu) || !age.allFinite() || !period.allFinite() || !interaction.allFinite())
    throw ConfigError("effects must be finite");
}

double TrueEffects::linear_predictor(CellIndex cell, std::span<const int> covariate_levels) const {
  double eta = mu + age(cell.i - 1) + period(cell.j - 1) + interaction(cell.i - 1, cell.j - 1);
  for (std::size_t c = 0; c < covariate_levels.size() && c < covariates.size(); ++c)
    eta += covariates[c].effects[static_cast<std::size_t>(covariate_levels[c])];
  return eta;
}

std::vector<CovariateFactor> TrueEffects::covariate_factors() const {
  std::vector<CovariateFactor> out;
  for (const auto& c : covariates) {
    CovariateFactor f{c.name, {}};
    for (std::size_t l = 0; l < c.effects.size(); ++l) f.levels.push_back(std::to_string(l));
    out.push_back(std::move(f));
  }
  return out;
}

TrueEffects TrueEffects::from_json(const nlohmann::json& j) {
  TrueEffects t;
  try {
    t.grid = j.contains("grid") ? GridSpec::from_json(j.at("grid")) : GridSpec::default_lfp();
    t.family = family_from_string(j.value("family", std::string("logit")));
    t.mu = j.value("mu", 0.0);
    const auto age = j.at("age").get<std::vector<double>>();
    const auto period = j.at("period").get<std::vector<double>>();
    t.age = Eigen::Map<const Eigen::VectorXd>(age.data(), static_cast<Eigen::Index>(age.size()));
    t.period = Eigen::Map<const Eigen::VectorXd>(period.data(),
                                                 static_cast<Eigen::Index>(period.size()));
    const auto rows = j.at("interaction").get<std::vector<std::vector<double>>>();
    const auto nc = rows.empty() ? 0 : rows.front().size();
    t.interaction.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(nc));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != nc) throw ConfigError("interaction rows differ in length");
      for (std::size_t c = 0; c < nc; ++c)
        t.interaction(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
    if (j.contains("covariates"))
      for (const auto& c : j.at("covariates"))
        t.covariates.push_back({c.at("name").get<std::string>(),
                                c.at("effects").get<std::vector<double>>(),
                                c.at("probabilities").get<std::vector<double>>()});
    t.n_per_cell = j.value("n_per_cell", 100);
    t.noise_sd = j.value("noise_sd", 1.0);
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      const auto kind = w.value("kind", std::string("constant"));
      if (kind == "uniform") {
        t.weights = WeightKind::uniform;
        t.weight_lo = w.at("lo").get<double>();
        t.weight_hi = w.at("hi").get<double>();
      } else if (kind != "constant") {
        throw ConfigError(fmt::format("unknown weight kind '{}'", kind));
      }
    }
    t.seed = j.value("seed", std::uint64_t{1});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid effects file: ") + e.what());
  }
  t.validate();
  return t;
}

nlohmann::json TrueEffects::to_json() const {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < interaction.rows(); ++i) {
    rows.emplace_back();
    for (Eigen::Index j = 0; j < interaction.cols(); ++j) rows.back().push_back(interaction(i, j));
  }
  nlohmann::json covs = nlohmann::json::array();
  for (const auto& c : covariates)
    covs.push_back({{"name", c.name}, {"effects", c.effects}, {"probabilities", c.probabilities}});
  nlohmann::json w = {{"kind", weights == WeightKind::uniform ? "uniform" : "constant"}};
  if (weights == WeightKind::uniform) {
    w["lo"] = weight_lo;
    w["hi"] = weight_hi;
  }
  return {{"grid", grid.to_json()},
          {"family", to_string(family)},
          {"mu", mu},
          {"age", std::vector<double>(age.data(), age.data() + age.size())},
          {"period", std::vector<double>(period.data(), period.data() + period.size())},
          {"interaction", rows},
          {"covariates", covs},
          {"n_per_cell", n_per_cell},
          {"noise_sd", noise_sd},
          {"weights", w},
          {"seed", seed}};
}

TrueEffects TrueEffects::default_scenario() {
  TrueEffects t;
  t.grid = GridSpec::default_lfp();
  t.family = Family::binomial_logit;
  t.mu = 0.9;
  t.age.resize(9);
  t.age << -0.2, 0.1, 0.15, 0.2, 0.25, 0.25, 0.1, -0.25, -0.6;
  t.age.array() -= t.age.mean();
  // Keep every effect within +-0.3.
  t.age *= 0.3 / t.age.cwiseAbs().maxCoeff();
  t.period.resize(6);
  t.period << -0.15, 0.0, 0.05, 0.05, 0.03, 0.02;
  t.period.array() -= t.period.mean();

  // Cohort-shaped deviations: a boost along two diagonals and a dip along a
  // third, with a life-course gradient on one of them.
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(9, 6);
  for (int i = 1; i <= 9; ++i)
    for (int j = 1; j <= 6; ++j) {
      const int k = 9 - i + j;
      if (k == 5) raw(i - 1, j - 1) = 0.25;
      if (k == 6) raw(i - 1, j - 1) = 0.05 * j;
      if (k == 10) raw(i - 1, j - 1) = -0.2;
    }
  t.interaction = double_centre(raw);
  t.interaction *= 0.3 / t.interaction.cwiseAbs().maxCoeff();
  t.n_per_cell = 2000;
  t.seed = 20190401;
  return t;
}

TrueEffects TrueEffects::null_scenario() {
  TrueEffects t = default_scenario();
  t.interaction.setZero();
  return t;
}

std::vector<MicroRecord> generate(const TrueEffects& effects) {
  effects.validate();
  const auto& g = effects.grid;
  const int a = g.ages(), p = g.periods();
  std::vector<MicroRecord> out;
  out.reserve(static_cast<std::size_t>(a) * static_cast<std::size_t>(p) *
              static_cast<std::size_t>(effects.n_per_cell));
  std::size_t id = 0;
  std::vector<int> levels(effects.covariates.size());
  for (int i = 1; i <= a; ++i) {
    const int age_lo = g.age_breaks[static_cast<std::size_t>(i - 1)];
    const int age_hi = i == a ? g.age_breaks.back() : g.age_breaks[static_cast<std::size_t>(i)] - 1;
    for (int j = 1; j <= p; ++j) {
      const int yr_lo = g.period_breaks[static_cast<std::size_t>(j - 1)];
      const int yr_hi =
          j == p ? g.period_breaks.back() : g.period_breaks[static_cast<std::size_t>(j)] - 1;
      Rng rng(splitmix64(effects.seed +
                         0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i * 1000 + j)));
      for (int n = 0; n < effects.n_per_cell; ++n) {
        MicroRecord r;
        r.id = id++;
        r.age_years = rng.integer(age_lo, age_hi);
        r.year = rng.integer(yr_lo, yr_hi);
        for (std::size_t c = 0; c < effects.covariates.size(); ++c)
          levels[c] = rng.categorical(effects.covariates[c].probabilities);
        r.covariates = levels;
        const double eta = effects.linear_predictor({i, j}, levels);
        const double mean = inverse_link(effects.family, eta);
        if (effects.family == Family::binomial_logit) {
          if (!(mean > 0.0 && mean < 1.0))
            throw ConfigError(fmt::format("cell ({}, {}): logit mean {} outside (0, 1)", i, j, mean));
          r.outcome = rng.bernoulli(mean) ? 1.0 : 0.0;
        } else {
          r.outcome = mean + effects.noise_sd * rng.normal();
        }
        r.weight = effects.weights == WeightKind::uniform
                       ? effects.weight_lo + (effects.weight_hi - effects.weight_lo) * rng.uniform()
                       : 1.0;
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

AccountingDemo accounting_demo(const GridSpec& spec, double lambda, std::uint64_t seed) {
  spec.validate();
  AccountingDemo d;
  d.grid = spec;
  const auto cells = cell_records(spec);
  const DesignMatrix X = build_accounting_design(cells, spec, Coding::effect());
  d.columns = static_cast<int>(X.X.cols());
  d.names = X.layout.names();
  const Eigen::MatrixXd dense = X.X;
  const RankInfo info = rank_and_nullspace(dense);
  d.rank = info.rank;
  d.lambda = lambda;
  d.null_vector = info.null_space.cols() > 0 ? Eigen::VectorXd(info.null_space.col(0))
                                             : Eigen::VectorXd::Zero(d.columns);
  // Orient so the first nonzero age entry is positive.
  for (const auto& tag : X.layout.columns()) {
    const int idx = X.layout.index_of(tag);
    if (tag.term == Term::age && std::abs(d.null_vector(idx)) > 1e-12) {
      if (d.null_vector(idx) < 0) d.null_vector = -d.null_vector;
      break;
    }
  }
  Rng rng(seed);
  d.solution_a.resize(d.columns);
  for (int c = 0; c < d.columns; ++c) d.solution_a(c) = std::round(rng.normal() * 1000) / 4000.0;
  d.solution_b = d.solution_a + lambda * d.null_vector;
  d.fitted_a = dense * d.solution_a;
  d.fitted_b = dense * d.solution_b;
  d.max_fitted_difference = (d.fitted_a - d.fitted_b).cwiseAbs().maxCoeff();

  // Expand the null direction to full-length sum-to-zero effects.
  const int a = spec.ages(), p = spec.periods(), K = spec.cohorts();
  auto expand = [&](Term term, int n) {
    Eigen::VectorXd full(n);
    double s = 0.0;
    for (int l = 1; l < n; ++l) {
      full(l - 1) = d.null_vector(X.layout.index_of({term, -1, l}));
      s += full(l - 1);
    }
    full(n - 1) = -s;
    return full;
  };
  d.null_age = expand(Term::age, a);
  d.null_period = expand(Term::period, p);
  d.null_cohort = expand(Term::cohort, K);
  return d;
}

PolyDemo poly_demo(const PolyDemoSpec& spec, double shift) {
  const auto& b = spec.beta;
  PolyDemo d;
  d.shift = shift;
  // Cohort terms multiplied out: b5 (p - a) + b6 (a^2 + p^2 - 2ap).
  d.identified = {b[0], b[1] - b[5], b[2] + b[6], b[3] + b[5], b[4] + b[6], -2.0 * b[6]};
  auto cohort_form = [](const std::array<double, 7>& c, double age, double per) {
    const double coh = per - age;
    return c[0] + c[1] * age + c[2] * age * age + c[3] * per + c[4] * per * per + c[5] * coh +
           c[6] * coh * coh;
  };
  std::array<double, 7> moved = b;
  moved[1] += shift;
  moved[3] -= shift;
  moved[5] += shift;
  for (double age : spec.ages)
    for (double per : spec.periods) {
      const auto& k = d.identified;
      const double with = cohort_form(b, age, per);
      const double expanded =
          k[0] + k[1] * age + k[2] * age * age + k[3] * per + k[4] * per * per + k[5] * age * per;
      const double shifted = cohort_form(moved, age, per);
      d.with_cohort.push_back(with);
      d.expanded.push_back(expanded);
      d.shifted.push_back(shifted);
      d.max_expansion_difference = std::max(d.max_expansion_difference, std::abs(with - expanded));
      d.max_shift_difference = std::max(d.max_shift_difference, std::abs(with - shifted));
    }
  return d;
}

} // namespace apci
