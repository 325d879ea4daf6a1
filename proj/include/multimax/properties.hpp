// Randomized inequality suites for the temperature, MultiMax-l and MultiMax
// trade-off results and the two supporting lemmas. Each suite draws inputs
// under the stated preconditions and counts draws where the claimed
// inequality fails by more than a relative slack.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "multimax/metrics.hpp"
#include "multimax/reweight.hpp"

namespace multimax {

inline constexpr double kPropertySlack = 1e-12;

/// Named numeric fields of one random draw, enough to replay it.
struct Draw {
  std::vector<std::pair<std::string, std::vector<double>>> fields;

  void add(std::string name, std::vector<double> v) { fields.emplace_back(std::move(name), std::move(v)); }
  void add(std::string name, double v) { add(std::move(name), std::vector<double>{v}); }
};

struct PropCheck {
  explicit PropCheck(std::string check_name = {}) : name(std::move(check_name)) {}

  std::string name;
  std::size_t trials = 0;
  std::size_t comparisons = 0;
  std::size_t violations = 0;
  /// Smallest normalized margin (lhs - rhs) / scale seen; negative means the
  /// inequality went the wrong way.
  double worst_slack = std::numeric_limits<double>::infinity();
  std::optional<Draw> first_violation;

  bool passed() const noexcept { return violations == 0; }
};

struct PropReport {
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::vector<PropCheck> checks;

  bool passed() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const PropCheck& c) { return c.passed(); });
  }
};

namespace props {

using Engine = std::mt19937_64;

inline Engine engine_for(std::uint64_t seed, std::uint64_t suite) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(suite)};
  return Engine(seq);
}

inline double uniform(Engine& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline std::vector<double> normal_vector(Engine& g, std::size_t k, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(k);
  for (auto& x : v) x = n(g);
  return v;
}

inline std::size_t uniform_size(Engine& g, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(g);
}

// Records lhs >= rhs with slack relative to max(1, |lhs|, |rhs|).
class Recorder {
 public:
  explicit Recorder(PropCheck& check) : check_(check) {}

  void expect_ge(double lhs, double rhs, const std::function<Draw()>& draw) {
    const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
    const double margin = (lhs - rhs) / scale;
    ++check_.comparisons;
    check_.worst_slack = std::min(check_.worst_slack, margin);
    if (margin < -kPropertySlack || std::isnan(margin)) {
      if (!failed_this_trial_) ++check_.violations;
      failed_this_trial_ = true;
      if (!check_.first_violation) check_.first_violation = draw();
    }
  }

  void next_trial() {
    ++check_.trials;
    failed_this_trial_ = false;
  }

 private:
  PropCheck& check_;
  bool failed_this_trial_ = false;
};

// Inputs below b, their count, and the power-sum bound on epsilon.
struct LowEntries {
  std::vector<double> values;
  double epsilon_bound = 0.0;
};

inline LowEntries entries_below(const std::vector<double>& x, double b) {
  LowEntries low;
  for (double v : x) {
    if (v < b) low.values.push_back(v);
  }
  if (!low.values.empty()) {
    const double l = static_cast<double>(low.values.size());
    double sum = 0.0;
    for (double v : low.values) sum += v;
    low.epsilon_bound = (sum - std::log(l)) / l;
  }
  return low;
}

inline const std::vector<double> kTemperatureGrid{0.25, 0.5, 1.0, 2.0, 4.0};

/// x vs t x + (1 - t) b in all four (x <> b, t <> 1) regimes.
inline PropCheck lemma_affine_ordering(std::size_t trials, std::uint64_t seed) {
  PropCheck check{"affine_ordering"};
  Recorder rec(check);
  auto g = engine_for(seed, 1);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    rec.next_trial();
    const double x = uniform(g, -5.0, 5.0);
    const double b = uniform(g, -5.0, 5.0);
    const double t_hi = uniform(g, 1.0, 5.0);
    const double t_lo = uniform(g, -3.0, 1.0);
    if (x == b || t_hi == 1.0) continue;
    auto draw = [&] {
      Draw d;
      d.add("x", x);
      d.add("b", b);
      d.add("t_hi", t_hi);
      d.add("t_lo", t_lo);
      return d;
    };
    const double hi = t_hi * x + (1.0 - t_hi) * b;
    const double lo = t_lo * x + (1.0 - t_lo) * b;
    if (x < b) {
      rec.expect_ge(x, hi, draw);  // x > t x + (1 - t) b for t > 1
      rec.expect_ge(lo, x, draw);  // x < t x + (1 - t) b for t < 1
    } else {
      rec.expect_ge(hi, x, draw);
      rec.expect_ge(x, lo, draw);
    }
  }
  return check;
}

/// sum_{x_l < b} exp(t (x_l - x_i)) >= sum_{x_l < b} exp(x_l - x_i) for t > 1
/// and x_i < epsilon <= (1/L)(sum_{x_l < b} x_l - ln L).
inline PropCheck lemma_power_sum(std::size_t trials, std::uint64_t seed) {
  PropCheck check{"power_sum_bound"};
  Recorder rec(check);
  auto g = engine_for(seed, 2);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    rec.next_trial();
    std::vector<double> x;
    double b = 0.0;
    LowEntries low;
    do {
      x = normal_vector(g, uniform_size(g, 2, 16), 2.0);
      b = uniform(g, -2.0, 2.0);
      low = entries_below(x, b);
    } while (low.values.empty());
    const double eps = low.epsilon_bound - uniform(g, 0.0, 1.0);
    const double t = uniform(g, 1.0, 4.0);
    std::vector<double> anchors;
    for (double v : x) {
      if (v < eps) anchors.push_back(v);
    }
    anchors.push_back(eps - std::abs(normal_vector(g, 1, 1.0)[0]));
    for (double xi : anchors) {
      double lhs = 0.0, rhs = 0.0;
      for (double xl : low.values) {
        lhs += std::exp(t * (xl - xi));
        rhs += std::exp(xl - xi);
      }
      rec.expect_ge(lhs, rhs, [&] {
        Draw d;
        d.add("x", x);
        d.add("b", b);
        d.add("epsilon", eps);
        d.add("t", t);
        d.add("x_i", xi);
        return d;
      });
    }
  }
  return check;
}

namespace detail_suites {
inline Draw temperature_draw(const std::vector<double>& x, double eps, double s) {
  Draw d;
  d.add("x", x);
  d.add("epsilon", eps);
  d.add("s", s);
  d.add("tau_grid", kTemperatureGrid);
  return d;
}
}  // namespace detail_suites

/// SoftMax multi-modality is nondecreasing in tau (K = 8, standard normal x,
/// epsilon = ||x||_1 / K).
inline PropCheck softmax_multimodality_monotone(std::size_t trials, std::uint64_t seed) {
  PropCheck check{"softmax_multimodality_monotone"};
  Recorder rec(check);
  auto g = engine_for(seed, 3);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    rec.next_trial();
    const Scores x(normal_vector(g, 8, 1.0));
    const MetricConfig cfg{mean_abs(x), default_reference(x)};
    double prev = 0.0;
    for (std::size_t k = 0; k < kTemperatureGrid.size(); ++k) {
      const auto m = multimodality(x, softmax(x, Temperature(kTemperatureGrid[k])), cfg);
      if (m.vacuous) break;
      if (k > 0) {
        rec.expect_ge(m.value, prev, [&] {
          return detail_suites::temperature_draw(x.vector(), cfg.epsilon, cfg.s);
        });
      }
      prev = m.value;
    }
  }
  return check;
}

/// SoftMax sparsity is nonincreasing in tau for epsilon = ||x||_1 / K.
inline PropCheck softmax_sparsity_monotone(std::size_t trials, std::uint64_t seed) {
  PropCheck check{"softmax_sparsity_monotone"};
  Recorder rec(check);
  auto g = engine_for(seed, 4);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    rec.next_trial();
    const Scores x(normal_vector(g, 8, 1.0));
    const MetricConfig cfg{mean_abs(x), default_reference(x)};
    double prev = 0.0;
    for (std::size_t k = 0; k < kTemperatureGrid.size(); ++k) {
      const auto s = sparsity(x, softmax(x, Temperature(kTemperatureGrid[k])), cfg);
      if (s.vacuous) break;
      if (k > 0) {
        rec.expect_ge(prev, s.value, [&] {
          return detail_suites::temperature_draw(x.vector(), cfg.epsilon, cfg.s);
        });
      }
      prev = s.value;
    }
  }
  return check;
}

/// One draw for the MultiMax-l / MultiMax comparisons.
struct ModulatedDraw {
  std::vector<double> x;
  double tb = 1.0, td = 1.0, b = 0.0, d = 0.0, epsilon = 0.0;

  Draw to_draw() const {
    Draw out;
    out.add("x", x);
    out.add("tb", tb);
    out.add("td", td);
    out.add("b", b);
    out.add("d", d);
    out.add("epsilon", epsilon);
    return out;
  }
};

// x ~ 2 N(0, 1) with K in [3, 16], b ~ U(-2, 2), tb ~ U(1.1, 4), at least one
// entry below b, epsilon below the power-sum bound.
inline ModulatedDraw draw_small_entry_modulation(Engine& g) {
  ModulatedDraw d;
  LowEntries low;
  do {
    d.x = normal_vector(g, uniform_size(g, 3, 16), 2.0);
    d.b = uniform(g, -2.0, 2.0);
    low = entries_below(d.x, d.b);
  } while (low.values.empty());
  d.tb = uniform(g, 1.1, 4.0);
  d.epsilon = std::min(d.b, low.epsilon_bound) - uniform(g, 0.0, 1.0);
  return d;
}

/// MultiMax-l (small-entry term only, tb > 1) against SoftMax at tau = 1:
/// every entry below epsilon gets no more mass than under SoftMax.
inline PropCheck small_entry_modulation_sparser(std::size_t trials, std::uint64_t seed) {
  PropCheck check{"small_entry_sparser_than_softmax"};
  Recorder rec(check);
  auto g = engine_for(seed, 5);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    rec.next_trial();
    const auto d = draw_small_entry_modulation(g);
    const Scores x(d.x);
    const auto ml = multimax(x, ModulatorParams::small_entries_only(d.tb, d.b));
    const auto sm = softmax(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] < d.epsilon) rec.expect_ge(sm[i], ml[i], [&] { return d.to_draw(); });
    }
  }
  return check;
}

/// MultiMax-l against SoftMax at tau = 1: multi-modality no lower.
inline PropCheck small_entry_modulation_multimodality(std::size_t trials, std::uint64_t seed) {
  PropCheck check{"small_entry_multimodality_vs_softmax"};
  Recorder rec(check);
  auto g = engine_for(seed, 6);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    rec.next_trial();
    const auto d = draw_small_entry_modulation(g);
    const Scores x(d.x);
    const MetricConfig cfg{d.epsilon, 1.0};
    const auto m_ml = multimodality(x, multimax(x, ModulatorParams::small_entries_only(d.tb, d.b)), cfg);
    const auto m_sm = multimodality(x, softmax(x), cfg);
    if (m_sm.vacuous) continue;
    rec.expect_ge(m_ml.value, m_sm.value, [&] { return d.to_draw(); });
  }
  return check;
}

// Adds d = b + U(0, 2), td ~ U(0.1, 0.9) and tightens epsilon to
// epsilon <= b - (1 - td) / (tb - 1) * (x_n - d) for every x_n >= d.
inline ModulatedDraw draw_two_sided_modulation(Engine& g) {
  ModulatedDraw d = draw_small_entry_modulation(g);
  d.d = d.b + uniform(g, 0.0, 2.0);
  d.td = uniform(g, 0.1, 0.9);
  double bound = std::numeric_limits<double>::infinity();
  for (double xn : d.x) {
    if (xn >= d.d) bound = std::min(bound, d.b - (1.0 - d.td) / (d.tb - 1.0) * (xn - d.d));
  }
  if (bound < d.epsilon) d.epsilon = bound - uniform(g, 0.0, 1.0);
  return d;
}

/// First-order MultiMax (tb > 1, td < 1) against SoftMax at tau = 1: entries
/// below epsilon get no more mass.
inline PropCheck two_sided_modulation_sparser(std::size_t trials, std::uint64_t seed) {
  PropCheck check{"two_sided_sparser_than_softmax"};
  Recorder rec(check);
  auto g = engine_for(seed, 7);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    rec.next_trial();
    const auto d = draw_two_sided_modulation(g);
    const Scores x(d.x);
    const auto mm = multimax(x, ModulatorParams{{ModulatorOrder{d.tb, d.td, d.b, d.d}}});
    const auto sm = softmax(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] < d.epsilon) rec.expect_ge(sm[i], mm[i], [&] { return d.to_draw(); });
    }
  }
  return check;
}

/// First-order MultiMax against MultiMax-l with the same tb, b: multi-modality
/// no lower.
inline PropCheck two_sided_modulation_multimodality(std::size_t trials, std::uint64_t seed) {
  PropCheck check{"two_sided_multimodality_vs_small_entry"};
  Recorder rec(check);
  auto g = engine_for(seed, 8);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    rec.next_trial();
    const auto d = draw_two_sided_modulation(g);
    const Scores x(d.x);
    const MetricConfig cfg{d.epsilon, 1.0};
    const auto m_mm = multimodality(x, multimax(x, ModulatorParams{{ModulatorOrder{d.tb, d.td, d.b, d.d}}}), cfg);
    const auto m_ml = multimodality(x, multimax(x, ModulatorParams::small_entries_only(d.tb, d.b)), cfg);
    if (m_ml.vacuous) continue;
    rec.expect_ge(m_mm.value, m_ml.value, [&] { return d.to_draw(); });
  }
  return check;
}

struct Suite {
  const char* name;
  PropCheck (*run)(std::size_t, std::uint64_t);
};

inline const std::vector<Suite>& all_suites() {
  static const std::vector<Suite> suites{
      {"affine_ordering", &lemma_affine_ordering},
      {"power_sum_bound", &lemma_power_sum},
      {"softmax_multimodality_monotone", &softmax_multimodality_monotone},
      {"softmax_sparsity_monotone", &softmax_sparsity_monotone},
      {"small_entry_sparser_than_softmax", &small_entry_modulation_sparser},
      {"small_entry_multimodality_vs_softmax", &small_entry_modulation_multimodality},
      {"two_sided_sparser_than_softmax", &two_sided_modulation_sparser},
      {"two_sided_multimodality_vs_small_entry", &two_sided_modulation_multimodality},
  };
  return suites;
}

}  // namespace props

/// Runs the named suites (all when `only` is empty) with `trials` draws each.
inline PropReport verify_properties(std::size_t trials, std::uint64_t seed,
                                    const std::vector<std::string>& only = {}) {
  if (trials == 0) throw InvalidInput("trials must be >= 1");
  for (const auto& name : only) {
    const auto& suites = props::all_suites();
    if (std::none_of(suites.begin(), suites.end(), [&](const props::Suite& s) { return name == s.name; })) {
      throw InvalidInput("unknown property check '" + name + "'");
    }
  }
  PropReport report{seed, trials, {}};
  for (const auto& suite : props::all_suites()) {
    if (!only.empty() && std::find(only.begin(), only.end(), suite.name) == only.end()) continue;
    report.checks.push_back(suite.run(trials, seed));
  }
  return report;
}

}  // namespace multimax
