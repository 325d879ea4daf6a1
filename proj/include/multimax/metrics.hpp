// Multi-modality and sparsity scores of a reweighting output, and sweeps of
// both over a temperature-like knob.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "multimax/error.hpp"
#include "multimax/reweight.hpp"
#include "multimax/types.hpp"

namespace multimax {

/// Relevance threshold `epsilon` and sparsity reference `s`.
struct MetricConfig {
  double epsilon = 0.0;
  double s = 1.0;

  void validate() const {
    if (!std::isfinite(epsilon)) throw InvalidInput("epsilon must be finite");
    if (!(s > 0.0 && s <= 1.0)) throw InvalidInput("sparsity reference must lie in (0, 1]");
  }
};

/// A metric value together with the number of entries it averaged over.
/// `vacuous` is set when no entry qualified.
struct MetricValue {
  double value = 0.0;
  std::size_t count = 0;
  bool vacuous = true;
};

namespace detail {
inline void check_lengths(const Scores& x, const Simplex& phi) {
  if (x.size() != phi.size()) {
    throw InvalidInput("scores and outputs differ in length: " + std::to_string(x.size()) +
                       " vs " + std::to_string(phi.size()));
  }
}
}  // namespace detail

/// 1 - mean over entries with epsilon < x_n < x_max of (phi_max - phi_n).
/// Entries tied with x_max are skipped. Returns 1, flagged vacuous, when no
/// entry qualifies.
inline MetricValue multimodality(const Scores& x, const Simplex& phi, const MetricConfig& cfg) {
  detail::check_lengths(x, phi);
  cfg.validate();
  std::size_t top = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[top]) top = i;
  }
  double gap_sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (cfg.epsilon < x[i] && x[i] < x[top]) {
      gap_sum += phi[top] - phi[i];
      ++n;
    }
  }
  if (n == 0) return {1.0, 0, true};
  return {1.0 - gap_sum / static_cast<double>(n), n, false};
}

/// Mean over entries with x_l < epsilon of exp((s - phi_l) / s - 1).
/// Returns 0, flagged vacuous, when no entry qualifies.
inline MetricValue sparsity(const Scores& x, const Simplex& phi, const MetricConfig& cfg) {
  detail::check_lengths(x, phi);
  cfg.validate();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < cfg.epsilon) {
      sum += std::exp((cfg.s - phi[i]) / cfg.s - 1.0);
      ++n;
    }
  }
  if (n == 0) return {0.0, 0, true};
  return {sum / static_cast<double>(n), n, false};
}

/// Smallest SoftMax probability at tau = 1; the usual sparsity reference.
inline double default_reference(const Scores& x) {
  const auto p = softmax(x);
  return *std::min_element(p.begin(), p.end());
}

/// ||x||_1 / K, the relevance threshold under which SoftMax sparsity is
/// monotone in temperature.
inline double mean_abs(const Scores& x) {
  double s = 0.0;
  for (double v : x) s += std::abs(v);
  return s / static_cast<double>(x.size());
}

/// Evaluates `family` at temperature-like knob `tau`: SoftMax uses it as its
/// temperature; every other function is applied to x / tau.
inline Simplex reweight_at(const ReweightSpec& family, const Scores& x, double tau) {
  const Temperature t(tau);
  if (std::holds_alternative<spec::SoftMax>(family)) return softmax(x, t);
  std::vector<double> scaled(x.begin(), x.end());
  for (auto& v : scaled) v *= t.inverse();
  return reweight(family, Scores(std::move(scaled)));
}

struct ParetoPoint {
  double knob = 0.0;
  MetricValue m;
  MetricValue s;
};

/// (knob, M, S) for every knob in `grid`, in grid order.
inline std::vector<ParetoPoint> pareto_sweep(const Scores& x, const ReweightSpec& family,
                                             const std::vector<double>& grid,
                                             const MetricConfig& cfg) {
  if (grid.empty()) throw InvalidInput("sweep grid is empty");
  cfg.validate();
  std::vector<ParetoPoint> out;
  out.reserve(grid.size());
  for (double knob : grid) {
    const auto phi = reweight_at(family, x, knob);
    out.push_back({knob, multimodality(x, phi, cfg), sparsity(x, phi, cfg)});
  }
  return out;
}

}  // namespace multimax
