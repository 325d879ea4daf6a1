// Reweighting functions mapping a score vector onto the probability simplex:
// temperature SoftMax, MultiMax, SparseMax, EntMax-1.5 and Ev-SoftMax, each
// with its vector-Jacobian product.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "multimax/error.hpp"
#include "multimax/modulator.hpp"
#include "multimax/types.hpp"

namespace multimax {

namespace detail {

inline double max_of(std::span<const double> x) { return *std::max_element(x.begin(), x.end()); }

// Max-shifted exp(x_i * inv_tau), normalized.
inline std::vector<double> normalized_exp(std::span<const double> x, double inv_tau) {
  const double top = max_of(x);
  std::vector<double> out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp((x[i] - top) * inv_tau);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

inline void renormalize(std::vector<double>& p) {
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(sum > 0.0) || !std::isfinite(sum)) throw NumericalFailure("cannot normalize output");
  for (auto& v : p) v /= sum;
}

// Softmax Jacobian-transpose product at probabilities p, unscaled.
inline std::vector<double> softmax_vjp_at(std::span<const double> p, std::span<const double> v) {
  double dot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * v[i];
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = p[i] * (v[i] - dot);
  return g;
}

}  // namespace detail

/// exp(x_i / tau) / sum_k exp(x_k / tau).
inline Simplex softmax(const Scores& x, Temperature tau = Temperature{1.0}) {
  return Simplex(detail::normalized_exp(x.values(), tau.inverse()));
}

/// SoftMax of the modulated scores. The max-shift is applied after
/// modulation because sigma is not shift-equivariant.
inline Simplex multimax(const Scores& x, const ModulatorParams& p) {
  return Simplex(detail::normalized_exp(modulate(x, p).values(), 1.0));
}

/// Threshold tau such that sum max(x_i - tau, 0) = 1 (Euclidean projection
/// onto the simplex by sorted thresholding).
inline double sparsemax_threshold(std::span<const double> x) {
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumsum = 0.0;
  double threshold_sum = sorted[0];
  std::size_t support = 1;
  for (std::size_t k = 1; k <= sorted.size(); ++k) {
    cumsum += sorted[k - 1];
    if (1.0 + static_cast<double>(k) * sorted[k - 1] > cumsum) {
      support = k;
      threshold_sum = cumsum;
    }
  }
  return (threshold_sum - 1.0) / static_cast<double>(support);
}

inline Simplex sparsemax(const Scores& x) {
  const double tau = sparsemax_threshold(x.values());
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = std::max(x[i] - tau, 0.0);
  detail::renormalize(p);
  return Simplex(std::move(p));
}

struct EntmaxOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-12;
};

/// Threshold tau* with sum max(x_i / 2 - tau*, 0)^2 = 1.
///
/// Bisection over a bracket that always contains the root, followed by an
/// exact solve of the quadratic on the identified support. Throws
/// NumericalFailure if the bracket has not shrunk to `tolerance` (relative to
/// max(1, |tau|)) within `max_iterations` halvings.
inline double entmax15_threshold(std::span<const double> x, EntmaxOptions opts = {}) {
  const std::size_t k = x.size();
  const double top = detail::max_of(x) / 2.0;
  const double bottom = *std::min_element(x.begin(), x.end()) / 2.0;
  auto mass = [&](double tau) {
    double s = 0.0;
    for (double xi : x) {
      const double r = std::max(xi / 2.0 - tau, 0.0);
      s += r * r;
    }
    return s;
  };
  // mass(lo) >= 1 >= mass(hi); the largest entry alone gives mass 1 at top - 1.
  double lo = std::max(bottom - 1.0 / std::sqrt(static_cast<double>(k)), top - 1.0);
  double hi = top;
  bool converged = false;
  for (std::size_t it = 0; it <= opts.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= opts.tolerance * std::max(1.0, std::abs(lo)) || mid <= lo || mid >= hi) {
      converged = true;
      break;
    }
    if (it == opts.max_iterations) break;
    if (mass(mid) >= 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  if (!converged || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw NumericalFailure("entmax15 threshold bisection did not converge");
  }
  const double approx = 0.5 * (lo + hi);

  // Exact solve of  m tau^2 - 2 tau S1 + S2 - 1 = 0  on the support, shifted
  // by the top entry for conditioning.
  double s1 = 0.0, s2 = 0.0;
  std::size_t m = 0;
  for (double xi : x) {
    const double z = xi / 2.0 - top;
    if (z > approx - top) {
      s1 += z;
      s2 += z * z;
      ++m;
    }
  }
  const double md = static_cast<double>(m);
  const double disc = s1 * s1 - md * (s2 - 1.0);
  if (m == 0 || disc < 0.0) return approx;
  const double exact = (s1 - std::sqrt(disc)) / md + top;
  // Accept the closed form only if it reproduces the same support.
  for (double xi : x) {
    const bool in_support = xi / 2.0 > approx;
    if (in_support != (xi / 2.0 > exact)) return approx;
  }
  return exact;
}

/// EntMax with alpha = 1.5: p_i = max(x_i / 2 - tau*, 0)^2.
inline Simplex entmax15(const Scores& x, EntmaxOptions opts = {}) {
  const double tau = entmax15_threshold(x.values(), opts);
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = std::max(x[i] / 2.0 - tau, 0.0);
    p[i] = r * r;
  }
  detail::renormalize(p);
  return Simplex(std::move(p));
}

/// Entries strictly below the arithmetic mean of x are dropped; SoftMax
/// (tau = 1) over the rest. Ties with the mean survive.
inline std::vector<bool> ev_softmax_support(std::span<const double> x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<bool> keep(x.size());
  bool any = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    keep[i] = !(x[i] < mean);
    any = any || keep[i];
  }
  // Rounding in the mean can exclude every entry of a near-constant vector.
  if (!any) keep[std::max_element(x.begin(), x.end()) - x.begin()] = true;
  return keep;
}

inline Simplex ev_softmax(const Scores& x) {
  const auto keep = ev_softmax_support(x.values());
  double top = -INFINITY;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (keep[i]) top = std::max(top, x[i]);
  }
  std::vector<double> p(x.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (keep[i]) {
      p[i] = std::exp(x[i] - top);
      sum += p[i];
    }
  }
  for (auto& v : p) v /= sum;
  return Simplex(std::move(p));
}

/// Dispatches to the function named by `spec`.
inline Simplex reweight(const ReweightSpec& s, const Scores& x) {
  struct {
    const Scores& x;
    Simplex operator()(const spec::SoftMax& f) const { return softmax(x, f.temperature); }
    Simplex operator()(const spec::MultiMax& f) const { return multimax(x, f.params); }
    Simplex operator()(const spec::SparseMax&) const { return sparsemax(x); }
    Simplex operator()(const spec::EntMax15&) const { return entmax15(x); }
    Simplex operator()(const spec::EvSoftMax&) const { return ev_softmax(x); }
  } visitor{x};
  return std::visit(visitor, s);
}

struct VjpResult {
  std::vector<double> grad_x;
  /// Present only for MultiMax; shaped like its ModulatorParams.
  std::optional<ModulatorParams> grad_params;
};

/// Gradient of <cotangent, reweight(spec, x)> with respect to x and, for
/// MultiMax, the modulator parameters. Sparse functions pass gradient only
/// through entries with nonzero output.
inline VjpResult vjp(const ReweightSpec& s, const Scores& x, std::span<const double> cotangent) {
  if (cotangent.size() != x.size()) {
    throw InvalidInput("cotangent has length " + std::to_string(cotangent.size()) +
                       ", expected " + std::to_string(x.size()));
  }
  for (double v : cotangent) {
    if (!std::isfinite(v)) throw InvalidInput("cotangent entry is not finite");
  }

  struct {
    const Scores& x;
    std::span<const double> v;

    VjpResult operator()(const spec::SoftMax& f) const {
      const auto p = softmax(x, f.temperature);
      auto g = detail::softmax_vjp_at(p.values(), v);
      for (auto& gi : g) gi *= f.temperature.inverse();
      return {std::move(g), std::nullopt};
    }

    VjpResult operator()(const spec::MultiMax& f) const {
      const auto p = multimax(x, f.params);
      auto g_sigma = detail::softmax_vjp_at(p.values(), v);
      auto grad = zero_like(f.params);
      std::vector<double> g(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        g[i] = g_sigma[i] * modulator_slope(x[i], f.params);
        accumulate_modulator_param_grad(x[i], g_sigma[i], f.params, grad);
      }
      return {std::move(g), std::move(grad)};
    }

    VjpResult operator()(const spec::SparseMax&) const {
      const auto p = sparsemax(x);
      double sum = 0.0;
      std::size_t support = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (p[i] > 0.0) {
          sum += v[i];
          ++support;
        }
      }
      const double mean = sum / static_cast<double>(support);
      std::vector<double> g(x.size(), 0.0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (p[i] > 0.0) g[i] = v[i] - mean;
      }
      return {std::move(g), std::nullopt};
    }

    VjpResult operator()(const spec::EntMax15&) const {
      const auto p = entmax15(x);
      std::vector<double> root(x.size());
      double root_sum = 0.0, weighted = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        root[i] = std::sqrt(p[i]);
        root_sum += root[i];
        weighted += root[i] * v[i];
      }
      const double q = weighted / root_sum;
      std::vector<double> g(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) g[i] = root[i] * (v[i] - q);
      return {std::move(g), std::nullopt};
    }

    VjpResult operator()(const spec::EvSoftMax&) const {
      const auto p = ev_softmax(x);
      return {detail::softmax_vjp_at(p.values(), v), std::nullopt};
    }
  } visitor{x, cotangent};
  return std::visit(visitor, s);
}

}  // namespace multimax
