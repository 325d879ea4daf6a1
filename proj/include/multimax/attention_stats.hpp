// Attention diagnostics: token similarity, attention rollout across layers,
// and histograms of attention probabilities.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "multimax/error.hpp"
#include "multimax/matrix.hpp"

namespace multimax {

/// Attention probabilities of one layer, one T x T row-stochastic matrix per
/// head.
struct AttentionLayer {
  std::vector<Matrix> heads;
};

struct AttentionStack {
  std::vector<AttentionLayer> layers;

  std::size_t tokens() const { return layers.at(0).heads.at(0).rows(); }

  /// Checks shapes and that every row lies on the simplex within `tol`.
  void validate(double tol = 1e-9) const {
    if (layers.empty()) throw InvalidInput("attention stack is empty");
    const std::size_t t = layers[0].heads.empty() ? 0 : layers[0].heads[0].rows();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].heads.empty()) throw InvalidInput("layer " + std::to_string(l) + " has no heads");
      for (const auto& h : layers[l].heads) {
        if (h.rows() != t || h.cols() != t) {
          throw InvalidInput("attention matrices must all be " + std::to_string(t) + "x" +
                             std::to_string(t));
        }
        for (std::size_t r = 0; r < t; ++r) {
          double sum = 0.0;
          for (double v : h.row(r)) {
            if (!(v >= 0.0)) throw InvalidInput("attention entry is negative or NaN");
            sum += v;
          }
          if (std::abs(sum - 1.0) > tol) throw InvalidInput("attention row does not sum to 1");
        }
      }
    }
  }
};

/// Mean over all unordered row pairs of their cosine similarity.
inline double patch_similarity(const Matrix& tokens) {
  const std::size_t t = tokens.rows();
  if (t < 2) throw InvalidInput("patch similarity needs at least 2 tokens");
  std::vector<double> norms(t);
  for (std::size_t i = 0; i < t; ++i) {
    double s = 0.0;
    for (double v : tokens.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 0.0) || !std::isfinite(norms[i])) {
      throw InvalidInput("token " + std::to_string(i) + " has zero or non-finite norm");
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = i + 1; j < t; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < tokens.cols(); ++k) dot += tokens(i, k) * tokens(j, k);
      total += dot / (norms[i] * norms[j]);
    }
  }
  return total / (static_cast<double>(t * (t - 1)) / 2.0);
}

/// Average of a layer's heads.
inline Matrix head_average(const AttentionLayer& layer) {
  Matrix avg(layer.heads[0].rows(), layer.heads[0].cols());
  for (const auto& h : layer.heads) {
    for (std::size_t i = 0; i < avg.size(); ++i) avg.data()[i] += h.data()[i];
  }
  for (auto& v : avg.data()) v /= static_cast<double>(layer.heads.size());
  return avg;
}

struct RolloutOptions {
  /// Replace each head average A by 0.5 * (A + I) before multiplying.
  bool add_identity = false;
};

namespace detail {
inline Matrix rollout_factor(const AttentionLayer& layer, const RolloutOptions& opts) {
  Matrix a = head_average(layer);
  if (opts.add_identity) {
    for (auto& v : a.data()) v *= 0.5;
    for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += 0.5;
  }
  return a;
}
}  // namespace detail

/// Partial rollouts R_l = A_l * R_{l-1}, R_1 = A_1, for every depth l.
inline std::vector<Matrix> partial_rollouts(const AttentionStack& stack, RolloutOptions opts = {}) {
  stack.validate();
  std::vector<Matrix> out;
  out.reserve(stack.layers.size());
  for (const auto& layer : stack.layers) {
    Matrix a = detail::rollout_factor(layer, opts);
    out.push_back(out.empty() ? std::move(a) : matmul(a, out.back()));
  }
  return out;
}

/// A_L * ... * A_1 over head-averaged layers.
inline Matrix attention_rollout(const AttentionStack& stack, RolloutOptions opts = {}) {
  return partial_rollouts(stack, opts).back();
}

/// Per layer, mean absolute difference between the rollout up to that layer
/// and the layer's own head-averaged attention.
inline std::vector<double> rollout_discrepancy(const AttentionStack& stack,
                                               RolloutOptions opts = {}) {
  const auto rollouts = partial_rollouts(stack, opts);
  std::vector<double> out;
  out.reserve(rollouts.size());
  for (std::size_t l = 0; l < rollouts.size(); ++l) {
    const Matrix single = detail::rollout_factor(stack.layers[l], opts);
    double s = 0.0;
    for (std::size_t i = 0; i < single.size(); ++i) {
      s += std::abs(rollouts[l].data()[i] - single.data()[i]);
    }
    out.push_back(s / static_cast<double>(single.size()));
  }
  return out;
}

struct Histogram {
  std::vector<double> edges;       // size bins + 1
  std::vector<std::size_t> counts;  // size bins
  std::vector<double> cumulative;   // fraction of scores in bins [0, i]
  std::size_t total = 0;
};

/// Edges {0, 1e-8, ..., 1}: an underflow bin [0, 1e-8) followed by `bins`
/// log-spaced bins up to 1.
inline std::vector<double> default_histogram_edges(std::size_t bins = 50, double lowest = 1e-8) {
  std::vector<double> edges{0.0};
  const double lo = std::log10(lowest);
  for (std::size_t i = 0; i <= bins; ++i) {
    edges.push_back(std::pow(10.0, lo + (0.0 - lo) * static_cast<double>(i) / static_cast<double>(bins)));
  }
  edges.back() = 1.0;
  return edges;
}

/// Bins are [e_i, e_{i+1}) with the last one closed on the right.
inline Histogram score_histogram(const std::vector<double>& scores, const std::vector<double>& edges) {
  if (edges.size() < 2) throw InvalidInput("histogram needs at least one bin");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw InvalidInput("histogram edges must be strictly increasing");
  }
  Histogram h{edges, std::vector<std::size_t>(edges.size() - 1, 0),
              std::vector<double>(edges.size() - 1, 0.0), scores.size()};
  for (double v : scores) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("attention score outside [0, 1]");
    if (v < edges.front() || v > edges.back()) throw InvalidInput("score outside histogram range");
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    std::size_t bin = static_cast<std::size_t>(it - edges.begin()) - 1;
    if (bin >= h.counts.size()) bin = h.counts.size() - 1;
    ++h.counts[bin];
  }
  if (!scores.empty()) {
    std::size_t running = 0;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      running += h.counts[i];
      h.cumulative[i] = static_cast<double>(running) / static_cast<double>(scores.size());
    }
  }
  return h;
}

}  // namespace multimax
