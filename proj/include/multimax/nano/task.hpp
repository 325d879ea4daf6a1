// Synthetic retrieval task whose label is fixed by a set of m tokens
// scattered through a sequence of distractors.
//
// Class sets are distinct m-subsets of a small token pool {0, ..., P-1}, with
// P the smallest pool that has at least C such subsets. When C equals the
// number of subsets (e.g. m = 3, C = 4, P = 4) every pool token appears in
// several classes, so the label is only determined by looking at all m of
// them together. Distractors are drawn uniformly from {P, ..., V-1}.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "multimax/error.hpp"

namespace multimax::nano {

struct NeedleSample {
  std::vector<int> tokens;
  int label = 0;

  friend bool operator==(const NeedleSample&, const NeedleSample&) = default;
};

struct NeedleTask {
  std::size_t seq_len = 0;
  std::size_t relevant_count = 0;
  std::size_t vocab = 0;
  std::size_t classes = 0;
  std::size_t pool_size = 0;
  std::vector<std::vector<int>> class_sets;
  std::vector<NeedleSample> samples;

  friend bool operator==(const NeedleTask&, const NeedleTask&) = default;
};

namespace detail {

inline std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// First `count` m-subsets of {0..pool-1} in lexicographic order.
inline std::vector<std::vector<int>> lexicographic_subsets(std::size_t pool, std::size_t m,
                                                           std::size_t count) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(m);
  std::iota(cur.begin(), cur.end(), 0);
  while (out.size() < count) {
    out.push_back(cur);
    std::size_t i = m;
    while (i > 0 && cur[i - 1] == static_cast<int>(pool - m + i - 1)) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < m; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

}  // namespace detail

/// Deterministic given `seed`. Labels are balanced: class counts differ by at
/// most one.
inline NeedleTask make_needle_task(std::uint64_t seed, std::size_t seq_len, std::size_t m,
                                   std::size_t vocab, std::size_t classes, std::size_t n_samples) {
  if (m < 2) throw InvalidInput("needle task needs at least 2 relevant tokens");
  if (m >= seq_len) throw InvalidInput("relevant token count must be below the sequence length");
  if (classes < 2) throw InvalidInput("needle task needs at least 2 classes");
  if (vocab <= classes) throw InvalidInput("vocabulary must be larger than the class count");
  if (n_samples == 0) throw InvalidInput("needle task needs at least one sample");

  std::size_t pool = m;
  while (detail::binomial(pool, m) < classes) ++pool;
  if (vocab <= pool) {
    throw InvalidInput("vocabulary of " + std::to_string(vocab) + " leaves no distractor tokens after a pool of " +
                       std::to_string(pool));
  }

  NeedleTask task{seq_len, m, vocab, classes, pool, detail::lexicographic_subsets(pool, m, classes), {}};

  std::mt19937_64 rng(seed);
  std::vector<int> labels(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) labels[i] = static_cast<int>(i % classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::uniform_int_distribution<int> distractor(static_cast<int>(pool), static_cast<int>(vocab) - 1);
  std::vector<std::size_t> positions(seq_len);
  task.samples.reserve(n_samples);
  for (int label : labels) {
    NeedleSample s{std::vector<int>(seq_len), label};
    for (auto& t : s.tokens) t = distractor(rng);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    std::shuffle(positions.begin(), positions.end(), rng);
    const auto& set = task.class_sets[static_cast<std::size_t>(label)];
    for (std::size_t j = 0; j < m; ++j) s.tokens[positions[j]] = set[j];
    task.samples.push_back(std::move(s));
  }
  return task;
}

}  // namespace multimax::nano
