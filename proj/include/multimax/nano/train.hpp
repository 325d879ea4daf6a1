// Plain gradient-descent training of the toy model on a needle task, plus
// held-out evaluation and an end-to-end finite-difference gradient check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "multimax/error.hpp"
#include "multimax/metrics.hpp"
#include "multimax/nano/model.hpp"
#include "multimax/nano/task.hpp"

namespace multimax::nano {

struct TrainOptions {
  std::size_t batch_size = 16;
  /// Trailing fraction of the task's samples held out from training.
  double holdout_fraction = 0.25;
};

struct StepLog {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean attention sparsity and multi-modality of one layer over every
/// (sample, head, query) row of an evaluation set.
struct LayerAttentionSummary {
  double sparsity = 0.0;
  double multimodality = 0.0;
  std::size_t sparsity_rows = 0;
  std::size_t multimodality_rows = 0;
};

struct TrainLog {
  std::vector<StepLog> steps;
  std::vector<ModulatorParams> modulators;
  std::vector<LayerAttentionSummary> attention;
  double held_out_accuracy = 0.0;
  std::size_t held_out_samples = 0;
};

/// [train_begin, train_end) and [train_end, size) of the task's samples.
struct TaskSplit {
  std::size_t train_end = 0;
  std::size_t size = 0;
};

inline TaskSplit split_task(const NeedleTask& task, double holdout_fraction) {
  const std::size_t n = task.samples.size();
  auto held = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(n)));
  if (n >= 2) held = std::clamp<std::size_t>(held, 1, n - 1);
  else held = 0;
  return {n - held, n};
}

/// Metric settings used for attention rows: relevance threshold at the row's
/// mean logit and the row's SoftMax minimum as sparsity reference.
inline MetricConfig attention_row_metric_config(const Scores& logits) {
  double mean = 0.0;
  for (double v : logits) mean += v;
  mean /= static_cast<double>(logits.size());
  return MetricConfig{mean, default_reference(logits)};
}

inline std::vector<LayerAttentionSummary> summarize_attention(const ToyModel& model,
                                                              std::span<const NeedleSample> samples) {
  std::vector<LayerAttentionSummary> out(model.config().depth);
  ForwardCache cache;
  for (const auto& s : samples) {
    model.forward(s.tokens, cache);
    for (std::size_t l = 0; l < cache.blocks.size(); ++l) {
      const auto& blk = cache.blocks[l];
      for (std::size_t hd = 0; hd < blk.probs.size(); ++hd) {
        if (blk.probs[hd].cols() < 2) continue;
        for (std::size_t r = 0; r < blk.probs[hd].rows(); ++r) {
          const auto lrow = blk.logits[hd].row(r);
          const auto prow = blk.probs[hd].row(r);
          const Scores x(std::vector<double>(lrow.begin(), lrow.end()));
          const Simplex phi(std::vector<double>(prow.begin(), prow.end()));
          const auto cfg = attention_row_metric_config(x);
          const auto sv = sparsity(x, phi, cfg);
          const auto mv = multimodality(x, phi, cfg);
          if (!sv.vacuous) {
            out[l].sparsity += sv.value;
            ++out[l].sparsity_rows;
          }
          if (!mv.vacuous) {
            out[l].multimodality += mv.value;
            ++out[l].multimodality_rows;
          }
        }
      }
    }
  }
  for (auto& s : out) {
    if (s.sparsity_rows) s.sparsity /= static_cast<double>(s.sparsity_rows);
    if (s.multimodality_rows) s.multimodality /= static_cast<double>(s.multimodality_rows);
  }
  return out;
}

inline int predict(const ToyModel& model, std::span<const int> tokens) {
  const auto logits = model.forward(tokens);
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

inline double accuracy(const ToyModel& model, std::span<const NeedleSample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) correct += predict(model, s.tokens) == s.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

/// Mean cross-entropy over `batch` and its gradient.
inline double batch_loss_and_grad(const ToyModel& model, std::span<const NeedleSample> batch, ModelParams& grads,
                                  double* batch_accuracy = nullptr) {
  double loss = 0.0;
  std::size_t correct = 0;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    loss += w * model.loss_and_backward(s.tokens, s.label, w, grads);
    if (batch_accuracy) correct += predict(model, s.tokens) == s.label ? 1 : 0;
  }
  if (batch_accuracy) *batch_accuracy = static_cast<double>(correct) / static_cast<double>(batch.size());
  return loss;
}

inline void apply_gradient_step(ModelParams& params, const ModelParams& grads, double lr) {
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& w = params.tensors[i].data();
    const auto& g = grads.tensors[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
  }
  for (std::size_t l = 0; l < params.modulators.size(); ++l) {
    for (std::size_t n = 0; n < params.modulators[l].orders.size(); ++n) {
      auto& o = params.modulators[l].orders[n];
      const auto& go = grads.modulators[l].orders[n];
      o.tb -= lr * go.tb;
      o.td -= lr * go.td;
      o.b -= lr * go.b;
      o.d -= lr * go.d;
    }
  }
}

/// Trains `model` in place for `steps` minibatch steps of plain gradient
/// descent. Minibatches are drawn with a generator seeded from the model
/// config, so identical inputs give identical logs.
inline TrainLog train(ToyModel& model, const NeedleTask& task, std::size_t steps, double lr,
                      const TrainOptions& opts = {}) {
  if (steps < 1) throw InvalidInput("steps must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidInput("learning rate must be > 0");
  if (opts.batch_size < 1) throw InvalidInput("batch size must be >= 1");
  if (task.seq_len != model.config().seq_len || task.vocab > model.config().vocab ||
      task.classes != model.config().classes) {
    throw InvalidInput("task dimensions do not match the model config");
  }
  const auto split = split_task(task, opts.holdout_fraction);
  if (split.train_end == 0) throw InvalidInput("task has no training samples");
  const std::span<const NeedleSample> train_set(task.samples.data(), split.train_end);
  const std::span<const NeedleSample> held_out(task.samples.data() + split.train_end, split.size - split.train_end);

  std::mt19937_64 rng(model.config().seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, train_set.size() - 1);
  std::vector<NeedleSample> batch(opts.batch_size);

  TrainLog log;
  log.steps.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    for (auto& b : batch) b = train_set[pick(rng)];
    ModelParams grads = model.params().zeros_like();
    StepLog entry;
    try {
      entry.loss = batch_loss_and_grad(model, batch, grads, &entry.accuracy);
    } catch (const Error& e) {
      throw TrainingDiverged(step, e.what());
    }
    if (!std::isfinite(entry.loss)) throw TrainingDiverged(step, "loss is not finite");
    apply_gradient_step(model.params(), grads, lr);
    log.steps.push_back(entry);
  }
  log.modulators = model.params().modulators;
  const auto eval_set = held_out.empty() ? train_set : held_out;
  log.held_out_accuracy = accuracy(model, eval_set);
  log.held_out_samples = eval_set.size();
  log.attention = summarize_attention(model, eval_set);
  return log;
}

inline TrainLog train(const ToyModelConfig& cfg, const NeedleTask& task, std::size_t steps, double lr,
                      const TrainOptions& opts = {}) {
  ToyModel model(cfg);
  return train(model, task, steps, lr, opts);
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradGroupReport {
  std::string name;
  std::size_t entries = 0;
  /// max_i |analytic_i - numeric_i| / max(max|analytic|, max|numeric|, floor)
  double max_relative_error = 0.0;
  bool flagged = false;
};

struct GradCheckReport {
  double step = 0.0;
  double tolerance = 0.0;
  std::vector<GradGroupReport> groups;

  bool passed() const {
    return std::none_of(groups.begin(), groups.end(), [](const GradGroupReport& g) { return g.flagged; });
  }
  double worst() const {
    double w = 0.0;
    for (const auto& g : groups) w = std::max(w, g.max_relative_error);
    return w;
  }
};

inline constexpr double kGradCheckFloor = 1e-8;

namespace detail {

inline double batch_loss(const ToyModel& model, std::span<const NeedleSample> batch) {
  double loss = 0.0;
  for (const auto& s : batch) {
    const auto p = softmax(Scores(model.forward(s.tokens)));
    loss -= std::log(p[static_cast<std::size_t>(s.label)]);
  }
  return loss / static_cast<double>(batch.size());
}

inline GradGroupReport compare_group(std::string name, const std::vector<double>& analytic,
                                     const std::vector<double>& numeric, double tol) {
  double diff = 0.0, scale = kGradCheckFloor;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  GradGroupReport r{std::move(name), analytic.size(), diff / scale, false};
  r.flagged = !(r.max_relative_error < tol);
  return r;
}

}  // namespace detail

/// Compares analytic gradients of the mean batch loss against central
/// differences with step `h`, for every weight tensor and every modulator
/// field. A group is flagged unless its error is strictly below `tol`.
inline GradCheckReport grad_check(const ToyModel& model, std::span<const NeedleSample> batch, double h, double tol) {
  if (!(h > 0.0)) throw InvalidInput("finite-difference step must be > 0");
  if (batch.empty()) throw InvalidInput("gradient check needs a non-empty batch");
  ModelParams grads = model.params().zeros_like();
  batch_loss_and_grad(model, batch, grads);

  GradCheckReport report{h, tol, {}};
  ToyModel probe = model;
  for (std::size_t ti = 0; ti < probe.params().tensors.size(); ++ti) {
    auto& w = probe.params().tensors[ti].data();
    std::vector<double> numeric(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double orig = w[j];
      w[j] = orig + h;
      const double up = detail::batch_loss(probe, batch);
      w[j] = orig - h;
      const double down = detail::batch_loss(probe, batch);
      w[j] = orig;
      numeric[j] = (up - down) / (2.0 * h);
    }
    report.groups.push_back(
        detail::compare_group(probe.params().names[ti], grads.tensors[ti].data(), numeric, tol));
  }

  for (std::size_t l = 0; l < probe.params().modulators.size(); ++l) {
    auto& orders = probe.params().modulators[l].orders;
    const auto& gorders = grads.modulators[l].orders;
    const char* fields[] = {"tb", "td", "b", "d"};
    for (std::size_t f = 0; f < 4; ++f) {
      auto member = [f](ModulatorOrder& o) -> double& {
        return f == 0 ? o.tb : f == 1 ? o.td : f == 2 ? o.b : o.d;
      };
      std::vector<double> analytic, numeric;
      for (std::size_t n = 0; n < orders.size(); ++n) {
        ModulatorOrder go = gorders[n];
        analytic.push_back(member(go));
        double& slot = member(orders[n]);
        const double orig = slot;
        slot = orig + h;
        const double up = detail::batch_loss(probe, batch);
        slot = orig - h;
        const double down = detail::batch_loss(probe, batch);
        slot = orig;
        numeric.push_back((up - down) / (2.0 * h));
      }
      report.groups.push_back(detail::compare_group(
          "layer" + std::to_string(l + 1) + ".modulator." + fields[f], analytic, numeric, tol));
    }
  }
  return report;
}

}  // namespace multimax::nano
