// Acceptance checks 1-12. Prints one PASS/FAIL line per criterion; with
// --criterion N only that one runs. Exit status is nonzero if any ran check
// fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "grad_cases.hpp"
#include "multimax/multimax.hpp"
#include "oracles.hpp"

using namespace multimax;

namespace {

// Pinned tolerances and budgets.
constexpr double kReductionTol = 1e-12;
constexpr double kReductionBudgetSeconds = 5.0;
constexpr double kVjpTol = 1e-6;
constexpr double kFdStep = 1e-5;
constexpr double kToyGradTol = 1e-5;
constexpr double kSparsemaxTol = 1e-8;
constexpr double kEntmaxTol = 1e-10;
constexpr std::size_t kPropTrials = 10000;
constexpr double kProp1BudgetSeconds = 60.0;
constexpr double kAccuracyMargin = 0.01;
constexpr double kTrainBudgetSeconds = 600.0;

// Toy-training setup shared by criterion 11.
constexpr std::size_t kSeqLen = 32, kRelevant = 3, kVocab = 64, kClasses = 4, kSamples = 4096;
constexpr std::size_t kTrainSteps = 2000;
constexpr double kLearningRate = 0.1;
constexpr std::uint64_t kSeed = 0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome reduction_identity() {
  const auto t0 = Clock::now();
  std::mt19937_64 g(101);
  std::uniform_int_distribution<std::size_t> k(2, 64);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Scores x(oracle::normal(g, k(g), 3.0));
    worst = std::max(worst, oracle::max_abs_diff(multimax::multimax(x, ModulatorParams::identity()).vector(),
                                                 softmax(x, Temperature(1.0)).vector()));
  }
  const double dt = seconds_since(t0);
  return {worst < kReductionTol && dt < kReductionBudgetSeconds,
          "max |diff| " + fmt("%.3g", worst) + ", " + fmt("%.3f s", dt)};
}

Outcome relu_reduction() {
  std::mt19937_64 g(102);
  const ModulatorParams relu{{ModulatorOrder{0.0, 1.0, 0.0, 0.0}}};
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto x = oracle::normal(g, 2 + trial % 31, 5.0);
    const auto y = modulate(Scores(x), relu);
    for (std::size_t i = 0; i < x.size(); ++i) mismatches += y[i] != std::max(x[i], 0.0);
  }
  return {mismatches == 0, std::to_string(mismatches) + " inexact entries"};
}

Outcome gradient_suite() {
  std::mt19937_64 g(103);
  const std::vector<ReweightSpec> families{spec::SoftMax{}, spec::MultiMax{}, spec::SparseMax{}, spec::EntMax15{},
                                           spec::EvSoftMax{}};
  double worst = 0.0;
  for (const auto& f : families) {
    for (int trial = 0; trial < 200; ++trial) {
      const auto c = gradcase::draw(g, f);
      worst = std::max(worst, oracle::relative_error(vjp(c.family, Scores(c.x), c.v).grad_x,
                                                     gradcase::fd_reference(c, kFdStep), gradcase::kScaleFloor));
    }
  }
  nano::ToyModelConfig cfg;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.model_dim = 8;
  cfg.ffn_dim = 12;
  cfg.seq_len = 8;
  cfg.vocab = 16;
  cfg.reweight = spec::MultiMax{ModulatorParams::identity()};
  cfg.seed = 5;
  nano::ToyModel model(cfg);
  for (auto& m : model.params().modulators) m = gradcase::random_params(g);
  const auto task = nano::make_needle_task(6, 8, 3, 16, 4, 3);
  const auto report = nano::grad_check(model, task.samples, kFdStep, kToyGradTol);
  return {worst < kVjpTol && report.passed(),
          "vjp max rel err " + fmt("%.3g", worst) + ", toy grad_check worst " + fmt("%.3g", report.worst())};
}

Outcome sparsemax_oracle() {
  std::mt19937_64 g(104);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto x = oracle::normal(g, 2 + trial % 5, 1.5);
    worst = std::max(worst, oracle::max_abs_diff(sparsemax(Scores(x)).vector(), oracle::sparsemax_bruteforce(x)));
  }
  return {worst < kSparsemaxTol, "max deviation " + fmt("%.3g", worst)};
}

Outcome entmax_kkt() {
  std::mt19937_64 g(105);
  double worst_kkt = 0.0, worst_sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto x = oracle::normal(g, 2 + trial % 31, 2.0);
    const auto p = entmax15(Scores(x));
    const double tau = entmax15_threshold(x);
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = std::max(x[i] / 2.0 - tau, 0.0);
      worst_kkt = std::max(worst_kkt, std::abs(p[i] - r * r));
      sum += p[i];
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  }
  return {worst_kkt < kEntmaxTol && worst_sum < kEntmaxTol,
          "KKT residual " + fmt("%.3g", worst_kkt) + ", sum error " + fmt("%.3g", worst_sum)};
}

std::string describe(const PropReport& r) {
  std::string s;
  for (const auto& c : r.checks) {
    if (!s.empty()) s += "; ";
    s += c.name + " " + std::to_string(c.violations) + "/" + std::to_string(c.trials);
  }
  return s;
}

Outcome softmax_monotonicity() {
  const auto t0 = Clock::now();
  const auto r = verify_properties(kPropTrials, 2024,
                                   {"softmax_multimodality_monotone", "softmax_sparsity_monotone"});
  const double dt = seconds_since(t0);
  return {r.passed() && dt < kProp1BudgetSeconds, describe(r) + ", " + fmt("%.2f s", dt)};
}

Outcome modulation_inequalities() {
  const auto r = verify_properties(kPropTrials, 2024,
                                   {"affine_ordering", "power_sum_bound",
                                    "small_entry_sparser_than_softmax",
                                    "small_entry_multimodality_vs_softmax",
                                    "two_sided_sparser_than_softmax",
                                    "two_sided_multimodality_vs_small_entry"});
  return {r.passed(), describe(r)};
}

Outcome flop_accounting() {
  const auto per_order = count_order_term_ops(2);
  const auto full = count_modulator_ops(2);
  // Convention: 7 charged ops per order (squarings excluded) plus the
  // residual add.
  const std::size_t charged_per_order = per_order.total() - per_order.squarings;
  const std::size_t counted = 2 * charged_per_order + 1;
  const bool ok = flop_count(2) == 15 && counted == 15 && charged_per_order == 7;
  return {ok, "flop_count(2)=" + std::to_string(flop_count(2)) + ", traced " + std::to_string(counted) +
                  " (full trace " + std::to_string(full.total()) + " incl. " + std::to_string(full.squarings) +
                  " squarings and the cross-order add)"};
}

Outcome modulator_shape() {
  const auto layers = deit_small_bundle().layers;
  double min_margin = INFINITY;
  bool ok = true;
  for (std::size_t l = 3; l <= 12; ++l) {
    const auto s = modulator_derivative({-4.0, 4.0}, layers[l - 1]);
    ok = ok && s[0] > 1.0 && s[1] < 1.0;
    min_margin = std::min({min_margin, s[0] - 1.0, 1.0 - s[1]});
  }
  return {ok, "smallest margin " + fmt("%.4f", min_margin)};
}

Outcome pareto_dominance() {
  const Scores x{3.0, 2.8, -1.0, -1.5};
  const MetricConfig cfg{0.0, default_reference(x)};
  const auto mm = multimax::multimax(x, deit_small_bundle().layers.at(11));
  const auto sm = softmax(x, Temperature(1.0));
  const double m_mm = multimodality(x, mm, cfg).value, m_sm = multimodality(x, sm, cfg).value;
  const double s_mm = sparsity(x, mm, cfg).value, s_sm = sparsity(x, sm, cfg).value;
  std::ostringstream d;
  d.precision(4);
  d << "M " << m_mm << " vs " << m_sm << ", S " << s_mm << " vs " << s_sm;
  return {m_mm > m_sm && s_mm > s_sm, d.str()};
}

Outcome toy_training() {
  const auto t0 = Clock::now();
  const auto task = nano::make_needle_task(kSeed, kSeqLen, kRelevant, kVocab, kClasses, kSamples);
  nano::ToyModelConfig cfg;
  cfg.seq_len = kSeqLen;
  cfg.vocab = kVocab;
  cfg.classes = kClasses;
  cfg.seed = kSeed;
  cfg.reweight = spec::SoftMax{};
  const auto sm = nano::train(cfg, task, kTrainSteps, kLearningRate);
  cfg.reweight = spec::MultiMax{ModulatorParams::identity()};
  const auto mm = nano::train(cfg, task, kTrainSteps, kLearningRate);
  const double dt = seconds_since(t0);
  const double s_sm = sm.attention.back().sparsity, s_mm = mm.attention.back().sparsity;
  std::ostringstream d;
  d.precision(4);
  d << "accuracy " << mm.held_out_accuracy << " vs " << sm.held_out_accuracy << ", final-layer S " << s_mm
    << " vs " << s_sm << ", " << dt << " s";
  return {mm.held_out_accuracy >= sm.held_out_accuracy - kAccuracyMargin && s_mm > s_sm && dt < kTrainBudgetSeconds,
          d.str()};
}

Outcome determinism() {
  const std::string ck_a = "acceptance_ck_a.json", ck_b = "acceptance_ck_b.json";
  const auto p1 = cli::run("verify-props --trials 2000 --seed 42");
  const auto p2 = cli::run("verify-props --trials 2000 --seed 42");
  const std::string train = "train-toy --fn multimax --steps 200 --seed 0 --checkpoint ";
  const auto t1 = cli::run(train + ck_a);
  const auto t2 = cli::run(train + ck_b);
  const bool props_same = !p1.out.empty() && p1.out == p2.out && p1.status == p2.status;
  const bool train_same = t1.status == 0 && t2.status == 0 && t1.out == t2.out &&
                          cli::slurp(ck_a) == cli::slurp(ck_b) && !cli::slurp(ck_a).empty();
  std::remove(ck_a.c_str());
  std::remove(ck_b.c_str());
  return {props_same && train_same, std::string("verify-props ") + (props_same ? "identical" : "DIFFERS") +
                                        ", train-toy log+checkpoint " + (train_same ? "identical" : "DIFFERS")};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

const std::vector<Criterion> kCriteria{
    {1, "multimax::multimax(identity) equals softmax", reduction_identity},
    {2, "modulate reduces to ReLU exactly", relu_reduction},
    {3, "vjp and toy gradients match finite differences", gradient_suite},
    {4, "sparsemax matches support enumeration", sparsemax_oracle},
    {5, "entmax15 KKT and simplex sum", entmax_kkt},
    {6, "softmax M/S monotone in temperature", softmax_monotonicity},
    {7, "MultiMax-l / MultiMax inequalities and lemmas", modulation_inequalities},
    {8, "flop_count(2) = 15 by traced op count", flop_accounting},
    {9, "deit_small slopes at -4 / +4 for layers 3-12", modulator_shape},
    {10, "MultiMax dominates softmax on M and S", pareto_dominance},
    {11, "toy training: accuracy kept, sparser final layer", toy_training},
    {12, "verify-props and train-toy are deterministic", determinism},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
      return 2;
    }
  }
  if (only < 0 || only > static_cast<int>(kCriteria.size())) {
    std::fprintf(stderr, "criterion must be 1..%zu\n", kCriteria.size());
    return 2;
  }
  int failures = 0;
  for (const auto& c : kCriteria) {
    if (only && c.id != only) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2d: %s | %s | %s\n", c.id, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
