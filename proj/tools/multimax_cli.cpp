// multimax: evaluation, sweeps, figure data, property checks, toy training and
// attention statistics from the command line.
//
// Exit codes: 0 ok, 1 property violation, 2 usage or input error,
// 3 numerical or training failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "multimax/multimax.hpp"

namespace mm = multimax;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::vector<double> parse_reals(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw mm::InvalidInput("cannot parse '" + item + "' as a number");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size()) throw mm::InvalidInput("cannot parse '" + item + "' as a number");
    out.push_back(v);
  }
  if (out.empty()) throw mm::InvalidInput("empty number list");
  return out;
}

// start:stop:step, optionally suffixed :log (then step is in decades), or a
// plain comma-separated list.
std::vector<double> parse_grid(const std::string& text) {
  if (text.find(':') == std::string::npos) return parse_reals(text);
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  bool log = false;
  if (parts.size() == 4 && parts[3] == "log") {
    log = true;
    parts.pop_back();
  }
  if (parts.size() != 3) throw mm::InvalidInput("range must be start:stop:step[:log], got '" + text + "'");
  double start = parse_reals(parts[0]).at(0), stop = parse_reals(parts[1]).at(0), step = parse_reals(parts[2]).at(0);
  if (!(step > 0.0) || !std::isfinite(step)) throw mm::InvalidInput("range step must be > 0");
  if (!(stop >= start)) throw mm::InvalidInput("range stop must be >= start");
  if (log) {
    if (!(start > 0.0)) throw mm::InvalidInput("log range needs positive bounds");
    start = std::log10(start);
    stop = std::log10(stop);
  }
  const double span = (stop - start) / step;
  if (span > 1e7) throw mm::InvalidInput("range has too many points");
  const auto n = static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = start + static_cast<double>(i) * step;
    grid[i] = log ? std::pow(10.0, v) : v;
  }
  return grid;
}

struct FnChoice {
  std::string fn = "softmax";
  std::string params;
  std::size_t layer = 1;
};

void add_fn_options(CLI::App* cmd, FnChoice& c) {
  cmd->add_option("--fn", c.fn, "softmax, multimax, sparsemax, entmax15 or ev_softmax")->capture_default_str();
  cmd->add_option("--params", c.params, "MultiMax parameters: bundle name (deit_small, lm6) or JSON file");
  cmd->add_option("--layer", c.layer, "1-based layer of the parameter file to use")->capture_default_str();
}

mm::ReweightSpec make_spec(const FnChoice& c) {
  if (c.fn == "softmax") return mm::spec::SoftMax{};
  if (c.fn == "sparsemax") return mm::spec::SparseMax{};
  if (c.fn == "entmax15") return mm::spec::EntMax15{};
  if (c.fn == "ev_softmax") return mm::spec::EvSoftMax{};
  if (c.fn == "multimax") {
    if (c.params.empty()) return mm::spec::MultiMax{mm::ModulatorParams::identity()};
    const auto layers = mm::resolve_modulator_layers(c.params);
    if (c.layer < 1 || c.layer > layers.size()) {
      throw mm::InvalidInput("layer " + std::to_string(c.layer) + " out of range 1.." + std::to_string(layers.size()));
    }
    return mm::spec::MultiMax{layers[c.layer - 1]};
  }
  throw mm::InvalidInput("unknown function '" + c.fn + "'");
}

std::ostream& csv(std::ostream& os) { return os << std::setprecision(9); }

// Writes to `path`, or stdout when it is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw mm::InvalidInput("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

// ---------------------------------------------------------------------------

struct EvalArgs {
  FnChoice fn;
  std::string input;
  std::optional<double> tau;
};

int run_eval(const EvalArgs& a) {
  const mm::Scores x(parse_reals(a.input));
  const auto spec = make_spec(a.fn);
  const auto out = a.tau ? mm::reweight_at(spec, x, *a.tau) : mm::reweight(spec, x);
  std::cout << json{{"output", out.vector()}}.dump() << '\n';
  return kExitOk;
}

struct CurveArgs {
  std::string params = "deit_small";
  std::string range = "-6:6:0.01";
  std::string out;
};

int run_modulator_curve(const CurveArgs& a) {
  std::vector<mm::ModulatorParams> layers;
  if (a.params == "identity") layers.push_back(mm::ModulatorParams::identity());
  else layers = mm::resolve_modulator_layers(a.params);
  const auto grid = parse_grid(a.range);
  Output o(a.out);
  auto& os = csv(o.stream());
  os << "x";
  for (std::size_t l = 0; l < layers.size(); ++l) os << ",sigma_layer_" << l + 1;
  os << '\n';
  for (double x : grid) {
    os << x;
    for (const auto& p : layers) os << ',' << mm::modulate_value(x, p);
    os << '\n';
  }
  return kExitOk;
}

struct SimplexArgs {
  FnChoice fn;
  std::string input;
  std::string grid = "0.01:100:0.1:log";
  std::string out;
};

int run_simplex_path(const SimplexArgs& a) {
  const auto values = parse_reals(a.input);
  if (values.size() != 3) throw mm::InvalidInput("simplex-path needs exactly 3 inputs");
  const mm::Scores x(values);
  const auto spec = make_spec(a.fn);
  const auto grid = parse_grid(a.grid);
  Output o(a.out);
  auto& os = csv(o.stream());
  os << "knob,p1,p2,p3,u,v\n";
  for (double knob : grid) {
    const auto p = mm::reweight_at(spec, x, knob);
    os << knob << ',' << p[0] << ',' << p[1] << ',' << p[2] << ',' << p[1] + p[2] / 2.0 << ','
       << std::sqrt(3.0) * p[2] / 2.0 << '\n';
  }
  return kExitOk;
}

struct SweepArgs {
  FnChoice fn;
  std::string input;
  std::string grid = "0.1:10:0.1";
  double epsilon = 0.0;
  std::optional<double> s;
  std::string out;
};

int run_sweep(const SweepArgs& a) {
  const mm::Scores x(parse_reals(a.input));
  const auto spec = make_spec(a.fn);
  const mm::MetricConfig cfg{a.epsilon, a.s.value_or(mm::default_reference(x))};
  const auto points = mm::pareto_sweep(x, spec, parse_grid(a.grid), cfg);
  Output o(a.out);
  auto& os = csv(o.stream());
  os << "knob,M,M_count,M_vacuous,S,S_count,S_vacuous\n";
  for (const auto& p : points) {
    os << p.knob << ',' << p.m.value << ',' << p.m.count << ',' << int(p.m.vacuous) << ',' << p.s.value << ','
       << p.s.count << ',' << int(p.s.vacuous) << '\n';
  }
  return kExitOk;
}

struct PropsArgs {
  std::size_t trials = 1000;
  std::uint64_t seed = 42;
  std::vector<std::string> only;
};

json draw_to_json(const mm::Draw& d) {
  json j = json::object();
  for (const auto& [name, v] : d.fields) j[name] = v.size() == 1 ? json(v[0]) : json(v);
  return j;
}

int run_verify_props(const PropsArgs& a) {
  const auto report = mm::verify_properties(a.trials, a.seed, a.only);
  json checks = json::array();
  for (const auto& c : report.checks) {
    json jc{{"name", c.name},
            {"trials", c.trials},
            {"comparisons", c.comparisons},
            {"violations", c.violations},
            {"worst_slack", std::isfinite(c.worst_slack) ? json(c.worst_slack) : json(nullptr)},
            {"passed", c.passed()}};
    if (c.first_violation) jc["first_violation"] = draw_to_json(*c.first_violation);
    checks.push_back(jc);
  }
  json j{{"seed", report.seed},
         {"trials", report.trials},
         {"slack", mm::kPropertySlack},
         {"passed", report.passed()},
         {"checks", checks}};
  std::cout << j.dump(2) << '\n';
  return report.passed() ? kExitOk : kExitViolation;
}

struct TrainArgs {
  FnChoice fn;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  double lr = 0.1;
  std::size_t depth = 2, heads = 2, model_dim = 16, ffn_dim = 32;
  std::size_t seq_len = 32, relevant = 3, vocab = 64, classes = 4, samples = 4096;
  std::size_t batch = 16;
  double holdout = 0.25;
  std::string checkpoint;
  bool full_log = false;
};

int run_train_toy(const TrainArgs& a) {
  mm::nano::ToyModelConfig cfg;
  cfg.depth = a.depth;
  cfg.heads = a.heads;
  cfg.model_dim = a.model_dim;
  cfg.ffn_dim = a.ffn_dim;
  cfg.seq_len = a.seq_len;
  cfg.vocab = a.vocab;
  cfg.classes = a.classes;
  cfg.seed = a.seed;
  cfg.reweight = make_spec(a.fn);
  cfg.validate();
  const auto task = mm::nano::make_needle_task(a.seed, a.seq_len, a.relevant, a.vocab, a.classes, a.samples);
  mm::nano::ToyModel model(cfg);
  mm::nano::TrainOptions opts;
  opts.batch_size = a.batch;
  opts.holdout_fraction = a.holdout;
  const auto log = mm::nano::train(model, task, a.steps, a.lr, opts);
  if (!a.checkpoint.empty()) mm::nano::save_checkpoint(model, a.checkpoint);

  json steps = json::array();
  for (const auto& s : log.steps) steps.push_back({{"loss", s.loss}, {"accuracy", s.accuracy}});
  json attention = json::array();
  for (const auto& s : log.attention) {
    attention.push_back({{"sparsity", s.sparsity},
                         {"multimodality", s.multimodality},
                         {"sparsity_rows", s.sparsity_rows},
                         {"multimodality_rows", s.multimodality_rows}});
  }
  json j{{"fn", a.fn.fn},
         {"seed", a.seed},
         {"steps_run", log.steps.size()},
         {"final_loss", log.steps.back().loss},
         {"held_out_accuracy", log.held_out_accuracy},
         {"held_out_samples", log.held_out_samples},
         {"modulators", mm::to_json(log.modulators)},
         {"attention", attention},
         {"steps", steps}};
  std::cout << j.dump() << '\n';
  return kExitOk;
}

struct AttnArgs {
  std::string checkpoint;
  std::string out_dir = ".";
  std::string prefix;
  std::uint64_t seed = 1;
  std::size_t samples = 64;
  std::size_t relevant = 3;
};

int run_attn_stats(const AttnArgs& a) {
  const auto model = mm::nano::load_checkpoint(a.checkpoint);
  const auto& cfg = model.config();
  const auto task = mm::nano::make_needle_task(a.seed, cfg.seq_len, a.relevant, cfg.vocab, cfg.classes, a.samples);
  const std::size_t depth = cfg.depth;
  std::vector<std::vector<double>> scores(depth);
  std::vector<double> similarity(depth, 0.0), discrepancy(depth, 0.0);
  mm::nano::ForwardCache cache;
  for (const auto& s : task.samples) {
    model.forward(s.tokens, cache);
    const auto stack = mm::nano::attention_stack(cache);
    const auto disc = mm::rollout_discrepancy(stack);
    for (std::size_t l = 0; l < depth; ++l) {
      for (const auto& h : stack.layers[l].heads) scores[l].insert(scores[l].end(), h.data().begin(), h.data().end());
      const auto& hidden = l + 1 < depth ? cache.blocks[l + 1].input : cache.final_hidden;
      similarity[l] += mm::patch_similarity(hidden);
      discrepancy[l] += disc[l];
    }
  }
  const double n = static_cast<double>(task.samples.size());
  const auto dir = std::filesystem::path(a.out_dir);
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(dir / (a.prefix + name));
    if (!f) throw mm::InvalidInput("cannot write into '" + a.out_dir + "'");
    csv(f);
    return f;
  };
  const auto edges = mm::default_histogram_edges();
  auto hist = open("histogram.csv");
  auto cdf = open("cumulative.csv");
  hist << "layer,bin_lo,bin_hi,count\n";
  cdf << "layer,bin_hi,cumulative\n";
  for (std::size_t l = 0; l < depth; ++l) {
    const auto h = mm::score_histogram(scores[l], edges);
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      hist << l + 1 << ',' << h.edges[b] << ',' << h.edges[b + 1] << ',' << h.counts[b] << '\n';
      cdf << l + 1 << ',' << h.edges[b + 1] << ',' << h.cumulative[b] << '\n';
    }
  }
  auto sim = open("patch_similarity.csv");
  auto roll = open("rollout_discrepancy.csv");
  sim << "layer,patch_similarity\n";
  roll << "layer,rollout_discrepancy\n";
  for (std::size_t l = 0; l < depth; ++l) {
    sim << l + 1 << ',' << similarity[l] / n << '\n';
    roll << l + 1 << ',' << discrepancy[l] / n << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MultiMax reweighting toolkit"};
  app.require_subcommand(1);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Apply a reweighting function to one score vector");
  add_fn_options(c_eval, eval.fn);
  c_eval->add_option("--input", eval.input, "comma-separated scores")->required();
  c_eval->add_option("--tau", eval.tau, "temperature; non-SoftMax functions see x / tau");

  CurveArgs curve;
  auto* c_curve = app.add_subcommand("modulator-curve", "Tabulate the per-layer modulator over a range");
  c_curve->add_option("--params", curve.params, "bundle name, JSON file, or 'identity'")->capture_default_str();
  c_curve->add_option("--range", curve.range, "start:stop:step[:log]")->capture_default_str();
  c_curve->add_option("--out", curve.out, "CSV path (default stdout)");

  SimplexArgs simplex;
  auto* c_simplex = app.add_subcommand("simplex-path", "Barycentric trajectory of a 3-vector over a knob grid");
  add_fn_options(c_simplex, simplex.fn);
  c_simplex->add_option("--input", simplex.input, "three comma-separated scores")->required();
  c_simplex->add_option("--grid", simplex.grid, "knob grid: start:stop:step[:log] or a list")->capture_default_str();
  c_simplex->add_option("--out", simplex.out, "CSV path (default stdout)");

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep", "Multi-modality and sparsity over a knob grid");
  add_fn_options(c_sweep, sweep.fn);
  c_sweep->add_option("--input", sweep.input, "comma-separated scores")->required();
  c_sweep->add_option("--grid", sweep.grid, "knob grid: start:stop:step[:log] or a list")->capture_default_str();
  c_sweep->add_option("--epsilon", sweep.epsilon, "relevance threshold")->capture_default_str();
  c_sweep->add_option("--s", sweep.s, "sparsity reference (default: min softmax entry)");
  c_sweep->add_option("--out", sweep.out, "CSV path (default stdout)");

  PropsArgs props;
  auto* c_props = app.add_subcommand("verify-props", "Run the randomized inequality suites");
  c_props->add_option("--trials", props.trials)->capture_default_str();
  c_props->add_option("--seed", props.seed)->capture_default_str();
  c_props->add_option("--only", props.only, "restrict to the named checks");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train-toy", "Train the toy classifier on a needle task");
  add_fn_options(c_train, tr.fn);
  c_train->add_option("--steps", tr.steps)->capture_default_str();
  c_train->add_option("--seed", tr.seed)->capture_default_str();
  c_train->add_option("--lr", tr.lr)->capture_default_str();
  c_train->add_option("--depth", tr.depth)->capture_default_str();
  c_train->add_option("--heads", tr.heads)->capture_default_str();
  c_train->add_option("--model-dim", tr.model_dim)->capture_default_str();
  c_train->add_option("--ffn-dim", tr.ffn_dim)->capture_default_str();
  c_train->add_option("--seq-len", tr.seq_len)->capture_default_str();
  c_train->add_option("--relevant", tr.relevant)->capture_default_str();
  c_train->add_option("--vocab", tr.vocab)->capture_default_str();
  c_train->add_option("--classes", tr.classes)->capture_default_str();
  c_train->add_option("--samples", tr.samples)->capture_default_str();
  c_train->add_option("--batch", tr.batch)->capture_default_str();
  c_train->add_option("--holdout", tr.holdout)->capture_default_str();
  c_train->add_option("--checkpoint", tr.checkpoint, "write the trained model here");

  AttnArgs attn;
  auto* c_attn = app.add_subcommand("attn-stats", "Attention histograms, patch similarity and rollout per layer");
  c_attn->add_option("--checkpoint", attn.checkpoint)->required();
  c_attn->add_option("--out-dir", attn.out_dir)->capture_default_str();
  c_attn->add_option("--prefix", attn.prefix, "file name prefix");
  c_attn->add_option("--seed", attn.seed, "evaluation task seed")->capture_default_str();
  c_attn->add_option("--samples", attn.samples, "evaluation batch size")->capture_default_str();
  c_attn->add_option("--relevant", attn.relevant)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (c_eval->parsed()) return run_eval(eval);
    if (c_curve->parsed()) return run_modulator_curve(curve);
    if (c_simplex->parsed()) return run_simplex_path(simplex);
    if (c_sweep->parsed()) return run_sweep(sweep);
    if (c_props->parsed()) return run_verify_props(props);
    if (c_train->parsed()) return run_train_toy(tr);
    if (c_attn->parsed()) return run_attn_stats(attn);
  } catch (const mm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case mm::ErrorKind::NumericalFailure:
      case mm::ErrorKind::TrainingDiverged:
        return kExitNumerical;
      default:
        return kExitUsage;
    }
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
