// JSON checkpoints for the toy model: config, flat named tensors, and the
// per-layer modulator parameters in the shared parameter-file schema.
#pragma once

#include <fstream>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "multimax/error.hpp"
#include "multimax/nano/model.hpp"
#include "multimax/params_io.hpp"

namespace multimax::nano {

inline constexpr const char* kCheckpointFormat = "multimax-toy-checkpoint";

inline nlohmann::json reweight_to_json(const ReweightSpec& s) {
  nlohmann::json j{{"fn", name_of(s)}};
  if (const auto* sm = std::get_if<spec::SoftMax>(&s)) j["tau"] = sm->temperature.tau();
  if (const auto* mm = std::get_if<spec::MultiMax>(&s)) j["params"] = to_json(mm->params);
  return j;
}

inline ReweightSpec reweight_from_json(const nlohmann::json& j) {
  const auto fn = j.at("fn").get<std::string>();
  if (fn == "softmax") return spec::SoftMax{Temperature(j.value("tau", 1.0))};
  if (fn == "multimax") {
    return spec::MultiMax{j.contains("params") ? modulator_params_from_json(j["params"]) : ModulatorParams::identity()};
  }
  if (fn == "sparsemax") return spec::SparseMax{};
  if (fn == "entmax15") return spec::EntMax15{};
  if (fn == "ev_softmax") return spec::EvSoftMax{};
  throw InvalidInput("unknown reweighting function '" + fn + "'");
}

inline nlohmann::json config_to_json(const ToyModelConfig& c) {
  return {{"depth", c.depth},     {"heads", c.heads}, {"model_dim", c.model_dim},
          {"ffn_dim", c.ffn_dim}, {"seq_len", c.seq_len}, {"vocab", c.vocab},
          {"classes", c.classes}, {"seed", c.seed},   {"reweight", reweight_to_json(c.reweight)}};
}

inline ToyModelConfig config_from_json(const nlohmann::json& j) {
  ToyModelConfig c;
  c.depth = j.at("depth").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.seq_len = j.at("seq_len").get<std::size_t>();
  c.vocab = j.at("vocab").get<std::size_t>();
  c.classes = j.at("classes").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.reweight = reweight_from_json(j.at("reweight"));
  return c;
}

inline nlohmann::json checkpoint_to_json(const ToyModel& model) {
  nlohmann::json tensors = nlohmann::json::object();
  const auto& p = model.params();
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    tensors[p.names[i]] = {{"shape", {p.tensors[i].rows(), p.tensors[i].cols()}}, {"data", p.tensors[i].data()}};
  }
  return {{"format", kCheckpointFormat},
          {"version", 1},
          {"config", config_to_json(model.config())},
          {"tensors", tensors},
          {"modulators", to_json(p.modulators)}};
}

inline ToyModel checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw InvalidInput("not a toy-model checkpoint");
    const auto cfg = config_from_json(j.at("config"));
    // Build a freshly initialized model to get the tensor layout, then overwrite.
    ToyModel model(cfg);
    auto& p = model.params();
    const auto& tensors = j.at("tensors");
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      const auto& t = tensors.at(p.names[i]);
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != p.tensors[i].rows() || shape[1] != p.tensors[i].cols()) {
        throw InvalidInput("tensor '" + p.names[i] + "' has the wrong shape");
      }
      p.tensors[i] = Matrix(shape[0], shape[1], t.at("data").get<std::vector<double>>());
    }
    const auto& mods = j.at("modulators");
    p.modulators.clear();
    if (!mods.empty()) p.modulators = modulator_layers_from_json(mods);
    return ToyModel(cfg, p);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const ToyModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(model).dump() << '\n';
}

inline ToyModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("cannot parse checkpoint '" + path + "': " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace multimax::nano
