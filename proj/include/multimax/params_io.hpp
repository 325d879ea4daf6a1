// JSON form of modulator parameters: an array of layer objects
//   {"tb": [tb_1, tb_2], "td": [td_1, td_2], "b": [b_1, b_2], "d": [d_1, d_2]}
// with one-element arrays for first-order parameters.
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multimax/bundled_params.hpp"
#include "multimax/error.hpp"
#include "multimax/types.hpp"

namespace multimax {

inline nlohmann::json to_json(const ModulatorParams& p) {
  nlohmann::json layer;
  for (const char* key : {"tb", "td", "b", "d"}) layer[key] = nlohmann::json::array();
  for (const auto& o : p.orders) {
    layer["tb"].push_back(o.tb);
    layer["td"].push_back(o.td);
    layer["b"].push_back(o.b);
    layer["d"].push_back(o.d);
  }
  return layer;
}

inline nlohmann::json to_json(const std::vector<ModulatorParams>& layers) {
  auto arr = nlohmann::json::array();
  for (const auto& p : layers) arr.push_back(to_json(p));
  return arr;
}

inline ModulatorParams modulator_params_from_json(const nlohmann::json& layer) {
  if (!layer.is_object()) throw InvalidInput("modulator layer must be a JSON object");
  std::vector<std::vector<double>> cols;
  for (const char* key : {"tb", "td", "b", "d"}) {
    if (!layer.contains(key) || !layer[key].is_array()) {
      throw InvalidInput(std::string("modulator layer is missing array '") + key + "'");
    }
    std::vector<double> col;
    for (const auto& v : layer[key]) {
      if (!v.is_number()) throw InvalidInput(std::string("non-numeric entry in '") + key + "'");
      col.push_back(v.get<double>());
    }
    cols.push_back(std::move(col));
  }
  const std::size_t n = cols[0].size();
  for (const auto& c : cols) {
    if (c.size() != n) throw InvalidInput("modulator arrays differ in length");
  }
  ModulatorParams p;
  for (std::size_t i = 0; i < n; ++i) p.orders.push_back({cols[0][i], cols[1][i], cols[2][i], cols[3][i]});
  p.validate();
  return p;
}

inline std::vector<ModulatorParams> modulator_layers_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw InvalidInput("modulator parameters must be a non-empty array");
  std::vector<ModulatorParams> layers;
  for (const auto& layer : j) layers.push_back(modulator_params_from_json(layer));
  return layers;
}

inline std::vector<ModulatorParams> load_modulator_layers(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open parameter file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("cannot parse '" + path + "': " + e.what());
  }
  return modulator_layers_from_json(j);
}

/// A bundle name ("deit_small", "lm6") or a path to a parameter file.
inline std::vector<ModulatorParams> resolve_modulator_layers(const std::string& name_or_path) {
  if (auto bundle = find_bundle(name_or_path)) return bundle->layers;
  return load_modulator_layers(name_or_path);
}

}  // namespace multimax
