#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "multimax/multimax.hpp"

using namespace multimax;

namespace {

std::string data_file(const std::string& name) { return std::string(MULTIMAX_DATA_DIR) + "/" + name; }

}  // namespace

TEST(Bundles, ShapesAndLookup) {
  EXPECT_EQ(deit_small_bundle().layers.size(), 12u);
  EXPECT_EQ(lm6_bundle().layers.size(), 6u);
  for (const auto& b : {deit_small_bundle(), lm6_bundle()}) {
    for (const auto& l : b.layers) {
      EXPECT_EQ(l.order(), 2u);
      EXPECT_NO_THROW(l.validate());
    }
  }
  EXPECT_TRUE(find_bundle("deit_small").has_value());
  EXPECT_TRUE(find_bundle("lm6").has_value());
  EXPECT_FALSE(find_bundle("vit_huge").has_value());
}

TEST(Bundles, SpotValues) {
  const auto first = deit_small_bundle().layers.at(0).orders;
  EXPECT_EQ(first[0].tb, 1.8347933);
  EXPECT_EQ(first[0].td, 2.815388);
  EXPECT_EQ(first[1].tb, 0.9864913);
  EXPECT_EQ(first[1].td, 0.68440557);
  EXPECT_EQ(first[0].b, 1.185235);
  EXPECT_EQ(first[0].d, -1.208543);
  EXPECT_EQ(first[1].b, -2.1076407);
  EXPECT_EQ(first[1].d, 1.9158255);
  EXPECT_LT(deit_small_bundle().layers.at(2).orders[0].tb, 0.0);
}

TEST(Bundles, DataFilesEqualCompiledTables) {
  EXPECT_EQ(load_modulator_layers(data_file("deit_small.json")), deit_small_bundle().layers);
  EXPECT_EQ(load_modulator_layers(data_file("lm6.json")), lm6_bundle().layers);
}

TEST(ParamsJson, RoundTripAndResolve) {
  ModulatorParams first_order{{ModulatorOrder{0.3, 1.7, -0.25, 0.125}}};
  const auto j = to_json(std::vector<ModulatorParams>{first_order, ModulatorParams::identity()});
  EXPECT_EQ(j[0]["tb"].size(), 1u);
  const auto back = modulator_layers_from_json(nlohmann::json::parse(j.dump()));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], first_order);
  EXPECT_EQ(back[1], ModulatorParams::identity());

  const auto all = deit_small_bundle().layers;
  EXPECT_EQ(modulator_layers_from_json(nlohmann::json::parse(to_json(all).dump())), all);

  const std::string path = ::testing::TempDir() + "params_roundtrip.json";
  std::ofstream(path) << j.dump();
  EXPECT_EQ(resolve_modulator_layers(path), back);
  EXPECT_EQ(resolve_modulator_layers("lm6"), lm6_bundle().layers);
  std::remove(path.c_str());
}

TEST(ParamsJson, RejectsMalformed) {
  using nlohmann::json;
  EXPECT_THROW(modulator_layers_from_json(json::array()), InvalidInput);
  EXPECT_THROW(modulator_layers_from_json(json::object()), InvalidInput);
  EXPECT_THROW(modulator_params_from_json(json{{"tb", {1.0}}, {"td", {1.0}}, {"b", {0.0}}}), InvalidInput);
  EXPECT_THROW(modulator_params_from_json(json{{"tb", {1.0}}, {"td", {1.0, 2.0}}, {"b", {0.0}}, {"d", {0.0}}}),
               InvalidInput);
  EXPECT_THROW(modulator_params_from_json(json{{"tb", {"x"}}, {"td", {1.0}}, {"b", {0.0}}, {"d", {0.0}}}),
               InvalidInput);
  EXPECT_THROW(modulator_params_from_json(json{{"tb", json::array()}, {"td", json::array()},
                                               {"b", json::array()}, {"d", json::array()}}),
               InvalidInput);
  EXPECT_THROW(load_modulator_layers("/nonexistent/params.json"), InvalidInput);
}
