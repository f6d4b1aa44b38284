#include "partedit/app/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace partedit;
using namespace partedit::app;

namespace {

nlohmann::json default_json() { return nlohmann::json::parse(to_json(RunConfig{}).dump()); }

}  // namespace

TEST(Config, JsonRoundTripPreservesEveryField) {
  RunConfig c;
  c.seed = 42;
  c.seeds = {5, 9};
  c.dataset.contexts = 1234;
  c.autoencoder.epochs = 17;
  c.jointspace.experts = 4;
  c.variants = {{"a", MiningStrategy::shared_context, 1.0}, {"b", MiningStrategy::random, 0.0}};
  c.edit.steps = 7;
  c.edit.delta = 0.25;
  c.edit.nse_enabled = false;
  c.swell = 0.05;
  c.out = "elsewhere";
  const auto back = config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(back.jointspace.mining, MiningStrategy::shared_context);
  EXPECT_EQ(back.jointspace.lambda, 1.0);
}

TEST(Config, MissingKeysKeepDefaults) {
  const auto c = config_from_json(nlohmann::json{{"seed", 3}});
  RunConfig d;
  d.seed = 3;
  EXPECT_EQ(config_hash(c), config_hash(d));
}

TEST(Config, HashIgnoresOutputDirectoryOnly) {
  RunConfig a;
  RunConfig b;
  b.out = "/somewhere/else";
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 64u);
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  RunConfig e;
  e.edit.gamma = 0.02;
  EXPECT_NE(config_hash(a), config_hash(e));
}

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
  auto top = default_json();
  top["sed"] = 1;
  EXPECT_THROW(config_from_json(top), ConfigError);

  auto nested = default_json();
  nested["edit"]["stepz"] = 3;
  try {
    config_from_json(nested);
    FAIL() << "unknown nested key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("stepz"), std::string::npos);
  }

  auto variant = default_json();
  variant["variants"][0]["weight"] = 2;
  EXPECT_THROW(config_from_json(variant), ConfigError);
}

TEST(Config, BadValuesAreConfigErrors) {
  auto wrong_type = default_json();
  wrong_type["seed"] = "one";
  EXPECT_THROW(config_from_json(wrong_type), ConfigError);

  auto bad_mining = default_json();
  bad_mining["variants"][0]["mining"] = "hardest";
  EXPECT_THROW(config_from_json(bad_mining), ConfigError);

  RunConfig c;
  c.seeds.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.variants.push_back(c.variants.front());
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.edit.gamma = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.edit.delta = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.rounds = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(Config, VariantLookup) {
  const RunConfig c;
  EXPECT_EQ(c.variant("none").lambda, 0.0);
  EXPECT_EQ(c.variant("shared_context").mining, MiningStrategy::shared_context);
  EXPECT_THROW((void)c.variant("missing"), ConfigError);
}

TEST(Config, LoadFromFile) {
  const auto dir = std::filesystem::temp_directory_path() / "partedit_config_test";
  std::filesystem::create_directories(dir);
  const auto good = dir / "good.json";
  std::ofstream(good) << R"({"seed": 11, "edit": {"steps": 3}})";
  const auto c = load_config(good);
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.edit.steps, 3u);

  const auto bad = dir / "bad.json";
  std::ofstream(bad) << "{\"seed\": ";
  EXPECT_THROW(load_config(bad), ConfigError);
  EXPECT_THROW(load_config(dir / "absent.json"), ConfigError);
  std::filesystem::remove_all(dir);
}
