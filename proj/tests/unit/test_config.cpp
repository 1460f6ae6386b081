#include <gtest/gtest.h>

#include <filesystem>

#include "hexadapt/config.hpp"

using namespace hexadapt;

namespace {

std::string field_of(const std::string& text) {
  try {
    (void)parse_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST(Config, EchoRoundTripsEveryScenario) {
  for (const char* name : {"lshape", "insert", "probe"}) {
    const ScenarioConfig c = default_config(name);
    EXPECT_EQ(c.scenario, name);
    EXPECT_NO_THROW(validate(c));
    EXPECT_TRUE(parse_config(echo_config(c)) == c) << name;
  }
}

TEST(Config, OverridesAndOptionalFields) {
  const ScenarioConfig c = parse_config(R"({
    "scenario": "insert",
    "contact": {"puncture_strength": 20.0, "cut_strength": 5.0},
    "motion": {"retract": true},
    "adaptivity": {"mode": "adaptive", "target_relative_error": null}
  })");
  EXPECT_EQ(c.contact.puncture_strength, 20.0);
  ASSERT_TRUE(c.contact.cut_strength);
  EXPECT_EQ(*c.contact.cut_strength, 5.0);
  EXPECT_TRUE(c.motion.retract);
  EXPECT_EQ(c.adaptivity.mode, "adaptive");
  EXPECT_FALSE(c.adaptivity.target_relative_error);
  EXPECT_EQ(c.tissue, default_config("insert").tissue);
  EXPECT_TRUE(parse_config(echo_config(c)) == c);
}

TEST(Config, FallbackScenario) {
  EXPECT_EQ(parse_config("{}", "probe"), default_config("probe"));
}

TEST(Config, RejectionsNameTheField) {
  EXPECT_EQ(field_of(R"({"tissue": {"material": {"poisson_ratio": 0.5}}})"), "tissue.material.poisson_ratio");
  EXPECT_EQ(field_of(R"({"tissue": {"colour": 1}})"), "tissue.colour");
  EXPECT_EQ(field_of(R"({"scenario": "teleport"})"), "scenario");
  EXPECT_EQ(field_of(R"({"tissue": {"resolution": [4, 4]}})"), "tissue.resolution");
  EXPECT_EQ(field_of(R"({"integrator": {"tau": -1}})"), "integrator.tau");
  EXPECT_EQ(field_of(R"({"adaptivity": {"theta": 1.0}})"), "adaptivity.theta");
  EXPECT_EQ(field_of(R"({"adaptivity": {"template": "4x4"}})"), "adaptivity.template");
  EXPECT_EQ(field_of(R"({"contact": {"mu_shaft": "high"}})"), "contact.mu_shaft");
  EXPECT_EQ(field_of(R"({"needle": {"direction": [0, 0, 0]}})"), "needle.direction");
}

TEST(Config, MalformedTextIsAConfigError) {
  EXPECT_THROW((void)parse_config("{ not json"), ConfigError);
  EXPECT_THROW((void)load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, ShippedFilesLoad) {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(HEXADAPT_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    const ScenarioConfig c = load_config(entry.path());
    const std::string stem = entry.path().stem().string();
    EXPECT_EQ(c.scenario, stem.substr(0, stem.find('_'))) << stem;
    ++count;
  }
  EXPECT_GE(count, 6);
}
