#include "swing/config.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <string>

using namespace swing;

#ifndef SWING_CONFIG_DIR
#error "SWING_CONFIG_DIR must point at the shipped configs"
#endif

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

const char* kMinimal = R"(
[factor1]
speed = 0.5
level = 10
vol = 1

[contract]
volume = 0.5

[grid]
x1_min = 0
x1_max = 20

[mc]
x0 = 10
)";

std::string error_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Config, RoundTripsEveryPreset) {
    for (const char* name : {"ex1", "ex2", "ex3"})
        for (bool paper : {false, true}) {
            const RunConfig c = presets::by_name(name, paper);
            const RunConfig back = parse_config(echo_config(c));
            EXPECT_TRUE(back == c) << name << (paper ? " paper" : " desk");
            EXPECT_EQ(config_hash(back), config_hash(c));
        }
}

TEST(Config, ShippedFilesEqualPresets) {
    for (const char* name : {"ex1", "ex2", "ex3"}) {
        const RunConfig c = parse_config(read_file(std::string(SWING_CONFIG_DIR) + "/" + name + ".ini"));
        EXPECT_TRUE(c == presets::by_name(name)) << name;
    }
}

TEST(Config, MinimalFileTakesDefaults) {
    const RunConfig c = parse_config(kMinimal);
    EXPECT_EQ(c.example, "custom");
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.scheme.dt, SchemeConfig{}.dt);
    EXPECT_EQ(c.problem.contract.rate_cap[0], 1.0);
    EXPECT_EQ(c.problem.contract.horizon, 1.0);
    EXPECT_EQ(c.mc.paths, 100000u);
}

TEST(Config, MatchKeysApplyMomentMatching) {
    const std::string text = R"(
[factor1]
speed = 0.014
match_mean = 40
match_vol = 2.36
jump_frequency = 0.04
jump_rate = 0.4
[contract]
volume = 0.5
[grid]
x1_min = 18.7
x1_max = 61.3
[mc]
x0 = 40
)";
    const RunConfig c = parse_config(text);
    const auto& f = c.problem.model.factors[0];
    EXPECT_EQ(f.level, 39.9);
    EXPECT_NEAR(f.vol, 2.2516, 1e-4);
    EXPECT_EQ(f.jump_drift, JumpDrift::compensated);
    EXPECT_TRUE(f == presets::ex2().problem.model.factors[0]);
}

TEST(Config, MomentMatchFailureIsAConfigError) {
    std::string text = kMinimal;
    text.replace(text.find("level = 10\nvol = 1"), 18,
                 "match_mean = 10\nmatch_vol = 0.1\njump_frequency = 1\njump_rate = 0.5");
    EXPECT_NE(error_of(text).find("match"), std::string::npos) << error_of(text);
}

TEST(Config, RejectsUnknownKey) {
    std::string text = kMinimal;
    text.replace(text.find("volume = 0.5"), 12, "volume = 0.5\nvolumes = 1");
    EXPECT_EQ(error_of(text), "unknown key contract.volumes");
}

TEST(Config, RejectsUnknownSection) {
    EXPECT_EQ(error_of(std::string(kMinimal) + "\n[solver]\nx = 1\n"), "unknown section [solver]");
}

TEST(Config, EmptyFileListsRequiredKeys) {
    const std::string e = error_of("");
    for (const char* key : {"factor1.speed", "contract.volume", "grid.x1_min", "grid.x1_max", "mc.x0"})
        EXPECT_NE(e.find(key), std::string::npos) << key;
}

TEST(Config, MissingRequiredKeyIsNamed) {
    std::string text = kMinimal;
    text.erase(text.find("x1_max = 20"), 11);
    EXPECT_EQ(error_of(text), "missing required key grid.x1_max");
}

TEST(Config, ParseErrorReportsLine) {
    const std::string e = error_of("[factor1]\nspeed = 1\n[contract\nvolume = 1\n");
    EXPECT_NE(e.find("line 3"), std::string::npos) << e;
}

TEST(Config, BadValuesAreRejected) {
    auto with = [](const std::string& from, const std::string& to) {
        std::string t = kMinimal;
        t.replace(t.find(from), from.size(), to);
        return error_of(t);
    };
    EXPECT_NE(with("vol = 1", "vol = abc").find("not a number"), std::string::npos);
    EXPECT_NE(with("x0 = 10", "x0 = 10, 3").find("mc.x0"), std::string::npos);
    EXPECT_NE(with("volume = 0.5", "volume = 0.5\nrate_cap = 0").find("rate"), std::string::npos);
    EXPECT_NE(with("x1_max = 20", "x1_max = 20\nx1_boundary = cubic").find("x1_boundary"), std::string::npos);
    EXPECT_FALSE(with("x1_max = 20", "x1_max = 20\nx1_nodes = 2.5").empty());
    EXPECT_FALSE(with("x1_max = 20", "x1_max = 20\ndt = 0.3").empty());
}

TEST(Config, JumpKeysComeInPairs) {
    std::string text = kMinimal;
    text.replace(text.find("vol = 1"), 7, "vol = 1\njump_frequency = 1");
    EXPECT_EQ(error_of(text), "jump_frequency and jump_rate must be given together");
}

TEST(Config, HashTracksContent) {
    RunConfig a = presets::ex1(), b = presets::ex1();
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.seed = 2;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(ConfigWarnings, FlagsHalfVarianceReadingOfJumpVol) {
    RunConfig c = presets::ex2();
    EXPECT_TRUE(config_warnings(c).empty());
    c.problem.model.factors[0].vol = 2.3387;
    const auto w = config_warnings(c);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_NE(w[0].find("2.36"), std::string::npos) << w[0];
    EXPECT_TRUE(config_warnings(presets::ex1()).empty());
    EXPECT_TRUE(config_warnings(presets::ex3()).empty());
}
