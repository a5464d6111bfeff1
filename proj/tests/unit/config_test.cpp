#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "weatherlpr/config.hpp"
#include "weatherlpr/error.hpp"

using namespace wlpr;

TEST(Config, ParsesTypedValues) {
    const Config c = Config::parse(
        "# run settings\n"
        "seed = 42\n"
        "  train.lr=0.001  \n"
        "\n"
        "kinds = fog, snow ,rain\n"
        "flag = yes\n"
        "name = two words\n");
    EXPECT_EQ(c.get_u64("seed", 0), 42u);
    EXPECT_DOUBLE_EQ(c.get_double("train.lr", 0), 1e-3);
    EXPECT_EQ(c.get_list("kinds", {}), (std::vector<std::string>{"fog", "snow", "rain"}));
    EXPECT_TRUE(c.get_bool("flag", false));
    EXPECT_EQ(c.get("name", ""), "two words");
    EXPECT_EQ(c.get_int("missing", -3), -3);
    EXPECT_NO_THROW(c.reject_unused());
}

TEST(Config, ErrorsNameTheLine) {
    try {
        Config::parse("a = 1\nnot a pair\n", "run.cfg");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(Config::parse("a = 1\na = 2\n"), ConfigError);
    EXPECT_THROW(Config::parse(" = 2\n"), ConfigError);
}

TEST(Config, BadValuesAreConfigErrors) {
    const Config c = Config::parse("n = 12x\nb = maybe\nneg = -4\nf = 1e400\n");
    EXPECT_THROW(c.get_int("n", 0), ConfigError);
    EXPECT_THROW(c.get_double("n", 0), ConfigError);
    EXPECT_THROW(c.get_bool("b", false), ConfigError);
    EXPECT_THROW(c.get_u64("neg", 0), ConfigError);
    EXPECT_EQ(c.get_int("neg", 0), -4);
    EXPECT_THROW(c.get_double("f", 0), ConfigError);
    EXPECT_THROW(c.require("absent"), ConfigError);
}

TEST(Config, UnknownKeysRejected) {
    const Config c = Config::parse("seed = 1\ntypo.key = 3\n");
    c.get_u64("seed", 0);
    try {
        c.reject_unused();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("typo.key"), std::string::npos);
    }
}

TEST(Config, LoadAndSet) {
    const auto path = std::filesystem::temp_directory_path() / "wlpr_cfg_test.cfg";
    {
        std::ofstream(path) << "out = results\n";
    }
    Config c = Config::load(path);
    c.set("seed", "9");
    EXPECT_EQ(c.require("out"), "results");
    EXPECT_EQ(c.get_u64("seed", 0), 9u);
    std::filesystem::remove(path);
    EXPECT_THROW(Config::load(path), ConfigError);
}
