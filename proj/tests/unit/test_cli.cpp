// End-to-end checks of the hypofeller tool: exit codes, diagnostics and reproducible reports.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "hypofeller/config.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string output;
};

RunResult run_tool(const std::string& args) {
    const std::string cmd = std::string(HYPOFELLER_TOOL_PATH) + " " + args + " 2>&1";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 512> buf{};
    while (fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.output += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string config(const std::string& name) { return std::string(HYPOFELLER_CONFIG_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("hypofeller_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write(const std::string& name, const std::string& text) const {
        const auto p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }

    fs::path dir_;
};

const char* kLinear2d = R"(seed = 3
horizon = 1.0
steps = 20
paths = 50
x0 = [0.0, 0.0]

[model]
kind = "linear"
drift_matrix = [[0.0, 1.0], [0.0, 0.0]]
noise = [[0.0], [1.0]]

[subordinator]
kind = "stable"
index = 0.5
)";

std::string replaced(std::string text, const std::string& from, const std::string& to) {
    const auto pos = text.find(from);
    if (pos != std::string::npos) text.replace(pos, from.size(), to);
    return text;
}

}  // namespace

TEST_F(CliTest, KalmanPairHasMinimalOrderOne) {
    const auto r = run_tool("check-hormander --config " + config("kalman.toml") + " --out " + dir_.string());
    ASSERT_EQ(r.code, 0) << r.output;
    const auto summary = slurp(dir_ / "hormander_summary.csv");
    EXPECT_NE(summary.find("\n1,50\n"), std::string::npos) << summary;
    EXPECT_TRUE(fs::exists(dir_ / "check-hormander.meta.json"));
}

TEST_F(CliTest, RerunsProduceByteIdenticalCsv) {
    const auto a = dir_ / "a", b = dir_ / "b";
    ASSERT_EQ(run_tool("simulate --config " + config("kalman.toml") + " --out " + a.string()).code, 0);
    ASSERT_EQ(run_tool("simulate --config " + config("kalman.toml") + " --threads 4 --out " + b.string()).code, 0);
    for (const char* name : {"trajectory.csv", "subordinator.csv", "terminal.csv"}) {
        const auto lhs = slurp(a / name);
        ASSERT_FALSE(lhs.empty()) << name;
        EXPECT_EQ(lhs, slurp(b / name)) << name;
    }
}

TEST_F(CliTest, InvalidValueNamesTheField) {
    const auto p = write("bad.toml", replaced(kLinear2d, "horizon = 1.0", "horizon = -1.0"));
    const auto r = run_tool("simulate --config " + p.string() + " --out " + (dir_ / "o").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("horizon"), std::string::npos) << r.output;
    EXPECT_FALSE(fs::exists(dir_ / "o" / "trajectory.csv"));
}

TEST_F(CliTest, DimensionMismatchNamesTheField) {
    const auto p = write("dim.toml", replaced(kLinear2d, "x0 = [0.0, 0.0]", "x0 = [0.0, 0.0, 1.0]"));
    const auto r = run_tool("simulate --config " + p.string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("x0"), std::string::npos) << r.output;

    const auto q = write("noise.toml", replaced(kLinear2d, "noise = [[0.0], [1.0]]", "noise = [[0.0, 1.0]]"));
    const auto s = run_tool("simulate --config " + q.string());
    EXPECT_EQ(s.code, 1);
    EXPECT_NE(s.output.find("noise"), std::string::npos) << s.output;
}

TEST_F(CliTest, UnknownKeyAndMissingFileAreUsageErrors) {
    const auto p = write("extra.toml", std::string(kLinear2d) + "\n[bogus]\nx = 1\n");
    const auto r = run_tool("simulate --config " + p.string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("bogus"), std::string::npos) << r.output;
    EXPECT_EQ(run_tool("simulate --config " + (dir_ / "missing.toml").string()).code, 1);
    EXPECT_EQ(run_tool("--config " + config("kalman.toml")).code, 1);
}

TEST_F(CliTest, SeedOverrideChangesHashAndOutput) {
    const auto a = dir_ / "a", b = dir_ / "b";
    ASSERT_EQ(run_tool("simulate --config " + config("kalman.toml") + " --out " + a.string()).code, 0);
    ASSERT_EQ(run_tool("simulate --config " + config("kalman.toml") + " --seed 11 --out " + b.string()).code, 0);
    const auto ma = nlohmann::json::parse(slurp(a / "simulate.meta.json"));
    const auto mb = nlohmann::json::parse(slurp(b / "simulate.meta.json"));
    EXPECT_NE(ma["config_hash"], mb["config_hash"]);
    EXPECT_EQ(mb["seed"], 11);
    EXPECT_NE(slurp(a / "terminal.csv"), slurp(b / "terminal.csv"));
}

TEST(CliConfig, HashIgnoresFormattingButNotValues) {
    const auto base = hfl::cli::parse_config(toml::parse(kLinear2d), "a");
    const auto spaced = hfl::cli::parse_config(toml::parse(std::string("# comment\n") + kLinear2d), "b");
    const auto other = hfl::cli::parse_config(toml::parse(replaced(kLinear2d, "paths = 50", "paths = 51")), "c");
    EXPECT_EQ(base.hash, spaced.hash);
    EXPECT_NE(base.hash, other.hash);
}

TEST_F(CliTest, MalliavinVerifiesOnKalmanPair) {
    const auto r = run_tool("malliavin --config " + config("kalman.toml") + " --out " + dir_.string());
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir_ / "invertibility.csv"));
}
