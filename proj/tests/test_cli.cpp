#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args)
{
    const std::string cmd = std::string(NETPNC_CLI) + " " + args + " > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

int run_corrupt(const std::string& args)
{
    const std::string cmd = std::string(NETPNC_CLI_CORRUPT) + " " + args + " > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string scenario(const std::string& name)
{
    return std::string(NETPNC_SOURCE_DIR) + "/scenarios/" + name;
}

fs::path fresh_dir(const std::string& name)
{
    const fs::path d = fs::path(::testing::TempDir()) / ("netpnc_cli_" + name);
    fs::remove_all(d);
    return d;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(Cli, OracleCheckPasses)
{
    EXPECT_EQ(run("oracle-check --count 200 --seed 1"), 0);
}

TEST(Cli, CorruptedSolverIsCaught)
{
    EXPECT_NE(run_corrupt("oracle-check --count 50 --seed 1"), 0);
}

TEST(Cli, ConfigErrorsExitWithTwo)
{
    const auto d = fresh_dir("bad");
    fs::create_directories(d);
    const auto bad = d / "bad.json";
    std::ofstream(bad) << "{\"name\": \"x\", \"surprise\": true}";
    EXPECT_EQ(run("run --scenario " + bad.string() + " --out " + (d / "o").string()), 2);
    EXPECT_FALSE(fs::exists(d / "o" / "manifest.json"));
    EXPECT_EQ(run("run --scenario " + scenario("specific_case.json") + " --horizon 0 --out " + (d / "o").string()), 2);
    EXPECT_EQ(run("montecarlo --scenario " + scenario("monte_carlo.json") + " --cases 400 --out " + (d / "o").string()),
              2);
    EXPECT_EQ(run("run --scenario " + scenario("specific_case.json") + " --policy random"), 2);
    EXPECT_EQ(run("frobnicate"), 2);
}

TEST(Cli, RunWritesArtifacts)
{
    const auto d = fresh_dir("run");
    ASSERT_EQ(run("run --scenario " + scenario("specific_case.json") + " --out " + d.string()), 0);
    for (const char* f : {"manifest.json", "episode.jsonl", "episodes.csv"})
        EXPECT_TRUE(fs::exists(d / f)) << f;
    const auto csv = slurp(d / "episodes.csv");
    EXPECT_EQ(csv.rfind("case_id,rep,policy,accumulated_delay", 0), 0U);
    EXPECT_NE(slurp(d / "manifest.json").find("\"resolved\""), std::string::npos);
}

TEST(Cli, NoTimingOutputsAreReproducible)
{
    const auto a = fresh_dir("rep_a"), b = fresh_dir("rep_b");
    const std::string args = "montecarlo --scenario " + scenario("monte_carlo.json") + " --cases 3 --reps 2 --seed 4 --no-timing";
    ASSERT_EQ(run(args + " --out " + a.string()), 0);
    ASSERT_EQ(run(args + " --out " + b.string()), 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        ++files;
        EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
    }
    EXPECT_EQ(files, 3U);
}
