#include "kryloscope/io.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

using namespace kryloscope;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path scratch()
{
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    auto dir = fs::temp_directory_path() / (std::string("kryloscope_cli_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

CliResult run(const fs::path& dir, const std::string& args, const std::string& env = "")
{
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = "cd '" + dir.string() + "' && " + env + (env.empty() ? "" : " ") + "'" KRYLOSCOPE_CLI_PATH "' " + args +
                            " >'" + out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
}

nlohmann::json manifest(const fs::path& path) { return nlohmann::json::parse(read_file(path)); }

} // namespace

TEST(Cli, EvolveIsDeterministic)
{
    const auto dir = scratch();
    const std::string args = "evolve --profile su11:alpha=1,k=0.5 --tmax 2 --steps 20 --quiet";
    ASSERT_EQ(run(dir, args + " --out a.csv").code, 0);
    ASSERT_EQ(run(dir, args + " --out b.csv").code, 0);
    EXPECT_EQ(read_file(dir / "a.csv"), read_file(dir / "b.csv"));
    fs::remove_all(dir);
}

TEST(Cli, OutputsParseBackInBothFormats)
{
    const auto dir = scratch();
    const std::string args = "evolve --profile sqrt_hopping:g=1 --tmax 1 --steps 4 --quiet";
    ASSERT_EQ(run(dir, args).code, 0);
    ASSERT_EQ(run(dir, args + " --format json").code, 0);
    const Table csv = read_table(dir / "evolve.csv");
    const Table json = read_table(dir / "evolve.json");
    EXPECT_EQ(csv.columns, json.columns);
    ASSERT_EQ(csv.rows.size(), 5u);
    ASSERT_EQ(json.rows.size(), 5u);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        for (std::size_t c = 0; c < csv.columns.size(); ++c) EXPECT_EQ(csv.rows[r][c], json.rows[r][c]);
    }
    // K(t) = g^2 t^2 for sqrt hopping
    EXPECT_NEAR(csv.rows.back()[1], 1.0, 1e-9);
    fs::remove_all(dir);
}

TEST(Cli, ManifestDescribesTheRun)
{
    const auto dir = scratch();
    ASSERT_EQ(run(dir, "evolve --profile sqrt_hopping:g=1 --tmax 1 --steps 4 --quiet --distribution").code, 0);
    const auto m = manifest(dir / "evolve_manifest.json");
    EXPECT_EQ(m.at("subcommand"), "evolve");
    EXPECT_EQ(m.at("status"), "ok");
    EXPECT_TRUE(m.at("flags").empty());
    EXPECT_EQ(m.at("config").at("tmax"), "1");
    EXPECT_TRUE(m.contains("versions"));
    EXPECT_TRUE(m.contains("library_version"));
    ASSERT_EQ(m.at("artifacts").size(), 2u);
    for (const auto& a : m.at("artifacts")) EXPECT_TRUE(fs::exists(dir / a.get<std::string>())) << a;
    fs::remove_all(dir);
}

TEST(Cli, OutDirFromEnvironment)
{
    const auto dir = scratch();
    ASSERT_EQ(run(dir, "classify --profile linear_shift:alpha=1,gamma=0 --quiet", "KRYLOSCOPE_OUT_DIR=envout").code, 0);
    EXPECT_TRUE(fs::exists(dir / "envout" / "classify_manifest.json"));
    fs::remove_all(dir);
}

TEST(Cli, MalformedProfileFileReportsTheLine)
{
    const auto dir = scratch();
    write_atomic(dir / "bad.csv", "# kryloscope-profile v1\nn,b\n1,1.0\n3,oops\n");
    const CliResult r = run(dir, "evolve --profile bad.csv --quiet");
    EXPECT_EQ(r.code, 2);
    const auto err = nlohmann::json::parse(r.err);
    EXPECT_EQ(err.at("status"), "config_error");
    EXPECT_EQ(err.at("line"), 4);
    fs::remove_all(dir);
}

TEST(Cli, ConfigErrorsExitTwo)
{
    const auto dir = scratch();
    EXPECT_EQ(run(dir, "evolve --profile nosuch:x=1 --quiet").code, 2);
    EXPECT_EQ(run(dir, "evolve --profile sqrt_hopping:g=-1 --quiet").code, 2);
    EXPECT_EQ(run(dir, "evolve --quiet").code, 2);
    EXPECT_EQ(run(dir, "evolve --profile sqrt_hopping:g=1 --format xml --quiet").code, 2);
    const CliResult r = run(dir, "fluct --profile sqrt_hopping:g=1 --mc-samples 10 --quiet");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--seed"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, FlaggedRunNeedsPermission)
{
    const auto dir = scratch();
    const std::string args = "evolve --profile linear_shift:alpha=1,gamma=1 --tmax 3 --sites 8 --quiet";
    EXPECT_EQ(run(dir, args).code, 1);
    EXPECT_FALSE(manifest(dir / "evolve_manifest.json").at("flags").empty());
    EXPECT_EQ(run(dir, args + " --allow-flagged").code, 0);
    fs::remove_all(dir);
}

TEST(Cli, ConfigFileWithCommandLineOverride)
{
    const auto dir = scratch();
    write_atomic(dir / "run.ini", "[evolve]\nprofile = sqrt_hopping:g=2\ntmax = 1\nsteps = 10\n");
    ASSERT_EQ(run(dir, "--config run.ini evolve --steps 5 --quiet").code, 0);
    const auto m = manifest(dir / "evolve_manifest.json");
    EXPECT_EQ(m.at("config").at("profile"), "sqrt_hopping:g=2");
    EXPECT_EQ(m.at("config").at("steps"), "5");
    const Table t = read_table(dir / "evolve.csv");
    ASSERT_EQ(t.rows.size(), 6u);
    EXPECT_NEAR(t.rows.back()[1], 4.0, 1e-9);
    fs::remove_all(dir);
}

TEST(Cli, ValidatePasses)
{
    const auto dir = scratch();
    const CliResult r = run(dir, "validate");
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_EQ(manifest(dir / "validate_manifest.json").at("status"), "ok");
    fs::remove_all(dir);
}

TEST(Cli, VersionAndHelp)
{
    const auto dir = scratch();
    const CliResult v = run(dir, "--version");
    EXPECT_EQ(v.code, 0);
    EXPECT_FALSE(v.out.empty());
    const CliResult h = run(dir, "--help");
    EXPECT_EQ(h.code, 0);
    for (const char* sub : {"evolve", "fcs", "semiclassics", "classify", "fluct", "sweep", "overlap", "validate"})
        EXPECT_NE(h.out.find(sub), std::string::npos) << sub;
    fs::remove_all(dir);
}
