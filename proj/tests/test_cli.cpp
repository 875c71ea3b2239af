#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "oracles.hpp"
#include "tnstack/bench.hpp"
#include "tnstack/mps_json.hpp"

using namespace tnstack;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("tnstack_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    // Runs the CLI with stdout captured to out.txt; returns the exit status.
    int run(const std::string& args, const std::string& env = "") {
        const std::string cmd = env + " " + TNSTACK_CLI_PATH + " " + args + " > " + path("out.txt") + " 2> " + path("err.txt");
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    std::string out() const { return read_text_file(path("out.txt")); }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, EstimateEc) {
    ASSERT_EQ(run("estimate --method ec --L 21 --V 50 --B 100 --O 10"), 0);
    EXPECT_NE(out().find("chain_elements=5055000"), std::string::npos) << out();
    EXPECT_NE(out().find("intermediate_elements=96000"), std::string::npos) << out();
}

TEST_F(Cli, EstimateBtn) {
    ASSERT_EQ(run("estimate --method btn --L 21 --V 50 --B 100 --O 10"), 0);
    EXPECT_NE(out().find("chain_elements=505005000"), std::string::npos) << out();
}

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(run("estimate --method ec --L 1 --V 50 --B 100"), 2);
    EXPECT_EQ(run("estimate --method foo --L 21 --V 50 --B 100"), 2);
    EXPECT_EQ(run("bench --no-such-flag"), 2);
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("bench --methods LP,NOPE --batches 1"), 2);
    EXPECT_EQ(run("bench --batches 4,2"), 2);
}

TEST_F(Cli, VerifyQuick) {
    ASSERT_EQ(run("verify --scale quick"), 0);
    EXPECT_NE(out().find("block-diagonality"), std::string::npos);
}

TEST_F(Cli, StackRoundTrip) {
    const auto inputs = oracle::random_inputs(3, 4, 2, 2, 1);
    std::string in_args;
    for (std::size_t b = 0; b < inputs.size(); ++b) {
        write_json_file(path("in" + std::to_string(b) + ".json"), to_json(inputs[b]));
        in_args += " " + path("in" + std::to_string(b) + ".json");
    }
    ASSERT_EQ(run("stack --in" + in_args + " --out " + path("s.json")), 0);
    const auto s = stacked_from_json(read_json_file(path("s.json")));
    ASSERT_EQ(s.batch(), 3u);
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(s.source(b), inputs[b]);

    ASSERT_EQ(run("stack --dense --in" + in_args + " --out " + path("d.json")), 0);
    const Mps dense = mps_from_json(read_json_file(path("d.json")));
    EXPECT_EQ(dense.output_extent(), 3u);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(dense.unit(j).size(), materialize_site(s, j).size());
}

TEST_F(Cli, StackIoErrors) {
    EXPECT_EQ(run("stack --in " + path("missing.json") + " --out " + path("s.json")), 3);
    write_text_file(path("bad.json"), "{\"version\":1}");
    EXPECT_EQ(run("stack --in " + path("bad.json") + " --out " + path("s.json")), 3);
    write_json_file(path("ok.json"), to_json(random_mps({2, 2, 1, std::nullopt, 0})));
    EXPECT_EQ(run("stack --in " + path("ok.json") + " --out " + path("no/dir/s.json")), 3);
}

TEST_F(Cli, StackShapeMismatchIsUsageError) {
    write_json_file(path("a.json"), to_json(random_mps({2, 2, 1, std::nullopt, 0})));
    write_json_file(path("b.json"), to_json(random_mps({3, 2, 1, std::nullopt, 0})));
    EXPECT_EQ(run("stack --in " + path("a.json") + " " + path("b.json") + " --out " + path("s.json")), 2);
}

TEST_F(Cli, BenchWritesCsv) {
    ASSERT_EQ(run("bench --L 5 --V 3 --batches 1,4 --repeats 1 --warmup 0 --out " + path("b.csv")), 0);
    const auto recs = parse_csv_file(path("b.csv"));
    ASSERT_EQ(recs.size(), 10u);
    for (const auto& r : recs) EXPECT_TRUE(r.skipped.empty());
}

TEST_F(Cli, BenchGuardFromEnvironment) {
    ASSERT_EQ(run("bench --L 5 --V 3 --batches 4 --repeats 1 --warmup 0 --methods BTN_SWEEP,EC --out " + path("b.csv"),
                  "TNSTACK_MEM_GUARD=10"),
              0);
    const auto recs = parse_csv_file(path("b.csv"));
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].skipped, "oom_guard");
    EXPECT_TRUE(recs[1].skipped.empty());
}

TEST_F(Cli, BenchUnwritableOutput) {
    EXPECT_EQ(run("bench --L 3 --V 2 --batches 1 --repeats 1 --warmup 0 --methods EC --out " + path("no/dir/b.csv")), 3);
}
