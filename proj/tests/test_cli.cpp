#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ddetect_cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "ddetect");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = ddetect::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("ddetect_cli_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string write(const std::string& name, const std::string& body) const {
        const fs::path p = dir_ / name;
        std::ofstream(p) << body;
        return p.string();
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    static std::string sample(const std::string& name) { return std::string(DDETECT_SAMPLES_DIR) + "/" + name; }
    static std::string slurp(const std::string& p) {
        std::ifstream in(p);
        return {std::istreambuf_iterator<char>(in), {}};
    }

    fs::path dir_;
};

std::vector<std::string> data_lines(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') out.push_back(line);
    return out;
}

std::vector<std::string> fields(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream s(line);
    std::string f;
    while (std::getline(s, f, ',')) out.push_back(f);
    return out;
}

}  // namespace

TEST_F(Cli, MalformedSimplexReportsPath) {
    const auto cfg = write("bad.json", R"({"distributions": [[0.8, 0.2], [0.3, 0.7]],
        "channels": [[[1, 0], [0.5, 0.6]]], "alpha": 1, "lambda": 0.05})");
    const auto r = invoke({"exponent", "--config", cfg});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("channels[0][1]"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownKeyRejected) {
    const auto cfg = write("bad.json", R"({"distributions": [[0.8, 0.2], [0.3, 0.7]],
        "channels": [[[1, 0], [0, 1]]], "alpha": 1, "lambda": 0.05, "simulation": {"n": 5, "foo": 1}})");
    const auto r = invoke({"exponent", "--config", cfg});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("simulation.foo"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingConfigFileIsConfigError) {
    EXPECT_EQ(invoke({"exponent", "--config", path("absent.json")}).code, 1);
    EXPECT_EQ(invoke({"exponent"}).code, 1);
}

TEST_F(Cli, EqualHypothesesGiveZero) {
    const auto cfg = write("same.json", R"({"distributions": [[0.6, 0.4], [0.6, 0.4]],
        "channels": [[[1, 0], [0, 1]]], "alpha": 2, "lambda": 0.05})");
    const auto r = invoke({"exponent", "--config", cfg});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = data_lines(r.out);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_NEAR(std::stod(fields(rows[0])[2]), 0.0, 1e-9);
}

TEST_F(Cli, GutmanFlagMatchesExponent) {
    const auto a = invoke({"exponent", "--config", sample("gutman_identity.json")});
    const auto b = invoke({"exponent", "--gutman", "--config", sample("gutman_identity.json")});
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_NEAR(std::stod(fields(data_lines(a.out)[0])[2]), std::stod(fields(data_lines(b.out)[0])[2]), 1e-6);
}

TEST_F(Cli, OutputIsByteIdenticalWithHash) {
    const auto cfg = write("sim.json", R"({"distributions": [[0.8, 0.2], [0.3, 0.7]],
        "channels": [[[1, 0], [0, 1]]], "alpha": 1, "lambda": 0.05,
        "simulation": {"n": 50, "trials": 500, "seed": 3, "truth": 2}})");
    const auto r1 = invoke({"simulate", "--config", cfg, "--out", path("a.csv")});
    const auto r2 = invoke({"simulate", "--config", cfg, "--out", path("b.csv")});
    ASSERT_EQ(r1.code, 0) << r1.err;
    ASSERT_EQ(r2.code, 0) << r2.err;
    const auto a = slurp(path("a.csv"));
    EXPECT_EQ(a, slurp(path("b.csv")));
    EXPECT_EQ(a.rfind("outcome,count,prob,ci_lo,ci_hi\n", 0), 0u);
    EXPECT_NE(a.find("\n# config_hash="), std::string::npos);
    const auto r3 = invoke({"simulate", "--config", cfg, "--seed", "4", "--out", path("c.csv")});
    ASSERT_EQ(r3.code, 0);
    EXPECT_NE(a, slurp(path("c.csv")));
    for (const auto& e : fs::directory_iterator(dir_))
        EXPECT_EQ(e.path().filename().string().find(".tmp."), std::string::npos) << e.path();
}

TEST_F(Cli, SimulateTalliesSumToTrials) {
    const auto r = invoke({"simulate", "--config", sample("simulate_identity.json"), "--threshold", "raw"});
    ASSERT_EQ(r.code, 0) << r.err;
    long total = 0;
    for (const auto& l : data_lines(r.out)) total += std::stol(fields(l)[1]);
    EXPECT_EQ(total, 10000);
}

TEST_F(Cli, SweepAlphaIsNondecreasing) {
    const auto r = invoke({"sweep-alpha", "--config", sample("standing_binary.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("alpha,f_alpha,f_infinity,alpha0_flag,converged\n", 0), 0u);
    double prev = -1.0;
    const auto rows = data_lines(r.out);
    ASSERT_GE(rows.size(), 5u);
    for (const auto& l : rows) {
        const double v = std::stod(fields(l)[1]);
        EXPECT_GE(v, prev - 1e-7) << l;
        prev = v;
    }
}

TEST_F(Cli, SweepAbSchema) {
    const auto cfg = write("ab.json", R"({"distributions": [[0.6, 0.3, 0.1], [0.2, 0.2, 0.6]],
        "channels": [[[0.9, 0.1], [0.2, 0.8], [0.5, 0.5]], [[0.6, 0.4], [0.1, 0.9], [0.3, 0.7]]],
        "a": [0.5, 0.5], "b": [0.5, 0.5], "alpha": 10, "lambda": 0.01, "resolution": 0.5, "selector": "f_infinity"})");
    const auto r = invoke({"sweep-ab", "--config", cfg});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("a1,a2,b1,b2,value,converged\n", 0), 0u);
    EXPECT_EQ(data_lines(r.out).size(), 9u);
}

TEST_F(Cli, MaryRejectHasLambdaBelowAllExponents) {
    const auto r = invoke({"mary-reject", "--config", sample("mary_reject_m4.json"), "--out", path("m.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = data_lines(slurp(path("m.csv")));
    ASSERT_EQ(rows.size(), 28u);
    std::map<std::string, int> below;
    for (const auto& l : rows) {
        const auto f = fields(l);
        if (std::stod(f[2]) < std::stod(f[0])) below[f[0]] += 1;
    }
    bool found = false;
    for (const auto& [lam, n] : below) found = found || n == 4;
    EXPECT_TRUE(found);
}

TEST_F(Cli, OracleCheckPasses) {
    const auto r = invoke({"oracle-check", "--config", sample("oracle_check.json"), "--out", path("o.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("PASS"), std::string::npos) << r.out;
    for (const auto& l : data_lines(slurp(path("o.csv")))) EXPECT_LE(std::stod(fields(l)[4]), 2e-3) << l;
}

TEST_F(Cli, ThresholdFlagValidated) {
    EXPECT_EQ(invoke({"simulate", "--config", sample("simulate_identity.json"), "--threshold", "median"}).code, 1);
}
