#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "test_support.hpp"

using namespace qobs;
using namespace qobs::testing;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
    json doc() const { return json::parse(out); }
};

fs::path scratch() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("qobs_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

CliRun qobs_cli(const std::string& args) {
    const std::string cmd = std::string(QOBS_CLI_PATH) + " --out " + scratch().string() + " " + args + " 2>/dev/null";
    CliRun r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string mu(const std::string& name) { return data_path("mu/" + name + ".json"); }

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(qobs_cli("").code, 1);
    EXPECT_EQ(qobs_cli("check --no-such-flag").code, 1);
    EXPECT_EQ(qobs_cli("check").code, 1);
    EXPECT_EQ(qobs_cli("check --mu " + (scratch() / "missing.json").string()).code, 1);
    EXPECT_EQ(qobs_cli("toy --what nonsense").code, 1);
    EXPECT_EQ(qobs_cli("toy --what brackets --word 'W(1,0'").code, 1);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(qobs_cli("--help").code, 0); }

TEST(Cli, ConfigSchemaIsChecked) {
    const fs::path bad = scratch() / "bad.json", good = scratch() / "good.json";
    std::ofstream(bad) << R"({"schema": 2})";
    std::ofstream(good) << R"({"schema": 1, "T": 0.002, "J": 8})";
    EXPECT_EQ(qobs_cli("--config " + bad.string() + " check --mu " + mu("designed_k1_K2")).code, 1);
    const CliRun r = qobs_cli("--config " + good.string() + " simulate --mu " + mu("designed_k1_K2") + " --control " +
                           data_path("controls/zero.json") + " --T 0.001");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(r.doc()["settings"]["J"], 8);
    EXPECT_DOUBLE_EQ(r.doc()["settings"]["T"].get<double>(), 0.001);
}

TEST(Cli, SimulateFreeEvolution) {
    const double T = 0.01;
    const CliRun r = qobs_cli("simulate --mu " + mu("designed_k1_K2") + " --control " + data_path("controls/zero.json") +
                           " --T 0.01 --J 16");
    ASSERT_EQ(r.code, 0);
    const json res = r.doc()["result"];
    const json& re = res["final_coeffs"]["re"];
    const json& im = res["final_coeffs"]["im"];
    ASSERT_EQ(re.size(), 16u);
    EXPECT_NEAR(re[0].get<double>(), std::cos(M_PI * M_PI * T), 1e-12);
    EXPECT_NEAR(im[0].get<double>(), -std::sin(M_PI * M_PI * T), 1e-12);
    for (std::size_t j = 1; j < re.size(); ++j) EXPECT_EQ(std::hypot(re[j].get<double>(), im[j].get<double>()), 0.0);
    EXPECT_TRUE(fs::exists(scratch() / "trajectory.csv"));
}

TEST(Cli, CheckReproducesGoldenReport) {
    for (int k : {1, 2}) {
        const std::string base = "designed_k" + std::to_string(k) + "_K2";
        const CliRun r = qobs_cli("check --mu " + mu(base) + " --k " + std::to_string(k));
        ASSERT_EQ(r.code, 0) << base;
        std::ifstream in(data_path("mu/" + base + ".report.json"));
        const json golden = json::parse(in)["result"]["report"];
        const json now = r.doc();
        const auto& ge = golden["gamma"]["entries"];
        const auto& ne = now["result"]["gamma"]["entries"];
        ASSERT_EQ(ge.size(), ne.size());
        for (std::size_t i = 0; i < ge.size(); ++i) {
            const double a = ge[i]["value"], b = ne[i]["value"], sc = ge[i]["scale"];
            EXPECT_NEAR(a, b, 1e-10 * std::max(1.0, sc));
        }
        for (const char* h : {"H_reg", "H_lin", "H_conv", "H_null", "H_pos"})
            EXPECT_EQ(now["result"][h]["verdict"], golden[h]["verdict"]) << h;
    }
}

TEST(Cli, DriftScanRefusesFailingDipoles) {
    const CliRun r = qobs_cli("drift-scan --mu " + mu("pos_violating") + " --samples 2");
    EXPECT_EQ(r.code, 2);
    EXPECT_TRUE(r.doc()["result"].contains("refused"));
    EXPECT_EQ(r.doc()["exit_code"], 2);
}

TEST(Cli, ToySubcommands) {
    const CliRun b = qobs_cli("toy --what brackets --word 'W(1,0,1)' --word 'C(1,0,1,2)'");
    ASSERT_EQ(b.code, 0);
    const json br = b.doc()["result"]["brackets"];
    EXPECT_EQ(br[0]["at_zero"], (std::vector<std::string>{"0", "0", "0", "2"}));
    EXPECT_EQ(br[1]["at_zero"], (std::vector<std::string>{"0", "0", "0", "1/2"}));
    const CliRun nested = qobs_cli("toy --what brackets --word '[M(0,1),M(1,2)]'");
    ASSERT_EQ(nested.code, 0);
    EXPECT_EQ(nested.doc()["result"]["brackets"][0]["at_zero"], (std::vector<std::string>{"0", "0", "0", "1/2"}));
    const CliRun f = qobs_cli("toy --what form");
    ASSERT_EQ(f.code, 0);
    EXPECT_EQ(f.doc()["result"]["difference_eigenvalues"]["exact"], (std::vector<std::string>{"0", "1/2"}));
    const CliRun o = qobs_cli("toy --what obstruction");
    ASSERT_EQ(o.code, 0);
    EXPECT_EQ(o.doc()["result"]["span_rank"], 3);
}

TEST(Cli, OutputsAreDeterministic) {
    const std::string args = "toy --what drift --samples 20 --seed 7";
    const CliRun a = qobs_cli(args), b = qobs_cli(args);
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(a.doc()["result"]["violations"], 0);
    const CliRun c = qobs_cli("toy --what drift --samples 20 --seed 8");
    EXPECT_NE(a.doc()["config_hash"], c.doc()["config_hash"]);
}

TEST(Cli, JsonFileMirrorsStdout) {
    const CliRun r = qobs_cli("toy --what form --json form.json");
    ASSERT_EQ(r.code, 0);
    std::ifstream in(scratch() / "form.json");
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), r.out);
}
