#include <commands.hpp>
#include <config.hpp>

#include <fixtures.hpp>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code{0};
    std::string out;
    std::string err;
};

Result cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = stpp::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::size_t line_count(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) {
        n += c == '\n' ? 1 : 0;
    }
    return n;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Small dataset directory shared by the end-to-end tests.
const fs::path& dataset() {
    static const fs::path dir = [] {
        const auto d = stpp::fixtures::scratch_dir("cli-data");
        const auto csv = (d / "pw.csv").string();
        const auto win = (d / "win.json").string();
        EXPECT_EQ(cli({"simulate", "pinwheel", "--clusters", "2", "--per-cluster", "60", "--seed", "5", "-o", csv}).code, 0);
        EXPECT_EQ(cli({"ingest", "-i", csv, "--seq-len", "12", "--input-length", "10", "--output-length", "2",
                        "--overlap", "10", "-o", win})
                      .code,
                  0);
        EXPECT_EQ(cli({"split", "-i", win, "--seed", "0", "-o", (d / "data").string()}).code, 0);
        return d / "data";
    }();
    return dir;
}

}  // namespace

TEST(Cli, SimulatePinwheelDefaults) {
    const auto r = cli({"simulate", "pinwheel", "--seed", "7"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "t,x1,x2,m");
    EXPECT_EQ(line_count(r.out), 2251u);
    // Same seed, same bytes.
    EXPECT_EQ(cli({"simulate", "pinwheel", "--seed", "7"}).out, r.out);
    EXPECT_NE(cli({"simulate", "pinwheel", "--seed", "8"}).out, r.out);
}

TEST(Cli, SimulateTemporalKinds) {
    const auto h = cli({"simulate", "hawkes", "-n", "1000", "--mu", "0.5", "--alpha", "0.5", "--beta", "1", "--seed", "1"});
    ASSERT_EQ(h.code, 0) << h.err;
    EXPECT_EQ(line_count(h.out), 1001u);
    const auto p = cli({"simulate", "poisson", "--horizon", "10", "--lambda", "2", "--seed", "1"});
    ASSERT_EQ(p.code, 0) << p.err;
    EXPECT_GT(line_count(p.out), 1u);
    const auto bad = cli({"simulate", "nothing"});
    EXPECT_EQ(bad.code, 2);
    EXPECT_EQ(json::parse(bad.err)["error"]["type"], "usage");
}

TEST(Cli, SplitWritesManifest) {
    const auto& d = dataset();
    const auto m = json::parse(slurp(d / "manifest.json"));
    EXPECT_EQ(m["n_in"], 10);
    EXPECT_EQ(m["l_out"], 2);
    EXPECT_TRUE(fs::exists(d / "train.json"));
}

TEST(Cli, EvaluateBaselineRow) {
    const auto r = cli({"evaluate", "--data", dataset().string(), "--model", "homo-poisson", "--space-model", "gaussian"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("homo-poisson"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("±"), std::string::npos) << r.out;
    const auto out = (dataset().parent_path() / "eval.json").string();
    ASSERT_EQ(cli({"evaluate", "--data", dataset().string(), "--model", "hawkes", "-o", out}).code, 0);
    const auto j = json::parse(slurp(out));
    EXPECT_TRUE(j.dump().find("time") != std::string::npos);
}

TEST(Cli, FitBaselineArtifact) {
    const auto out = (dataset().parent_path() / "poisson.json").string();
    const auto r = cli({"fit-baseline", "--data", dataset().string(), "--model", "homo-poisson", "-o", out});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(slurp(out));
    EXPECT_TRUE(j.contains("params"));
    EXPECT_TRUE(j.contains("fit_meta"));
    // A fitted artifact can be passed back to evaluate.
    EXPECT_EQ(cli({"evaluate", "--data", dataset().string(), "--model", out}).code, 0);
}

TEST(Cli, TrainPredictExport) {
    const auto run = stpp::fixtures::scratch_dir("cli-run");
    std::ofstream(run / "small.toml") << "[data]\nseq_len = 12\ninput_length = 10\noutput_length = 2\noverlap = 10\n"
                                         "[model]\nd_model = 8\nattention_layers = 1\nattention_heads = 2\n"
                                         "time_flow = \"softplus\"\n[train]\nepochs = 2\nbatch_size = 16\n";
    const auto r = cli({"train", "--config", (run / "small.toml").string(), "--data", dataset().string(), "--out",
                         (run / "out").string(), "--ablation", "zero-encoder"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = json::parse(r.out);
    EXPECT_EQ(summary["ablation"], "zero-encoder");
    EXPECT_EQ(summary["epochs_run"], 2);
    const auto ckpt = (run / "out" / "best.stpp1").string();
    ASSERT_TRUE(fs::exists(ckpt));
    EXPECT_TRUE(fs::exists(run / "out" / "log.csv"));

    const auto p = cli({"predict", "--ckpt", ckpt, "--data", dataset().string(), "--seq", "test_0"});
    ASSERT_EQ(p.code, 0) << p.err;
    const auto pj = json::parse(p.out);
    EXPECT_EQ(pj["t_hat"].size(), 2u);
    EXPECT_EQ(pj["x_hat"].size(), 2u);
    EXPECT_EQ(pj["x_hat"][0].size(), 2u);

    const auto dens = (run / "dens.json").string();
    ASSERT_EQ(cli({"export-density", "--ckpt", ckpt, "--data", dataset().string(), "--steps", "16", "-o", dens}).code, 0);
    const auto dj = json::parse(slurp(dens));
    EXPECT_EQ(dj["slots"].size(), 2u);
    EXPECT_EQ(dj["slots"][0]["logp"].size(), 256u);
    EXPECT_EQ(dj["grid"]["steps"], json::array({16, 16}));

    EXPECT_EQ(cli({"evaluate", "--data", dataset().string(), "--ckpt", ckpt}).code, 0);
    EXPECT_EQ(cli({"predict", "--ckpt", ckpt, "--data", dataset().string(), "--seq", "test_99999"}).code, 2);
}

TEST(Cli, ConfigErrorsAreCollected) {
    const auto dir = stpp::fixtures::scratch_dir("cli-bad");
    std::ofstream(dir / "bad.toml") << "[model]\nd_model = -3\nbogus = 1\n[train]\nepochs = \"x\"\n";
    const auto r = cli({"train", "--config", (dir / "bad.toml").string(), "--data", dataset().string()});
    EXPECT_EQ(r.code, 2);
    const auto e = json::parse(r.err)["error"];
    EXPECT_EQ(e["type"], "config");
    EXPECT_EQ(e["problems"].size(), 3u);
}

TEST(Cli, ShippedConfigsParse) {
    for (const char* name : {"desk.toml", "full.toml"}) {
        const auto j = stpp::cli::read_config_file(fs::path(STPP_SOURCE_DIR) / "configs" / name);
        EXPECT_NO_THROW((void)stpp::cli::parse_run_config(j)) << name;
    }
    const auto full = stpp::cli::parse_run_config(
        stpp::cli::read_config_file(fs::path(STPP_SOURCE_DIR) / "configs" / "full.toml"));
    EXPECT_EQ(full.net.d_model, 64u);
    EXPECT_EQ(full.net.n_heads, 6u);
    EXPECT_EQ(full.data.input_length, 497u);
}

TEST(Cli, UnknownCommandFails) {
    EXPECT_NE(cli({"frobnicate"}).code, 0);
    EXPECT_NE(cli({"evaluate"}).code, 0);
}
