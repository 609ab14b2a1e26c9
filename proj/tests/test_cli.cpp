#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lbsf/behavior_data.hpp"
#include "lbsf/cli.hpp"
#include "lbsf/config.hpp"
#include "lbsf/error.hpp"

namespace fs = std::filesystem;
using namespace lbsf;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("lbsf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        std::ofstream(dir / "tiny.toml") << "[synth]\nn_users = 60\nt_span_days = 45\n"
                                           "[fold]\nM = 6\nL_max = 8\n"
                                           "[encode]\nd_model = 16\ntoken_dim = 8\nhash_buckets = 256\n"
                                           "[model]\nn_heads = 2\nffn_hidden = 32\n"
                                           "[train]\nbatch_size = 8\nepochs = 1\nlearning_rate = 1e-3\n"
                                           "[eval]\nbench_t_values = [32, 64]\nbench_merchants = 4\nbench_trials = 1\n";
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }
    fs::path dir;
};

} // namespace

TEST_F(CliTest, GenerateIsDeterministic) {
    const auto cfg = path("tiny.toml");
    ASSERT_EQ(run({"generate", "--config", cfg, "--out", path("a.jsonl"), "--seed", "3"}).code, 0);
    ASSERT_EQ(run({"generate", "--config", cfg, "--out", path("b.jsonl"), "--seed", "3"}).code, 0);
    EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
    EXPECT_EQ(load_jsonl(path("a.jsonl")).size(), 60u);
}

TEST_F(CliTest, TrainEvalScoreExplainPipeline) {
    const auto cfg = path("tiny.toml");
    ASSERT_EQ(run({"generate", "--config", cfg, "--out", path("d.jsonl")}).code, 0);
    const auto tr = run({"train", "--config", cfg, "--data", path("d.jsonl"), "--out", path("m.ckpt")});
    ASSERT_EQ(tr.code, 0) << tr.err;
    EXPECT_TRUE(fs::exists(dir / "m.ckpt.log.json"));

    const auto ev = run({"eval", "--config", cfg, "--data", path("d.jsonl"), "--model", path("m.ckpt")});
    ASSERT_EQ(ev.code, 0) << ev.err;
    const auto report = nlohmann::json::parse(ev.out);
    ASSERT_TRUE(report.at("auc").is_number());
    EXPECT_GE(report.at("auc").get<double>(), 0.0);
    EXPECT_LE(report.at("auc").get<double>(), 1.0);
    EXPECT_EQ(report.at("meta").at("command"), "eval");

    const auto sc = run({"score", "--data", path("d.jsonl"), "--model", path("m.ckpt"), "--out", path("s.jsonl")});
    ASSERT_EQ(sc.code, 0) << sc.err;
    std::istringstream lines(slurp(dir / "s.jsonl"));
    std::string line;
    std::size_t n = 0;
    std::getline(lines, line);
    EXPECT_TRUE(nlohmann::json::parse(line).contains("_meta"));
    while (std::getline(lines, line)) {
        ++n;
    }
    EXPECT_EQ(n, 60u);

    const auto ex = run({"explain", "--config", cfg, "--data", path("d.jsonl"), "--model", path("m.ckpt")});
    ASSERT_EQ(ex.code, 0) << ex.err;
    const auto recs = nlohmann::json::parse(ex.out).at("records");
    ASSERT_EQ(recs.size(), 60u);
    EXPECT_EQ(recs[0].at("weekly").size(), std::min<std::size_t>(3, recs[0].at("ranking").size()));
}

TEST_F(CliTest, BenchWritesCsv) {
    const auto b = run({"bench", "--config", path("tiny.toml")});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_NE(b.out.find("T,flat_cells,folded_cells"), std::string::npos);
    EXPECT_NE(b.out.find("\n64,4096,"), std::string::npos);
}

TEST_F(CliTest, EmptyDataExitsOne) {
    const auto cfg = path("tiny.toml");
    ASSERT_EQ(run({"generate", "--config", cfg, "--out", path("d.jsonl")}).code, 0);
    ASSERT_EQ(run({"train", "--config", cfg, "--data", path("d.jsonl"), "--out", path("m.ckpt")}).code, 0);
    std::ofstream(dir / "empty.jsonl") << "";
    const auto r = run({"score", "--data", path("empty.jsonl"), "--model", path("m.ckpt")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("empty dataset"), std::string::npos);
}

TEST_F(CliTest, BadCheckpointExitsOne) {
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
    std::ofstream(dir / "d.jsonl") << R"({"user_id":"u","label":0,"behaviors":[]})" << '\n';
    const auto r = run({"eval", "--data", path("d.jsonl"), "--model", path("junk.ckpt")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("magic"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"generate", "--out", path("x"), "--bogus"}).code, 2);
    EXPECT_EQ(run({"generate", "--out", path("x"), "--days", "30"}).code, 2);
    EXPECT_EQ(run({"train", "--data", path("missing.jsonl"), "--out", path("m")}).code, 2);
}

TEST_F(CliTest, UnknownConfigKeyExitsOne) {
    std::ofstream(dir / "bad.toml") << "[train]\nepochs = 2\nlearnig_rate = 1\n";
    const auto r = run({"generate", "--config", path("bad.toml"), "--out", path("x.jsonl")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("learnig_rate"), std::string::npos) << r.err;
}

// ---- config file ----------------------------------------------------------------

TEST(Config, ParsesSectionsAndDottedKeys) {
    std::istringstream in("# comment\n[train]\nepochs = 4  # trailing\nlearning_rate = 5e-4\n"
                          "fold.M = 12\nfold.L_max = 20\n[eval]\nbench_t_values = [128, 256]\n");
    const auto c = parse_run_config(in);
    EXPECT_EQ(c.train.epochs, 4u);
    EXPECT_DOUBLE_EQ(c.train.learning_rate, 5e-4);
    EXPECT_EQ(c.model.fold.merchant_slots, 12u);
    EXPECT_EQ(c.model.fold.max_per_merchant, 20u);
    EXPECT_EQ(c.eval.bench_t_values, (std::vector<std::size_t>{128, 256}));
}

TEST(Config, Rejections) {
    auto fails = [](const std::string& text) {
        std::istringstream in(text);
        EXPECT_THROW(parse_run_config(in), ConfigError) << text;
    };
    fails("[train]\nepochs = many\n");
    fails("[train\n");
    fails("just words\n");
    fails("[model]\nuse_amount = maybe\n");
    fails("[nope]\nx = 1\n");
    fails("[encode]\nd_model = 30\n[model]\nn_heads = 4\n");
}

TEST(Config, JsonRoundTripsKeyValues) {
    RunConfig c;
    c.train.epochs = 7;
    const auto j = c.to_json();
    EXPECT_EQ(j.at("train").at("epochs"), 7);
    EXPECT_TRUE(j.contains("model"));
    EXPECT_TRUE(j.contains("synth"));
}
