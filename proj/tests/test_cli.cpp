// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Drives the built `hsmtl` binary end to end on a small synthetic corpus.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>

#include "hsmtl/app.hpp"
#include "test_support.hpp"

using namespace hsmtl;
using hsmtl::testing::read_file;
using hsmtl::testing::write_synthetic_run;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("hsmtl_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string("env -u HSMTL_OUTPUT_ROOT ") + HSMTL_CLI_PATH + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

std::set<std::string> files_under(const fs::path& dir) {
    std::set<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out.insert(fs::relative(e.path(), dir).string());
    return out;
}

}  // namespace

TEST(Cli, TrainWritesArtifactsUnderOutputDir) {
    const auto dir = fresh_dir("artifacts");
    const auto cfg = write_synthetic_run(dir, "MTL");
    const auto before = files_under(dir);
    ASSERT_EQ(run("train --config " + quote(cfg)), 0);
    for (const char* f : {"model.ckpt", "model.ckpt.meta.json", "train_log.jsonl", "hs.report.json", "emo.report.json",
                          "hs.report.txt", "hs.confusion.csv", "hs.val.csv", "emo.val.csv", "hs.rejects.txt"})
        EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
    for (const auto& f : files_under(dir))
        if (!before.contains(f)) EXPECT_TRUE(f.starts_with("out/")) << f;

    const auto report = nlohmann::json::parse(read_file(dir / "out" / "hs.report.json"));
    EXPECT_EQ(report["model"], "MTL(HS+EMO)");
    EXPECT_EQ(report["task"], "HS");
}

TEST(Cli, SameConfigAndSeedIsBitwiseReproducible) {
    const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    ASSERT_EQ(run("train --config " + quote(write_synthetic_run(a, "MTL", 3))), 0);
    ASSERT_EQ(run("train --config " + quote(write_synthetic_run(b, "MTL", 3))), 0);
    EXPECT_EQ(read_file(a / "out" / "train_log.jsonl"), read_file(b / "out" / "train_log.jsonl"));
    EXPECT_EQ(read_file(a / "out" / "model.ckpt"), read_file(b / "out" / "model.ckpt"));
}

TEST(Cli, SeedAndEpochOverrides) {
    const auto dir = fresh_dir("override");
    const auto cfg = write_synthetic_run(dir, "STL", 2);
    ASSERT_EQ(run("train --config " + quote(cfg) + " --epochs 1 --seed 99"), 0);
    const auto log = read_file(dir / "out" / "train_log.jsonl");
    EXPECT_NE(log.find("\"epoch\":1"), std::string::npos);
    EXPECT_EQ(log.find("\"epoch\":2"), std::string::npos);
    EXPECT_EQ(log.find("\"task\":\"EMO\""), std::string::npos);
}

TEST(Cli, TwoMainTasksInStlModeIsAValidationError) {
    const auto dir = fresh_dir("two_main");
    const auto cfg = write_synthetic_run(dir, "STL");
    auto j = nlohmann::json::parse(read_file(cfg));
    j["tasks"][1]["role"] = "main";
    hsmtl::testing::write_file(cfg, j.dump());
    EXPECT_EQ(run("train --config " + quote(cfg)), 2);

    std::ostringstream out, err;
    EXPECT_EQ(app::cmd_train(cfg, {}, out, err), app::kValidation);
    EXPECT_NE(err.str().find("tasks[1].role"), std::string::npos) << err.str();
}

TEST(Cli, UsageErrorsAreValidationErrors) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("train"), 2);
    EXPECT_EQ(run("train --config /nonexistent/run.json"), 2);
}

TEST(Cli, EvalReproducesFinalMetricsAndCreatesOutputDir) {
    const auto dir = fresh_dir("eval");
    ASSERT_EQ(run("train --config " + quote(write_synthetic_run(dir, "MTL"))), 0);
    const auto out = dir / "out";
    const auto eval_dir = dir / "fresh" / "nested";
    ASSERT_EQ(run("eval --checkpoint " + quote(out / "model.ckpt") + " --data " + quote(out / "hs.val.csv") +
                  " --task HS --out " + quote(eval_dir)),
              0);
    const auto eval = nlohmann::json::parse(read_file(eval_dir / "hs.eval.report.json"));
    EXPECT_TRUE(fs::exists(eval_dir / "hs.eval.confusion.csv"));
    EXPECT_TRUE(fs::exists(eval_dir / "hs.eval.report.txt"));

    std::istringstream log(read_file(out / "train_log.jsonl"));
    std::string line;
    bool found = false;
    while (std::getline(log, line)) {
        auto j = nlohmann::json::parse(line);
        if (j.value("final", false) && j["task"] == "HS") {
            found = true;
            EXPECT_EQ(j["val"], eval["metrics"]);
        }
    }
    EXPECT_TRUE(found);
}

TEST(Cli, EvalOnTheOtherTasksFileIsALabelMismatch) {
    const auto dir = fresh_dir("mismatch");
    ASSERT_EQ(run("train --config " + quote(write_synthetic_run(dir, "STL"))), 0);
    const auto out = dir / "out";
    hsmtl::testing::write_file(dir / "emo_as_hs.csv", "tweet,class\nsome words here,anger\n");
    EXPECT_EQ(run("eval --checkpoint " + quote(out / "model.ckpt") + " --data " + quote(dir / "emo_as_hs.csv") +
                  " --task HS"),
              2);
    EXPECT_EQ(run("eval --checkpoint " + quote(out / "model.ckpt") + " --data " + quote(out / "hs.val.csv") +
                  " --task EMO"),
              2);
}

TEST(Cli, CompareStlAgainstMtl) {
    const auto stl = fresh_dir("cmp_stl"), mtl = fresh_dir("cmp_mtl"), cmp = fresh_dir("cmp_out");
    ASSERT_EQ(run("train --config " + quote(write_synthetic_run(stl, "STL"))), 0);
    ASSERT_EQ(run("train --config " + quote(write_synthetic_run(mtl, "MTL"))), 0);
    ASSERT_EQ(run("compare " + quote(stl / "out" / "hs.report.json") + " " + quote(mtl / "out" / "hs.report.json") +
                  " --out " + quote(cmp)),
              0);
    const auto rows = parse_comparison_text(read_file(cmp / "comparison.txt"));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].model, "STL(HS)");
    EXPECT_EQ(rows[1].model, "MTL(HS+EMO)");
    EXPECT_TRUE(fs::exists(cmp / "comparison.json"));

    EXPECT_EQ(run("compare " + quote(stl / "out" / "hs.report.json") + " " + quote(stl / "nope.json")), 2);
    std::ostringstream out, err;
    EXPECT_EQ(app::cmd_compare({stl / "out" / "hs.report.json", stl / "nope.json"}, cmp.string(), out, err),
              app::kValidation);
    EXPECT_NE(err.str().find("nope.json"), std::string::npos);
    EXPECT_EQ(run("compare " + quote(mtl / "out" / "hs.report.json") + " " + quote(mtl / "out" / "emo.report.json") +
                  " --out " + quote(cmp)),
              2);
}

TEST(Cli, OutputRootEnvironmentOverride) {
    const auto dir = fresh_dir("env");
    const auto root = dir / "elsewhere";
    const auto cfg = write_synthetic_run(dir, "STL", 1);
    const std::string cmd =
        "HSMTL_OUTPUT_ROOT=" + quote(root) + " " + HSMTL_CLI_PATH + " train --config " + quote(cfg) + " >/dev/null 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(root / "model.ckpt"));
    EXPECT_FALSE(fs::exists(dir / "out"));
}
