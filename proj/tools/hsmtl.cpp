// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hsmtl/app.hpp"

int main(int argc, char** argv) {
    CLI::App cli{"Multi-task abusive-language classifier with a shared transformer encoder"};
    cli.require_subcommand(1);

    std::string config;
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    auto* train = cli.add_subcommand("train", "Train STL or MTL models from a run config");
    train->add_option("--config", config, "Run config (JSON)")->required();
    auto* seed_opt = train->add_option("--seed", seed, "Override training.seed");
    auto* epochs_opt = train->add_option("--epochs", epochs, "Override training.epochs");

    std::string checkpoint, data, task, out_dir;
    auto* eval = cli.add_subcommand("eval", "Evaluate a checkpoint on a labelled CSV");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
    eval->add_option("--data", data, "CSV with the task's text and label columns")->required();
    eval->add_option("--task", task, "Task name")->required();
    eval->add_option("--out", out_dir, "Output directory");

    std::vector<std::string> reports;
    std::string compare_out;
    auto* compare = cli.add_subcommand("compare", "Compare report JSON files of one task");
    compare->add_option("reports", reports, "Report files")->required();
    compare->add_option("--out", compare_out, "Output directory");

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = cli.exit(e);
        return rc == 0 ? 0 : hsmtl::app::kValidation;
    }

    if (*train) {
        hsmtl::app::TrainOverrides ov;
        if (*seed_opt) ov.seed = seed;
        if (*epochs_opt) ov.epochs = epochs;
        return hsmtl::app::cmd_train(config, ov);
    }
    if (*eval) return hsmtl::app::cmd_eval(checkpoint, data, task, out_dir);
    std::vector<std::filesystem::path> paths(reports.begin(), reports.end());
    return hsmtl::app::cmd_compare(paths, compare_out);
}
