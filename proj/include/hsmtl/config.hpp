// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "hsmtl/multitask.hpp"
#include "json.hpp"

namespace hsmtl {

struct TaskConfig {
    std::string name;
    TaskRole role = TaskRole::Main;
    std::vector<std::string> labels;
    std::string train_path;
    std::string val_path;
    std::string text_column = "text";
    std::string label_column = "label";
    bool pre_split = false;

    TaskSpec spec() const {
        return TaskSpec{name, labels, role, DatasetBinding{train_path, val_path, {text_column, label_column}, pre_split}};
    }
};

struct TrainingConfig {
    TrainMode mode = TrainMode::MTL;
    std::size_t epochs = 3;
    std::size_t batch_size = 8;
    double lr = 1e-5;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    bool stratified = true;
    Sampler sampler = Sampler::Proportional;
    bool freeze_encoder = false;
};

/// One experiment: encoder shape, tasks with their data, and the training
/// block. Loaded from a JSON document; relative data paths resolve against
/// the document's directory.
struct RunConfig {
    std::string model_name;  // label used in reports; derived when empty
    EncoderConfig encoder;   // vocab_size is filled in after the vocabulary is built
    std::size_t vocab_min_frequency = 1;
    std::size_t vocab_max_size = 30000;
    std::vector<TaskConfig> tasks;
    TrainingConfig training;
    std::string output_dir = "runs/default";

    const TaskConfig& main_task() const {
        for (const auto& t : tasks)
            if (t.role == TaskRole::Main) return t;
        throw ConfigError("tasks: no task with role \"main\"");
    }

    std::string display_name() const {
        if (!model_name.empty()) return model_name;
        std::string s = training.mode == TrainMode::MTL ? "MTL(" : "STL(";
        bool first = true;
        for (const auto& t : tasks) {
            if (training.mode == TrainMode::STL && t.role != TaskRole::Main) continue;
            s += (first ? "" : "+") + t.name;
            first = false;
        }
        return s + ")";
    }
};

namespace detail {

class FieldReader {
public:
    FieldReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <typename U>
    U get(const std::string& key, U fallback) const {
        if (!j_.contains(key)) return fallback;
        return as<U>(key);
    }

    template <typename U>
    U required(const std::string& key) const {
        if (!j_.contains(key)) throw ConfigError(field(key) + ": required field missing");
        return as<U>(key);
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    template <typename U>
    U as(const std::string& key) const {
        try {
            return j_.at(key).get<U>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(field(key) + ": wrong type");
        }
    }

    const nlohmann::json& j_;
    std::string path_;
};

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    detail::FieldReader root(j, "");
    RunConfig c;
    c.model_name = root.get<std::string>("model_name", "");
    c.output_dir = root.get<std::string>("output_dir", c.output_dir);

    if (j.contains("encoder")) {
        detail::FieldReader e(j.at("encoder"), "encoder");
        c.encoder.d_model = e.get<std::size_t>("d_model", c.encoder.d_model);
        c.encoder.n_heads = e.get<std::size_t>("n_heads", c.encoder.n_heads);
        c.encoder.d_ff = e.get<std::size_t>("d_ff", c.encoder.d_ff);
        c.encoder.n_layers = e.get<std::size_t>("n_layers", c.encoder.n_layers);
        c.encoder.max_seq_len = e.get<std::size_t>("max_seq_len", c.encoder.max_seq_len);
        c.encoder.dropout_p = e.get<double>("dropout", c.encoder.dropout_p);
        c.encoder.layernorm_eps = e.get<double>("layernorm_eps", c.encoder.layernorm_eps);
        c.vocab_min_frequency = e.get<std::size_t>("vocab_min_frequency", c.vocab_min_frequency);
        c.vocab_max_size = e.get<std::size_t>("vocab_max_size", c.vocab_max_size);
    }

    if (!j.contains("tasks") || !j.at("tasks").is_array() || j.at("tasks").empty()) {
        throw ConfigError("tasks: at least one task is required");
    }
    for (std::size_t i = 0; i < j.at("tasks").size(); ++i) {
        const std::string path = "tasks[" + std::to_string(i) + "]";
        detail::FieldReader t(j.at("tasks")[i], path);
        TaskConfig tc;
        tc.name = t.required<std::string>("name");
        const auto role = t.get<std::string>("role", "main");
        if (role == "main") {
            tc.role = TaskRole::Main;
        } else if (role == "auxiliary") {
            tc.role = TaskRole::Auxiliary;
        } else {
            throw ConfigError(t.field("role") + ": expected \"main\" or \"auxiliary\", got \"" + role + "\"");
        }
        tc.labels = t.required<std::vector<std::string>>("labels");
        const auto C = t.get<std::size_t>("num_classes", tc.labels.size());
        if (C != tc.labels.size()) {
            throw ConfigError(t.field("num_classes") + ": " + std::to_string(C) + " but " +
                              std::to_string(tc.labels.size()) + " labels listed");
        }
        tc.train_path = t.required<std::string>("train");
        tc.val_path = t.get<std::string>("val", "");
        tc.text_column = t.get<std::string>("text_column", tc.text_column);
        tc.label_column = t.get<std::string>("label_column", tc.label_column);
        tc.pre_split = t.get<bool>("pre_split", !tc.val_path.empty());
        c.tasks.push_back(std::move(tc));
    }

    if (!j.contains("training")) throw ConfigError("training: required block missing");
    detail::FieldReader tr(j.at("training"), "training");
    const auto mode = tr.get<std::string>("mode", "MTL");
    if (mode == "MTL") {
        c.training.mode = TrainMode::MTL;
    } else if (mode == "STL") {
        c.training.mode = TrainMode::STL;
    } else {
        throw ConfigError("training.mode: expected \"MTL\" or \"STL\", got \"" + mode + "\"");
    }
    c.training.epochs = tr.get<std::size_t>("epochs", c.training.epochs);
    c.training.batch_size = tr.get<std::size_t>("batch_size", c.training.batch_size);
    c.training.lr = tr.get<double>("lr", c.training.lr);
    c.training.seed = tr.required<std::uint64_t>("seed");
    c.training.train_fraction = tr.get<double>("train_fraction", c.training.train_fraction);
    c.training.stratified = tr.get<bool>("stratified", c.training.stratified);
    const auto sampler = tr.get<std::string>("sampler", "proportional");
    if (sampler == "proportional") {
        c.training.sampler = Sampler::Proportional;
    } else if (sampler == "uniform") {
        c.training.sampler = Sampler::Uniform;
    } else {
        throw ConfigError("training.sampler: expected \"proportional\" or \"uniform\", got \"" + sampler + "\"");
    }
    c.training.freeze_encoder = tr.get<bool>("freeze_encoder", false);
    return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : c.tasks) {
        tasks.push_back({{"name", t.name},
                         {"role", std::string(to_string(t.role))},
                         {"labels", t.labels},
                         {"num_classes", t.labels.size()},
                         {"train", t.train_path},
                         {"val", t.val_path},
                         {"text_column", t.text_column},
                         {"label_column", t.label_column},
                         {"pre_split", t.pre_split}});
    }
    return {{"model_name", c.model_name},
            {"output_dir", c.output_dir},
            {"encoder",
             {{"d_model", c.encoder.d_model},
              {"n_heads", c.encoder.n_heads},
              {"d_ff", c.encoder.d_ff},
              {"n_layers", c.encoder.n_layers},
              {"max_seq_len", c.encoder.max_seq_len},
              {"dropout", c.encoder.dropout_p},
              {"layernorm_eps", c.encoder.layernorm_eps},
              {"vocab_min_frequency", c.vocab_min_frequency},
              {"vocab_max_size", c.vocab_max_size}}},
            {"tasks", std::move(tasks)},
            {"training",
             {{"mode", c.training.mode == TrainMode::MTL ? "MTL" : "STL"},
              {"epochs", c.training.epochs},
              {"batch_size", c.training.batch_size},
              {"lr", c.training.lr},
              {"seed", c.training.seed},
              {"train_fraction", c.training.train_fraction},
              {"stratified", c.training.stratified},
              {"sampler", c.training.sampler == Sampler::Proportional ? "proportional" : "uniform"},
              {"freeze_encoder", c.training.freeze_encoder}}}};
}

/// Semantic checks that need the whole document (and the filesystem).
inline void validate(const RunConfig& c, const std::filesystem::path& base_dir = {}) {
    std::vector<std::string> mains;
    for (std::size_t i = 0; i < c.tasks.size(); ++i) {
        const auto& t = c.tasks[i];
        const std::string path = "tasks[" + std::to_string(i) + "]";
        for (std::size_t k = 0; k < i; ++k)
            if (c.tasks[k].name == t.name) throw ConfigError(path + ".name: duplicate task name \"" + t.name + "\"");
        if (t.labels.size() < 2) throw ConfigError(path + ".labels: at least 2 labels required");
        if (t.role == TaskRole::Main) mains.push_back(path + ".role");
        if (t.pre_split && t.val_path.empty()) throw ConfigError(path + ".val: required when pre_split is true");
        for (auto [key, p] : {std::pair{"train", &t.train_path}, std::pair{"val", &t.val_path}}) {
            if (p->empty()) continue;
            std::filesystem::path fp(*p);
            if (fp.is_relative()) fp = base_dir / fp;
            if (!std::filesystem::is_regular_file(fp)) {
                throw ConfigError(path + "." + key + ": file not found: " + fp.string());
            }
        }
    }
    if (mains.empty()) throw ConfigError("tasks[].role: no task has role \"main\"");
    if (c.training.mode == TrainMode::STL && mains.size() != 1) {
        std::string fields;
        for (const auto& m : mains) fields += (fields.empty() ? "" : ", ") + m;
        throw ConfigError("tasks[].role: STL mode requires exactly one main task, found " +
                          std::to_string(mains.size()) + " (" + fields + ")");
    }
    if (c.training.epochs == 0) throw ConfigError("training.epochs: must be positive");
    if (c.training.batch_size == 0) throw ConfigError("training.batch_size: must be positive");
    if (!(c.training.lr > 0)) throw ConfigError("training.lr: must be positive");
    if (!(c.training.train_fraction > 0 && c.training.train_fraction < 1)) {
        throw ConfigError("training.train_fraction: must lie in (0, 1)");
    }
    auto enc = c.encoder;
    enc.vocab_size = Vocabulary::kReserved;
    enc.validate();
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config: '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

}  // namespace hsmtl
