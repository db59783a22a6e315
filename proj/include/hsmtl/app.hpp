// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hsmtl/checkpoint.hpp"
#include "hsmtl/config.hpp"
#include "hsmtl/metrics.hpp"
#include "hsmtl/multitask.hpp"
#include "hsmtl/text.hpp"
#include "json.hpp"

namespace hsmtl::app {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kRuntime = 1, kValidation = 2 };

inline constexpr const char* kOutputRootEnv = "HSMTL_OUTPUT_ROOT";

/// Output directory: an explicit choice wins, then the environment override,
/// then the fallback.
inline fs::path resolve_output_dir(const std::string& explicit_dir, const fs::path& fallback) {
    if (!explicit_dir.empty()) return explicit_dir;
    if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
    return fallback;
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << content;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// Report JSON, aligned text table and confusion CSV under `<stem>.*`.
inline void write_report_artifacts(const fs::path& dir, const std::string& stem, const EvalReport& report) {
    write_text(dir / (stem + ".report.json"), to_json(report).dump(2) + "\n");
    write_text(dir / (stem + ".report.txt"), comparison_report({report}).to_text());
    write_text(dir / (stem + ".confusion.csv"), confusion_csv(report.confusion));
}

inline nlohmann::json epoch_json(const EpochRecord& e) {
    nlohmann::json j{{"epoch", e.epoch}, {"task", e.task}, {"loss", e.train_loss}, {"steps", e.steps}};
    if (e.val) j["val"] = metrics_json(e.val->metrics);
    return j;
}

inline std::string train_log_jsonl(const TrainLog& log) {
    std::string out;
    for (const auto& e : log.epochs) out += epoch_json(e).dump() + "\n";
    for (const auto& r : log.final_reports) {
        out += nlohmann::json{{"final", true}, {"best_epoch", log.best_epoch}, {"task", r.task},
                              {"val", metrics_json(r.metrics)}}
                   .dump() +
               "\n";
    }
    return out;
}

/// Everything needed next to a checkpoint to rebuild and query the model.
struct CheckpointMeta {
    std::string model_name;
    EncoderConfig encoder;
    std::vector<TaskConfig> tasks;
    std::vector<std::string> vocab;

    nlohmann::json to_json() const {
        nlohmann::json t = nlohmann::json::array();
        for (const auto& tc : tasks) {
            t.push_back({{"name", tc.name},
                         {"role", std::string(hsmtl::to_string(tc.role))},
                         {"labels", tc.labels},
                         {"text_column", tc.text_column},
                         {"label_column", tc.label_column}});
        }
        return {{"model_name", model_name},
                {"encoder",
                 {{"vocab_size", encoder.vocab_size},
                  {"d_model", encoder.d_model},
                  {"n_heads", encoder.n_heads},
                  {"d_ff", encoder.d_ff},
                  {"n_layers", encoder.n_layers},
                  {"max_seq_len", encoder.max_seq_len},
                  {"dropout", encoder.dropout_p},
                  {"layernorm_eps", encoder.layernorm_eps}}},
                {"tasks", std::move(t)},
                {"vocab", vocab}};
    }

    static CheckpointMeta from_json(const nlohmann::json& j) {
        try {
            CheckpointMeta m;
            m.model_name = j.at("model_name").get<std::string>();
            const auto& e = j.at("encoder");
            m.encoder.vocab_size = e.at("vocab_size").get<std::size_t>();
            m.encoder.d_model = e.at("d_model").get<std::size_t>();
            m.encoder.n_heads = e.at("n_heads").get<std::size_t>();
            m.encoder.d_ff = e.at("d_ff").get<std::size_t>();
            m.encoder.n_layers = e.at("n_layers").get<std::size_t>();
            m.encoder.max_seq_len = e.at("max_seq_len").get<std::size_t>();
            m.encoder.dropout_p = e.at("dropout").get<double>();
            m.encoder.layernorm_eps = e.at("layernorm_eps").get<double>();
            for (const auto& t : j.at("tasks")) {
                TaskConfig tc;
                tc.name = t.at("name").get<std::string>();
                tc.role = t.at("role").get<std::string>() == "main" ? TaskRole::Main : TaskRole::Auxiliary;
                tc.labels = t.at("labels").get<std::vector<std::string>>();
                tc.text_column = t.at("text_column").get<std::string>();
                tc.label_column = t.at("label_column").get<std::string>();
                m.tasks.push_back(std::move(tc));
            }
            m.vocab = j.at("vocab").get<std::vector<std::string>>();
            return m;
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("checkpoint metadata: ") + e.what());
        }
    }
};

inline fs::path meta_path(const fs::path& checkpoint) {
    auto p = checkpoint;
    p += ".meta.json";
    return p;
}

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path fp(p);
    return fp.is_relative() ? base / fp : fp;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const SchemaError& e) {
        err << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const RegistryError& e) {
        err << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
}

inline std::vector<Example> clean(std::vector<Example> examples, const Lexicon& lexicon, std::size_t& dropped) {
    PreprocessOptions opt;
    opt.lexicon = &lexicon;
    std::vector<Example> out;
    for (auto& e : examples) {
        e.text = preprocess(e.text, opt);
        if (e.text.empty()) {
            ++dropped;
        } else {
            out.push_back(std::move(e));
        }
    }
    return out;
}

inline std::string val_csv(const std::vector<Example>& examples, const TaskConfig& task) {
    std::string out = csv_escape(task.text_column) + "," + csv_escape(task.label_column) + "\n";
    for (const auto& e : examples) out += csv_escape(e.text) + "," + csv_escape(task.labels[e.label]) + "\n";
    return out;
}

}  // namespace detail

struct TrainOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
};

/// Loads data, trains, and writes under the output directory:
/// model.ckpt (+ .meta.json), train_log.jsonl, and per task
/// <task>.report.{json,txt}, <task>.confusion.csv and <task>.val.csv.
inline int cmd_train(const fs::path& config_path, const TrainOverrides& overrides = {},
                     std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        RunConfig cfg = load_run_config(config_path);
        if (overrides.seed) cfg.training.seed = *overrides.seed;
        if (overrides.epochs) cfg.training.epochs = *overrides.epochs;
        const fs::path base = config_path.parent_path();
        validate(cfg, base);

        const fs::path out_dir = resolve_output_dir("", detail::resolve(base, cfg.output_dir));
        fs::create_directories(out_dir);

        std::vector<TaskConfig> active;
        for (const auto& t : cfg.tasks)
            if (cfg.training.mode == TrainMode::MTL || t.role == TaskRole::Main) active.push_back(t);
        const std::string main_task = cfg.main_task().name;

        struct Raw {
            std::vector<Example> train, val;
        };
        std::vector<Raw> raw;
        for (const auto& t : active) {
            auto load = [&](const std::string& p) {
                const fs::path path = detail::resolve(base, p);
                auto res = load_csv(path, {t.text_column, t.label_column}, t.labels, t.name);
                if (!res.rejected.empty()) {
                    write_rejects(out_dir / (path.stem().string() + ".rejects.txt"), res);
                    out << t.name << ": rejected " << res.rejected.size() << " row(s) from " << path.string() << "\n";
                }
                return std::move(res.examples);
            };
            Raw r;
            r.train = load(t.train_path);
            if (t.pre_split) r.val = load(t.val_path);
            raw.push_back(std::move(r));
        }

        std::vector<std::string> corpus;
        for (const auto& r : raw)
            for (const auto& e : r.train) corpus.push_back(e.text);
        const Lexicon lexicon = harvest_lexicon(corpus);

        std::vector<Raw> cleaned;
        for (std::size_t i = 0; i < active.size(); ++i) {
            std::size_t dropped = 0;
            Raw c;
            auto train = detail::clean(std::move(raw[i].train), lexicon, dropped);
            if (active[i].pre_split) {
                c.train = std::move(train);
                c.val = detail::clean(std::move(raw[i].val), lexicon, dropped);
            } else {
                std::tie(c.train, c.val) =
                    split_train_val(train, cfg.training.train_fraction, cfg.training.seed, cfg.training.stratified);
            }
            if (dropped) out << active[i].name << ": dropped " << dropped << " text(s) shorter than 2 tokens\n";
            if (c.train.empty()) throw DataError(active[i].name + ": no training examples left");
            cleaned.push_back(std::move(c));
        }

        std::vector<std::string> train_texts;
        for (const auto& c : cleaned)
            for (const auto& e : c.train) train_texts.push_back(e.text);
        const Vocabulary vocab = build_vocab(train_texts, cfg.vocab_min_frequency, cfg.vocab_max_size);

        EncoderConfig enc = cfg.encoder;
        enc.vocab_size = vocab.size();
        MultitaskModel<float> model(init_encoder<float>(enc, cfg.training.seed),
                                    AdamOptions{cfg.training.lr, 0.9, 0.999, 1e-8});
        model.freeze_encoder = cfg.training.freeze_encoder;
        for (const auto& t : active) model.register_task(t.spec(), cfg.training.seed ^ hsmtl::detail::fnv1a(t.name));

        std::vector<TaskData> data;
        for (std::size_t i = 0; i < active.size(); ++i) {
            TaskData d{active[i].name, {}, {}};
            for (const auto& e : cleaned[i].train) d.train.push_back(encode(e, vocab, enc.max_seq_len));
            for (const auto& e : cleaned[i].val) d.val.push_back(encode(e, vocab, enc.max_seq_len));
            data.push_back(std::move(d));
        }

        TrainOptions<float> topt;
        topt.epochs = cfg.training.epochs;
        topt.batch_size = cfg.training.batch_size;
        topt.seed = cfg.training.seed;
        topt.mode = cfg.training.mode;
        topt.sampler = cfg.training.sampler;
        topt.main_task = main_task;
        TrainLog log = train(model, data, topt);

        const std::string model_name = cfg.display_name();
        save_checkpoint(model, out_dir / "model.ckpt");
        CheckpointMeta meta{model_name, enc, active, vocab.tokens()};
        write_text(meta_path(out_dir / "model.ckpt"), meta.to_json().dump(2) + "\n");
        write_text(out_dir / "train_log.jsonl", train_log_jsonl(log));
        for (std::size_t i = 0; i < active.size(); ++i) {
            write_text(out_dir / (lower(active[i].name) + ".val.csv"), detail::val_csv(cleaned[i].val, active[i]));
        }
        for (auto report : log.final_reports) {
            report.model = model_name;
            write_report_artifacts(out_dir, lower(report.task), report);
            out << report.task << ": acc " << report.metrics.accuracy << "  F1(m) " << report.metrics.f1_macro
                << "  F1(w) " << report.metrics.f1_weighted << "\n";
        }
        out << "best epoch " << log.best_epoch << "; artifacts in " << out_dir.string() << "\n";
        return static_cast<int>(kOk);
    });
}

/// Scores a checkpoint on a labelled CSV and writes <task>.eval.report.*.
inline int cmd_eval(const fs::path& checkpoint, const fs::path& data_path, const std::string& task,
                    const std::string& out_dir_flag = {}, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    return detail::guarded(err, [&]() -> int {
        if (!fs::is_regular_file(checkpoint)) throw ConfigError("--checkpoint: file not found: " + checkpoint.string());
        if (!fs::is_regular_file(meta_path(checkpoint))) {
            throw ConfigError("--checkpoint: metadata not found: " + meta_path(checkpoint).string());
        }
        if (!fs::is_regular_file(data_path)) throw ConfigError("--data: file not found: " + data_path.string());
        const auto meta = CheckpointMeta::from_json(nlohmann::json::parse(read_text(meta_path(checkpoint))));
        auto it = std::find_if(meta.tasks.begin(), meta.tasks.end(), [&](const TaskConfig& t) { return t.name == task; });
        if (it == meta.tasks.end()) throw ConfigError("--task: checkpoint has no task \"" + task + "\"");

        std::vector<TaskSpec> specs;
        for (const auto& t : meta.tasks) specs.push_back(t.spec());
        auto model = load_checkpoint<float>(checkpoint, meta.encoder, specs);
        const auto vocab = Vocabulary::from_tokens(meta.vocab);

        auto loaded = load_csv(data_path, {it->text_column, it->label_column}, it->labels, task);
        if (!loaded.rejected.empty()) {
            throw SchemaError("--data: " + std::to_string(loaded.rejected.size()) + " row(s) carry labels outside task \"" +
                              task + "\" (first: row " + std::to_string(loaded.rejected.front().row) + ", \"" +
                              loaded.rejected.front().label + "\"); label mismatch");
        }
        const Lexicon lexicon = vocab.lexicon();
        std::size_t dropped = 0;
        auto examples = detail::clean(std::move(loaded.examples), lexicon, dropped);
        if (examples.empty()) throw DataError("--data: no usable examples");
        std::vector<EncodedExample> encoded;
        for (const auto& e : examples) encoded.push_back(encode(e, vocab, meta.encoder.max_seq_len));

        auto report = evaluate(model, task, encoded);
        report.model = meta.model_name;
        const fs::path dir = resolve_output_dir(out_dir_flag, checkpoint.parent_path() / "eval");
        fs::create_directories(dir);
        write_report_artifacts(dir, lower(task) + ".eval", report);
        if (dropped) out << "dropped " << dropped << " text(s) shorter than 2 tokens\n";
        out << comparison_report({report}).to_text();
        return kOk;
    });
}

/// Table of metric rows, one per report, plus normalised confusion matrices.
/// Writes comparison.json and comparison.txt.
inline int cmd_compare(const std::vector<fs::path>& reports, const std::string& out_dir_flag = {},
                       std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&]() -> int {
        if (reports.size() < 2) throw ConfigError("compare: at least 2 reports required");
        std::vector<EvalReport> loaded;
        for (const auto& p : reports) {
            if (!fs::is_regular_file(p)) throw ConfigError("compare: report not found: " + p.string());
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(read_text(p));
            } catch (const nlohmann::json::parse_error& e) {
                throw SchemaError("compare: '" + p.string() + "' is not JSON: " + e.what());
            }
            loaded.push_back(report_from_json(j));
            if (loaded.back().model.empty()) loaded.back().model = p.stem().string();
        }
        for (const auto& r : loaded) {
            if (r.task != loaded.front().task) {
                throw ConfigError("compare: mixed tasks \"" + loaded.front().task + "\" and \"" + r.task + "\"");
            }
        }
        const auto cmp = comparison_report(std::move(loaded));
        const fs::path dir = resolve_output_dir(out_dir_flag, fs::current_path());
        fs::create_directories(dir);
        write_text(dir / "comparison.json", cmp.to_json().dump(2) + "\n");
        write_text(dir / "comparison.txt", cmp.to_text());
        out << cmp.to_text();
        return kOk;
    });
}

}  // namespace hsmtl::app
