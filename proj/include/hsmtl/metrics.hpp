// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hsmtl/error.hpp"
#include "json.hpp"

namespace hsmtl {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::size_t num_classes = 0;
    std::vector<std::uint64_t> counts;
    std::vector<std::string> label_names;

    std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * num_classes + predicted]; }
    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (auto c : counts) n += c;
        return n;
    }
    bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix make_confusion(std::size_t num_classes, std::vector<std::string> label_names = {}) {
    ConfusionMatrix cm;
    cm.num_classes = num_classes;
    cm.counts.assign(num_classes * num_classes, 0);
    if (label_names.empty()) {
        for (std::size_t c = 0; c < num_classes; ++c) label_names.push_back(std::to_string(c));
    }
    if (label_names.size() != num_classes) throw LabelError("confusion: label name count differs from class count");
    cm.label_names = std::move(label_names);
    return cm;
}

inline ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t num_classes,
                                 std::vector<std::string> label_names = {}) {
    if (truth.size() != predicted.size()) {
        throw LabelError("confusion: " + std::to_string(truth.size()) + " true labels vs " +
                         std::to_string(predicted.size()) + " predictions");
    }
    auto cm = make_confusion(num_classes, std::move(label_names));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        for (int v : {truth[i], predicted[i]}) {
            if (v < 0 || static_cast<std::size_t>(v) >= num_classes) {
                throw LabelError("confusion: label " + std::to_string(v) + " at index " + std::to_string(i) +
                                 " outside [0, " + std::to_string(num_classes) + ")");
            }
        }
        ++cm.counts[static_cast<std::size_t>(truth[i]) * num_classes + static_cast<std::size_t>(predicted[i])];
    }
    return cm;
}

struct ClassScores {
    std::string label;
    double precision = 0, recall = 0, f1 = 0;
    std::uint64_t support = 0;
    // Zero denominators score 0 and raise these flags instead of producing NaN.
    bool precision_undefined = false;
    bool recall_undefined = false;
};

struct Metrics {
    double accuracy = 0;
    double precision = 0;  // macro
    double recall = 0;     // macro
    double f1_macro = 0;
    double f1_weighted = 0;
};

struct EvalReport {
    std::string task;
    std::string model;
    ConfusionMatrix confusion;
    Metrics metrics;
    std::vector<ClassScores> per_class;
};

/// Accuracy, macro precision/recall, macro and support-weighted F1.
inline EvalReport scores(const ConfusionMatrix& cm) {
    const std::uint64_t n = cm.total();
    if (n == 0) throw EvaluationError("scores: confusion matrix is empty");
    const std::size_t C = cm.num_classes;
    EvalReport r;
    r.confusion = cm;
    std::uint64_t trace = 0;
    for (std::size_t c = 0; c < C; ++c) {
        std::uint64_t tp = cm.at(c, c), predicted = 0, actual = 0;
        for (std::size_t k = 0; k < C; ++k) {
            predicted += cm.at(k, c);
            actual += cm.at(c, k);
        }
        trace += tp;
        ClassScores s;
        s.label = c < cm.label_names.size() ? cm.label_names[c] : std::to_string(c);
        s.support = actual;
        s.precision_undefined = predicted == 0;
        s.recall_undefined = actual == 0;
        s.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
        s.recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
        s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
        r.per_class.push_back(std::move(s));
    }
    const double N = static_cast<double>(n);
    r.metrics.accuracy = static_cast<double>(trace) / N;
    for (const auto& s : r.per_class) {
        r.metrics.precision += s.precision / static_cast<double>(C);
        r.metrics.recall += s.recall / static_cast<double>(C);
        r.metrics.f1_macro += s.f1 / static_cast<double>(C);
        r.metrics.f1_weighted += static_cast<double>(s.support) / N * s.f1;
    }
    return r;
}

struct NormalizedMatrix {
    std::vector<std::vector<double>> rows;
    std::vector<bool> empty_rows;  // rows with no examples are all zeros
};

/// Each row divided by its total, i.e. the per-true-class prediction rates
/// shown as percentages in error-analysis plots.
inline NormalizedMatrix normalized_rows(const ConfusionMatrix& cm) {
    NormalizedMatrix out;
    const std::size_t C = cm.num_classes;
    for (std::size_t t = 0; t < C; ++t) {
        std::uint64_t total = 0;
        for (std::size_t p = 0; p < C; ++p) total += cm.at(t, p);
        std::vector<double> row(C, 0.0);
        if (total) {
            for (std::size_t p = 0; p < C; ++p) row[p] = static_cast<double>(cm.at(t, p)) / static_cast<double>(total);
        }
        out.rows.push_back(std::move(row));
        out.empty_rows.push_back(total == 0);
    }
    return out;
}

inline std::string confusion_csv(const ConfusionMatrix& cm) {
    std::ostringstream os;
    os << "true\\predicted";
    for (const auto& l : cm.label_names) os << ',' << l;
    os << '\n';
    for (std::size_t t = 0; t < cm.num_classes; ++t) {
        os << cm.label_names[t];
        for (std::size_t p = 0; p < cm.num_classes; ++p) os << ',' << cm.at(t, p);
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------

inline nlohmann::json metrics_json(const Metrics& m) {
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1_macro", m.f1_macro},
            {"f1_weighted", m.f1_weighted}};
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& s : r.per_class) {
        per_class.push_back({{"label", s.label},
                             {"precision", s.precision},
                             {"recall", s.recall},
                             {"f1", s.f1},
                             {"support", s.support},
                             {"precision_undefined", s.precision_undefined},
                             {"recall_undefined", s.recall_undefined}});
    }
    nlohmann::json confusion = nlohmann::json::array();
    for (std::size_t t = 0; t < r.confusion.num_classes; ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t p = 0; p < r.confusion.num_classes; ++p) row.push_back(r.confusion.at(t, p));
        confusion.push_back(std::move(row));
    }
    return {{"task", r.task},
            {"model", r.model},
            {"labels", r.confusion.label_names},
            {"metrics", metrics_json(r.metrics)},
            {"per_class", std::move(per_class)},
            {"confusion", std::move(confusion)},
            {"normalized", normalized_rows(r.confusion).rows}};
}

/// Inverse of to_json. Scores are recomputed from the stored confusion
/// matrix, so a report cannot carry metrics inconsistent with its counts.
inline EvalReport report_from_json(const nlohmann::json& j) {
    try {
        const auto& rows = j.at("confusion");
        auto cm = make_confusion(rows.size(), j.at("labels").get<std::vector<std::string>>());
        for (std::size_t t = 0; t < rows.size(); ++t) {
            if (rows[t].size() != rows.size()) throw SchemaError("report: confusion matrix is not square");
            for (std::size_t p = 0; p < rows.size(); ++p) cm.counts[t * rows.size() + p] = rows[t][p].get<std::uint64_t>();
        }
        auto r = scores(cm);
        r.task = j.at("task").get<std::string>();
        r.model = j.value("model", std::string{});
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("report: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Model comparison
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& metric_columns() {
    static const std::vector<std::string> cols{"Acc.", "Pr.", "Recall", "F1(m)", "F1(w)"};
    return cols;
}

inline std::vector<double> metric_row(const Metrics& m) {
    return {m.accuracy, m.precision, m.recall, m.f1_macro, m.f1_weighted};
}

struct ComparisonRow {
    std::string model;
    std::string task;
    std::vector<double> values;  // in metric_columns() order
};

struct ComparisonReport {
    std::vector<EvalReport> reports;

    std::vector<ComparisonRow> rows() const {
        std::vector<ComparisonRow> out;
        for (const auto& r : reports) out.push_back({r.model, r.task, metric_row(r.metrics)});
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json table = nlohmann::json::array();
        nlohmann::json models = nlohmann::json::array();
        for (const auto& r : reports) {
            nlohmann::json row{{"model", r.model}, {"task", r.task}};
            const auto vals = metric_row(r.metrics);
            for (std::size_t i = 0; i < vals.size(); ++i) row[metric_columns()[i]] = vals[i];
            table.push_back(std::move(row));
            models.push_back(hsmtl::to_json(r));
        }
        return {{"columns", metric_columns()}, {"table", std::move(table)}, {"reports", std::move(models)}};
    }

    /// Pipe-delimited table (4 decimals) followed by each model's
    /// row-normalised confusion matrix in percent.
    std::string to_text() const {
        std::size_t model_w = 5, task_w = 4;
        for (const auto& r : reports) {
            model_w = std::max(model_w, r.model.size());
            task_w = std::max(task_w, r.task.size());
        }
        std::ostringstream os;
        os << "| " << std::left << std::setw(static_cast<int>(model_w)) << "Model" << " | "
           << std::setw(static_cast<int>(task_w)) << "Task";
        for (const auto& c : metric_columns()) os << " | " << std::setw(6) << c;
        os << " |\n";
        for (const auto& r : reports) {
            os << "| " << std::left << std::setw(static_cast<int>(model_w)) << r.model << " | "
               << std::setw(static_cast<int>(task_w)) << r.task;
            for (double v : metric_row(r.metrics)) os << " | " << std::fixed << std::setprecision(4) << v;
            os << " |\n";
        }
        for (const auto& r : reports) {
            os << "\n" << r.model << " / " << r.task << " confusion (row %, true x predicted)\n";
            const auto norm = normalized_rows(r.confusion);
            for (std::size_t t = 0; t < norm.rows.size(); ++t) {
                os << "  " << std::left << std::setw(12) << r.confusion.label_names[t];
                for (double v : norm.rows[t]) os << std::right << std::setw(9) << std::fixed << std::setprecision(2) << 100.0 * v;
                if (norm.empty_rows[t]) os << "  (no examples)";
                os << '\n';
            }
        }
        return os.str();
    }
};

inline ComparisonReport comparison_report(std::vector<EvalReport> reports) {
    if (reports.empty()) throw EvaluationError("comparison_report: no reports given");
    return ComparisonReport{std::move(reports)};
}

/// Reads the metric table back out of ComparisonReport::to_text().
inline std::vector<ComparisonRow> parse_comparison_text(const std::string& text) {
    std::vector<ComparisonRow> rows;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (!line.starts_with("|")) {
            if (header_seen) break;
            continue;
        }
        std::vector<std::string> cells;
        std::size_t start = 1;
        for (std::size_t bar; (bar = line.find('|', start)) != std::string::npos; start = bar + 1) {
            std::string cell = line.substr(start, bar - start);
            cell.erase(0, cell.find_first_not_of(' '));
            cell.erase(cell.find_last_not_of(' ') + 1);
            cells.push_back(std::move(cell));
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        if (cells.size() != 2 + metric_columns().size()) throw SchemaError("comparison table: malformed row");
        ComparisonRow row{cells[0], cells[1], {}};
        for (std::size_t i = 2; i < cells.size(); ++i) row.values.push_back(std::stod(cells[i]));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace hsmtl
