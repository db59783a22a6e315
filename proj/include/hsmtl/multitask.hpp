// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hsmtl/encoder.hpp"
#include "hsmtl/metrics.hpp"
#include "hsmtl/optim.hpp"
#include "hsmtl/text.hpp"

namespace hsmtl {

enum class TaskRole { Main, Auxiliary };

inline std::string_view to_string(TaskRole r) { return r == TaskRole::Main ? "main" : "auxiliary"; }

/// Where a task's examples come from. `val_path` is used when the corpus
/// ships its own validation split; otherwise the train file is split.
struct DatasetBinding {
    std::string train_path;
    std::string val_path;
    CsvSchema schema;
    bool pre_split = false;
};

struct TaskSpec {
    std::string name;
    std::vector<std::string> label_names;
    TaskRole role = TaskRole::Main;
    DatasetBinding data;

    std::size_t num_classes() const { return label_names.size(); }

    void validate() const {
        if (name.empty()) throw RegistryError("task: empty name");
        if (label_names.size() < 2) {
            throw RegistryError("task '" + name + "': needs at least 2 labels, got " + std::to_string(label_names.size()));
        }
    }
};

/// Task-specific linear layer; softmax turns its logits into probabilities.
template <typename T>
struct TaskHead {
    BasicTensor<T> weight;  // [d_model x C]
    BasicTensor<T> bias;    // [C]
};

/// Padded, task-pure group of encoded examples, row-major [size x seq_len].
struct Batch {
    std::string task;
    std::size_t size = 0;
    std::size_t seq_len = 0;
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;
    std::vector<int> labels;

    bool operator==(const Batch&) const = default;
};

inline Batch collate(std::span<const EncodedExample* const> rows, const std::string& task) {
    Batch b;
    b.task = task;
    b.size = rows.size();
    b.seq_len = rows.empty() ? 0 : rows.front()->ids.size();
    for (const auto* r : rows) {
        if (r->ids.size() != b.seq_len) throw DimensionError("collate: ragged sequence lengths");
        b.ids.insert(b.ids.end(), r->ids.begin(), r->ids.end());
        b.mask.insert(b.mask.end(), r->mask.begin(), r->mask.end());
        b.labels.push_back(r->label);
    }
    return b;
}

/// One encoder shared by every registered task, one head per task, and Adam
/// state for all of it.
template <typename T = float>
class MultitaskModel {
public:
    explicit MultitaskModel(EncoderState<T> encoder, AdamOptions adam = {})
        : encoder_(std::move(encoder)), adam_(adam) {}

    const EncoderState<T>& encoder() const { return encoder_; }
    const EncoderConfig& config() const { return encoder_.config; }

    AdamOptions& adam() { return adam_; }
    const AdamOptions& adam() const { return adam_; }

    /// When set, steps leave encoder weights untouched and update heads only.
    bool freeze_encoder = false;

    /// Adds a head for `spec`: weight ~ N(0, 0.02), bias 0.
    void register_task(const TaskSpec& spec, std::uint64_t seed) {
        spec.validate();
        if (has_task(spec.name)) throw RegistryError("task '" + spec.name + "' is already registered");
        std::mt19937_64 rng(seed);
        TaskHead<T> head;
        head.weight = detail::normal_param<T>({config().d_model, spec.num_classes()}, rng, 0.02);
        head.bias = detail::const_param<T>({spec.num_classes()}, T(0));
        specs_.push_back(spec);
        heads_.push_back(std::move(head));
    }

    bool has_task(std::string_view name) const { return find(name).has_value(); }

    const TaskSpec& task(std::string_view name) const { return specs_[index_of(name)]; }
    const std::vector<TaskSpec>& tasks() const { return specs_; }
    const TaskHead<T>& head(std::string_view name) const { return heads_[index_of(name)]; }
    TaskHead<T>& head(std::string_view name) { return heads_[index_of(name)]; }

    /// encode -> CLS pooling -> affine head -> softmax, giving [B x C].
    BasicTensor<T> forward_task(const Batch& batch, bool training, std::mt19937_64& rng) const {
        const auto& h = heads_[index_of(batch.task)];
        auto hidden = encode_batch<T>(batch.ids, batch.mask, batch.size, batch.seq_len, encoder_, training, rng);
        return softmax(linear(pool_cls(hidden), h.weight, h.bias));
    }

    BasicTensor<T> forward_task(const Batch& batch) const {
        std::mt19937_64 unused(0);
        return forward_task(batch, false, unused);
    }

    /// One optimisation step on a single task's batch. Only the encoder and
    /// the batch's own head are updated; other heads are not in the graph.
    double joint_step(const Batch& batch, std::mt19937_64& rng) {
        const std::size_t owner = index_of(batch.task);
        auto probs = forward_task(batch, true, rng);
        auto loss = cross_entropy(probs, std::span<const int>(batch.labels));
        loss.backward();

        std::vector<std::pair<std::string, BasicTensor<T>>> updated;
        if (freeze_encoder) {
            for (auto& t : encoder_.parameters()) t.zero_grad();
        } else {
            updated = encoder_.named_parameters();
        }
        updated.emplace_back(head_param_name(owner, "weight"), heads_[owner].weight);
        updated.emplace_back(head_param_name(owner, "bias"), heads_[owner].bias);

        std::vector<BasicTensor<T>> params;
        std::vector<AdamState<T>> states;
        params.reserve(updated.size());
        states.reserve(updated.size());
        for (auto& [name, t] : updated) {
            params.push_back(t);
            states.push_back(std::move(optim_[name]));
        }
        adam_step<T>(params, states, adam_);
        for (std::size_t i = 0; i < updated.size(); ++i) optim_[updated[i].first] = std::move(states[i]);
        return static_cast<double>(loss.item());
    }

    /// Encoder parameters followed by each head in registration order.
    std::vector<std::pair<std::string, BasicTensor<T>>> named_parameters() const {
        auto out = encoder_.named_parameters();
        for (std::size_t i = 0; i < heads_.size(); ++i) {
            out.emplace_back(head_param_name(i, "weight"), heads_[i].weight);
            out.emplace_back(head_param_name(i, "bias"), heads_[i].bias);
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (auto& [name, t] : named_parameters()) n += t.size();
        return n;
    }

    const AdamState<T>* optimizer_state(const std::string& param_name) const {
        auto it = optim_.find(param_name);
        return it == optim_.end() ? nullptr : &it->second;
    }

private:
    std::optional<std::size_t> find(std::string_view name) const {
        for (std::size_t i = 0; i < specs_.size(); ++i)
            if (specs_[i].name == name) return i;
        return std::nullopt;
    }

    std::size_t index_of(std::string_view name) const {
        auto i = find(name);
        if (!i) throw RegistryError("unknown task '" + std::string(name) + "'");
        return *i;
    }

    std::string head_param_name(std::size_t i, const char* what) const {
        return "head." + specs_[i].name + "." + what;
    }

    EncoderState<T> encoder_;
    std::vector<TaskSpec> specs_;
    std::vector<TaskHead<T>> heads_;
    AdamOptions adam_;
    std::unordered_map<std::string, AdamState<T>> optim_;
};

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::mt19937_64 seeded(std::initializer_list<std::uint64_t> parts) {
    std::vector<std::uint32_t> words;
    for (auto p : parts) {
        words.push_back(static_cast<std::uint32_t>(p));
        words.push_back(static_cast<std::uint32_t>(p >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

}  // namespace detail

/// Batches of one task's examples, reshuffled every epoch.
class TaskLoader {
public:
    TaskLoader(std::string task, std::vector<EncodedExample> examples, std::size_t batch_size)
        : task_(std::move(task)), examples_(std::move(examples)), batch_size_(batch_size) {
        if (batch_size_ == 0) throw ConfigError("loader: batch_size must be positive");
    }

    const std::string& task() const { return task_; }
    std::size_t size() const { return examples_.size(); }
    std::size_t num_batches() const { return (examples_.size() + batch_size_ - 1) / batch_size_; }

    /// The order depends only on (seed, epoch, task name), never on which
    /// other tasks share the loader.
    std::vector<Batch> epoch(std::uint64_t seed, std::uint64_t epoch_index) const {
        std::vector<const EncodedExample*> order;
        order.reserve(examples_.size());
        for (const auto& e : examples_) order.push_back(&e);
        auto rng = detail::seeded({seed, epoch_index, detail::fnv1a(task_)});
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<Batch> out;
        for (std::size_t i = 0; i < order.size(); i += batch_size_) {
            const std::size_t n = std::min(batch_size_, order.size() - i);
            out.push_back(collate(std::span<const EncodedExample* const>(order.data() + i, n), task_));
        }
        return out;
    }

private:
    std::string task_;
    std::vector<EncodedExample> examples_;
    std::size_t batch_size_;
};

enum class Sampler {
    // Shuffle the multiset of all task batches: tasks appear in proportion to
    // their batch counts throughout the epoch.
    Proportional,
    // Pick a task uniformly among those with batches left.
    Uniform,
};

/// Interleaves per-task loaders into one stream of task-tagged batches. An
/// epoch yields every batch of every task exactly once.
class MultitaskLoader {
public:
    MultitaskLoader(std::vector<TaskLoader> loaders, std::uint64_t seed, Sampler sampler = Sampler::Proportional)
        : loaders_(std::move(loaders)), seed_(seed), sampler_(sampler) {
        std::size_t total = 0;
        for (const auto& l : loaders_) total += l.num_batches();
        if (total == 0) throw DataError("multitask loader: every task loader is empty");
    }

    const std::vector<TaskLoader>& loaders() const { return loaders_; }

    std::size_t batches_per_epoch() const {
        std::size_t n = 0;
        for (const auto& l : loaders_) n += l.num_batches();
        return n;
    }

    /// Sequence of loader indices for one epoch.
    std::vector<std::size_t> schedule(std::uint64_t epoch_index) const {
        auto rng = detail::seeded({seed_, epoch_index, 0x6d756c7469ull});
        std::vector<std::size_t> order;
        if (sampler_ == Sampler::Proportional) {
            for (std::size_t t = 0; t < loaders_.size(); ++t) order.insert(order.end(), loaders_[t].num_batches(), t);
            std::shuffle(order.begin(), order.end(), rng);
            return order;
        }
        std::vector<std::size_t> left;
        for (const auto& l : loaders_) left.push_back(l.num_batches());
        for (;;) {
            std::vector<std::size_t> live;
            for (std::size_t t = 0; t < left.size(); ++t)
                if (left[t]) live.push_back(t);
            if (live.empty()) break;
            std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
            const std::size_t t = live[pick(rng)];
            --left[t];
            order.push_back(t);
        }
        return order;
    }

    std::vector<Batch> epoch(std::uint64_t epoch_index) const {
        std::vector<std::vector<Batch>> per_task;
        for (const auto& l : loaders_) per_task.push_back(l.epoch(seed_, epoch_index));
        std::vector<std::size_t> cursor(loaders_.size(), 0);
        std::vector<Batch> out;
        for (std::size_t t : schedule(epoch_index)) out.push_back(std::move(per_task[t][cursor[t]++]));
        return out;
    }

private:
    std::vector<TaskLoader> loaders_;
    std::uint64_t seed_;
    Sampler sampler_;
};

// ---------------------------------------------------------------------------
// Evaluation and inference
// ---------------------------------------------------------------------------

/// Index of the largest probability; ties go to the lowest index.
template <typename T>
int argmax_row(const T* row, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < n; ++c)
        if (row[c] > row[best]) best = c;
    return static_cast<int>(best);
}

template <typename T>
std::vector<int> predict_labels(const MultitaskModel<T>& model, const std::string& task,
                                const std::vector<EncodedExample>& examples, std::size_t batch_size = 8) {
    std::vector<int> out;
    out.reserve(examples.size());
    const std::size_t C = model.task(task).num_classes();
    for (std::size_t i = 0; i < examples.size(); i += batch_size) {
        std::vector<const EncodedExample*> rows;
        for (std::size_t j = i; j < std::min(examples.size(), i + batch_size); ++j) rows.push_back(&examples[j]);
        auto probs = model.forward_task(collate(rows, task));
        for (std::size_t r = 0; r < rows.size(); ++r) out.push_back(argmax_row(probs.data().data() + r * C, C));
    }
    return out;
}

template <typename T>
EvalReport evaluate(const MultitaskModel<T>& model, const std::string& task,
                    const std::vector<EncodedExample>& examples, std::size_t batch_size = 8) {
    const auto& spec = model.task(task);
    std::vector<int> truth;
    for (const auto& e : examples) truth.push_back(e.label);
    auto pred = predict_labels(model, task, examples, batch_size);
    auto report = scores(confusion(truth, pred, spec.num_classes(), spec.label_names));
    report.task = task;
    return report;
}

struct Prediction {
    bool rejected = false;  // nothing left after preprocessing
    std::string cleaned;
    int label = -1;
    std::vector<double> probabilities;
};

/// Serves any registered task from the one shared model.
template <typename T>
std::vector<Prediction> predict(const MultitaskModel<T>& model, const std::string& task,
                                const std::vector<std::string>& texts, const Vocabulary& vocab) {
    const auto& spec = model.task(task);
    const Lexicon lexicon = vocab.lexicon();
    PreprocessOptions opt;
    opt.lexicon = &lexicon;
    std::vector<Prediction> out;
    for (const auto& text : texts) {
        Prediction p;
        p.cleaned = preprocess(text, opt);
        if (p.cleaned.empty()) {
            p.rejected = true;
            out.push_back(std::move(p));
            continue;
        }
        auto enc = encode(p.cleaned, vocab, model.config().max_seq_len);
        const EncodedExample* row = &enc;
        auto probs = model.forward_task(collate(std::span<const EncodedExample* const>(&row, 1), task));
        p.probabilities.assign(probs.data().begin(), probs.data().end());
        p.label = argmax_row(probs.data().data(), spec.num_classes());
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class TrainMode { MTL, STL };

struct TaskData {
    std::string task;
    std::vector<EncodedExample> train;
    std::vector<EncodedExample> val;
};

template <typename T>
struct TrainOptions {
    std::size_t epochs = 3;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::MTL;
    Sampler sampler = Sampler::Proportional;
    // Task whose validation macro-F1 selects the retained weights.
    std::string main_task;
    bool restore_best = true;
    // Called after each epoch's bookkeeping; returning false stops training.
    std::function<bool(std::size_t epoch, const MultitaskModel<T>&)> on_epoch_end;
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::string task;
    double train_loss = 0;
    std::size_t steps = 0;
    std::optional<EvalReport> val;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_score = -1;
    // Validation reports of the retained weights, one per trained task.
    std::vector<EvalReport> final_reports;

    std::vector<double> losses(const std::string& task) const {
        std::vector<double> out;
        for (const auto& e : epochs)
            if (e.task == task) out.push_back(e.train_loss);
        return out;
    }
};

/// Joint training over a shared encoder. MTL interleaves batches of every
/// task in `data`; STL trains only `main_task`. After each epoch the main
/// task's validation macro-F1 is measured and the best weights are restored
/// at the end.
template <typename T>
TrainLog train(MultitaskModel<T>& model, const std::vector<TaskData>& data, const TrainOptions<T>& opt) {
    if (!model.has_task(opt.main_task)) throw ConfigError("train: main task '" + opt.main_task + "' is not registered");
    if (opt.epochs == 0) throw ConfigError("train: epochs must be positive");
    std::vector<const TaskData*> active;
    for (const auto& d : data) {
        if (!model.has_task(d.task)) throw ConfigError("train: data for unregistered task '" + d.task + "'");
        if (opt.mode == TrainMode::MTL || d.task == opt.main_task) active.push_back(&d);
    }
    if (active.empty()) throw ConfigError("train: no data for main task '" + opt.main_task + "'");

    std::vector<TaskLoader> loaders;
    for (const auto* d : active) loaders.emplace_back(d->task, d->train, opt.batch_size);
    MultitaskLoader loader(std::move(loaders), opt.seed, opt.sampler);
    auto dropout_rng = detail::seeded({opt.seed, 0x64726f70ull});

    const TaskData* main_data = nullptr;
    for (const auto* d : active)
        if (d->task == opt.main_task) main_data = d;

    auto params = model.named_parameters();
    std::vector<std::vector<T>> best_snapshot;

    TrainLog log;
    for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
        std::vector<double> loss_sum(active.size(), 0.0);
        std::vector<std::size_t> steps(active.size(), 0);
        for (const auto& batch : loader.epoch(epoch)) {
            const double loss = model.joint_step(batch, dropout_rng);
            for (std::size_t t = 0; t < active.size(); ++t) {
                if (active[t]->task == batch.task) {
                    loss_sum[t] += loss;
                    ++steps[t];
                }
            }
        }
        for (std::size_t t = 0; t < active.size(); ++t) {
            EpochRecord rec;
            rec.epoch = epoch;
            rec.task = active[t]->task;
            rec.steps = steps[t];
            rec.train_loss = steps[t] ? loss_sum[t] / static_cast<double>(steps[t]) : 0.0;
            if (!active[t]->val.empty()) rec.val = evaluate(model, active[t]->task, active[t]->val, opt.batch_size);
            log.epochs.push_back(std::move(rec));
        }
        // Without validation data for the main task, the latest epoch wins.
        double score = static_cast<double>(epoch);
        if (main_data && !main_data->val.empty()) {
            for (auto it = log.epochs.rbegin(); it != log.epochs.rend() && it->epoch == epoch; ++it)
                if (it->task == opt.main_task) score = it->val->metrics.f1_macro;
        }
        if (log.best_epoch == 0 || score > log.best_score) {
            log.best_epoch = epoch;
            log.best_score = score;
            best_snapshot.clear();
            for (auto& [name, t] : params) best_snapshot.push_back(t.data());
        }
        if (opt.on_epoch_end && !opt.on_epoch_end(epoch, model)) break;
    }
    if (opt.restore_best) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i].second.data() = best_snapshot[i];
    }
    for (const auto* d : active) {
        if (!d->val.empty()) log.final_reports.push_back(evaluate(model, d->task, d->val, opt.batch_size));
    }
    return log;
}

}  // namespace hsmtl
