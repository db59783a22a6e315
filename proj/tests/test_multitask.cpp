// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "hsmtl/multitask.hpp"
#include "test_support.hpp"

using namespace hsmtl;
using hsmtl::testing::task_spec;
using hsmtl::testing::toy_encoder_config;

namespace {

/// [CLS, a, b, SEP] rows whose label is a function of the first token.
std::vector<EncodedExample> toy_examples(const std::string& task, std::size_t n, std::size_t classes,
                                         std::uint64_t seed, std::size_t vocab = 12) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> tok(4, static_cast<int>(vocab) - 1);
    std::vector<EncodedExample> out;
    for (std::size_t i = 0; i < n; ++i) {
        EncodedExample e;
        const int a = tok(rng), b = tok(rng);
        e.ids = {Vocabulary::kCls, a, b, Vocabulary::kSep};
        e.mask = {1, 1, 1, 1};
        e.label = a % static_cast<int>(classes);
        e.task = task;
        out.push_back(std::move(e));
    }
    return out;
}

Batch batch_of(const std::vector<EncodedExample>& rows, const std::string& task) {
    std::vector<const EncodedExample*> ptrs;
    for (const auto& r : rows) ptrs.push_back(&r);
    return collate(ptrs, task);
}

template <typename T = float>
MultitaskModel<T> two_task_model(std::uint64_t seed, std::size_t emo_classes = 3) {
    MultitaskModel<T> m(init_encoder<T>(toy_encoder_config(), seed), AdamOptions{1e-3});
    m.register_task(task_spec("HS", 2), seed + 1);
    m.register_task(task_spec("EMO", emo_classes, TaskRole::Auxiliary), seed + 2);
    return m;
}

template <typename T>
std::map<std::string, std::vector<T>> snapshot(const MultitaskModel<T>& m) {
    std::map<std::string, std::vector<T>> out;
    for (const auto& [n, t] : m.named_parameters()) out[n] = t.data();
    return out;
}

}  // namespace

TEST(Registry, HeadShapesFollowClassCounts) {
    auto m = two_task_model(0, 7);
    EXPECT_EQ(m.head("HS").weight.shape(), (Shape{8, 2}));
    EXPECT_EQ(m.head("EMO").weight.shape(), (Shape{8, 7}));
    EXPECT_EQ(m.head("EMO").bias.shape(), (Shape{7}));
    for (float b : m.head("HS").bias.data()) EXPECT_EQ(b, 0.0f);
}

TEST(Registry, DuplicateAndInvalidSpecs) {
    auto m = two_task_model(0);
    EXPECT_THROW(m.register_task(task_spec("HS", 2), 9), RegistryError);
    EXPECT_THROW(m.register_task(task_spec("ONE", 1), 9), RegistryError);
    EXPECT_THROW(m.head("NOPE"), RegistryError);
}

TEST(Registry, ParameterCountIsEncoderPlusHeads) {
    auto m = two_task_model(0, 7);
    const std::size_t d = 8;
    EXPECT_EQ(m.parameter_count(), toy_encoder_config().parameter_count() + (d * 2 + 2) + (d * 7 + 7));
}

TEST(HardSharing, EveryHeadConsumesTheSameEncoderTensors) {
    auto m = two_task_model(3);
    auto rows = toy_examples("HS", 4, 2, 1);
    std::mt19937_64 r1(0), r2(0);
    auto hs = m.forward_task(batch_of(rows, "HS"), true, r1);
    auto emo = m.forward_task(batch_of(rows, "EMO"), true, r2);
    auto hs_leaves = graph_leaves(hs), emo_leaves = graph_leaves(emo);
    for (const auto& t : m.encoder().parameters()) {
        EXPECT_TRUE(hs_leaves.contains(t.id()));
        EXPECT_TRUE(emo_leaves.contains(t.id()));
    }
    EXPECT_TRUE(hs_leaves.contains(m.head("HS").weight.id()));
    EXPECT_FALSE(hs_leaves.contains(m.head("EMO").weight.id()));
    EXPECT_FALSE(emo_leaves.contains(m.head("HS").bias.id()));
}

TEST(ForwardTask, ZeroHeadGivesUniformProbabilities) {
    auto m = two_task_model(1, 7);
    std::fill(m.head("EMO").weight.data().begin(), m.head("EMO").weight.data().end(), 0.0f);
    auto rows = toy_examples("EMO", 8, 7, 2);
    auto p = m.forward_task(batch_of(rows, "EMO"));
    EXPECT_EQ(p.shape(), (Shape{8, 7}));
    for (float v : p.data()) EXPECT_NEAR(v, 1.0f / 7.0f, 1e-7);
}

TEST(ForwardTask, RowsSumToOneAndBiasShiftKeepsArgmax) {
    std::mt19937_64 rng(4);
    auto m = two_task_model(2, 3);
    hsmtl::testing::jitter_parameters(m, rng, 0.5);
    auto rows = toy_examples("EMO", 6, 3, 5);
    auto before = predict_labels(m, "EMO", rows);
    auto p = m.forward_task(batch_of(rows, "EMO"));
    for (std::size_t r = 0; r < 6; ++r) EXPECT_NEAR(p[r * 3] + p[r * 3 + 1] + p[r * 3 + 2], 1.0, 1e-6);
    for (auto& b : m.head("EMO").bias.data()) b += 3.25f;
    EXPECT_EQ(predict_labels(m, "EMO", rows), before);
}

TEST(ForwardTask, UnknownTaskAndRaggedBatch) {
    auto m = two_task_model(0);
    auto rows = toy_examples("X", 2, 2, 0);
    EXPECT_THROW(m.forward_task(batch_of(rows, "X")), RegistryError);
    rows[1].ids.push_back(0);
    EXPECT_THROW(batch_of(rows, "HS"), DimensionError);
}

TEST(Argmax, TiesGoToLowestIndex) {
    const float row[] = {0.25f, 0.5f, 0.5f, 0.25f};
    EXPECT_EQ(argmax_row(row, 4), 1);
    const float flat[] = {0.2f, 0.2f, 0.2f};
    EXPECT_EQ(argmax_row(flat, 3), 0);
}

TEST(Loader, CountsPerEpoch) {
    TaskLoader a("A", toy_examples("A", 16, 2, 0), 8), b("B", toy_examples("B", 45, 2, 1), 8);
    EXPECT_EQ(a.num_batches(), 2u);
    EXPECT_EQ(b.num_batches(), 6u);
    MultitaskLoader ml({a, b}, 11);
    for (std::uint64_t e = 1; e <= 1000; ++e) {
        auto epoch = ml.epoch(e);
        ASSERT_EQ(epoch.size(), 8u);
        ASSERT_EQ(std::count_if(epoch.begin(), epoch.end(), [](const Batch& x) { return x.task == "A"; }), 2);
        for (const auto& x : epoch) ASSERT_LE(x.size, 8u);
    }
}

TEST(Loader, FirstBatchFractionMatchesProportion) {
    TaskLoader a("A", toy_examples("A", 4, 2, 0), 4), b("B", toy_examples("B", 12, 2, 1), 4);
    MultitaskLoader ml({a, b}, 5);
    std::size_t a_first = 0;
    for (std::uint64_t e = 0; e < 10000; ++e) a_first += ml.schedule(e).front() == 0;
    EXPECT_NEAR(static_cast<double>(a_first) / 10000.0, 0.25, 0.02);
}

TEST(Loader, SingleTaskDegeneratesToItsOwnShuffle) {
    TaskLoader a("A", toy_examples("A", 21, 2, 0), 4);
    MultitaskLoader ml({a}, 8);
    EXPECT_EQ(ml.epoch(3), a.epoch(8, 3));
    EXPECT_NE(a.epoch(8, 3), a.epoch(8, 4));
}

TEST(Loader, TaskOrderIndependentOfOtherTasks) {
    TaskLoader a("A", toy_examples("A", 20, 2, 0), 4), b("B", toy_examples("B", 9, 2, 1), 4);
    auto only_a = [](const std::vector<Batch>& v) {
        std::vector<Batch> out;
        for (const auto& x : v)
            if (x.task == "A") out.push_back(x);
        return out;
    };
    EXPECT_EQ(only_a(MultitaskLoader({a, b}, 2).epoch(1)), a.epoch(2, 1));
}

TEST(LoaderProperty, EpochVisitsEveryBatchOnce) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        std::uniform_int_distribution<std::size_t> n(0, 30), bs(1, 8);
        const std::size_t batch = bs(rng);
        std::vector<TaskLoader> loaders;
        std::multiset<std::vector<int>> expected;
        for (int t = 0; t < 3; ++t) {
            const std::string name = "T" + std::to_string(t);
            auto ex = toy_examples(name, n(rng) + (t == 0), 2, rng());
            for (const auto& e : ex) expected.insert(e.ids);
            loaders.emplace_back(name, ex, batch);
        }
        for (auto sampler : {Sampler::Proportional, Sampler::Uniform}) {
            MultitaskLoader ml(loaders, trial, sampler);
            std::multiset<std::vector<int>> seen;
            auto epoch = ml.epoch(1);
            ASSERT_EQ(epoch.size(), ml.batches_per_epoch());
            for (const auto& b : epoch)
                for (std::size_t r = 0; r < b.size; ++r)
                    seen.insert(std::vector<int>(b.ids.begin() + r * b.seq_len, b.ids.begin() + (r + 1) * b.seq_len));
            ASSERT_EQ(seen, expected);
        }
    }
}

TEST(Loader, AllEmptyIsADataError) {
    TaskLoader a("A", {}, 4);
    EXPECT_THROW(MultitaskLoader({a}, 0), DataError);
}

TEST(JointStep, OtherHeadsUntouchedAndEncoderMoves) {
    auto m = two_task_model(7);
    std::mt19937_64 rng(1);
    auto hs = toy_examples("HS", 8, 2, 3), emo = toy_examples("EMO", 8, 3, 4);
    for (int step = 0; step < 20; ++step) {
        const bool on_hs = rng() % 2 == 0;
        const std::string task = on_hs ? "HS" : "EMO", other = on_hs ? "EMO" : "HS";
        auto before = snapshot(m);
        const double loss = m.joint_step(batch_of(on_hs ? hs : emo, task), rng);
        ASSERT_GT(loss, 0.0);
        auto after = snapshot(m);
        EXPECT_EQ(after["head." + other + ".weight"], before["head." + other + ".weight"]);
        EXPECT_EQ(after["head." + other + ".bias"], before["head." + other + ".bias"]);
        EXPECT_NE(after["head." + task + ".weight"], before["head." + task + ".weight"]);
        bool encoder_changed = false;
        for (const auto& [name, v] : before)
            if (name.starts_with("encoder.") && after[name] != v) encoder_changed = true;
        EXPECT_TRUE(encoder_changed) << "step " << step << " on " << task;
        EXPECT_FALSE(m.head(other).weight.has_grad());
    }
}

TEST(JointStep, AdamStateIsPerParameter) {
    auto m = two_task_model(1);
    std::mt19937_64 rng(0);
    auto hs = toy_examples("HS", 8, 2, 3);
    m.joint_step(batch_of(hs, "HS"), rng);
    m.joint_step(batch_of(hs, "HS"), rng);
    ASSERT_NE(m.optimizer_state("head.HS.weight"), nullptr);
    EXPECT_EQ(m.optimizer_state("head.HS.weight")->step_count, 2u);
    EXPECT_EQ(m.optimizer_state("encoder.token_embedding")->step_count, 2u);
    EXPECT_EQ(m.optimizer_state("head.EMO.weight"), nullptr);
}

TEST(JointStep, FrozenEncoderOnlyMovesTheHead) {
    auto m = two_task_model(2);
    m.freeze_encoder = true;
    std::mt19937_64 rng(0);
    auto before = snapshot(m);
    m.joint_step(batch_of(toy_examples("HS", 8, 2, 3), "HS"), rng);
    auto after = snapshot(m);
    for (const auto& [name, v] : before)
        if (name.starts_with("encoder.")) EXPECT_EQ(after[name], v) << name;
    EXPECT_NE(after["head.HS.weight"], before["head.HS.weight"]);
}

// Adam at lr 1e-3 is not a descent method step by step: single steps can
// overshoot by a few hundredths at this scale. The trend is what is checked:
// 10-step window means never rise (beyond 1e-3), no step exceeds the
// starting loss, and the run ends lower than it began.
TEST(JointStep, RepeatedBatchLossTrendIsNonIncreasing) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto m = two_task_model<double>(seed);
        std::mt19937_64 rng(seed);
        auto batch = batch_of(toy_examples("HS", 8, 2, 100 + seed), "HS");
        std::vector<double> losses;
        for (int step = 0; step < 50; ++step) losses.push_back(m.joint_step(batch, rng));
        double prev_window = losses.front() + 1e-3;
        for (std::size_t w = 0; w < 5; ++w) {
            double mean = 0;
            for (std::size_t i = 0; i < 10; ++i) mean += losses[w * 10 + i] / 10.0;
            EXPECT_LE(mean, prev_window + 1e-3) << "seed " << seed << " window " << w;
            prev_window = mean;
        }
        for (double l : losses) EXPECT_LE(l, losses.front() + 1e-3) << "seed " << seed;
        EXPECT_LT(losses.back(), losses.front()) << "seed " << seed;
    }
}

namespace {

std::vector<TaskData> toy_data() {
    return {TaskData{"HS", toy_examples("HS", 24, 2, 1), toy_examples("HS", 10, 2, 2)},
            TaskData{"EMO", toy_examples("EMO", 40, 3, 3), toy_examples("EMO", 10, 3, 4)}};
}

TrainOptions<float> toy_options(TrainMode mode, std::size_t epochs = 3) {
    TrainOptions<float> o;
    o.epochs = epochs;
    o.batch_size = 8;
    o.seed = 17;
    o.mode = mode;
    o.main_task = "HS";
    return o;
}

}  // namespace

TEST(Train, LossSeriesPerMode) {
    auto data = toy_data();
    auto mtl = two_task_model(0);
    auto log = train(mtl, data, toy_options(TrainMode::MTL));
    EXPECT_EQ(log.losses("HS").size(), 3u);
    EXPECT_EQ(log.losses("EMO").size(), 3u);
    EXPECT_EQ(log.final_reports.size(), 2u);

    auto stl = two_task_model(0);
    auto slog = train(stl, data, toy_options(TrainMode::STL));
    EXPECT_EQ(slog.losses("HS").size(), 3u);
    EXPECT_TRUE(slog.losses("EMO").empty());
    EXPECT_EQ(slog.final_reports.size(), 1u);
}

TEST(Train, FixedSeedIsBitwiseReproducible) {
    auto data = toy_data();
    auto a = two_task_model(0), b = two_task_model(0);
    auto la = train(a, data, toy_options(TrainMode::MTL));
    auto lb = train(b, data, toy_options(TrainMode::MTL));
    ASSERT_EQ(la.epochs.size(), lb.epochs.size());
    for (std::size_t i = 0; i < la.epochs.size(); ++i) {
        EXPECT_EQ(la.epochs[i].train_loss, lb.epochs[i].train_loss);
        EXPECT_EQ(la.epochs[i].val->confusion.counts, lb.epochs[i].val->confusion.counts);
    }
    EXPECT_EQ(snapshot(a), snapshot(b));
}

TEST(Train, SingleTaskMtlMatchesStl) {
    std::vector<TaskData> data{toy_data()[0]};
    auto make = [] {
        MultitaskModel<float> m(init_encoder<float>(toy_encoder_config(), 4), AdamOptions{1e-3});
        m.register_task(task_spec("HS", 2), 5);
        return m;
    };
    auto a = make(), b = make();
    auto la = train(a, data, toy_options(TrainMode::MTL, 4));
    auto lb = train(b, data, toy_options(TrainMode::STL, 4));
    EXPECT_EQ(la.losses("HS"), lb.losses("HS"));
    EXPECT_EQ(snapshot(a), snapshot(b));
}

TEST(Train, BestEpochWeightsAreRestored) {
    auto data = toy_data();
    auto m = two_task_model(1);
    auto log = train(m, data, toy_options(TrainMode::MTL, 5));
    ASSERT_GE(log.best_epoch, 1u);
    for (const auto& e : log.epochs)
        if (e.task == "HS") EXPECT_LE(e.val->metrics.f1_macro, log.best_score);
    EXPECT_EQ(evaluate(m, "HS", data[0].val).metrics.f1_macro, log.best_score);
}

TEST(Train, ConfigErrorsBeforeFirstStep) {
    auto data = toy_data();
    auto m = two_task_model(0);
    auto before = snapshot(m);
    auto opt = toy_options(TrainMode::MTL);
    opt.main_task = "NOPE";
    EXPECT_THROW(train(m, data, opt), ConfigError);
    opt = toy_options(TrainMode::MTL);
    opt.epochs = 0;
    EXPECT_THROW(train(m, data, opt), ConfigError);
    EXPECT_EQ(snapshot(m), before);
}

TEST(Predict, OneModelServesEveryTask) {
    std::vector<std::string> corpus{"good day to you", "bad day to me"};
    auto vocab = build_vocab(corpus, 1);
    auto c = toy_encoder_config(vocab.size());
    c.max_seq_len = 8;
    MultitaskModel<float> m(init_encoder<float>(c, 0));
    m.register_task(task_spec("HS", 2), 1);
    m.register_task(task_spec("EMO", 7, TaskRole::Auxiliary), 2);
    const std::vector<std::string> texts{"Good day!!", "ok", "bad bad day @user"};
    auto hs = predict(m, "HS", texts, vocab);
    auto emo = predict(m, "EMO", texts, vocab);
    ASSERT_EQ(hs.size(), 3u);
    EXPECT_TRUE(hs[1].rejected);
    EXPECT_EQ(hs[1].label, -1);
    EXPECT_EQ(hs[0].cleaned, "good day");
    EXPECT_EQ(emo[0].probabilities.size(), 7u);
    for (const auto& p : {hs[0], hs[2], emo[0], emo[2]}) {
        double total = 0;
        for (double q : p.probabilities) total += q;
        EXPECT_NEAR(total, 1.0, 1e-6);
    }
}

TEST(Predict, ZeroHeadPredictsClassZero) {
    std::vector<std::string> corpus{"alpha beta gamma"};
    auto vocab = build_vocab(corpus, 1);
    auto c = toy_encoder_config(vocab.size());
    MultitaskModel<float> m(init_encoder<float>(c, 0));
    m.register_task(task_spec("EMO", 7), 1);
    std::fill(m.head("EMO").weight.data().begin(), m.head("EMO").weight.data().end(), 0.0f);
    for (const auto& p : predict(m, "EMO", {"alpha beta", "gamma gamma beta"}, vocab)) EXPECT_EQ(p.label, 0);
}
