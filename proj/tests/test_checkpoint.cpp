// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <vector>

#include "hsmtl/checkpoint.hpp"
#include "test_support.hpp"

using namespace hsmtl;
using hsmtl::testing::task_spec;
using hsmtl::testing::toy_encoder_config;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "hsmtl_ckpt";
    fs::create_directories(dir);
    return dir / name;
}

MultitaskModel<float> trained_model() {
    MultitaskModel<float> m(init_encoder<float>(toy_encoder_config(), 3), AdamOptions{1e-3});
    m.register_task(task_spec("HS", 2), 4);
    m.register_task(task_spec("EMO", 7, TaskRole::Auxiliary), 5);
    std::mt19937_64 rng(0);
    hsmtl::testing::jitter_parameters(m, rng, 0.1);
    return m;
}

Batch probe_batch(const std::string& task) {
    Batch b;
    b.task = task;
    b.size = 2;
    b.seq_len = 4;
    b.ids = {2, 5, 6, 3, 2, 7, 3, 0};
    b.mask = {1, 1, 1, 1, 1, 1, 1, 0};
    b.labels = {0, 1};
    return b;
}

std::vector<TaskSpec> specs() { return {task_spec("HS", 2), task_spec("EMO", 7, TaskRole::Auxiliary)}; }

}  // namespace

TEST(Checkpoint, RoundTripForwardIsBitwiseIdentical) {
    auto m = trained_model();
    const auto path = scratch("roundtrip.ckpt");
    save_checkpoint(m, path);
    auto loaded = load_checkpoint<float>(path, m.config(), specs());
    for (const char* task : {"HS", "EMO"})
        EXPECT_EQ(loaded.forward_task(probe_batch(task)).data(), m.forward_task(probe_batch(task)).data()) << task;
    EXPECT_FALSE(fs::exists(fs::path(path) += ".tmp"));
}

TEST(Checkpoint, ExactSizeFromFormat) {
    auto m = trained_model();
    const auto path = scratch("size.ckpt");
    save_checkpoint(m, path);
    std::size_t expected = 8 + 4;
    for (const auto& [name, t] : m.named_parameters()) expected += 2 + name.size() + 1 + 8 * t.rank() + 4 * t.size();
    EXPECT_EQ(fs::file_size(path), expected);
    EXPECT_EQ(checkpoint_size(state_records(m)), expected);
}

TEST(Checkpoint, ByteLayoutOfASingleRecord) {
    std::vector<TensorRecord> recs{{"ab", {2}, {1.0f, -2.0f}}};
    const auto bytes = serialize_checkpoint(recs);
    const std::string expected = std::string("MTLCKPT1") + std::string("\x01\x00\x00\x00", 4) +
                                 std::string("\x02\x00", 2) + "ab" + std::string("\x01", 1) +
                                 std::string("\x02\x00\x00\x00\x00\x00\x00\x00", 8) +
                                 std::string("\x00\x00\x80\x3f", 4) + std::string("\x00\x00\x00\xc0", 4);
    EXPECT_EQ(bytes, expected);
    EXPECT_EQ(parse_checkpoint(bytes), recs);
}

TEST(Checkpoint, NamesAreNamespaced) {
    for (const auto& r : state_records(trained_model()))
        EXPECT_TRUE(r.name.starts_with("encoder.") || r.name.starts_with("head.HS.") || r.name.starts_with("head.EMO."))
            << r.name;
}

TEST(Checkpoint, EveryTruncationIsRejected) {
    const auto bytes = serialize_checkpoint(state_records(trained_model()));
    for (std::size_t cut = 0; cut < bytes.size(); cut += 97)
        EXPECT_THROW(parse_checkpoint(std::string_view(bytes).substr(0, cut)), CorruptCheckpoint) << cut;
    EXPECT_THROW(parse_checkpoint(bytes + "x"), CorruptCheckpoint);
}

TEST(Checkpoint, TruncatedFileLeavesModelUntouched) {
    auto m = trained_model();
    const auto path = scratch("trunc.ckpt");
    save_checkpoint(m, path);
    fs::resize_file(path, fs::file_size(path) - 10);
    auto target = trained_model();
    std::fill(target.head("HS").bias.data().begin(), target.head("HS").bias.data().end(), 7.0f);
    const auto before = target.head("HS").bias.data();
    EXPECT_THROW(load_state(target, read_checkpoint(path)), CorruptCheckpoint);
    EXPECT_EQ(target.head("HS").bias.data(), before);
    EXPECT_THROW(load_checkpoint<float>(path, m.config(), specs()), CorruptCheckpoint);
}

TEST(Checkpoint, ShapeMismatchNamesTheFirstRecord) {
    auto m = trained_model();
    auto recs = state_records(m);
    recs[5].shape = {1, recs[5].values.size()};
    try {
        load_state(m, recs);
        FAIL();
    } catch (const CorruptCheckpoint& e) {
        EXPECT_NE(std::string(e.what()).find("record 5"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find(recs[5].name), std::string::npos);
    }
}

TEST(Checkpoint, BadMagicAndMissingFile) {
    EXPECT_THROW(parse_checkpoint("NOTACKPT\0\0\0\0"), CorruptCheckpoint);
    EXPECT_THROW(read_checkpoint(scratch("absent.ckpt")), IoError);
}
