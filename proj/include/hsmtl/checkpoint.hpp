// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "hsmtl/multitask.hpp"

namespace hsmtl {

// Layout, all integers little-endian:
//   "MTLCKPT1" | u32 tensor count | per tensor:
//   u16 name length | UTF-8 name | u8 rank | rank x u64 dims | numel x f32
inline constexpr std::string_view kCheckpointMagic = "MTLCKPT1";

struct TensorRecord {
    std::string name;
    Shape shape;
    std::vector<float> values;

    bool operator==(const TensorRecord&) const = default;
};

inline std::size_t checkpoint_size(const std::vector<TensorRecord>& records) {
    std::size_t n = kCheckpointMagic.size() + 4;
    for (const auto& r : records) n += 2 + r.name.size() + 1 + 8 * r.shape.size() + 4 * r.values.size();
    return n;
}

namespace detail {

template <typename U>
void put_le(std::string& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

    bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    template <typename U>
    U get_le() {
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    std::string_view take(std::size_t n) {
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const std::vector<TensorRecord>& records) {
    std::string out(kCheckpointMagic);
    out.reserve(checkpoint_size(records));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) {
        if (r.name.size() > 0xffff) throw IoError("checkpoint: tensor name too long: " + r.name.substr(0, 64));
        if (r.shape.size() > 0xff) throw IoError("checkpoint: rank too large for '" + r.name + "'");
        if (numel(r.shape) != r.values.size()) throw DimensionError("checkpoint: '" + r.name + "' shape/value mismatch");
        detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
        out += r.name;
        out.push_back(static_cast<char>(r.shape.size()));
        for (auto d : r.shape) detail::put_le<std::uint64_t>(out, d);
        for (float v : r.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

/// Parses a whole checkpoint image. Any defect raises CorruptCheckpoint
/// naming the first bad record; nothing is returned partially.
inline std::vector<TensorRecord> parse_checkpoint(std::string_view bytes) {
    if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
        throw CorruptCheckpoint("checkpoint: bad magic");
    }
    detail::ByteReader in(bytes.substr(kCheckpointMagic.size()));
    if (!in.has(4)) throw CorruptCheckpoint("checkpoint: truncated header");
    const auto count = in.get_le<std::uint32_t>();
    std::vector<TensorRecord> records;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto fail = [&](const std::string& what, const std::string& name) {
            throw CorruptCheckpoint("checkpoint: record " + std::to_string(i) +
                                    (name.empty() ? "" : " ('" + name + "')") + ": " + what);
        };
        TensorRecord r;
        if (!in.has(2)) fail("truncated name length", "");
        const auto name_len = in.get_le<std::uint16_t>();
        if (!in.has(name_len)) fail("truncated name", "");
        r.name = std::string(in.take(name_len));
        if (!in.has(1)) fail("truncated rank", r.name);
        const auto rank = in.get_le<std::uint8_t>();
        if (!in.has(8ull * rank)) fail("truncated dimensions", r.name);
        std::size_t n = 1;
        for (std::uint8_t k = 0; k < rank; ++k) {
            const auto d = in.get_le<std::uint64_t>();
            if (d != 0 && n > in.remaining() / d) fail("dimensions exceed file size", r.name);
            n *= d;
            r.shape.push_back(d);
        }
        if (!in.has(4 * n)) fail("truncated values", r.name);
        r.values.resize(n);
        for (auto& v : r.values) v = std::bit_cast<float>(in.get_le<std::uint32_t>());
        records.push_back(std::move(r));
    }
    if (in.remaining() != 0) throw CorruptCheckpoint("checkpoint: " + std::to_string(in.remaining()) + " trailing bytes");
    return records;
}

inline void write_checkpoint(const std::filesystem::path& path, const std::vector<TensorRecord>& records) {
    const std::string bytes = serialize_checkpoint(records);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::vector<TensorRecord> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

template <typename T>
std::vector<TensorRecord> state_records(const MultitaskModel<T>& model) {
    std::vector<TensorRecord> out;
    for (const auto& [name, t] : model.named_parameters()) {
        TensorRecord r{name, t.shape(), {}};
        r.values.reserve(t.size());
        for (T v : t.data()) r.values.push_back(static_cast<float>(v));
        out.push_back(std::move(r));
    }
    return out;
}

/// Copies checkpoint values into `model` after checking every record's name
/// and shape; on mismatch the model is left untouched.
template <typename T>
void load_state(MultitaskModel<T>& model, const std::vector<TensorRecord>& records) {
    auto params = model.named_parameters();
    if (records.size() != params.size()) {
        throw CorruptCheckpoint("checkpoint: holds " + std::to_string(records.size()) + " tensors, model expects " +
                                std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (records[i].name != params[i].first || records[i].shape != params[i].second.shape()) {
            throw CorruptCheckpoint("checkpoint: record " + std::to_string(i) + " ('" + records[i].name + "' " +
                                    shape_str(records[i].shape) + ") does not match '" + params[i].first + "' " +
                                    shape_str(params[i].second.shape()));
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& dst = params[i].second.data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(records[i].values[j]);
    }
}

template <typename T>
void save_checkpoint(const MultitaskModel<T>& model, const std::filesystem::path& path) {
    write_checkpoint(path, state_records(model));
}

/// Builds a model for `config` and `tasks` and fills it from `path`.
template <typename T = float>
MultitaskModel<T> load_checkpoint(const std::filesystem::path& path, const EncoderConfig& config,
                                  const std::vector<TaskSpec>& tasks) {
    auto records = read_checkpoint(path);
    MultitaskModel<T> model(init_encoder<T>(config, 0));
    for (const auto& spec : tasks) model.register_task(spec, 0);
    load_state(model, records);
    return model;
}

}  // namespace hsmtl
