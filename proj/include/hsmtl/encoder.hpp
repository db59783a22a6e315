// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hsmtl/ops.hpp"

namespace hsmtl {

/// Shape of the shared encoder. Defaults are a desk-scale mini-BERT.
struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t n_layers = 2;
    std::size_t max_seq_len = 64;
    double dropout_p = 0.1;
    double layernorm_eps = 1e-5;

    bool operator==(const EncoderConfig&) const = default;

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("encoder config: " + m); };
        if (vocab_size == 0) fail("vocab_size must be positive");
        if (d_model == 0 || n_heads == 0 || d_ff == 0 || n_layers == 0) fail("dimensions must be positive");
        if (d_model % n_heads != 0) {
            fail("d_model (" + std::to_string(d_model) + ") not divisible by n_heads (" + std::to_string(n_heads) + ")");
        }
        if (max_seq_len < 3) fail("max_seq_len must be >= 3");
        if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail("dropout_p must lie in [0, 1)");
        if (!(layernorm_eps > 0.0)) fail("layernorm_eps must be positive");
    }

    /// Closed-form trainable parameter count.
    std::size_t parameter_count() const {
        const std::size_t d = d_model;
        const std::size_t per_layer = 4 * (d * d + d)          // q, k, v, o projections
                                      + (d * d_ff + d_ff)      // FFN in
                                      + (d_ff * d + d)         // FFN out
                                      + 4 * d;                 // two layernorms
        return vocab_size * d + max_seq_len * d + n_layers * per_layer;
    }
};

template <typename T>
struct EncoderLayer {
    BasicTensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    BasicTensor<T> w1, b1, w2, b2;
    BasicTensor<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

/// The shared hidden layers. Holds tensor handles; copying an EncoderState
/// aliases the same parameters.
template <typename T>
struct EncoderState {
    EncoderConfig config;
    BasicTensor<T> token_embedding;
    BasicTensor<T> position_embedding;
    std::vector<EncoderLayer<T>> layers;

    /// Parameters in a fixed order under unique "encoder." names.
    std::vector<std::pair<std::string, BasicTensor<T>>> named_parameters() const {
        std::vector<std::pair<std::string, BasicTensor<T>>> out{
            {"encoder.token_embedding", token_embedding},
            {"encoder.position_embedding", position_embedding},
        };
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& L = layers[l];
            const std::string p = "encoder.layer." + std::to_string(l) + ".";
            for (auto& [name, t] : std::initializer_list<std::pair<const char*, const BasicTensor<T>&>>{
                     {"attention.query.weight", L.wq}, {"attention.query.bias", L.bq},
                     {"attention.key.weight", L.wk},   {"attention.key.bias", L.bk},
                     {"attention.value.weight", L.wv}, {"attention.value.bias", L.bv},
                     {"attention.output.weight", L.wo}, {"attention.output.bias", L.bo},
                     {"attention.norm.gamma", L.ln1_gamma}, {"attention.norm.beta", L.ln1_beta},
                     {"ffn.in.weight", L.w1},  {"ffn.in.bias", L.b1},
                     {"ffn.out.weight", L.w2}, {"ffn.out.bias", L.b2},
                     {"ffn.norm.gamma", L.ln2_gamma}, {"ffn.norm.beta", L.ln2_beta}}) {
                out.emplace_back(p + name, t);
            }
        }
        return out;
    }

    std::vector<BasicTensor<T>> parameters() const {
        std::vector<BasicTensor<T>> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }
};

namespace detail {

template <typename T>
BasicTensor<T> normal_param(Shape shape, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    BasicTensor<T> t(std::move(shape), T(0), true);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
BasicTensor<T> const_param(Shape shape, T value) {
    return BasicTensor<T>(std::move(shape), value, true);
}

}  // namespace detail

/// Weights ~ N(0, 0.02), biases 0, layernorm gamma 1 / beta 0.
template <typename T = float>
EncoderState<T> init_encoder(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const std::size_t d = config.d_model, f = config.d_ff;
    constexpr double sd = 0.02;
    EncoderState<T> s;
    s.config = config;
    s.token_embedding = detail::normal_param<T>({config.vocab_size, d}, rng, sd);
    s.position_embedding = detail::normal_param<T>({config.max_seq_len, d}, rng, sd);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        EncoderLayer<T> L;
        L.wq = detail::normal_param<T>({d, d}, rng, sd);
        L.bq = detail::const_param<T>({d}, T(0));
        L.wk = detail::normal_param<T>({d, d}, rng, sd);
        L.bk = detail::const_param<T>({d}, T(0));
        L.wv = detail::normal_param<T>({d, d}, rng, sd);
        L.bv = detail::const_param<T>({d}, T(0));
        L.wo = detail::normal_param<T>({d, d}, rng, sd);
        L.bo = detail::const_param<T>({d}, T(0));
        L.w1 = detail::normal_param<T>({d, f}, rng, sd);
        L.b1 = detail::const_param<T>({f}, T(0));
        L.w2 = detail::normal_param<T>({f, d}, rng, sd);
        L.b2 = detail::const_param<T>({d}, T(0));
        L.ln1_gamma = detail::const_param<T>({d}, T(1));
        L.ln1_beta = detail::const_param<T>({d}, T(0));
        L.ln2_gamma = detail::const_param<T>({d}, T(1));
        L.ln2_beta = detail::const_param<T>({d}, T(0));
        s.layers.push_back(std::move(L));
    }
    return s;
}

inline constexpr double kMaskedScore = -1e9;

template <typename T>
struct AttentionOutput {
    BasicTensor<T> out;      // [B x S x d]
    BasicTensor<T> weights;  // [B*H x S x S], rows sum to 1
};

/// Multi-head scaled dot-product self-attention. `mask` is [B x S], 1 for
/// real tokens; padded keys get a score of -1e9 before the softmax.
template <typename T>
AttentionOutput<T> self_attention(const BasicTensor<T>& x, std::span<const std::uint8_t> mask,
                                  const EncoderLayer<T>& layer, std::size_t n_heads, double dropout_p,
                                  bool training, std::mt19937_64& rng) {
    if (x.rank() != 3) throw DimensionError("self_attention: input must be [B x S x d], got " + shape_str(x.shape()));
    const std::size_t B = x.dim(0), S = x.dim(1), d = x.dim(2);
    if (n_heads == 0 || d % n_heads != 0) throw DimensionError("self_attention: d_model not divisible by heads");
    if (mask.size() != B * S) {
        throw DimensionError("self_attention: mask has " + std::to_string(mask.size()) + " entries for input " +
                             shape_str(x.shape()));
    }
    const std::size_t H = n_heads, dh = d / H;
    // [B, S, d] -> [B*H, S, dh]
    auto split = [&](const BasicTensor<T>& t) {
        return reshape(swap_axes12(reshape(t, {B, S, H, dh})), {B * H, S, dh});
    };
    auto q = split(linear(x, layer.wq, layer.bq));
    auto k = split(linear(x, layer.wk, layer.bk));
    auto v = split(linear(x, layer.wv, layer.bv));
    auto scores = scale(bmm(q, k, /*transpose_b=*/true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
    auto weights = softmax(mask_keys(scores, mask, H, static_cast<T>(kMaskedScore)));
    auto attended = bmm(dropout(weights, dropout_p, training, rng), v);
    auto merged = reshape(swap_axes12(reshape(attended, {B, H, S, dh})), {B, S, d});
    return {linear(merged, layer.wo, layer.bo), weights};
}

/// Token + position embeddings through every post-norm transformer layer.
/// `ids` and `mask` are row-major [B x S].
template <typename T>
BasicTensor<T> encode_batch(std::span<const int> ids, std::span<const std::uint8_t> mask, std::size_t batch,
                            std::size_t seq_len, const EncoderState<T>& state, bool training,
                            std::mt19937_64& rng) {
    const auto& cfg = state.config;
    if (ids.size() != batch * seq_len || mask.size() != batch * seq_len) {
        throw DimensionError("encode: ids/mask sizes do not match batch " + std::to_string(batch) + " x " +
                             std::to_string(seq_len));
    }
    if (seq_len == 0 || seq_len > cfg.max_seq_len) {
        throw IndexError("encode: sequence length " + std::to_string(seq_len) + " exceeds max_seq_len " +
                         std::to_string(cfg.max_seq_len));
    }
    const std::size_t d = cfg.d_model;
    std::vector<int> positions(batch * seq_len);
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i % seq_len);
    auto x = add(embedding_gather(state.token_embedding, ids), embedding_gather(state.position_embedding,
                                                                               std::span<const int>(positions)));
    x = reshape(dropout(x, cfg.dropout_p, training, rng), {batch, seq_len, d});
    const T eps = static_cast<T>(cfg.layernorm_eps);
    for (const auto& layer : state.layers) {
        auto attn = self_attention(x, mask, layer, cfg.n_heads, cfg.dropout_p, training, rng).out;
        x = layernorm(add(x, dropout(attn, cfg.dropout_p, training, rng)), layer.ln1_gamma, layer.ln1_beta, eps);
        auto ff = linear(gelu(linear(x, layer.w1, layer.b1)), layer.w2, layer.b2);
        x = layernorm(add(x, dropout(ff, cfg.dropout_p, training, rng)), layer.ln2_gamma, layer.ln2_beta, eps);
    }
    return x;
}

/// Sentence representation: the hidden state at the CLS position.
template <typename T>
BasicTensor<T> pool_cls(const BasicTensor<T>& hidden) {
    return select_position(hidden, 0);
}

}  // namespace hsmtl
