// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hsmtl/tensor.hpp"

namespace hsmtl {

namespace detail {

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> values, const char* op,
                           std::vector<std::shared_ptr<Node<T>>> parents,
                           std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->op = op;
    bool track = std::any_of(parents.begin(), parents.end(),
                             [](const auto& p) { return p->requires_grad; });
    if (track) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    return BasicTensor<T>::from_node(std::move(node));
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

}  // namespace detail

/// C[m x n] = A[m x k] * B[k x n].
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                    "matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(m * n, T(0));
    const auto& A = a.data();
    const auto& B = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const T av = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
        }
    auto an = a.node(), bn = b.node();
    return detail::make_result<T>({m, n}, std::move(out), "matmul", {an, bn},
        [an, bn, m, k, n](Node<T>& self) {
            const auto& G = self.grad;
            if (an->requires_grad) {
                auto& dA = an->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        T acc = 0;
                        for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * bn->data[p * n + j];
                        dA[i * k + p] += acc;
                    }
            }
            if (bn->requires_grad) {
                auto& dB = bn->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const T av = an->data[i * k + p];
                        for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * G[i * n + j];
                    }
            }
        });
}

/// Batched product over the leading axis. With `transpose_b`, B is read as
/// [N x n x k] and multiplied as its per-batch transpose.
template <typename T>
BasicTensor<T> bmm(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_b = false) {
    detail::require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0),
                    "bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
    const std::size_t N = a.dim(0), m = a.dim(1), k = a.dim(2);
    const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
    detail::require((transpose_b ? b.dim(2) : b.dim(1)) == k,
                    "bmm: inner dimensions differ for " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
    // b_at(batch, p, j) is element (p, j) of the logical right operand.
    auto b_index = [=](std::size_t batch, std::size_t p, std::size_t j) {
        return transpose_b ? batch * n * k + j * k + p : batch * k * n + p * n + j;
    };
    std::vector<T> out(N * m * n, T(0));
    const auto& A = a.data();
    const auto& B = b.data();
    for (std::size_t s = 0; s < N; ++s)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const T av = A[s * m * k + i * k + p];
                for (std::size_t j = 0; j < n; ++j) out[s * m * n + i * n + j] += av * B[b_index(s, p, j)];
            }
    auto an = a.node(), bn = b.node();
    return detail::make_result<T>({N, m, n}, std::move(out), "bmm", {an, bn},
        [an, bn, N, m, k, n, b_index](Node<T>& self) {
            const auto& G = self.grad;
            if (an->requires_grad) {
                auto& dA = an->ensure_grad();
                for (std::size_t s = 0; s < N; ++s)
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            T acc = 0;
                            for (std::size_t j = 0; j < n; ++j)
                                acc += G[s * m * n + i * n + j] * bn->data[b_index(s, p, j)];
                            dA[s * m * k + i * k + p] += acc;
                        }
            }
            if (bn->requires_grad) {
                auto& dB = bn->ensure_grad();
                for (std::size_t s = 0; s < N; ++s)
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            const T av = an->data[s * m * k + i * k + p];
                            for (std::size_t j = 0; j < n; ++j)
                                dB[b_index(s, p, j)] += av * G[s * m * n + i * n + j];
                        }
            }
        });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    detail::require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) +
                                                " vs " + shape_str(b.shape()));
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result<T>(a.shape(), std::move(out), "add", {an, bn}, [an, bn](Node<T>& self) {
        for (auto* p : {an.get(), bn.get()}) {
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

/// Elementwise product.
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    detail::require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) +
                                                " vs " + shape_str(b.shape()));
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result<T>(a.shape(), std::move(out), "mul", {an, bn}, [an, bn](Node<T>& self) {
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
        }
    });
}

/// x[..., n] + bias[n], broadcast over every leading index.
template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
    detail::require(x.rank() >= 1 && bias.rank() == 1 && x.shape().back() == bias.dim(0),
                    "add_bias: shapes " + shape_str(x.shape()) + " and " + shape_str(bias.shape()));
    const std::size_t n = bias.dim(0);
    std::vector<T> out(x.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % n];
    auto xn = x.node(), bn = bias.node();
    return detail::make_result<T>(x.shape(), std::move(out), "add_bias", {xn, bn},
        [xn, bn, n](Node<T>& self) {
            if (xn->requires_grad) {
                auto& g = xn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
            }
        });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
    std::vector<T> out(x.data());
    for (auto& v : out) v *= factor;
    auto xn = x.node();
    return detail::make_result<T>(x.shape(), std::move(out), "scale", {xn}, [xn, factor](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
    T acc = 0;
    for (T v : x.data()) acc += v;
    auto xn = x.node();
    return detail::make_result<T>({1}, {acc}, "sum", {xn}, [xn](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
    detail::require(x.size() > 0, "mean: empty tensor");
    return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
    detail::require(numel(shape) == x.size(), "reshape: cannot view " + shape_str(x.shape()) +
                                                  " as " + shape_str(shape));
    auto xn = x.node();
    return detail::make_result<T>(std::move(shape), x.data(), "reshape", {xn}, [xn](Node<T>& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

/// [A, B, C, D] -> [A, C, B, D]. Splits/merges attention heads.
template <typename T>
BasicTensor<T> swap_axes12(const BasicTensor<T>& x) {
    detail::require(x.rank() == 4, "swap_axes12: rank-4 tensor required, got " + shape_str(x.shape()));
    const std::size_t A = x.dim(0), B = x.dim(1), C = x.dim(2), D = x.dim(3);
    std::vector<T> out(x.size());
    auto src = [=](std::size_t a, std::size_t b, std::size_t c) { return ((a * B + b) * C + c) * D; };
    auto dst = [=](std::size_t a, std::size_t b, std::size_t c) { return ((a * C + c) * B + b) * D; };
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c)
                std::copy_n(x.data().begin() + src(a, b, c), D, out.begin() + dst(a, b, c));
    auto xn = x.node();
    return detail::make_result<T>({A, C, B, D}, std::move(out), "swap_axes12", {xn},
        [xn, A, B, C, D, src, dst](Node<T>& self) {
            auto& g = xn->ensure_grad();
            for (std::size_t a = 0; a < A; ++a)
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t d = 0; d < D; ++d) g[src(a, b, c) + d] += self.grad[dst(a, b, c) + d];
        });
}

/// Softmax over the last axis, stabilised by subtracting the row maximum.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
    detail::require(logits.rank() >= 1 && logits.shape().back() >= 1,
                    "softmax: last dimension must be >= 1");
    const std::size_t C = logits.shape().back();
    const std::size_t rows = logits.size() / C;
    std::vector<T> out(logits.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = logits.data().data() + r * C;
        T* o = out.data() + r * C;
        const T mx = *std::max_element(in, in + C);
        T z = 0;
        for (std::size_t c = 0; c < C; ++c) z += (o[c] = std::exp(in[c] - mx));
        for (std::size_t c = 0; c < C; ++c) o[c] /= z;
    }
    auto ln = logits.node();
    auto result = detail::make_result<T>(logits.shape(), std::move(out), "softmax", {ln},
        [ln, C, rows](Node<T>& self) {
            auto& g = ln->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* p = self.data.data() + r * C;
                const T* dp = self.grad.data() + r * C;
                T dot = 0;
                for (std::size_t c = 0; c < C; ++c) dot += dp[c] * p[c];
                for (std::size_t c = 0; c < C; ++c) g[r * C + c] += p[c] * (dp[c] - dot);
            }
        });
    if (result.requires_grad()) result.node()->softmax_logits = ln;
    return result;
}

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean negative log-likelihood of `labels` under row-wise probabilities.
/// When `probs` came straight out of softmax the gradient is delivered to the
/// logits as (p - onehot) / B.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& probs, std::span<const int> labels) {
    detail::require(probs.rank() == 2 && probs.dim(0) == labels.size(),
                    "cross_entropy: probabilities " + shape_str(probs.shape()) + " vs " +
                        std::to_string(labels.size()) + " labels");
    const std::size_t B = probs.dim(0), C = probs.dim(1);
    for (std::size_t i = 0; i < B; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= C) {
            throw LabelError("cross_entropy: label " + std::to_string(labels[i]) + " at index " +
                             std::to_string(i) + " outside [0, " + std::to_string(C) + ")");
        }
    }
    detail::require(B > 0, "cross_entropy: empty batch");
    const T floor = static_cast<T>(kProbabilityFloor);
    T loss = 0;
    for (std::size_t i = 0; i < B; ++i) loss -= std::log(std::max(probs[i * C + labels[i]], floor));
    loss /= static_cast<T>(B);

    std::vector<int> y(labels.begin(), labels.end());
    auto pn = probs.node();
    if (auto logits = pn->softmax_logits) {
        return detail::make_result<T>({1}, {loss}, "softmax_cross_entropy", {logits},
            [logits, pn, y, B, C](Node<T>& self) {
                auto& g = logits->ensure_grad();
                const T up = self.grad[0] / static_cast<T>(B);
                for (std::size_t i = 0; i < B; ++i)
                    for (std::size_t c = 0; c < C; ++c) {
                        const T target = static_cast<std::size_t>(y[i]) == c ? T(1) : T(0);
                        g[i * C + c] += up * (pn->data[i * C + c] - target);
                    }
            });
    }
    return detail::make_result<T>({1}, {loss}, "cross_entropy", {pn}, [pn, y, B, C, floor](Node<T>& self) {
        auto& g = pn->ensure_grad();
        const T up = self.grad[0] / static_cast<T>(B);
        for (std::size_t i = 0; i < B; ++i) {
            const T p = pn->data[i * C + y[i]];
            if (p > floor) g[i * C + y[i]] -= up / p;
        }
    });
}

/// Per-row normalisation over the last axis followed by gamma * xhat + beta.
template <typename T>
BasicTensor<T> layernorm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, T eps) {
    detail::require(x.rank() >= 1 && gamma.rank() == 1 && beta.rank() == 1 &&
                        x.shape().back() == gamma.dim(0) && gamma.dim(0) == beta.dim(0) &&
                        gamma.dim(0) >= 1,
                    "layernorm: shapes " + shape_str(x.shape()) + ", " + shape_str(gamma.shape()) +
                        ", " + shape_str(beta.shape()));
    const std::size_t d = gamma.dim(0);
    const std::size_t rows = x.size() / d;
    std::vector<T> out(x.size()), xhat(x.size()), inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data().data() + r * d;
        T mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += in[j];
        mu /= static_cast<T>(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<T>(d);
        inv_std[r] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (in[j] - mu) * inv_std[r];
            out[r * d + j] = xhat[r * d + j] * gamma[j] + beta[j];
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return detail::make_result<T>(x.shape(), std::move(out), "layernorm", {xn, gn, bn},
        [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), d, rows](Node<T>& self) {
            const auto& G = self.grad;
            if (gn->requires_grad || bn->requires_grad) {
                auto& dg = gn->ensure_grad();
                auto& db = bn->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) {
                        dg[j] += G[r * d + j] * xhat[r * d + j];
                        db[j] += G[r * d + j];
                    }
            }
            if (!xn->requires_grad) return;
            auto& dx = xn->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                T mean_dxhat = 0, mean_dxhat_xhat = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    const T dxh = G[r * d + j] * gn->data[j];
                    mean_dxhat += dxh;
                    mean_dxhat_xhat += dxh * xhat[r * d + j];
                }
                mean_dxhat /= static_cast<T>(d);
                mean_dxhat_xhat /= static_cast<T>(d);
                for (std::size_t j = 0; j < d; ++j) {
                    const T dxh = G[r * d + j] * gn->data[j];
                    dx[r * d + j] += inv_std[r] * (dxh - mean_dxhat - xhat[r * d + j] * mean_dxhat_xhat);
                }
            }
        });
}

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T>
T gelu_value(T x) {
    const T k = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    return T(0.5) * x * (T(1) + std::tanh(k * (x + static_cast<T>(0.044715) * x * x * x)));
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(x[i]);
    auto xn = x.node();
    return detail::make_result<T>(x.shape(), std::move(out), "gelu", {xn}, [xn](Node<T>& self) {
        const T k = static_cast<T>(0.7978845608028654);
        const T c = static_cast<T>(0.044715);
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = xn->data[i];
            const T th = std::tanh(k * (v + c * v * v * v));
            const T dinner = k * (T(1) + T(3) * c * v * v);
            g[i] += self.grad[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * dinner);
        }
    });
}

/// Row lookup. Repeated ids accumulate into the same table row on backward.
template <typename T>
BasicTensor<T> embedding_gather(const BasicTensor<T>& table, std::span<const int> ids) {
    detail::require(table.rank() == 2, "embedding_gather: table must be 2-D, got " + shape_str(table.shape()));
    const std::size_t V = table.dim(0), d = table.dim(1);
    std::vector<T> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) {
            throw IndexError("embedding_gather: id " + std::to_string(ids[i]) + " at position " +
                             std::to_string(i) + " outside table of " + std::to_string(V) + " rows");
        }
        std::copy_n(table.data().begin() + ids[i] * d, d, out.begin() + i * d);
    }
    std::vector<int> rows(ids.begin(), ids.end());
    auto tn = table.node();
    return detail::make_result<T>({ids.size(), d}, std::move(out), "embedding_gather", {tn},
        [tn, rows = std::move(rows), d](Node<T>& self) {
            auto& g = tn->ensure_grad();
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t j = 0; j < d; ++j) g[rows[i] * d + j] += self.grad[i * d + j];
        });
}

/// Inverted dropout. Identity (same node, no copy) in eval mode or when p == 0.
template <typename T, typename Rng>
BasicTensor<T> dropout(const BasicTensor<T>& x, double p, bool training, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw ParameterError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) return x;
    std::bernoulli_distribution keep(1.0 - p);
    const T survivor_scale = static_cast<T>(1.0 / (1.0 - p));
    std::vector<T> mask(x.size()), out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = keep(rng) ? survivor_scale : T(0);
        out[i] = x[i] * mask[i];
    }
    auto xn = x.node();
    return detail::make_result<T>(x.shape(), std::move(out), "dropout", {xn},
        [xn, mask = std::move(mask)](Node<T>& self) {
            auto& g = xn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
        });
}

/// Sets scores of masked key positions to `fill`. `scores` is [B*H x Sq x Sk];
/// `key_mask` is [B x Sk] with 1 for real tokens and 0 for padding.
template <typename T>
BasicTensor<T> mask_keys(const BasicTensor<T>& scores, std::span<const std::uint8_t> key_mask,
                         std::size_t heads, T fill) {
    detail::require(scores.rank() == 3 && heads > 0 && scores.dim(0) % heads == 0 &&
                        key_mask.size() == (scores.dim(0) / heads) * scores.dim(2),
                    "mask_keys: scores " + shape_str(scores.shape()) + " incompatible with mask of " +
                        std::to_string(key_mask.size()) + " entries");
    const std::size_t N = scores.dim(0), Sq = scores.dim(1), Sk = scores.dim(2);
    std::vector<T> out(scores.data());
    std::vector<std::uint8_t> keep(N * Sq * Sk);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t q = 0; q < Sq; ++q)
            for (std::size_t k = 0; k < Sk; ++k) {
                const std::size_t i = (n * Sq + q) * Sk + k;
                keep[i] = key_mask[(n / heads) * Sk + k];
                if (!keep[i]) out[i] = fill;
            }
    auto sn = scores.node();
    return detail::make_result<T>(scores.shape(), std::move(out), "mask_keys", {sn},
        [sn, keep = std::move(keep)](Node<T>& self) {
            auto& g = sn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (keep[i]) g[i] += self.grad[i];
        });
}

/// hidden[B x S x d] -> hidden[:, position, :] as [B x d].
template <typename T>
BasicTensor<T> select_position(const BasicTensor<T>& hidden, std::size_t position) {
    detail::require(hidden.rank() == 3 && position < hidden.dim(1),
                    "select_position: position " + std::to_string(position) + " in " +
                        shape_str(hidden.shape()));
    const std::size_t B = hidden.dim(0), S = hidden.dim(1), d = hidden.dim(2);
    std::vector<T> out(B * d);
    for (std::size_t b = 0; b < B; ++b)
        std::copy_n(hidden.data().begin() + (b * S + position) * d, d, out.begin() + b * d);
    auto hn = hidden.node();
    return detail::make_result<T>({B, d}, std::move(out), "select_position", {hn},
        [hn, B, S, d, position](Node<T>& self) {
            auto& g = hn->ensure_grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t j = 0; j < d; ++j) g[(b * S + position) * d + j] += self.grad[b * d + j];
        });
}

/// x[..., k] * W[k x n] + b[n].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
    detail::require(x.rank() >= 1 && weight.rank() == 2 && x.shape().back() == weight.dim(0),
                    "linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
    const std::size_t k = weight.dim(0);
    Shape out_shape = x.shape();
    out_shape.back() = weight.dim(1);
    auto flat = x.rank() == 2 ? x : reshape(x, {x.size() / k, k});
    auto y = add_bias(matmul(flat, weight), bias);
    return x.rank() == 2 ? y : reshape(y, std::move(out_shape));
}

}  // namespace hsmtl
