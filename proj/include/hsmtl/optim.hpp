// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsmtl/tensor.hpp"

namespace hsmtl {

struct AdamOptions {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates for one parameter tensor. Each parameter
/// counts its own steps, so a head that only sees its own task's batches gets
/// bias correction for the number of updates it actually received.
template <typename T>
struct AdamState {
    std::uint64_t step_count = 0;
    std::vector<T> m;
    std::vector<T> v;
};

/// Bias-corrected Adam update of every tensor in `params`, then clears their
/// gradients. `states[i]` belongs to `params[i]` and is sized lazily.
template <typename T>
void adam_step(std::span<BasicTensor<T>> params, std::span<AdamState<T>> states,
               const AdamOptions& opt) {
    if (params.size() != states.size()) {
        throw StateError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(states.size()) + " optimizer states");
    }
    if (!(opt.lr > 0) || !(opt.beta1 > 0 && opt.beta1 < 1) || !(opt.beta2 > 0 && opt.beta2 < 1) ||
        !(opt.eps > 0)) {
        throw ParameterError("adam_step: invalid hyperparameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) {
            throw StateError("adam_step: parameter " + std::to_string(i) + " of shape " +
                             shape_str(params[i].shape()) + " has no gradient");
        }
    }
    const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        auto& st = states[i];
        if (st.m.size() != p.size()) {
            st.m.assign(p.size(), T(0));
            st.v.assign(p.size(), T(0));
        }
        ++st.step_count;
        const double t = static_cast<double>(st.step_count);
        const T bc1 = static_cast<T>(1.0 - std::pow(opt.beta1, t));
        const T bc2 = static_cast<T>(1.0 - std::pow(opt.beta2, t));
        const T lr = static_cast<T>(opt.lr), eps = static_cast<T>(opt.eps);
        auto& w = p.data();
        const auto& g = p.grad();
        for (std::size_t j = 0; j < w.size(); ++j) {
            st.m[j] = b1 * st.m[j] + (T(1) - b1) * g[j];
            st.v[j] = b2 * st.v[j] + (T(1) - b2) * g[j] * g[j];
            const T mhat = st.m[j] / bc1;
            const T vhat = st.v[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        p.zero_grad();
    }
}

}  // namespace hsmtl
