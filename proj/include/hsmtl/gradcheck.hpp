// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "hsmtl/tensor.hpp"

namespace hsmtl {

/// Compares autograd against central differences.
///
/// `f` is a nullary callable returning a scalar tensor; it must read the
/// tensors in `inputs` (which share storage with whatever `f` captured). Each
/// coordinate of each input is perturbed by +/-h in place and restored.
/// Returns max |a - n| / max(|a|, |n|, 1e-8) over all coordinates.
template <typename T, typename F>
double grad_check(F&& f, std::span<BasicTensor<T>> inputs, double h) {
    for (auto& x : inputs) {
        x.set_requires_grad(true);
        x.zero_grad();
    }
    f().backward();
    std::vector<std::vector<T>> analytic;
    analytic.reserve(inputs.size());
    for (auto& x : inputs) {
        analytic.push_back(x.has_grad() ? x.grad() : std::vector<T>(x.size(), T(0)));
        x.zero_grad();
    }

    double worst = 0.0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto& values = inputs[t].data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const T saved = values[i];
            values[i] = saved + static_cast<T>(h);
            const double up = static_cast<double>(f().item());
            values[i] = saved - static_cast<T>(h);
            const double down = static_cast<double>(f().item());
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = static_cast<double>(analytic[t][i]);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    for (auto& x : inputs) x.zero_grad();
    return worst;
}

}  // namespace hsmtl
