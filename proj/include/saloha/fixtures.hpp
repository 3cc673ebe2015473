// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "saloha/channel.hpp"

#include <array>
#include <vector>

namespace saloha::fixtures {

inline const std::vector<double>& fading_gains() {
    static const std::vector<double> g = {0.055, 0.074, 0.112, 0.153, 0.237,
                                          0.531, 0.894, 1.343, 2.588, 4.493};
    return g;
}

namespace detail {

// Tridiagonal row-major matrix from (sub, diag, super) triples.
inline std::vector<double> tridiagonal(const std::vector<std::array<double, 3>>& rows) {
    const int n = static_cast<int>(rows.size());
    std::vector<double> m(n * n, 0.0);
    for (int i = 0; i < n; ++i) {
        if (i > 0) m[i * n + i - 1] = rows[i][0];
        m[i * n + i] = rows[i][1];
        if (i < n - 1) m[i * n + i + 1] = rows[i][2];
    }
    return m;
}

} // namespace detail

/// Ten-state quantized Rayleigh fading model, slow variant. The middle rows
/// are exact thirds; the published table rounds them to two decimals, which is
/// recoverable from the row sums and the published stationary vector.
inline const FsmcChannel& fading_model_1() {
    static const FsmcChannel ch = [] {
        const double t = 1.0 / 3.0;
        return FsmcChannel(fading_gains(),
                           detail::tridiagonal({{0.0, 0.2, 0.8},
                                                {0.2, 0.3, 0.5},
                                                {0.25, 0.35, 0.4},
                                                {0.3, 0.3, 0.4},
                                                {t, t, t},
                                                {t, t, t},
                                                {0.4, 0.3, 0.3},
                                                {0.4, 0.35, 0.25},
                                                {0.5, 0.3, 0.2},
                                                {0.8, 0.2, 0.0}}));
    }();
    return ch;
}

/// Same gain alphabet with faster upward drift at the bottom; the middle rows
/// are thirds shifted by +/-0.04.
inline const FsmcChannel& fading_model_2() {
    static const FsmcChannel ch = [] {
        const double t = 1.0 / 3.0;
        return FsmcChannel(fading_gains(),
                           detail::tridiagonal({{0.0, 0.25, 0.75},
                                                {0.25, 0.3, 0.45},
                                                {0.3, 0.35, 0.35},
                                                {0.34, 0.3, 0.36},
                                                {t + 0.04, t, t - 0.04},
                                                {t + 0.04, t, t - 0.04},
                                                {0.36, 0.3, 0.34},
                                                {0.35, 0.35, 0.3},
                                                {0.45, 0.3, 0.25},
                                                {0.75, 0.25, 0.0}}));
    }();
    return ch;
}

/// Convex blend of the two bundled models (same gain alphabet), used to build
/// heterogeneous multi-user scenarios.
inline FsmcChannel blended_model(double w) {
    const auto& a = fading_model_1().transition();
    const auto& b = fading_model_2().transition();
    std::vector<double> m(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) m[i] = (1.0 - w) * a[i] + w * b[i];
    return FsmcChannel(fading_gains(), m);
}

/// Memoryless channel with the given stationary distribution (every row equal).
inline FsmcChannel iid_channel(std::vector<double> states, const std::vector<double>& pi) {
    const int n = static_cast<int>(states.size());
    std::vector<double> m(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m[i * n + j] = pi[j];
    return FsmcChannel(std::move(states), m);
}

} // namespace saloha::fixtures
