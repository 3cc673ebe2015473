// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "saloha/errors.hpp"
#include "saloha/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace saloha {

/// Whether a user attempted to transmit in a slot (its CSI reached the threshold).
enum class TransmissionEvent { silent = 0, transmitted = 1 };

/// Which side of a threshold a conditioning event restricts the CSI to.
enum class ThresholdSide { below, above };

namespace detail {

inline bool strongly_connected(const std::vector<double>& p, int n) {
    auto reach = [&](bool forward) {
        std::vector<char> seen(n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int w = 0; w < n; ++w) {
                double edge = forward ? p[v * n + w] : p[w * n + v];
                if (edge > 0.0 && !seen[w]) {
                    seen[w] = 1;
                    ++count;
                    stack.push_back(w);
                }
            }
        }
        return count == n;
    };
    return reach(true) && reach(false);
}

} // namespace detail

/// Solves v P = v, sum(v) = 1 for a row-stochastic irreducible matrix by a
/// direct linear solve of (P^T - I) with the normalization replacing one row.
inline std::vector<double> stationary_distribution(const std::vector<double>& transition,
                                                   int n,
                                                   double row_sum_tol = 1e-9) {
    if (n <= 0 || static_cast<int>(transition.size()) != n * n)
        throw std::invalid_argument("stationary_distribution: bad dimensions");
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            if (transition[i * n + j] < 0.0)
                throw std::invalid_argument("stationary_distribution: negative entry in row " +
                                            std::to_string(i));
            s += transition[i * n + j];
        }
        if (std::abs(s - 1.0) > row_sum_tol)
            throw std::invalid_argument("stationary_distribution: row " + std::to_string(i) +
                                        " sums to " + std::to_string(s));
    }
    if (!detail::strongly_connected(transition, n))
        throw std::runtime_error("stationary_distribution: chain is reducible, "
                                 "no unique stationary distribution");

    Matrix a(n, n);
    std::vector<double> b(n, 0.0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) a(j, i) = transition[i * n + j] - (i == j ? 1.0 : 0.0);
    for (int i = 0; i < n; ++i) a(n - 1, i) = 1.0;
    b[n - 1] = 1.0;

    std::vector<double> pi = solve_linear(std::move(a), std::move(b));
    for (double& v : pi) v = std::max(v, 0.0);
    double s = std::accumulate(pi.begin(), pi.end(), 0.0);
    for (double& v : pi) v /= s;
    return pi;
}

/// Finite-state Markov fading channel: an ordered gain alphabet, a
/// row-stochastic transition matrix and the implied stationary distribution.
/// Thresholds are handled as indices into `states` throughout.
class FsmcChannel {
  public:
    FsmcChannel(std::vector<double> states, std::vector<double> transition)
        : states_(std::move(states)), transition_(std::move(transition)) {
        const int n = static_cast<int>(states_.size());
        if (n == 0) throw std::invalid_argument("FsmcChannel: empty state set");
        for (int i = 0; i < n; ++i) {
            if (states_[i] <= 0.0) throw std::invalid_argument("FsmcChannel: gains must be > 0");
            if (i > 0 && states_[i] <= states_[i - 1])
                throw std::invalid_argument("FsmcChannel: gains must be strictly increasing");
        }
        stationary_ = stationary_distribution(transition_, n);
        // pi P = pi must hold tightly after the solve
        for (int j = 0; j < n; ++j) {
            double v = 0.0;
            for (int i = 0; i < n; ++i) v += stationary_[i] * transition_[i * n + j];
            if (std::abs(v - stationary_[j]) > 1e-10)
                throw std::runtime_error("FsmcChannel: stationary residual too large");
        }
        tail_.assign(n + 1, 0.0);
        for (int j = n - 1; j >= 0; --j) tail_[j] = tail_[j + 1] + stationary_[j];
        tail_[0] = 1.0; // Pr{H >= S_1} is structurally one
    }

    int size() const { return static_cast<int>(states_.size()); }
    double gain(int i) const { return states_[i]; }
    const std::vector<double>& gains() const { return states_; }
    double p(int i, int j) const { return transition_[i * size() + j]; }
    const std::vector<double>& transition() const { return transition_; }
    const std::vector<double>& stationary() const { return stationary_; }

    /// Pr{H >= S_gamma} under the stationary distribution.
    double tail_stationary(int gamma) const { return tail_[gamma]; }

    bool operator==(const FsmcChannel& o) const {
        return states_ == o.states_ && transition_ == o.transition_;
    }

  private:
    std::vector<double> states_;
    std::vector<double> transition_;
    std::vector<double> stationary_;
    std::vector<double> tail_;
};

/// Stationary distribution restricted to the states strictly below (or at and
/// above) a threshold and renormalized. Returned as a full-length vector
/// supported on the restricted set.
inline std::vector<double> conditioned_distribution(const FsmcChannel& ch, int gamma,
                                                    ThresholdSide side) {
    const int n = ch.size();
    if (gamma < 0 || gamma >= n)
        throw std::invalid_argument("conditioned_distribution: threshold index out of range");
    std::vector<double> out(n, 0.0);
    if (side == ThresholdSide::below) {
        if (gamma == 0)
            throw null_event_error("conditioned_distribution: no state below the threshold");
        const double mass = 1.0 - ch.tail_stationary(gamma);
        for (int j = 0; j < gamma; ++j) out[j] = ch.stationary()[j] / mass;
    } else {
        const double mass = ch.tail_stationary(gamma);
        if (mass <= 0.0)
            throw null_event_error("conditioned_distribution: no state above the threshold");
        for (int j = gamma; j < n; ++j) out[j] = ch.stationary()[j] / mass;
    }
    return out;
}

/// Probability that a user transmits in the current slot (CSI >= gamma_cur)
/// given its previous-slot transmission status and the previous threshold.
/// This is upsilon for a previously silent user and zeta for a previous
/// transmitter.
inline double transmission_event_prob(const FsmcChannel& ch, int gamma_prev, int gamma_cur,
                                      TransmissionEvent prev) {
    const int n = ch.size();
    if (gamma_prev < 0 || gamma_prev >= n || gamma_cur < 0 || gamma_cur >= n)
        throw std::invalid_argument("transmission_event_prob: threshold index out of range");
    const auto cond = conditioned_distribution(
        ch, gamma_prev,
        prev == TransmissionEvent::silent ? ThresholdSide::below : ThresholdSide::above);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        if (cond[i] == 0.0) continue;
        double row_tail = 0.0;
        for (int j = gamma_cur; j < n; ++j) row_tail += ch.p(i, j);
        total += cond[i] * row_tail;
    }
    return std::min(total, 1.0);
}

/// Probability that exactly `k` out of `K` users transmit when each
/// independently exceeds the threshold with its stationary tail probability,
/// conditioned on knowing that at least `n` transmit.
inline double multi_transmit_prob(const FsmcChannel& ch, int gamma, int K, int k, int n) {
    if (!(0 <= n && n <= k && k <= K))
        throw std::invalid_argument("multi_transmit_prob: need 0 <= n <= k <= K");
    const double q = ch.tail_stationary(gamma);
    auto binom_pmf = [&](int i) {
        double c = 1.0;
        for (int t = 1; t <= i; ++t) c *= static_cast<double>(K - i + t) / t;
        return c * std::pow(q, i) * std::pow(1.0 - q, K - i);
    };
    double denom = 1.0;
    for (int i = 0; i < n; ++i) denom -= binom_pmf(i);
    if (denom <= 1e-15)
        throw null_event_error("multi_transmit_prob: conditioning event has zero probability");
    return binom_pmf(k) / denom;
}

} // namespace saloha
