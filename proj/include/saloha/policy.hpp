// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "saloha/channel.hpp"
#include "saloha/dynamics.hpp"
#include "saloha/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <vector>

namespace saloha {

/// Thresholds for every user as a deterministic function of the common
/// information (previous common state, previous feedback). Symmetric policies
/// store one threshold per common state; asymmetric policies store one per
/// user. Common states are ids into `thresholds`; `next[g][z] == -1` marks a
/// feedback symbol that cannot occur in state g under the dominant system.
struct CommonInfoPolicy {
    std::vector<std::vector<int>> thresholds;
    std::vector<std::array<int, 3>> next;
    int init_state = 0;
    bool symmetric = true;

    int states() const { return static_cast<int>(thresholds.size()); }
    int user_threshold(int g, int user) const {
        return thresholds[g][symmetric ? 0 : user];
    }
    int next_state(int g, Feedback z) const {
        int n = next[g][static_cast<int>(z)];
        if (n < 0)
            throw table_miss_error("threshold policy has no transition from state " +
                                   std::to_string(g) + " on feedback " + to_string(z));
        return n;
    }
};

namespace detail {

/// Whether the feedback symbol can be observed at all when every user applied
/// threshold gamma_prev in the previous slot.
inline bool common_history_possible(Feedback z, int gamma_prev, int K) {
    switch (z) {
        case Feedback::nak: return gamma_prev > 0;
        case Feedback::ack: return gamma_prev > 0 || K == 1;
        case Feedback::collision: return K >= 2;
    }
    return false;
}

} // namespace detail

/// Probability that exactly one of the K users transmits in the current slot,
/// given the previous threshold, the previous feedback and a candidate
/// current threshold.
inline double single_success_probability(int gamma_prev, Feedback z_prev, int gamma_cur, int K,
                                         const FsmcChannel& ch) {
    detail::LazyTxProbs t(ch, gamma_prev, gamma_cur);
    switch (z_prev) {
        case Feedback::nak:
            return K * t.u() * t.ubar_pow(K - 1);
        case Feedback::ack: {
            double v = t.z() * t.ubar_pow(K - 1);
            if (K >= 2) v += (K - 1) * t.zbar_pow(1) * t.u() * t.ubar_pow(K - 2);
            return v;
        }
        case Feedback::collision: {
            double total = 0.0;
            for (int k = 2; k <= K; ++k) {
                const double w = multi_transmit_prob(ch, gamma_prev, K, k, 2);
                if (w <= 0.0) continue;
                double term = k * t.z() * t.zbar_pow(k - 1) * t.ubar_pow(K - k);
                if (K - k >= 1) term += (K - k) * t.zbar_pow(k) * t.u() * t.ubar_pow(K - k - 1);
                total += w * term;
            }
            return total;
        }
    }
    return 0.0;
}

/// Larger-CSI-higher-priority threshold update: the current threshold that
/// maximizes the single-success probability given the common information.
/// Histories that cannot occur fall back to the stationary objective
/// K q (1-q)^(K-1); those table entries are never reached by the induced
/// chain. Ties go to the largest threshold.
inline int lcsihp_threshold(int gamma_prev, Feedback z_prev, int K, const FsmcChannel& ch) {
    const int J = ch.size();
    int best = 0;
    double best_val = -1.0;
    const bool possible = detail::common_history_possible(z_prev, gamma_prev, K);
    for (int gc = 0; gc < J; ++gc) {
        double v;
        if (possible) {
            v = single_success_probability(gamma_prev, z_prev, gc, K, ch);
        } else {
            const double q = ch.tail_stationary(gc);
            v = K * q * std::pow(1.0 - q, K - 1);
        }
        if (v >= best_val - 1e-12) {
            if (v > best_val) best_val = v;
            best = gc;
        }
    }
    return best;
}

/// Conditional probability that user k transmitted in the previous slot given
/// the previous thresholds and feedback (rho_k). eta[i] is user i's stationary
/// probability of exceeding its previous threshold.
inline double previous_transmit_belief(const std::vector<double>& eta, int k, Feedback z_prev) {
    const int K = static_cast<int>(eta.size());
    auto prod_others_silent = [&](int j) {
        double p = 1.0;
        for (int i = 0; i < K; ++i)
            if (i != j) p *= 1.0 - eta[i];
        return p;
    };
    switch (z_prev) {
        case Feedback::nak:
            return 0.0;
        case Feedback::ack: {
            double num = eta[k] * prod_others_silent(k);
            double den = 0.0;
            for (int j = 0; j < K; ++j) den += eta[j] * prod_others_silent(j);
            if (den <= 0.0)
                throw null_event_error("previous_transmit_belief: ACK has zero probability");
            return num / den;
        }
        case Feedback::collision: {
            double none = 1.0;
            for (int i = 0; i < K; ++i) none *= 1.0 - eta[i];
            double one = 0.0;
            for (int j = 0; j < K; ++j) one += eta[j] * prod_others_silent(j);
            const double den = 1.0 - none - one;
            if (den <= 0.0)
                throw null_event_error("previous_transmit_belief: collision has zero probability");
            const double num = eta[k] * (1.0 - prod_others_silent(k));
            return num / den;
        }
    }
    return 0.0;
}

/// Per-user threshold update for heterogeneous users: each user maximizes its
/// own success-probability surrogate, weighting the continue/again cases by
/// the belief that it was a previous transmitter. Ties go to the largest
/// threshold.
inline std::vector<int> asymmetric_threshold(const std::vector<int>& gamma_prev, Feedback z_prev,
                                             const std::vector<const FsmcChannel*>& channels) {
    const int K = static_cast<int>(channels.size());
    if (K < 2 || static_cast<int>(gamma_prev.size()) != K)
        throw std::invalid_argument("asymmetric_threshold: need K >= 2 per-user thresholds");
    std::vector<double> eta(K);
    for (int i = 0; i < K; ++i) eta[i] = channels[i]->tail_stationary(gamma_prev[i]);

    std::vector<int> out(K);
    for (int k = 0; k < K; ++k) {
        const auto& ch = *channels[k];
        double rho = 0.0;
        if (z_prev != Feedback::nak) rho = previous_transmit_belief(eta, k, z_prev);
        if (z_prev == Feedback::nak && gamma_prev[k] == 0)
            throw null_event_error("asymmetric_threshold: NAK impossible when user " +
                                   std::to_string(k) + " always transmits");
        int best = 0;
        double best_val = -1.0;
        for (int gc = 0; gc < ch.size(); ++gc) {
            detail::LazyTxProbs t(ch, gamma_prev[k], gc);
            double v = 0.0;
            if (z_prev == Feedback::nak) {
                v = t.u() * t.ubar_pow(K - 1);
            } else {
                if (rho < 1.0) v += (1.0 - rho) * t.u() * t.ubar_pow(K - 1);
                if (rho > 0.0) v += rho * t.z() * t.zbar_pow(K - 1);
            }
            if (v >= best_val - 1e-12) {
                if (v > best_val) best_val = v;
                best = gc;
            }
        }
        out[k] = best;
    }
    return out;
}

/// Symmetric adaptive policy: common states are threshold indices themselves.
inline CommonInfoPolicy build_lcsihp_policy(int K, const FsmcChannel& ch) {
    CommonInfoPolicy p;
    p.symmetric = true;
    const int J = ch.size();
    p.thresholds.resize(J);
    p.next.resize(J);
    for (int g = 0; g < J; ++g) {
        p.thresholds[g] = {g};
        for (Feedback z : kAllFeedback)
            p.next[g][static_cast<int>(z)] = lcsihp_threshold(g, z, K, ch);
    }
    p.init_state = J - 1;
    return p;
}

/// Fixed common threshold (baselines): a single common state.
inline CommonInfoPolicy build_constant_policy(int gamma) {
    CommonInfoPolicy p;
    p.symmetric = true;
    p.thresholds = {{gamma}};
    p.next = {{0, 0, 0}};
    p.init_state = 0;
    return p;
}

/// Fixed per-user thresholds (asymmetric baselines).
inline CommonInfoPolicy build_constant_policy(std::vector<int> gammas) {
    CommonInfoPolicy p;
    p.symmetric = false;
    p.thresholds = {std::move(gammas)};
    p.next = {{0, 0, 0}};
    p.init_state = 0;
    return p;
}

/// Adaptive per-user thresholds: enumerates the orbit of the threshold-vector
/// map from the all-top start. Feedback symbols with zero probability in a
/// state are left without a transition.
inline CommonInfoPolicy build_asymmetric_policy(const std::vector<const FsmcChannel*>& channels) {
    const int K = static_cast<int>(channels.size());
    CommonInfoPolicy p;
    p.symmetric = false;
    std::map<std::vector<int>, int> ids;
    std::vector<std::vector<int>> todo;

    std::vector<int> init(K);
    for (int i = 0; i < K; ++i) init[i] = channels[i]->size() - 1;
    ids[init] = 0;
    todo.push_back(init);
    p.thresholds.push_back(init);
    p.next.push_back({-1, -1, -1});

    auto feasible = [&](const std::vector<int>& gam, Feedback z) {
        double none = 1.0, one = 0.0;
        for (int i = 0; i < K; ++i) {
            double eta = channels[i]->tail_stationary(gam[i]);
            double term = eta;
            for (int j = 0; j < K; ++j)
                if (j != i) term *= 1.0 - channels[j]->tail_stationary(gam[j]);
            one += term;
            none *= 1.0 - eta;
        }
        switch (z) {
            case Feedback::nak: return none > 0.0;
            case Feedback::ack: return one > 0.0;
            case Feedback::collision: return 1.0 - none - one > 1e-15;
        }
        return false;
    };

    for (std::size_t head = 0; head < todo.size(); ++head) {
        const std::vector<int> gam = todo[head];
        const int g = ids[gam];
        for (Feedback z : kAllFeedback) {
            if (!feasible(gam, z)) continue;
            std::vector<int> nxt = asymmetric_threshold(gam, z, channels);
            auto [it, inserted] = ids.try_emplace(nxt, static_cast<int>(p.thresholds.size()));
            if (inserted) {
                todo.push_back(nxt);
                p.thresholds.push_back(nxt);
                p.next.push_back({-1, -1, -1});
            }
            p.next[g][static_cast<int>(z)] = it->second;
        }
    }
    p.init_state = 0;
    return p;
}

/// Fixed threshold and state-independent power rule used by the
/// non-adaptive baselines.
struct FixedThresholdPolicy {
    int gamma = 0;
    std::vector<double> power; // transmit power per current channel state
    double xi_tilde = 0.0;     // water-level multiplier of the variable-rate rule
};

/// Threshold maximizing the stationary single-success probability.
inline int binary_scheduling_threshold(const FsmcChannel& ch, int K) {
    int best = 0;
    double best_val = -1.0;
    for (int g = 0; g < ch.size(); ++g) {
        const double q = ch.tail_stationary(g);
        const double v = K * q * std::pow(1.0 - q, K - 1);
        if (v >= best_val - 1e-12) {
            if (v > best_val) best_val = v;
            best = g;
        }
    }
    return best;
}

/// Constant transmit power spending the average budget P0 at transmit
/// probability tx_prob, state by state under the slot-duration cap.
inline std::vector<double> fixed_power_rule(const FsmcChannel& ch, int gamma, double P0,
                                            double tx_prob, const SystemParams& p) {
    std::vector<double> power(ch.size(), 0.0);
    for (int j = gamma; j < ch.size(); ++j)
        power[j] = std::min(P0 / tx_prob, max_power(p, ch.gain(j)));
    return power;
}

/// Binary scheduling: fixed stationary-optimal threshold, constant power.
inline FixedThresholdPolicy baseline_binary_scheduling(const FsmcChannel& ch, int K, double P0,
                                                       const SystemParams& p) {
    FixedThresholdPolicy out;
    out.gamma = binary_scheduling_threshold(ch, K);
    out.power = fixed_power_rule(ch, out.gamma, P0, ch.tail_stationary(out.gamma), p);
    return out;
}

namespace detail {

/// CSI water-filling power at a fixed threshold: level c/xi against the
/// per-state noise floor, capped by the slot-duration bound.
inline std::vector<double> variable_rate_power(const FsmcChannel& ch, int gamma, double c,
                                               double xi_tilde, const SystemParams& p) {
    std::vector<double> power(ch.size(), 0.0);
    for (int j = gamma; j < ch.size(); ++j) {
        double raw = c / xi_tilde - p.noise_power_w() / ch.gain(j);
        power[j] = std::clamp(raw, 0.0, max_power(p, ch.gain(j)));
    }
    return power;
}

inline double stationary_avg_power(const FsmcChannel& ch, int gamma,
                                   const std::vector<double>& power) {
    double total = 0.0;
    for (int j = gamma; j < ch.size(); ++j) total += ch.stationary()[j] * power[j];
    return total;
}

} // namespace detail

/// Variable-rate baseline: for every candidate threshold, water-filling power
/// against the CSI with a constant multiplier calibrated to the average power
/// budget; picks the threshold with the best stationary packet throughput.
inline FixedThresholdPolicy baseline_variable_rate(const FsmcChannel& ch, int K, double P0,
                                                   const SystemParams& p) {
    FixedThresholdPolicy out;
    double best_tp = -1.0;
    for (int gamma = 0; gamma < ch.size(); ++gamma) {
        const double q = ch.tail_stationary(gamma);
        const double c = p.bandwidth_hz * p.tau_s * std::pow(1.0 - q, K - 1) /
                         (p.mean_packet_bits * std::numbers::ln2_v<double>);
        // average power decreases in xi; bracket then bisect
        double lo = 1e-12, hi = 1.0;
        while (detail::stationary_avg_power(
                   ch, gamma, detail::variable_rate_power(ch, gamma, c, hi, p)) > P0)
            hi *= 4.0;
        bool saturated =
            detail::stationary_avg_power(ch, gamma,
                                         detail::variable_rate_power(ch, gamma, c, lo, p)) < P0;
        double xi = saturated ? lo : hi;
        if (!saturated) {
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double pw = detail::stationary_avg_power(
                    ch, gamma, detail::variable_rate_power(ch, gamma, c, mid, p));
                (pw > P0 ? lo : hi) = mid;
                if (std::abs(pw - P0) <= 1e-9 * P0) break;
            }
            xi = 0.5 * (lo + hi);
        }
        const auto power = detail::variable_rate_power(ch, gamma, c, xi, p);
        double tp = 0.0;
        for (int j = gamma; j < ch.size(); ++j)
            tp += ch.stationary()[j] * service_rate(ch.gain(j), power[j], Feedback::ack, p) *
                  p.tau_s;
        tp *= K * std::pow(1.0 - q, K - 1);
        if (tp >= best_tp - 1e-15) {
            if (tp > best_tp) best_tp = tp;
            out.gamma = gamma;
            out.power = power;
            out.xi_tilde = xi;
        }
    }
    return out;
}

/// Per-user fixed thresholds for heterogeneous users: users with identical
/// channels share a threshold, and the grid of group thresholds is searched
/// for the best product of per-user stationary throughputs, each user running
/// the variable-rate power rule under its own budget.
inline std::vector<int> bsp_thresholds(const std::vector<const FsmcChannel*>& channels, double P0,
                                       const SystemParams& p) {
    const int K = static_cast<int>(channels.size());
    std::vector<int> group(K, -1);
    std::vector<int> group_rep;
    for (int i = 0; i < K; ++i) {
        for (std::size_t g = 0; g < group_rep.size(); ++g)
            if (*channels[group_rep[g]] == *channels[i]) group[i] = static_cast<int>(g);
        if (group[i] < 0) {
            group[i] = static_cast<int>(group_rep.size());
            group_rep.push_back(i);
        }
    }
    const int G = static_cast<int>(group_rep.size());

    // per (group, threshold): calibrated service factor and transmit probability
    std::vector<std::vector<double>> svc(G), tail(G);
    for (int g = 0; g < G; ++g) {
        const auto& ch = *channels[group_rep[g]];
        FixedThresholdPolicy vr;
        svc[g].resize(ch.size());
        tail[g].resize(ch.size());
        for (int gamma = 0; gamma < ch.size(); ++gamma) {
            const double q = ch.tail_stationary(gamma);
            // only c/xi is determined by the power budget, so the constant in
            // front of the water level is immaterial here
            const double c = p.bandwidth_hz * p.tau_s / (p.mean_packet_bits *
                                                         std::numbers::ln2_v<double>);
            double lo = 1e-12, hi = 1.0;
            while (detail::stationary_avg_power(
                       ch, gamma, detail::variable_rate_power(ch, gamma, c, hi, p)) > P0)
                hi *= 4.0;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double pw = detail::stationary_avg_power(
                    ch, gamma, detail::variable_rate_power(ch, gamma, c, mid, p));
                (pw > P0 ? lo : hi) = mid;
            }
            const auto power = detail::variable_rate_power(ch, gamma, c, 0.5 * (lo + hi), p);
            double s = 0.0;
            for (int j = gamma; j < ch.size(); ++j)
                s += ch.stationary()[j] * service_rate(ch.gain(j), power[j], Feedback::ack, p) *
                     p.tau_s;
            svc[g][gamma] = s;
            tail[g][gamma] = q;
        }
    }

    // group counts for the product objective
    std::vector<int> count(G, 0);
    for (int i = 0; i < K; ++i) ++count[group[i]];

    std::vector<int> best(G, 0), cur(G, 0);
    double best_val = -std::numeric_limits<double>::infinity();
    bool found = false;
    const int J = channels[0]->size();
    while (true) {
        // product over users of: own service factor x Pr{everyone else silent}
        double log_val = 0.0;
        bool zero = false;
        for (int g = 0; g < G && !zero; ++g) {
            double silent_others = 1.0;
            for (int g2 = 0; g2 < G; ++g2) {
                int others = count[g2] - (g2 == g ? 1 : 0);
                silent_others *= std::pow(1.0 - tail[g2][cur[g2]], others);
            }
            const double t = svc[g][cur[g]] * silent_others;
            if (t <= 0.0) zero = true;
            else log_val += count[g] * std::log(t);
        }
        if (!zero && log_val >= best_val) {
            best_val = log_val;
            best = cur;
            found = true;
        }
        int d = G - 1;
        while (d >= 0 && cur[d] == J - 1) cur[d--] = 0;
        if (d < 0) break;
        ++cur[d];
    }
    std::vector<int> out(K);
    for (int i = 0; i < K; ++i)
        out[i] = found ? best[group[i]] : binary_scheduling_threshold(*channels[i], K);
    return out;
}

} // namespace saloha
