// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "saloha/channel.hpp"
#include "saloha/errors.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace saloha {

/// Common feedback broadcast by the access point after each slot.
enum class Feedback : int { nak = 0, ack = 1, collision = 2 };

constexpr std::array<Feedback, 3> kAllFeedback = {Feedback::nak, Feedback::ack,
                                                  Feedback::collision};

inline const char* to_string(Feedback z) {
    switch (z) {
        case Feedback::nak: return "nak";
        case Feedback::ack: return "ack";
        default: return "collision";
    }
}

namespace detail {

/// Complement entries of the feedback kernels are computed as 1 - a - b and
/// can leave +/-1e-17 dust on structurally impossible symbols, which would
/// open spurious transitions into impossible states. Anything below 1e-13 is
/// far under every tolerance used here and gets snapped away.
inline void snap_distribution(std::array<double, 3>& v) {
    double sum = 0.0;
    for (double& x : v) {
        if (x < 1e-13) x = 0.0;
        sum += x;
    }
    for (double& x : v) x /= sum;
}

} // namespace detail

struct SystemParams {
    double tau_s = 1e-3;             // slot duration
    double bandwidth_hz = 1000.0;    // shared spectrum
    double noise_psd_w_per_hz = 1e-3;
    double lambda_pkts_per_s = 1.0;  // Poisson arrival rate per user
    double mean_packet_bits = 1000.0;
    int buffer_pkts = 5;
    int num_users = 1;

    double noise_power_w() const { return noise_psd_w_per_hz * bandwidth_hz; }
    double arrival_prob() const { return lambda_pkts_per_s * tau_s; }

    void validate() const {
        if (tau_s <= 0 || bandwidth_hz <= 0 || noise_psd_w_per_hz <= 0 || mean_packet_bits <= 0)
            throw std::invalid_argument("SystemParams: tau, W, N0, mean packet size must be > 0");
        if (lambda_pkts_per_s < 0 || arrival_prob() >= 1.0)
            throw std::invalid_argument("SystemParams: need 0 <= lambda*tau < 1");
        if (buffer_pkts < 1 || num_users < 1)
            throw std::invalid_argument("SystemParams: need buffer >= 1 and users >= 1");
    }
};

/// Everything a user can observe locally at the start of a slot. `gamma_prev`
/// is the previous slot's threshold state (an index into the channel alphabet
/// in symmetric mode, a common-information id in asymmetric mode).
struct LocalState {
    int q = 0;
    int h_prev = 0;
    int gamma_prev = 0;
    Feedback z = Feedback::nak;
    int h_cur = 0;

    friend bool operator==(const LocalState&, const LocalState&) = default;
    friend auto operator<=>(const LocalState&, const LocalState&) = default;
};

/// Largest power for which the service completion probability mu*tau still
/// fits in a slot next to the arrival probability.
inline double max_power(const SystemParams& p, double h_gain) {
    const double exponent =
        std::min((1.0 - p.arrival_prob()) * p.mean_packet_bits / (p.bandwidth_hz * p.tau_s), 600.0);
    return (std::exp2(exponent) - 1.0) * p.noise_power_w() / h_gain;
}

/// Mean packet service rate (packets/s). Non-zero only when the slot was
/// ACKed and power was actually spent.
inline double service_rate(double h_gain, double power, Feedback z, const SystemParams& p) {
    if (z != Feedback::ack || power <= 0.0) return 0.0;
    return p.bandwidth_hz / p.mean_packet_bits *
           std::log2(1.0 + power * h_gain / p.noise_power_w());
}

/// One-slot queue transition: birth-death with the boundary mass folded into
/// the self-transition (full buffer rejects arrivals, empty buffer absorbs
/// the departure of a virtual packet).
struct QueueStep {
    std::array<int, 3> next{};
    std::array<double, 3> prob{};
    int count = 0;
};

inline QueueStep queue_kernel(int q, double mu, const SystemParams& p) {
    const double la = p.arrival_prob();
    const double m = mu * p.tau_s;
    if (la + m > 1.0 + 1e-12)
        throw time_scale_error("queue_kernel: lambda*tau + mu*tau = " + std::to_string(la + m) +
                               " > 1; cap the power so the slot stays fine-grained");
    const int N = p.buffer_pkts;
    QueueStep out;
    auto add = [&](int nq, double pr) {
        if (pr <= 0.0) return;
        for (int i = 0; i < out.count; ++i) {
            if (out.next[i] == nq) {
                out.prob[i] += pr;
                return;
            }
        }
        out.next[out.count] = nq;
        out.prob[out.count] = pr;
        ++out.count;
    };
    add(std::max(q - 1, 0), m);
    add(q, 1.0 - la - m);
    add(std::min(q + 1, N), la);
    return out;
}

namespace detail {

/// x^e with the convention that an exponent of zero never evaluates x; the
/// kernels below rely on this to avoid conditioning on empty events.
class LazyTxProbs {
  public:
    LazyTxProbs(const FsmcChannel& ch, int gp, int gc) : ch_(ch), gp_(gp), gc_(gc) {}

    double u() {
        if (!u_) u_ = transmission_event_prob(ch_, gp_, gc_, TransmissionEvent::silent);
        return *u_;
    }
    double z() {
        if (!z_) z_ = transmission_event_prob(ch_, gp_, gc_, TransmissionEvent::transmitted);
        return *z_;
    }
    double ubar_pow(int e) { return e == 0 ? 1.0 : std::pow(1.0 - u(), e); }
    double zbar_pow(int e) { return e == 0 ? 1.0 : std::pow(1.0 - z(), e); }

  private:
    const FsmcChannel& ch_;
    int gp_, gc_;
    std::optional<double> u_, z_;
};

} // namespace detail

/// Exact one-slot feedback transition for a symmetric network, seen from one
/// user: the distribution of the next broadcast given the previous broadcast,
/// the user's own transmission status in both slots and the threshold pair.
/// Throws null_event_error when the conditioning history is impossible.
inline std::array<double, 3> feedback_kernel_symmetric(Feedback z_prev, TransmissionEvent b_prev,
                                                       TransmissionEvent b_cur, int gamma_prev,
                                                       int gamma_cur, int K,
                                                       const FsmcChannel& ch) {
    if (K < 1) throw std::invalid_argument("feedback_kernel_symmetric: K >= 1");
    detail::LazyTxProbs t(ch, gamma_prev, gamma_cur);
    const bool tx_now = b_cur == TransmissionEvent::transmitted;
    const int others = K - 1;
    std::array<double, 3> out{0.0, 0.0, 0.0};
    auto& nak = out[0];
    auto& ack = out[1];
    auto& coll = out[2];

    // all other users were silent in the previous slot
    auto all_others_silent = [&] {
        if (others >= 1 && gamma_prev == 0)
            throw null_event_error("feedback kernel: nobody can sit below the lowest state");
        const double none = t.ubar_pow(others);
        if (tx_now) {
            ack = none;
            coll = 1.0 - none;
        } else {
            nak = none;
            ack = others >= 1 ? others * t.u() * t.ubar_pow(others - 1) : 0.0;
            coll = 1.0 - nak - ack;
        }
    };

    switch (z_prev) {
        case Feedback::nak:
            // the previous broadcast already tells everything about the others;
            // the user's own previous status does not enter
            all_others_silent();
            break;
        case Feedback::ack: {
            if (b_prev == TransmissionEvent::transmitted) {
                all_others_silent();
                break;
            }
            if (others < 1)
                throw null_event_error("feedback kernel: ACK without any possible transmitter");
            if (others >= 2 && gamma_prev == 0)
                throw null_event_error("feedback kernel: ACK impossible when every user "
                                       "exceeds the lowest state");
            // exactly one other user transmitted, the remaining K-2 were silent
            const double none = t.zbar_pow(1) * t.ubar_pow(others - 1);
            if (tx_now) {
                ack = none;
                coll = 1.0 - none;
            } else {
                nak = none;
                ack = t.z() * t.ubar_pow(others - 1);
                if (others - 1 >= 1)
                    ack += t.zbar_pow(1) * (others - 1) * t.u() * t.ubar_pow(others - 2);
                coll = 1.0 - nak - ack;
            }
            break;
        }
        case Feedback::collision: {
            const int min_tx = b_prev == TransmissionEvent::transmitted ? 1 : 2;
            if (others < min_tx)
                throw null_event_error("feedback kernel: collision needs at least " +
                                       std::to_string(min_tx + 1) + " users");
            double p_none = 0.0, p_one = 0.0, total = 0.0;
            for (int j = min_tx; j <= others; ++j) {
                const double w = multi_transmit_prob(ch, gamma_prev, others, j, min_tx);
                if (w <= 0.0) continue;
                total += w;
                const double none_j = t.zbar_pow(j) * t.ubar_pow(others - j);
                double one_j = j * t.z() * t.zbar_pow(j - 1) * t.ubar_pow(others - j);
                if (others - j >= 1)
                    one_j += t.zbar_pow(j) * (others - j) * t.u() * t.ubar_pow(others - j - 1);
                p_none += w * none_j;
                p_one += w * one_j;
            }
            if (total <= 0.0)
                throw null_event_error("feedback kernel: collision history has zero probability");
            p_none /= total;
            p_one /= total;
            if (tx_now) {
                ack = p_none;
                coll = 1.0 - p_none;
            } else {
                nak = p_none;
                ack = p_one;
                coll = 1.0 - p_none - p_one;
            }
            break;
        }
    }
    detail::snap_distribution(out);
    return out;
}

/// Transition kernel of the full local system state under a symmetric
/// threshold policy and a given power action. `NextThreshold` maps
/// (gamma_prev, z_prev) to the current threshold index.
template <class NextThreshold>
std::vector<std::pair<LocalState, double>>
local_state_kernel(const LocalState& s, double power, NextThreshold&& next_threshold,
                   const SystemParams& p, const FsmcChannel& ch) {
    const int gamma_cur = next_threshold(s.gamma_prev, s.z);
    const auto b_prev = s.h_prev >= s.gamma_prev ? TransmissionEvent::transmitted
                                                 : TransmissionEvent::silent;
    const auto b_cur =
        s.h_cur >= gamma_cur ? TransmissionEvent::transmitted : TransmissionEvent::silent;
    const double tx_power = b_cur == TransmissionEvent::transmitted ? power : 0.0;
    const auto fb = feedback_kernel_symmetric(s.z, b_prev, b_cur, s.gamma_prev, gamma_cur,
                                              p.num_users, ch);
    std::vector<std::pair<LocalState, double>> out;
    for (Feedback z_next : kAllFeedback) {
        const double pz = fb[static_cast<int>(z_next)];
        if (pz <= 0.0) continue;
        const double mu = service_rate(ch.gain(s.h_cur), tx_power, z_next, p);
        const QueueStep qs = queue_kernel(s.q, mu, p);
        for (int qi = 0; qi < qs.count; ++qi) {
            for (int h_next = 0; h_next < ch.size(); ++h_next) {
                const double ph = ch.p(s.h_cur, h_next);
                if (ph <= 0.0) continue;
                out.push_back({LocalState{qs.next[qi], s.h_cur, gamma_cur, z_next, h_next},
                               pz * qs.prob[qi] * ph});
            }
        }
    }
    return out;
}

/// One-step-propagated belief over the other users' CSI given only common
/// information. The published construction renormalizes the stationary prior
/// over the full support, so the belief collapses to the product of the
/// stationary marginals; the propagation is carried out literally.
inline std::vector<std::vector<double>>
belief_other_csi(const std::vector<const FsmcChannel*>& channels, int k) {
    std::vector<std::vector<double>> out;
    for (int i = 0; i < static_cast<int>(channels.size()); ++i) {
        if (i == k) continue;
        const auto& ch = *channels[i];
        std::vector<double> propagated(ch.size(), 0.0);
        for (int a = 0; a < ch.size(); ++a)
            for (int b = 0; b < ch.size(); ++b) propagated[b] += ch.stationary()[a] * ch.p(a, b);
        out.push_back(std::move(propagated));
    }
    return out;
}

/// Feedback transition for heterogeneous users and per-user thresholds. The
/// previous broadcast restricts which subsets of the other users transmitted;
/// each admissible subset is weighted by its stationary probability and the
/// members evolve with their own conditioned transition kernels.
inline std::array<double, 3>
feedback_kernel_asymmetric(Feedback z_prev, TransmissionEvent b_prev, TransmissionEvent b_cur,
                           const std::vector<int>& gamma_prev, const std::vector<int>& gamma_cur,
                           const std::vector<const FsmcChannel*>& channels, int k) {
    const int K = static_cast<int>(channels.size());
    if (K < 1 || static_cast<int>(gamma_prev.size()) != K ||
        static_cast<int>(gamma_cur.size()) != K)
        throw std::invalid_argument("feedback_kernel_asymmetric: bad dimensions");

    struct Other {
        double eta;
        std::optional<double> u, z;
    };
    std::vector<int> idx;
    std::vector<Other> others;
    for (int i = 0; i < K; ++i) {
        if (i == k) continue;
        idx.push_back(i);
        others.push_back({channels[i]->tail_stationary(gamma_prev[i]), {}, {}});
    }
    const int n = static_cast<int>(idx.size());
    auto tx_prob = [&](int oi, bool was_tx) {
        auto& o = others[oi];
        auto& cache = was_tx ? o.z : o.u;
        if (!cache)
            cache = transmission_event_prob(*channels[idx[oi]], gamma_prev[idx[oi]],
                                            gamma_cur[idx[oi]],
                                            was_tx ? TransmissionEvent::transmitted
                                                   : TransmissionEvent::silent);
        return *cache;
    };

    int lo = 0, hi = 0;
    switch (z_prev) {
        case Feedback::nak: lo = 0, hi = 0; break;
        case Feedback::ack:
            if (b_prev == TransmissionEvent::transmitted) lo = 0, hi = 0;
            else lo = 1, hi = 1;
            break;
        case Feedback::collision:
            lo = b_prev == TransmissionEvent::transmitted ? 1 : 2;
            hi = n;
            break;
    }
    if (hi > n || lo > n)
        throw null_event_error("feedback_kernel_asymmetric: history impossible with " +
                               std::to_string(K) + " users");

    const bool tx_now = b_cur == TransmissionEvent::transmitted;
    double total_w = 0.0;
    std::array<double, 3> out{0.0, 0.0, 0.0};
    std::vector<double> t(n);
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        const int count = __builtin_popcount(mask);
        if (count < lo || count > hi) continue;
        double w = 1.0;
        for (int oi = 0; oi < n; ++oi)
            w *= (mask >> oi) & 1u ? others[oi].eta : 1.0 - others[oi].eta;
        if (w <= 0.0) continue;
        total_w += w;
        for (int oi = 0; oi < n; ++oi) t[oi] = tx_prob(oi, (mask >> oi) & 1u);
        double p_none = 1.0;
        for (int oi = 0; oi < n; ++oi) p_none *= 1.0 - t[oi];
        double p_one = 0.0;
        for (int j = 0; j < n; ++j) {
            if (t[j] <= 0.0) continue;
            double term = t[j];
            for (int oi = 0; oi < n; ++oi)
                if (oi != j) term *= 1.0 - t[oi];
            p_one += term;
        }
        if (tx_now) {
            out[1] += w * p_none;
            out[2] += w * (1.0 - p_none);
        } else {
            out[0] += w * p_none;
            out[1] += w * p_one;
            out[2] += w * (1.0 - p_none - p_one);
        }
    }
    if (total_w <= 0.0)
        throw null_event_error("feedback_kernel_asymmetric: conditioning event has zero "
                               "probability");
    for (double& v : out) v = std::max(v / total_w, 0.0);
    detail::snap_distribution(out);
    return out;
}

} // namespace saloha
