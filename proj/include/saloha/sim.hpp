// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "saloha/channel.hpp"
#include "saloha/dynamics.hpp"
#include "saloha/errors.hpp"
#include "saloha/policy.hpp"
#include "saloha/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace saloha {

enum class SimMode { dominant, actual };
enum class ChannelModel { collision, capture };

struct SlotTrace {
    long slot;
    Feedback z;          // broadcast at the end of the slot
    int transmitters;
    int common_state;    // threshold state used in the slot
    long total_queue;    // after the slot's queue updates
    // state components as observed at the start of the slot (user 0)
    int prev_common_state;
    Feedback z_prev;
    int user0_h_prev;
    int user0_queue;
};

struct SimConfig {
    SystemParams params;
    std::vector<const FsmcChannel*> channels;   // one per user
    const CommonInfoPolicy* policy = nullptr;
    std::vector<const PowerTable*> power;       // one per user
    SimMode mode = SimMode::dominant;
    ChannelModel channel_model = ChannelModel::collision;
    double beta = 0.9;
    long horizon_slots = 1'000'000;
    long warmup_slots = 100'000;
    std::uint64_t seed = 1;
    std::vector<SlotTrace>* trace = nullptr;    // optional per-slot dump

    void validate() const {
        params.validate();
        if (static_cast<int>(channels.size()) != params.num_users ||
            static_cast<int>(power.size()) != params.num_users || policy == nullptr)
            throw std::invalid_argument("SimConfig: need channels, power tables and a policy "
                                        "for every user");
        if (horizon_slots <= warmup_slots || warmup_slots < 0)
            throw std::invalid_argument("SimConfig: need horizon > warmup >= 0");
        if (channel_model == ChannelModel::capture && (beta <= 0.0 || beta > 1.0))
            throw std::invalid_argument("SimConfig: capture needs beta in (0, 1]");
    }
};

struct SimMetrics {
    double avg_queue_pkts = 0.0;
    double avg_delay_slots = 0.0;
    double avg_delay_ms = 0.0;
    double throughput_pkts_per_slot = 0.0;
    double throughput_bits_per_s = 0.0;
    double drop_prob = 0.0;
    double avg_power_w = 0.0;

    std::vector<double> user_avg_queue;
    std::vector<double> user_avg_delay_slots;
    std::vector<double> user_avg_power_w;

    // conservation counters over the whole episode
    std::vector<long> episode_accepted;
    std::vector<long> episode_departures;
    std::vector<int> final_queue;

    long measured_slots = 0;
    int runs = 1;
    std::uint64_t seed = 0;

    // between-run standard errors (zero for a single run)
    double se_queue = 0.0, se_delay_slots = 0.0, se_drop = 0.0, se_power = 0.0,
           se_throughput = 0.0;
};

struct Transmission {
    int user;
    double power;
    double gain;
};

/// Which concurrent transmissions the access point can decode when the
/// transmit rate is backed off by beta: alone always (rate <= capacity);
/// under collision, whenever the backed-off rate fits under the
/// interference-limited capacity.
inline std::vector<int> capture_decode(const std::vector<Transmission>& txs,
                                       const SystemParams& p, double beta) {
    std::vector<int> decoded;
    if (txs.size() == 1) {
        decoded.push_back(txs[0].user);
        return decoded;
    }
    for (const auto& tx : txs) {
        double interference = 0.0;
        for (const auto& other : txs)
            if (other.user != tx.user) interference += other.power * other.gain;
        const double rate = beta * p.bandwidth_hz *
                            std::log2(1.0 + tx.power * tx.gain / p.noise_power_w());
        const double cap = p.bandwidth_hz * std::log2(1.0 + tx.power * tx.gain /
                                                                (interference + p.noise_power_w()));
        if (rate <= cap) decoded.push_back(tx.user);
    }
    return decoded;
}

namespace detail {

struct SimRng {
    std::uint64_t state;
    explicit SimRng(std::uint64_t seed) : state(seed ^ 0x2545f4914f6cdd1dull) {}
    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }
};

} // namespace detail

/// One slot-level episode of the network under the given tables.
inline SimMetrics run_episode(const SimConfig& cfg) {
    cfg.validate();
    const int K = cfg.params.num_users;
    const int N = cfg.params.buffer_pkts;
    const double la = cfg.params.arrival_prob();
    const double tau = cfg.params.tau_s;
    detail::SimRng rng(cfg.seed);

    // cumulative transition rows per user for fast CSI stepping
    std::vector<std::vector<double>> cum(K);
    for (int k = 0; k < K; ++k) {
        const auto& ch = *cfg.channels[k];
        cum[k].resize(ch.size() * ch.size());
        for (int i = 0; i < ch.size(); ++i) {
            double acc = 0.0;
            for (int j = 0; j < ch.size(); ++j) {
                acc += ch.p(i, j);
                cum[k][i * ch.size() + j] = acc;
            }
        }
    }
    auto step_csi = [&](int k, int from) {
        const auto& row = cum[k];
        const int J = cfg.channels[k]->size();
        const double u = rng.uniform();
        for (int j = 0; j < J; ++j)
            if (u < row[from * J + j]) return j;
        return J - 1;
    };

    // consistent start: stationary CSI, feedback implied by the initial thresholds
    const int g_init = cfg.policy->init_state;
    std::vector<int> h_prev(K), h_cur(K), q(K, 0);
    int contenders0 = 0;
    for (int k = 0; k < K; ++k) {
        const auto& pi = cfg.channels[k]->stationary();
        const double u = rng.uniform();
        double acc = 0.0;
        h_prev[k] = cfg.channels[k]->size() - 1;
        for (int j = 0; j < cfg.channels[k]->size(); ++j) {
            acc += pi[j];
            if (u < acc) {
                h_prev[k] = j;
                break;
            }
        }
        if (h_prev[k] >= cfg.policy->user_threshold(g_init, k)) ++contenders0;
    }
    Feedback z_prev = contenders0 == 0 ? Feedback::nak
                      : contenders0 == 1 ? Feedback::ack
                                         : Feedback::collision;
    int g_prev = g_init;

    SimMetrics me;
    me.seed = cfg.seed;
    me.user_avg_queue.assign(K, 0.0);
    me.user_avg_delay_slots.assign(K, 0.0);
    me.user_avg_power_w.assign(K, 0.0);
    me.episode_accepted.assign(K, 0);
    me.episode_departures.assign(K, 0);
    me.final_queue.assign(K, 0);

    std::vector<double> sum_q(K, 0.0), sum_power(K, 0.0);
    std::vector<long> arrivals(K, 0), accepted(K, 0), drops(K, 0), departures(K, 0);
    std::vector<double> power_now(K, 0.0);
    std::vector<char> contend(K, 0);
    std::vector<Transmission> txs;
    txs.reserve(K);

    for (long m = 0; m < cfg.horizon_slots; ++m) {
        const bool measure = m >= cfg.warmup_slots;
        const int g_at_start = g_prev;
        const Feedback z_at_start = z_prev;
        const int h0_prev = h_prev[0];
        const int q0 = q[0];
        const int g_cur = cfg.policy->next_state(g_prev, z_prev);

        int count = 0;
        txs.clear();
        for (int k = 0; k < K; ++k) {
            h_cur[k] = step_csi(k, h_prev[k]);
            const bool gate = h_cur[k] >= cfg.policy->user_threshold(g_cur, k);
            const bool has_packet = cfg.mode == SimMode::dominant || q[k] > 0;
            contend[k] = gate && has_packet;
            power_now[k] = 0.0;
            if (contend[k]) {
                const int q_eff = cfg.mode == SimMode::dominant && q[k] == 0 ? 1 : q[k];
                power_now[k] =
                    cfg.power[k]->lookup(q_eff, h_prev[k], g_prev, z_prev, h_cur[k]);
                txs.push_back({k, power_now[k], cfg.channels[k]->gain(h_cur[k])});
                ++count;
            }
        }
        const Feedback z_new = count == 0 ? Feedback::nak
                               : count == 1 ? Feedback::ack
                                            : Feedback::collision;

        // who gets service progress this slot
        std::vector<int> decoded;
        double rate_scale = 1.0;
        if (cfg.channel_model == ChannelModel::collision) {
            if (count == 1) decoded.push_back(txs[0].user);
        } else {
            decoded = capture_decode(txs, cfg.params, cfg.beta);
            rate_scale = cfg.beta;
        }
        std::vector<char> served(K, 0);
        for (int k : decoded) served[k] = 1;

        for (int k = 0; k < K; ++k) {
            if (measure) {
                sum_q[k] += q[k];
                sum_power[k] += power_now[k];
            }
            double mu_tau = 0.0;
            if (served[k] && power_now[k] > 0.0)
                mu_tau = rate_scale *
                         service_rate(cfg.channels[k]->gain(h_cur[k]), power_now[k],
                                      Feedback::ack, cfg.params) *
                         tau;
            const double u = rng.uniform();
            if (u < la) {
                if (measure) ++arrivals[k];
                if (q[k] == N) {
                    if (measure) ++drops[k];
                } else {
                    ++q[k];
                    ++me.episode_accepted[k];
                    if (measure) ++accepted[k];
                }
            } else if (u < la + mu_tau) {
                if (q[k] > 0) {
                    --q[k];
                    ++me.episode_departures[k];
                    if (measure) ++departures[k];
                }
                // at q = 0 the served packet was virtual: no queue change
            }
            h_prev[k] = h_cur[k];
        }
        if (cfg.trace) {
            long total_q = 0;
            for (int k = 0; k < K; ++k) total_q += q[k];
            cfg.trace->push_back(
                {m, z_new, count, g_cur, total_q, g_at_start, z_at_start, h0_prev, q0});
        }
        g_prev = g_cur;
        z_prev = z_new;
    }

    me.measured_slots = cfg.horizon_slots - cfg.warmup_slots;
    for (int k = 0; k < K; ++k) me.final_queue[k] = q[k];

    long tot_arrivals = 0, tot_drops = 0, tot_departures = 0;
    double tot_q = 0.0, tot_power = 0.0, tot_delay = 0.0;
    for (int k = 0; k < K; ++k) {
        me.user_avg_queue[k] = sum_q[k] / me.measured_slots;
        me.user_avg_power_w[k] = sum_power[k] / me.measured_slots;
        const double accept_rate = static_cast<double>(accepted[k]) / me.measured_slots;
        me.user_avg_delay_slots[k] =
            accept_rate > 0.0 ? me.user_avg_queue[k] / accept_rate : 0.0;
        tot_arrivals += arrivals[k];
        tot_drops += drops[k];
        tot_departures += departures[k];
        tot_q += me.user_avg_queue[k];
        tot_power += me.user_avg_power_w[k];
        tot_delay += me.user_avg_delay_slots[k];
    }
    me.avg_queue_pkts = tot_q / K;
    me.avg_power_w = tot_power / K;
    me.avg_delay_slots = tot_delay / K;
    me.avg_delay_ms = me.avg_delay_slots * tau * 1000.0;
    me.drop_prob = tot_arrivals > 0 ? static_cast<double>(tot_drops) / tot_arrivals : 0.0;
    me.throughput_pkts_per_slot = static_cast<double>(tot_departures) / me.measured_slots;
    me.throughput_bits_per_s =
        me.throughput_pkts_per_slot * cfg.params.mean_packet_bits / tau;
    return me;
}

/// Pools a set of equal-length runs that differ only in seed: means of the
/// per-run metrics and between-run standard errors, independent of the order
/// the runs are handed in.
inline SimMetrics aggregate_runs(std::vector<SimMetrics> runs) {
    if (runs.empty()) throw std::invalid_argument("aggregate_runs: no runs");
    for (const auto& r : runs) {
        if (r.measured_slots != runs.front().measured_slots ||
            r.user_avg_queue.size() != runs.front().user_avg_queue.size())
            throw std::invalid_argument("aggregate_runs: runs disagree on configuration");
    }
    std::sort(runs.begin(), runs.end(),
              [](const SimMetrics& a, const SimMetrics& b) { return a.seed < b.seed; });
    const int R = static_cast<int>(runs.size());
    const int K = static_cast<int>(runs.front().user_avg_queue.size());

    SimMetrics out;
    out.runs = R;
    out.seed = runs.front().seed;
    out.measured_slots = runs.front().measured_slots;
    out.user_avg_queue.assign(K, 0.0);
    out.user_avg_delay_slots.assign(K, 0.0);
    out.user_avg_power_w.assign(K, 0.0);

    auto pool = [&](auto get, double& mean, double& se) {
        double s = 0.0;
        for (const auto& r : runs) s += get(r);
        mean = s / R;
        double v = 0.0;
        for (const auto& r : runs) v += (get(r) - mean) * (get(r) - mean);
        se = R > 1 ? std::sqrt(v / (R - 1) / R) : 0.0;
    };
    pool([](const SimMetrics& r) { return r.avg_queue_pkts; }, out.avg_queue_pkts, out.se_queue);
    pool([](const SimMetrics& r) { return r.avg_delay_slots; }, out.avg_delay_slots,
         out.se_delay_slots);
    pool([](const SimMetrics& r) { return r.drop_prob; }, out.drop_prob, out.se_drop);
    pool([](const SimMetrics& r) { return r.avg_power_w; }, out.avg_power_w, out.se_power);
    pool([](const SimMetrics& r) { return r.throughput_pkts_per_slot; },
         out.throughput_pkts_per_slot, out.se_throughput);
    double dummy = 0.0;
    pool([](const SimMetrics& r) { return r.avg_delay_ms; }, out.avg_delay_ms, dummy);
    pool([](const SimMetrics& r) { return r.throughput_bits_per_s; }, out.throughput_bits_per_s,
         dummy);
    for (int k = 0; k < K; ++k) {
        for (const auto& r : runs) {
            out.user_avg_queue[k] += r.user_avg_queue[k] / R;
            out.user_avg_delay_slots[k] += r.user_avg_delay_slots[k] / R;
            out.user_avg_power_w[k] += r.user_avg_power_w[k] / R;
        }
    }
    return out;
}

/// Expands a fixed-threshold baseline into a full power table so that the
/// online loop treats every policy uniformly.
inline PowerTable materialize_power_table(const FixedThresholdPolicy& pol, int buffer, int states,
                                          int gammas) {
    PowerTable t;
    t.buffer = buffer;
    t.states = states;
    t.gammas = gammas;
    const std::size_t sz =
        static_cast<std::size_t>(buffer + 1) * states * gammas * 3 * states;
    t.power.assign(sz, 0.0);
    t.defined.assign(sz, 1);
    for (int q = 0; q <= buffer; ++q)
        for (int h = 0; h < states; ++h)
            for (int g = 0; g < gammas; ++g)
                for (int z = 0; z < 3; ++z)
                    for (int hc = 0; hc < states; ++hc)
                        t.power[t.index(q, h, g, z, hc)] = hc >= pol.gamma ? pol.power[hc] : 0.0;
    return t;
}

} // namespace saloha
