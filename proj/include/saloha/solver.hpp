// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "saloha/channel.hpp"
#include "saloha/dynamics.hpp"
#include "saloha/errors.hpp"
#include "saloha/matrix.hpp"
#include "saloha/policy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace saloha {

/// Single-user control model on the reduced state (Q, H_prev, common state,
/// Z_prev): the own channel, the threshold policy and the feedback tensor
/// with the other users already summed out.
class ReducedModel {
  public:
    ReducedModel(const FsmcChannel& channel, SystemParams params, CommonInfoPolicy policy)
        : ReducedModel(std::vector<const FsmcChannel*>(params.num_users, &channel), params,
                       std::move(policy), 0) {}

    ReducedModel(std::vector<const FsmcChannel*> channels, SystemParams params,
                 CommonInfoPolicy policy, int user)
        : channels_(std::move(channels)), params_(params), policy_(std::move(policy)),
          user_(user) {
        params_.validate();
        if (static_cast<int>(channels_.size()) != params_.num_users)
            throw std::invalid_argument("ReducedModel: need one channel per user");
        ch_ = channels_[user_];
        const int G = policy_.states();
        fb_.assign(G * 3 * 4, std::nullopt);
        const bool homogeneous = policy_.symmetric;
        for (int g = 0; g < G; ++g) {
            for (int zi = 0; zi < 3; ++zi) {
                const int gn = policy_.next[g][zi];
                if (gn < 0) continue;
                for (int bp = 0; bp < 2; ++bp) {
                    for (int bc = 0; bc < 2; ++bc) {
                        try {
                            auto prev = bp ? TransmissionEvent::transmitted
                                           : TransmissionEvent::silent;
                            auto cur = bc ? TransmissionEvent::transmitted
                                          : TransmissionEvent::silent;
                            if (homogeneous) {
                                fb_[fb_index(g, zi, bp, bc)] = feedback_kernel_symmetric(
                                    Feedback(zi), prev, cur, policy_.user_threshold(g, user_),
                                    policy_.user_threshold(gn, user_), params_.num_users, *ch_);
                            } else {
                                fb_[fb_index(g, zi, bp, bc)] = feedback_kernel_asymmetric(
                                    Feedback(zi), prev, cur, policy_.thresholds[g],
                                    policy_.thresholds[gn], channels_, user_);
                            }
                        } catch (const null_event_error&) {
                            // impossible history; the state stays invalid
                        }
                    }
                }
            }
        }
    }

    const FsmcChannel& channel() const { return *ch_; }
    const SystemParams& params() const { return params_; }
    const CommonInfoPolicy& policy() const { return policy_; }
    int user() const { return user_; }

    int gamma_count() const { return policy_.states(); }
    int states_per_queue() const { return ch_->size() * gamma_count() * 3; }
    int buffer() const { return params_.buffer_pkts; }

    int threshold_of(int g) const { return policy_.user_threshold(g, user_); }
    int next_gamma(int g, int zi) const { return policy_.next[g][zi]; }

    int phi_index(int h, int g, int zi) const { return (h * gamma_count() + g) * 3 + zi; }
    void phi_decode(int phi, int& h, int& g, int& zi) const {
        zi = phi % 3;
        g = (phi / 3) % gamma_count();
        h = phi / (3 * gamma_count());
    }

    /// Feedback distribution for history (g, z, own prev/cur transmission), or
    /// nullopt when that history is impossible.
    const std::optional<std::array<double, 3>>& feedback(int g, int zi, bool bp, bool bc) const {
        return fb_[fb_index(g, zi, bp, bc)];
    }

    /// A reduced state is usable when its feedback history is well defined.
    bool phi_valid(int phi) const {
        int h, g, zi;
        phi_decode(phi, h, g, zi);
        if (policy_.next[g][zi] < 0) return false;
        const bool bp = h >= threshold_of(g);
        return fb_[fb_index(g, zi, bp, false)].has_value();
    }

  private:
    int fb_index(int g, int zi, bool bp, bool bc) const {
        return ((g * 3 + zi) * 2 + (bp ? 1 : 0)) * 2 + (bc ? 1 : 0);
    }

    std::vector<const FsmcChannel*> channels_;
    SystemParams params_;
    CommonInfoPolicy policy_;
    int user_;
    const FsmcChannel* ch_;
    std::vector<std::optional<std::array<double, 3>>> fb_;
};

/// Transition structure of (H_prev, common state, Z_prev), independent of the
/// queue and of the power policy.
struct PhiChain {
    int size = 0;
    std::vector<char> valid;
    std::vector<std::vector<std::pair<int, double>>> rows;
};

inline PhiChain build_phi_chain(const ReducedModel& m) {
    PhiChain out;
    out.size = m.states_per_queue();
    out.valid.assign(out.size, 0);
    out.rows.resize(out.size);
    const auto& ch = m.channel();
    for (int phi = 0; phi < out.size; ++phi) {
        if (!m.phi_valid(phi)) continue;
        out.valid[phi] = 1;
        int h, g, zi;
        m.phi_decode(phi, h, g, zi);
        const int gn = m.next_gamma(g, zi);
        const bool bp = h >= m.threshold_of(g);
        auto& row = out.rows[phi];
        for (int h2 = 0; h2 < ch.size(); ++h2) {
            const double ph = ch.p(h, h2);
            if (ph <= 0.0) continue;
            const bool bc = h2 >= m.threshold_of(gn);
            const auto& fb = m.feedback(g, zi, bp, bc);
            for (int z2 = 0; z2 < 3; ++z2) {
                const double pz = (*fb)[z2];
                if (pz <= 0.0) continue;
                const int to = m.phi_index(h2, gn, z2);
                if (!m.phi_valid(to))
                    throw std::runtime_error("build_phi_chain: transition into an impossible "
                                             "state, probability " + std::to_string(pz));
                row.push_back({to, ph * pz});
            }
        }
    }
    return out;
}

/// Recurrent classes and transient states of the (H, gamma, Z) chain, found
/// by strongly-connected-component decomposition of the support graph.
struct Unichains {
    std::vector<std::vector<int>> recurrent;
    std::vector<int> transient;
    std::vector<int> class_of; // phi -> recurrent class id, -1 transient/invalid
};

inline Unichains find_unichains(const PhiChain& chain) {
    const int n = chain.size;
    // iterative Tarjan
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<char> on_stack(n, 0);
    std::vector<int> stack;
    std::vector<std::vector<int>> sccs;
    int next_index = 0;

    struct Frame {
        int v;
        std::size_t edge;
    };
    for (int root = 0; root < n; ++root) {
        if (!chain.valid[root] || index[root] >= 0) continue;
        std::vector<Frame> call{{root, 0}};
        index[root] = low[root] = next_index++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& fr = call.back();
            if (fr.edge < chain.rows[fr.v].size()) {
                int w = chain.rows[fr.v][fr.edge++].first;
                if (index[w] < 0) {
                    index[w] = low[w] = next_index++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[fr.v] = std::min(low[fr.v], index[w]);
                }
            } else {
                if (low[fr.v] == index[fr.v]) {
                    std::vector<int> scc;
                    int w;
                    do {
                        w = stack.back();
                        stack.pop_back();
                        on_stack[w] = 0;
                        comp[w] = static_cast<int>(sccs.size());
                        scc.push_back(w);
                    } while (w != fr.v);
                    std::sort(scc.begin(), scc.end());
                    sccs.push_back(std::move(scc));
                }
                int v = fr.v;
                call.pop_back();
                if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
            }
        }
    }

    Unichains out;
    out.class_of.assign(n, -1);
    std::vector<char> closed(sccs.size(), 1);
    for (int v = 0; v < n; ++v) {
        if (!chain.valid[v]) continue;
        for (auto& [w, p] : chain.rows[v])
            if (comp[w] != comp[v]) closed[comp[v]] = 0;
    }
    for (std::size_t c = 0; c < sccs.size(); ++c) {
        if (closed[c]) {
            for (int v : sccs[c]) out.class_of[v] = static_cast<int>(out.recurrent.size());
            out.recurrent.push_back(sccs[c]);
        } else {
            for (int v : sccs[c]) out.transient.push_back(v);
        }
    }
    std::sort(out.transient.begin(), out.transient.end());
    return out;
}

/// Water-filling power: minimizer of xi*P + pr_ack*(W*tau/Nb)*log2(1+P*h/N0W)*delta
/// over P in [0, max_power]. delta is the value drop from serving one packet
/// (non-positive in a converged solution).
inline double waterfill_power(double pr_ack, double delta, double xi, double h_gain,
                              const SystemParams& p) {
    if (xi <= 0.0)
        throw std::invalid_argument("waterfill_power: xi must be positive");
    if (pr_ack <= 0.0 || delta >= 0.0) return 0.0;
    const double level = -p.bandwidth_hz * p.tau_s * pr_ack * delta /
                         (p.mean_packet_bits * xi * std::numbers::ln2_v<double>);
    const double raw = level - p.noise_power_w() / h_gain;
    return std::clamp(raw, 0.0, max_power(p, h_gain));
}

struct ConvergenceEntry {
    long iteration;
    double span;
    double theta;
};

struct SolveOptions {
    double span_tol = 1e-9;
    long max_iterations = 1'000'000;
    long log_stride = 1000;
};

/// Average price and relative values of the reduced-state control problem on
/// one unichain (a closed recurrent class plus the transient states draining
/// into it).
struct ReducedSolution {
    double theta = 0.0;
    double xi = 0.0;
    std::vector<int> phi_states;      // solve set, ascending
    std::vector<int> phi_local;       // phi -> local index or -1
    std::vector<double> value;        // (q * |phi_states| + local phi)
    long iterations = 0;
    double final_span = 0.0;
    std::vector<ConvergenceEntry> log;

    double v(int q, int local_phi) const {
        return value[static_cast<std::size_t>(q) * phi_states.size() + local_phi];
    }
};

namespace detail {

/// Precomputed transition structure for the Bellman sweeps: one edge per
/// (reduced state, next CSI) pair with the feedback row, local successor
/// indices and the power-cap constants resolved up front.
struct SweepPlan {
    struct Edge {
        double ph;                 // Pr{h_cur | h_prev}
        std::array<double, 3> fb;  // feedback distribution for this history
        std::array<int, 3> succ;   // local successor per feedback (-1 if prob 0)
        int succ_ack;              // local index of the ACK successor
        double noise_over_gain;    // N0 W / H
        double log_arg_scale;      // H / (N0 W)
        double cap;                // power cap at this CSI
        bool transmit;             // current CSI reaches the threshold
    };
    std::vector<Edge> edges;
    std::vector<int> row_begin; // per local phi, index into edges
    double la = 0.0;
    double wf_level = 0.0; // W tau / (Nb ln2): water level per unit price ratio
    double sr_tau = 0.0;   // W tau / Nb: mu*tau per log2 unit
    int buffer = 0;
    std::size_t width = 0;

    static SweepPlan build(const ReducedModel& m, const std::vector<int>& phi_states,
                           const std::vector<int>& phi_local) {
        const auto& ch = m.channel();
        const auto& p = m.params();
        SweepPlan plan;
        plan.la = p.arrival_prob();
        plan.wf_level = p.bandwidth_hz * p.tau_s /
                        (p.mean_packet_bits * std::numbers::ln2_v<double>);
        plan.sr_tau = p.bandwidth_hz * p.tau_s / p.mean_packet_bits;
        plan.buffer = m.buffer();
        plan.width = phi_states.size();
        std::vector<double> cap(ch.size());
        for (int h = 0; h < ch.size(); ++h) cap[h] = max_power(p, ch.gain(h));
        for (std::size_t li = 0; li < phi_states.size(); ++li) {
            plan.row_begin.push_back(static_cast<int>(plan.edges.size()));
            int h, g, zi;
            m.phi_decode(phi_states[li], h, g, zi);
            const int gn = m.next_gamma(g, zi);
            const bool bp = h >= m.threshold_of(g);
            const int thr_cur = m.threshold_of(gn);
            for (int h2 = 0; h2 < ch.size(); ++h2) {
                const double ph = ch.p(h, h2);
                if (ph <= 0.0) continue;
                Edge e;
                e.ph = ph;
                e.transmit = h2 >= thr_cur;
                e.fb = *m.feedback(g, zi, bp, e.transmit);
                for (int z2 = 0; z2 < 3; ++z2)
                    e.succ[z2] = e.fb[z2] > 0.0 ? phi_local[m.phi_index(h2, gn, z2)] : -1;
                e.succ_ack = phi_local[m.phi_index(h2, gn, 1)];
                e.noise_over_gain = p.noise_power_w() / ch.gain(h2);
                e.log_arg_scale = ch.gain(h2) / p.noise_power_w();
                e.cap = cap[h2];
                plan.edges.push_back(e);
            }
        }
        plan.row_begin.push_back(static_cast<int>(plan.edges.size()));
        return plan;
    }
};

inline void bellman_sweep_planned(const SweepPlan& plan, const std::vector<double>& value,
                                  double xi, std::vector<double>& out) {
    const std::size_t width = plan.width;
    const double la = plan.la;
    for (int q = 0; q <= plan.buffer; ++q) {
        const double* vq = value.data() + static_cast<std::size_t>(q) * width;
        const double* vu = value.data() +
                           static_cast<std::size_t>(std::min(q + 1, plan.buffer)) * width;
        const double* vd = value.data() + static_cast<std::size_t>(std::max(q - 1, 0)) * width;
        double* row_out = out.data() + static_cast<std::size_t>(q) * width;
        for (std::size_t li = 0; li < width; ++li) {
            double acc = q;
            for (int ei = plan.row_begin[li]; ei < plan.row_begin[li + 1]; ++ei) {
                const auto& e = plan.edges[ei];
                double mu_tau = 0.0, cost = 0.0;
                if (e.transmit && q > 0 && e.fb[1] > 0.0) {
                    const double delta = vd[e.succ_ack] - vq[e.succ_ack];
                    if (delta < 0.0) {
                        const double level = -plan.wf_level * e.fb[1] * delta / xi;
                        double power = level - e.noise_over_gain;
                        if (power > 0.0) {
                            if (power > e.cap) power = e.cap;
                            mu_tau = plan.sr_tau * std::log2(1.0 + power * e.log_arg_scale);
                            cost = xi * power;
                        }
                    }
                }
                double ev = cost;
                if (e.fb[0] > 0.0) ev += e.fb[0] * (la * vu[e.succ[0]] +
                                                    (1.0 - la) * vq[e.succ[0]]);
                if (e.fb[1] > 0.0)
                    ev += e.fb[1] * (la * vu[e.succ[1]] + mu_tau * vd[e.succ[1]] +
                                     (1.0 - la - mu_tau) * vq[e.succ[1]]);
                if (e.fb[2] > 0.0) ev += e.fb[2] * (la * vu[e.succ[2]] +
                                                    (1.0 - la) * vq[e.succ[2]]);
                acc += e.ph * ev;
            }
            row_out[li] = acc;
        }
    }
}

/// One Bellman sweep; writes T(V) into out. Power is minimized in closed form
/// per current-slot CSI.
inline void bellman_sweep(const ReducedModel& m, const std::vector<int>& phi_states,
                          const std::vector<int>& phi_local, const std::vector<double>& value,
                          double xi, std::vector<double>& out) {
    bellman_sweep_planned(SweepPlan::build(m, phi_states, phi_local), value, xi, out);
}

} // namespace detail

/// Relative value iteration over the given phi states (times the full queue
/// range), with the value anchored at the lexicographically smallest state.
/// The embedded power minimization is exact (water-filling), so the action
/// space never needs discretizing.
inline ReducedSolution relative_value_iteration(const ReducedModel& m,
                                                const std::vector<int>& phi_states, double xi,
                                                const SolveOptions& opts = {},
                                                const std::vector<double>* warm_start = nullptr) {
    if (xi <= 0.0) throw std::invalid_argument("relative_value_iteration: xi must be positive");
    ReducedSolution sol;
    sol.xi = xi;
    sol.phi_states = phi_states;
    std::sort(sol.phi_states.begin(), sol.phi_states.end());
    sol.phi_local.assign(m.states_per_queue(), -1);
    for (std::size_t i = 0; i < sol.phi_states.size(); ++i)
        sol.phi_local[sol.phi_states[i]] = static_cast<int>(i);

    const std::size_t width = sol.phi_states.size();
    const std::size_t total = width * (m.buffer() + 1);
    sol.value.assign(total, 0.0);
    if (warm_start && warm_start->size() == total) sol.value = *warm_start;

    const auto plan = detail::SweepPlan::build(m, sol.phi_states, sol.phi_local);
    std::vector<double> next(total, 0.0);
    double theta = 0.0, span = std::numeric_limits<double>::infinity();
    // geometric extrapolation bookkeeping: once the policy settles the sweep
    // acts affinely and the remaining error decays by a fixed factor per
    // iteration, so the series can be jumped; the stopping certificate below
    // still comes from genuinely swept spans
    const int window = 150;
    double window_span = std::numeric_limits<double>::infinity();
    int cooldown = 2;
    long it = 0;
    for (; it < opts.max_iterations; ++it) {
        detail::bellman_sweep_planned(plan, sol.value, xi, next);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t s = 0; s < total; ++s) {
            const double d = next[s] - sol.value[s];
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        span = hi - lo;
        theta = 0.5 * (hi + lo);
        if (opts.log_stride > 0 && it % opts.log_stride == 0)
            sol.log.push_back({it, span, theta});
        if (span < opts.span_tol) {
            const double anchor = next[0];
            for (std::size_t s = 0; s < total; ++s) sol.value[s] = next[s] - anchor;
            break;
        }
        const bool jump = it > 0 && it % window == 0 && cooldown == 0 && span < window_span &&
                          span > 0.0;
        if (jump) {
            const double rho = std::min(std::pow(span / window_span, 1.0 / window), 0.999999);
            if (rho > 0.2) {
                const double boost = rho / (1.0 - rho);
                const double anchor = next[0] + (next[0] - sol.value[0] - theta) * boost;
                for (std::size_t s = 0; s < total; ++s)
                    sol.value[s] = next[s] + (next[s] - sol.value[s] - theta) * boost - anchor;
                cooldown = 2;
                window_span = std::numeric_limits<double>::infinity();
                continue;
            }
        }
        if (it % window == 0) {
            window_span = span;
            if (cooldown > 0) --cooldown;
        }
        const double anchor = next[0];
        for (std::size_t s = 0; s < total; ++s) sol.value[s] = next[s] - anchor;
    }
    if (span >= opts.span_tol)
        throw convergence_error("relative_value_iteration: span " + std::to_string(span) +
                                " after " + std::to_string(it) + " iterations");
    sol.iterations = it + 1;
    sol.final_span = span;
    sol.theta = theta;
    sol.log.push_back({it, span, theta});
    return sol;
}

/// Synthesized power actions over (q, h_prev, common state, z_prev, h_cur).
struct PowerTable {
    int buffer = 0, states = 0, gammas = 0;
    std::vector<double> power;
    std::vector<char> defined;

    std::size_t index(int q, int h_prev, int g, int zi, int h_cur) const {
        return (((static_cast<std::size_t>(q) * states + h_prev) * gammas + g) * 3 + zi) * states +
               h_cur;
    }
    double lookup(int q, int h_prev, int g, Feedback z, int h_cur) const {
        const auto i = index(q, h_prev, g, static_cast<int>(z), h_cur);
        if (!defined[i])
            throw table_miss_error("power table miss at q=" + std::to_string(q) +
                                   " h_prev=" + std::to_string(h_prev) + " gamma=" +
                                   std::to_string(g) + " z=" + to_string(z) +
                                   " h_cur=" + std::to_string(h_cur));
        return power[i];
    }
};

/// Extracts the optimal power action for every covered local state.
inline PowerTable extract_power_table(const ReducedModel& m, const ReducedSolution& sol) {
    PowerTable t;
    t.buffer = m.buffer();
    t.states = m.channel().size();
    t.gammas = m.gamma_count();
    const std::size_t sz = static_cast<std::size_t>(t.buffer + 1) * t.states * t.gammas * 3 *
                           t.states;
    t.power.assign(sz, 0.0);
    t.defined.assign(sz, 0);
    const std::size_t width = sol.phi_states.size();
    for (int q = 0; q <= t.buffer; ++q) {
        for (std::size_t li = 0; li < width; ++li) {
            int h, g, zi;
            m.phi_decode(sol.phi_states[li], h, g, zi);
            const int gn = m.next_gamma(g, zi);
            const bool bp = h >= m.threshold_of(g);
            for (int h2 = 0; h2 < t.states; ++h2) {
                double power = 0.0;
                const bool bc = h2 >= m.threshold_of(gn);
                if (bc && q > 0) {
                    const auto& fb = *m.feedback(g, zi, bp, bc);
                    if (fb[1] > 0.0) {
                        const int lack = sol.phi_local[m.phi_index(h2, gn, 1)];
                        const double delta =
                            sol.value[static_cast<std::size_t>(std::max(q - 1, 0)) * width +
                                      lack] -
                            sol.value[static_cast<std::size_t>(q) * width + lack];
                        power = waterfill_power(fb[1], delta, sol.xi, m.channel().gain(h2),
                                                m.params());
                    }
                }
                const auto idx = t.index(q, h, g, zi, h2);
                t.power[idx] = power;
                t.defined[idx] = 1;
            }
        }
    }
    return t;
}

/// Stationary distribution of the reduced state under fixed threshold and
/// power policies, solved directly from the balance equations on one
/// recurrent phi class (times the queue range).
inline std::vector<double> controlled_stationary_distribution(const ReducedModel& m,
                                                              const PowerTable& table,
                                                              const std::vector<int>& phi_class) {
    const auto& ch = m.channel();
    const auto& p = m.params();
    const int N = m.buffer();
    const double la = p.arrival_prob();
    std::vector<int> local(m.states_per_queue(), -1);
    for (std::size_t i = 0; i < phi_class.size(); ++i) local[phi_class[i]] = static_cast<int>(i);
    const std::size_t width = phi_class.size();
    const std::size_t n = width * (N + 1);
    auto sidx = [&](int q, int lphi) { return static_cast<std::size_t>(q) * width + lphi; };

    // dense (T^t - I) with the normalization replacing the last row
    Matrix a(n, n);
    std::vector<double> b(n, 0.0);
    for (int q = 0; q <= N; ++q) {
        for (std::size_t li = 0; li < width; ++li) {
            const std::size_t from = sidx(q, static_cast<int>(li));
            int h, g, zi;
            m.phi_decode(phi_class[li], h, g, zi);
            const int gn = m.next_gamma(g, zi);
            const bool bp = h >= m.threshold_of(g);
            for (int h2 = 0; h2 < ch.size(); ++h2) {
                const double ph = ch.p(h, h2);
                if (ph <= 0.0) continue;
                const bool bc = h2 >= m.threshold_of(gn);
                const auto& fb = *m.feedback(g, zi, bp, bc);
                const double power = table.lookup(q, h, g, Feedback(zi), h2);
                for (int z2 = 0; z2 < 3; ++z2) {
                    const double pz = fb[z2];
                    if (pz <= 0.0) continue;
                    const int l2 = local[m.phi_index(h2, gn, z2)];
                    if (l2 < 0)
                        throw std::runtime_error("controlled_stationary_distribution: "
                                                 "class is not closed");
                    const double mu = z2 == 1 ? service_rate(ch.gain(h2), power, Feedback::ack, p)
                                              : 0.0;
                    const QueueStep qs = queue_kernel(q, mu, p);
                    for (int i = 0; i < qs.count; ++i)
                        a(sidx(qs.next[i], l2), from) += ph * pz * qs.prob[i];
                }
            }
            a(from, from) -= 1.0;
        }
    }
    for (std::size_t c = 0; c < n; ++c) a(n - 1, c) = 1.0;
    b[n - 1] = 1.0;
    std::vector<double> omega = solve_linear(std::move(a), std::move(b));
    for (double& v : omega) v = std::max(v, 0.0);
    double s = 0.0;
    for (double v : omega) s += v;
    if (std::abs(s - 1.0) > 1e-8)
        throw std::runtime_error("controlled_stationary_distribution: normalization failed, "
                                 "sum = " + std::to_string(s));
    for (double& v : omega) v /= s;
    return omega;
}

/// Expected transmit power under the stationary reduced-state distribution.
inline double average_power(const ReducedModel& m, const PowerTable& table,
                            const std::vector<int>& phi_class, const std::vector<double>& omega) {
    const auto& ch = m.channel();
    double total = 0.0;
    const std::size_t width = phi_class.size();
    for (int q = 0; q <= m.buffer(); ++q) {
        for (std::size_t li = 0; li < width; ++li) {
            const double w = omega[static_cast<std::size_t>(q) * width + li];
            if (w <= 0.0) continue;
            int h, g, zi;
            m.phi_decode(phi_class[li], h, g, zi);
            double mean_power = 0.0;
            for (int h2 = 0; h2 < ch.size(); ++h2) {
                const double ph = ch.p(h, h2);
                if (ph <= 0.0) continue;
                mean_power += ph * table.lookup(q, h, g, Feedback(zi), h2);
            }
            total += w * mean_power;
        }
    }
    return total;
}

/// Mean queue length under the stationary distribution.
inline double average_queue(const ReducedModel& m, const std::vector<int>& phi_class,
                            const std::vector<double>& omega) {
    double total = 0.0;
    const std::size_t width = phi_class.size();
    for (int q = 0; q <= m.buffer(); ++q)
        for (std::size_t li = 0; li < width; ++li)
            total += q * omega[static_cast<std::size_t>(q) * width + li];
    return total;
}

/// Stationary probability that the user transmits in a slot (dominant
/// system); used to size the fixed-power baselines.
inline double stationary_transmit_probability(const ReducedModel& m, const PhiChain& chain,
                                              const std::vector<int>& cls) {
    std::vector<int> local(chain.size, -1);
    for (std::size_t i = 0; i < cls.size(); ++i) local[cls[i]] = static_cast<int>(i);
    const std::size_t n = cls.size();
    Matrix a(n, n);
    std::vector<double> b(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& [to, pr] : chain.rows[cls[i]]) {
            if (local[to] < 0) throw std::runtime_error("recurrent class not closed");
            a(local[to], i) += pr;
        }
        a(i, i) -= 1.0;
    }
    for (std::size_t c = 0; c < n; ++c) a(n - 1, c) = 1.0;
    b[n - 1] = 1.0;
    auto w = solve_linear(std::move(a), std::move(b));
    const auto& ch = m.channel();
    double tx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        int h, g, zi;
        m.phi_decode(cls[i], h, g, zi);
        const int thr = m.threshold_of(m.next_gamma(g, zi));
        double p_above = 0.0;
        for (int h2 = thr; h2 < ch.size(); ++h2) p_above += ch.p(h, h2);
        tx += std::max(w[i], 0.0) * p_above;
    }
    return tx;
}

/// The unichain the experiments run on: the recurrent class reachable from
/// the policy's initial common state, plus every valid transient state that
/// drains into it (so the online tables also cover starts and excursions).
struct SolveSet {
    std::vector<int> phi_states;  // class + feeding transients
    std::vector<int> phi_class;   // the recurrent class only
};

inline SolveSet reachable_unichain(const ReducedModel& m) {
    const PhiChain chain = build_phi_chain(m);
    const Unichains uc = find_unichains(chain);

    // forward closure from every valid state with the initial common state
    std::vector<char> seen(chain.size, 0);
    std::vector<int> stack;
    for (int h = 0; h < m.channel().size(); ++h) {
        for (int zi = 0; zi < 3; ++zi) {
            int phi = m.phi_index(h, m.policy().init_state, zi);
            if (chain.valid[phi] && !seen[phi]) {
                seen[phi] = 1;
                stack.push_back(phi);
            }
        }
    }
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (auto& [w, p] : chain.rows[v]) {
            if (!seen[w]) {
                seen[w] = 1;
                stack.push_back(w);
            }
        }
    }
    int class_id = -1;
    for (int phi = 0; phi < chain.size; ++phi) {
        if (seen[phi] && uc.class_of[phi] >= 0) {
            if (class_id >= 0 && class_id != uc.class_of[phi])
                throw std::runtime_error("reachable_unichain: multiple recurrent classes "
                                         "reachable from the initial state");
            class_id = uc.class_of[phi];
        }
    }
    if (class_id < 0) throw std::runtime_error("reachable_unichain: no recurrent class found");

    SolveSet out;
    out.phi_class = uc.recurrent[class_id];

    // backward closure: all valid states that can reach the class
    std::vector<std::vector<int>> rev(chain.size);
    for (int v = 0; v < chain.size; ++v)
        for (auto& [w, p] : chain.rows[v]) rev[w].push_back(v);
    std::vector<char> reaches(chain.size, 0);
    stack = out.phi_class;
    for (int v : stack) reaches[v] = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int u : rev[v]) {
            if (!reaches[u] && chain.valid[u] && uc.class_of[u] < 0) {
                reaches[u] = 1;
                stack.push_back(u);
            }
        }
    }
    for (int phi = 0; phi < chain.size; ++phi)
        if (reaches[phi]) out.phi_states.push_back(phi);
    return out;
}

inline double stationary_transmit_probability(const ReducedModel& m) {
    const PhiChain chain = build_phi_chain(m);
    return stationary_transmit_probability(m, chain, reachable_unichain(m).phi_class);
}

struct CalibrationEntry {
    double xi;
    double avg_power;
    double theta;
};

struct CalibrationResult {
    double xi = 0.0;
    double avg_power = 0.0;
    double theta = 0.0;
    bool saturated = false;
    ReducedSolution solution;
    PowerTable table;
    SolveSet states;
    std::vector<CalibrationEntry> log;
};

struct CalibrationOptions {
    double power_rel_tol = 1e-2;
    double bracket_min_width = 1e-12;
    double xi_floor = 1e-12;
    double xi_init = 1e-2;
    int max_bracket_steps = 80;
    SolveOptions solve;
};

/// Bisection on the power price: the average transmit power is non-increasing
/// in xi, so a bracket around the budget is refined until the constraint is
/// met within tolerance. Budgets above what even near-free power can spend
/// return the floor policy with a saturation flag.
inline CalibrationResult calibrate_lagrange(const ReducedModel& m, double power_budget,
                                            const CalibrationOptions& opts = {}) {
    if (power_budget <= 0.0)
        throw std::invalid_argument("calibrate_lagrange: power budget must be positive");
    CalibrationResult res;
    res.states = reachable_unichain(m);
    std::vector<double> warm;

    auto eval = [&](double xi) {
        ReducedSolution sol = relative_value_iteration(m, res.states.phi_states, xi, opts.solve,
                                                       warm.empty() ? nullptr : &warm);
        warm = sol.value;
        PowerTable table = extract_power_table(m, sol);
        auto omega = controlled_stationary_distribution(m, table, res.states.phi_class);
        const double pw = average_power(m, table, res.states.phi_class, omega);
        res.log.push_back({xi, pw, sol.theta});
        res.xi = xi;
        res.avg_power = pw;
        res.theta = sol.theta;
        res.solution = std::move(sol);
        res.table = std::move(table);
        return pw;
    };

    double xi = opts.xi_init;
    double pw = eval(xi);
    double lo = xi, hi = xi;
    if (pw > power_budget) {
        for (int i = 0; i < opts.max_bracket_steps && pw > power_budget; ++i) {
            lo = hi;
            hi *= 8.0;
            pw = eval(hi);
        }
        if (pw > power_budget)
            throw convergence_error("calibrate_lagrange: could not bracket the budget from above");
    } else {
        for (int i = 0; i < opts.max_bracket_steps && pw < power_budget; ++i) {
            hi = lo;
            lo /= 8.0;
            if (lo < opts.xi_floor) {
                lo = opts.xi_floor;
                pw = eval(lo);
                break;
            }
            pw = eval(lo);
        }
        if (pw < power_budget) {
            // even nearly free power cannot spend the budget
            res.saturated = true;
            return res;
        }
    }

    // invariant: avg_power(lo) >= budget >= avg_power(hi)
    while (std::abs(res.avg_power - power_budget) > opts.power_rel_tol * power_budget &&
           hi - lo > opts.bracket_min_width) {
        const double mid = 0.5 * (lo + hi);
        const double pm = eval(mid);
        (pm > power_budget ? lo : hi) = mid;
    }
    if (std::abs(res.avg_power - power_budget) > opts.power_rel_tol * power_budget &&
        hi - lo <= opts.bracket_min_width)
        throw convergence_error("calibrate_lagrange: bracket collapsed at xi=" +
                                std::to_string(res.xi) + " without meeting the budget");
    return res;
}

} // namespace saloha
