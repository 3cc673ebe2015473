// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "saloha/dynamics.hpp"
#include "saloha/fixtures.hpp"
#include "saloha/matrix.hpp"
#include "oracle_utils.hpp"

#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

using namespace saloha;

namespace {

SystemParams default_params(int users) {
    SystemParams p;
    p.tau_s = 1e-3;
    p.bandwidth_hz = 1000.0;
    p.noise_psd_w_per_hz = 1e-3;
    p.lambda_pkts_per_s = 1.0;
    p.mean_packet_bits = 1000.0;
    p.buffer_pkts = 5;
    p.num_users = users;
    return p;
}

bool history_possible(Feedback z, TransmissionEvent b_prev, int gamma_prev, int K) {
    const bool tx = b_prev == TransmissionEvent::transmitted;
    switch (z) {
        case Feedback::nak: return !tx && (K == 1 || gamma_prev > 0);
        case Feedback::ack:
            if (tx) return K == 1 || gamma_prev > 0;
            return K >= 2 && (K == 2 || gamma_prev > 0);
        case Feedback::collision: return tx ? K >= 2 : K >= 3;
    }
    return false;
}

// Rejection-sampling oracle: draw the other users' two-slot CSI trajectories
// from the stationary chain, keep those consistent with the observed history,
// then tally the next feedback symbol.
std::array<double, 3> mc_feedback_oracle(Feedback z_prev, TransmissionEvent b_prev,
                                         TransmissionEvent b_cur, int gp, int gc, int K,
                                         const FsmcChannel& ch, long want_accepted,
                                         oracle::Rng& rng, long& accepted_out) {
    const int others = K - 1;
    std::array<long, 3> counts{0, 0, 0};
    long accepted = 0;
    std::vector<int> h_prev(others), h_cur(others);
    while (accepted < want_accepted) {
        int tx_prev = b_prev == TransmissionEvent::transmitted ? 1 : 0;
        for (int i = 0; i < others; ++i) {
            h_prev[i] = rng.categorical(ch.stationary());
            if (h_prev[i] >= gp) ++tx_prev;
        }
        bool ok = false;
        switch (z_prev) {
            case Feedback::nak: ok = tx_prev == 0; break;
            case Feedback::ack: ok = tx_prev == 1; break;
            case Feedback::collision: ok = tx_prev >= 2; break;
        }
        if (!ok) continue;
        ++accepted;
        int tx_cur = b_cur == TransmissionEvent::transmitted ? 1 : 0;
        for (int i = 0; i < others; ++i) {
            h_cur[i] = rng.markov_step(ch, h_prev[i]);
            if (h_cur[i] >= gc) ++tx_cur;
        }
        ++counts[tx_cur == 0 ? 0 : tx_cur == 1 ? 1 : 2];
    }
    accepted_out = accepted;
    return {static_cast<double>(counts[0]) / accepted, static_cast<double>(counts[1]) / accepted,
            static_cast<double>(counts[2]) / accepted};
}

} // namespace

TEST_CASE("single-user feedback is deterministic") {
    const auto& ch = fixtures::fading_model_1();
    auto silent = feedback_kernel_symmetric(Feedback::nak, TransmissionEvent::silent,
                                            TransmissionEvent::silent, 5, 5, 1, ch);
    CHECK(silent[0] == doctest::Approx(1.0));
    auto tx = feedback_kernel_symmetric(Feedback::nak, TransmissionEvent::silent,
                                        TransmissionEvent::transmitted, 5, 5, 1, ch);
    CHECK(tx[1] == doctest::Approx(1.0));
}

TEST_CASE("ACK after own transmission equals the NAK kernel bitwise") {
    const auto& ch = fixtures::fading_model_1();
    for (int K : {2, 3, 5}) {
        for (int gp = 1; gp < 10; gp += 2) {
            for (int gc = 0; gc < 10; gc += 3) {
                for (auto bc : {TransmissionEvent::silent, TransmissionEvent::transmitted}) {
                    auto a = feedback_kernel_symmetric(Feedback::ack,
                                                       TransmissionEvent::transmitted, bc, gp, gc,
                                                       K, ch);
                    auto b = feedback_kernel_symmetric(Feedback::nak, TransmissionEvent::silent,
                                                       bc, gp, gc, K, ch);
                    CHECK(a == b);
                }
            }
        }
    }
}

TEST_CASE("feedback kernel rows normalize for all valid histories") {
    const auto& ch = fixtures::fading_model_1();
    for (int K : {1, 2, 3, 5}) {
        for (int gp = 0; gp < 10; ++gp) {
            for (int gc = 0; gc < 10; ++gc) {
                for (Feedback z : kAllFeedback) {
                    for (auto bp : {TransmissionEvent::silent, TransmissionEvent::transmitted}) {
                        if (!history_possible(z, bp, gp, K)) continue;
                        for (auto bc :
                             {TransmissionEvent::silent, TransmissionEvent::transmitted}) {
                            auto fb = feedback_kernel_symmetric(z, bp, bc, gp, gc, K, ch);
                            double s = fb[0] + fb[1] + fb[2];
                            INFO("K=", K, " gp=", gp, " gc=", gc, " z=", static_cast<int>(z));
                            CHECK(std::abs(s - 1.0) < 1e-10);
                            for (double v : fb) CHECK(v >= 0.0);
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("feedback kernel rejects impossible histories") {
    const auto& ch = fixtures::fading_model_1();
    CHECK_THROWS_AS(feedback_kernel_symmetric(Feedback::collision, TransmissionEvent::transmitted,
                                              TransmissionEvent::silent, 5, 5, 1, ch),
                    null_event_error);
    CHECK_THROWS_AS(feedback_kernel_symmetric(Feedback::collision, TransmissionEvent::silent,
                                              TransmissionEvent::silent, 5, 5, 2, ch),
                    null_event_error);
    CHECK_THROWS_AS(feedback_kernel_symmetric(Feedback::nak, TransmissionEvent::silent,
                                              TransmissionEvent::silent, 0, 5, 3, ch),
                    null_event_error);
}

TEST_CASE("iid channel makes the kernel independent of the previous own status") {
    auto iid = fixtures::iid_channel(fixtures::fading_gains(),
                                     fixtures::fading_model_1().stationary());
    for (int K : {2, 4}) {
        for (int gp = 1; gp < 10; gp += 2) {
            for (int gc = 0; gc < 10; gc += 3) {
                for (auto bc : {TransmissionEvent::silent, TransmissionEvent::transmitted}) {
                    auto a = feedback_kernel_symmetric(Feedback::ack, TransmissionEvent::silent,
                                                       bc, gp, gc, K, iid);
                    auto b = feedback_kernel_symmetric(Feedback::ack,
                                                       TransmissionEvent::transmitted, bc, gp, gc,
                                                       K, iid);
                    for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("three-user kernel matches the Monte Carlo oracle") {
    const auto& ch = fixtures::fading_model_1();
    const int K = 3, gp = 5, gc = 5;
    oracle::Rng rng(20240811ull);
    for (Feedback z : kAllFeedback) {
        for (auto bp : {TransmissionEvent::silent, TransmissionEvent::transmitted}) {
            if (!history_possible(z, bp, gp, K)) continue;
            for (auto bc : {TransmissionEvent::silent, TransmissionEvent::transmitted}) {
                auto exact = feedback_kernel_symmetric(z, bp, bc, gp, gc, K, ch);
                long accepted = 0;
                auto mc = mc_feedback_oracle(z, bp, bc, gp, gc, K, ch, 2'000'000, rng, accepted);
                for (int i = 0; i < 3; ++i) {
                    double se = oracle::standard_error(mc[i], accepted);
                    INFO("z=", static_cast<int>(z), " bp=", static_cast<int>(bp),
                         " bc=", static_cast<int>(bc), " sym=", i, " exact=", exact[i],
                         " mc=", mc[i]);
                    CHECK(std::abs(mc[i] - exact[i]) <= 3.0 * se + 1e-9);
                }
            }
        }
    }
}

TEST_CASE("service rate") {
    auto p = default_params(1);
    CHECK(service_rate(4.493, 0.0, Feedback::ack, p) == 0.0);
    CHECK(service_rate(4.493, 10.0, Feedback::collision, p) == 0.0);
    CHECK(service_rate(4.493, 10.0, Feedback::nak, p) == 0.0);
    // P*H/(N0*W) = 1 gives exactly one packet per second at W = mean size
    double power = p.noise_power_w() / 4.493;
    CHECK(service_rate(4.493, power, Feedback::ack, p) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("queue kernel boundary behavior") {
    auto p = default_params(1);
    auto at = [](const QueueStep& qs, int q) {
        for (int i = 0; i < qs.count; ++i)
            if (qs.next[i] == q) return qs.prob[i];
        return 0.0;
    };

    auto empty = queue_kernel(0, 0.0, p);
    CHECK(at(empty, 1) == doctest::Approx(1e-3));
    CHECK(at(empty, 0) == doctest::Approx(1.0 - 1e-3));

    auto full = queue_kernel(p.buffer_pkts, 100.0, p);
    CHECK(at(full, p.buffer_pkts - 1) == doctest::Approx(0.1));
    CHECK(at(full, p.buffer_pkts) == doctest::Approx(0.9)); // dropped arrival folds in

    auto mid = queue_kernel(2, 100.0, p);
    CHECK(at(mid, 1) == doctest::Approx(0.1));
    CHECK(at(mid, 3) == doctest::Approx(0.001));
    CHECK(at(mid, 2) == doctest::Approx(0.899));

    CHECK_THROWS_AS(queue_kernel(2, 1000.0, p), time_scale_error);
}

TEST_CASE("power cap keeps the queue kernel inside its time-scale bound") {
    auto p = default_params(1);
    for (int h = 0; h < 10; ++h) {
        double g = fixtures::fading_gains()[h];
        double cap = max_power(p, g);
        double mu = service_rate(g, cap, Feedback::ack, p);
        CHECK(mu * p.tau_s <= 1.0 - p.arrival_prob() + 1e-9);
        CHECK_NOTHROW(queue_kernel(3, mu, p));
    }
}

TEST_CASE("local state kernel normalizes and respects the threshold gate") {
    const auto& ch = fixtures::fading_model_1();
    auto p = default_params(3);
    auto policy = [](int, Feedback) { return 5; };
    for (int q : {0, 2, 5}) {
        for (int hp = 0; hp < 10; hp += 3) {
            for (Feedback z : kAllFeedback) {
                auto bp = hp >= 5 ? TransmissionEvent::transmitted : TransmissionEvent::silent;
                if (!history_possible(z, bp, 5, 3)) continue;
                for (int hc = 0; hc < 10; hc += 3) {
                    LocalState s{q, hp, 5, z, hc};
                    auto kernel = local_state_kernel(s, 2.0, policy, p, ch);
                    double total = 0.0;
                    for (auto& [ns, pr] : kernel) {
                        total += pr;
                        CHECK(ns.gamma_prev == 5); // support only on the policy output
                        if (hc < 5) CHECK(ns.q >= q); // no service below the threshold
                    }
                    CHECK(std::abs(total - 1.0) < 1e-10);
                }
            }
        }
    }
}

TEST_CASE("local state kernel factorizes into its queue and channel marginals") {
    const auto& ch = fixtures::fading_model_1();
    auto p = default_params(3);
    auto policy = [](int, Feedback) { return 5; };
    LocalState s{2, 6, 5, Feedback::ack, 7};
    const double power = 3.0;
    auto kernel = local_state_kernel(s, power, policy, p, ch);

    // channel marginal: summing out everything but h_next recovers the row
    std::vector<double> h_marginal(10, 0.0);
    for (auto& [ns, pr] : kernel) h_marginal[ns.h_cur] += pr;
    for (int j = 0; j < 10; ++j) CHECK(h_marginal[j] == doctest::Approx(ch.p(7, j)).epsilon(1e-10));

    // queue marginal: mixture of the queue kernel over the feedback outcome
    auto fb = feedback_kernel_symmetric(Feedback::ack, TransmissionEvent::transmitted,
                                        TransmissionEvent::transmitted, 5, 5, 3, ch);
    std::vector<double> q_expect(p.buffer_pkts + 1, 0.0);
    for (Feedback z : kAllFeedback) {
        double pz = fb[static_cast<int>(z)];
        if (pz <= 0) continue;
        auto qs = queue_kernel(2, service_rate(ch.gain(7), power, z, p), p);
        for (int i = 0; i < qs.count; ++i) q_expect[qs.next[i]] += pz * qs.prob[i];
    }
    std::vector<double> q_marginal(p.buffer_pkts + 1, 0.0);
    for (auto& [ns, pr] : kernel) q_marginal[ns.q] += pr;
    for (int q = 0; q <= p.buffer_pkts; ++q)
        CHECK(q_marginal[q] == doctest::Approx(q_expect[q]).epsilon(1e-10));
}

TEST_CASE("local state kernel matches the joint two-user chain") {
    // two users, two iid states, unit buffer, constant threshold: the joint
    // chain over both users can be enumerated outright and user 2 summed out
    FsmcChannel ch = fixtures::iid_channel({0.5, 2.0}, {0.6, 0.4});
    SystemParams p = default_params(2);
    p.buffer_pkts = 1;
    const int gamma = 1;
    auto policy = [&](int, Feedback) { return gamma; };
    auto power_map = [&](const LocalState& s) {
        return s.h_cur >= gamma ? 0.4 + 0.25 * s.q + 0.1 * s.h_prev : 0.0;
    };

    // joint state: (q1, q2, h1p, h1c, h2p, h2c, z); policy threshold constant
    struct Joint {
        int q1, q2, h1p, h1c, h2p, h2c, z;
    };
    auto enc = [](int q1, int q2, int h1p, int h1c, int h2p, int h2c, int z) {
        return ((((((q1 * 2 + q2) * 2 + h1p) * 2 + h1c) * 2 + h2p) * 2 + h2c) * 3 + z);
    };
    const int n_states = 2 * 2 * 2 * 2 * 2 * 2 * 3;
    Matrix joint(n_states, n_states);
    for (int q1 = 0; q1 <= 1; ++q1)
        for (int q2 = 0; q2 <= 1; ++q2)
            for (int h1p = 0; h1p < 2; ++h1p)
                for (int h1c = 0; h1c < 2; ++h1c)
                    for (int h2p = 0; h2p < 2; ++h2p)
                        for (int h2c = 0; h2c < 2; ++h2c)
                            for (int z = 0; z < 3; ++z) {
                                int from = enc(q1, q2, h1p, h1c, h2p, h2c, z);
                                bool b1 = h1c >= gamma, b2 = h2c >= gamma;
                                int tx = int(b1) + int(b2);
                                int z_next = tx == 0 ? 0 : tx == 1 ? 1 : 2;
                                double p1 = power_map({q1, h1p, gamma, Feedback(z), h1c});
                                double p2 = power_map({q2, h2p, gamma, Feedback(z), h2c});
                                auto q1s = queue_kernel(
                                    q1, service_rate(ch.gain(h1c), b1 ? p1 : 0.0,
                                                     Feedback(z_next), p), p);
                                auto q2s = queue_kernel(
                                    q2, service_rate(ch.gain(h2c), b2 ? p2 : 0.0,
                                                     Feedback(z_next), p), p);
                                for (int i1 = 0; i1 < q1s.count; ++i1)
                                    for (int i2 = 0; i2 < q2s.count; ++i2)
                                        for (int h1n = 0; h1n < 2; ++h1n)
                                            for (int h2n = 0; h2n < 2; ++h2n) {
                                                double pr = q1s.prob[i1] * q2s.prob[i2] *
                                                            ch.p(h1c, h1n) * ch.p(h2c, h2n);
                                                if (pr <= 0) continue;
                                                joint(from, enc(q1s.next[i1], q2s.next[i2], h1c,
                                                                h1n, h2c, h2n, z_next)) += pr;
                                            }
                            }

    // joint stationary by long power iteration
    std::vector<double> w(n_states, 1.0 / n_states), wn(n_states);
    for (int it = 0; it < 20000; ++it) {
        std::fill(wn.begin(), wn.end(), 0.0);
        for (int i = 0; i < n_states; ++i) {
            if (w[i] == 0.0) continue;
            for (int j = 0; j < n_states; ++j)
                if (joint(i, j) > 0) wn[j] += w[i] * joint(i, j);
        }
        w.swap(wn);
    }

    // marginalize user 2 out of the joint kernel and compare per local state
    std::map<std::array<int, 5>, double> occ;
    std::map<std::array<int, 5>, std::map<std::array<int, 5>, double>> marg;
    for (int q1 = 0; q1 <= 1; ++q1)
        for (int q2 = 0; q2 <= 1; ++q2)
            for (int h1p = 0; h1p < 2; ++h1p)
                for (int h1c = 0; h1c < 2; ++h1c)
                    for (int h2p = 0; h2p < 2; ++h2p)
                        for (int h2c = 0; h2c < 2; ++h2c)
                            for (int z = 0; z < 3; ++z) {
                                int from = enc(q1, q2, h1p, h1c, h2p, h2c, z);
                                if (w[from] <= 1e-13) continue;
                                std::array<int, 5> loc{q1, h1p, z, h1c, 0};
                                occ[loc] += w[from];
                                for (int to = 0; to < n_states; ++to) {
                                    if (joint(from, to) <= 0) continue;
                                    // decode user-1 components of `to`
                                    int rz = to % 3, rest = to / 3;
                                    int rh2c = rest % 2; rest /= 2;
                                    int rh2p = rest % 2; rest /= 2;
                                    (void)rh2c; (void)rh2p;
                                    int rh1c = rest % 2; rest /= 2;
                                    int rh1p = rest % 2; rest /= 2;
                                    int rq2 = rest % 2; rest /= 2;
                                    (void)rq2;
                                    int rq1 = rest;
                                    marg[loc][{rq1, rh1p, rz, rh1c, 0}] += w[from] * joint(from, to);
                                }
                            }

    int compared = 0;
    for (auto& [loc, mass] : occ) {
        LocalState s{loc[0], loc[1], gamma, Feedback(loc[2]), loc[3]};
        auto kernel = local_state_kernel(s, power_map(s), policy, p, ch);
        std::map<std::array<int, 5>, double> expect;
        for (auto& [to, pr] : marg[loc]) expect[to] = pr / mass;
        std::map<std::array<int, 5>, double> got;
        for (auto& [ns, pr] : kernel)
            got[{ns.q, ns.h_prev, static_cast<int>(ns.z), ns.h_cur, 0}] += pr;
        for (auto& [to, pr] : expect) {
            CHECK(std::abs(got[to] - pr) < 1e-10);
            ++compared;
        }
        for (auto& [to, pr] : got) {
            if (!expect.count(to)) CHECK(pr < 1e-12);
        }
    }
    CHECK(compared > 50);
}

TEST_CASE("belief over other users' CSI is the stationary product") {
    const auto& c1 = fixtures::fading_model_1();
    const auto& c2 = fixtures::fading_model_2();
    auto two = belief_other_csi({&c1, &c2}, 0);
    REQUIRE(two.size() == 1);
    for (int j = 0; j < 10; ++j)
        CHECK(two[0][j] == doctest::Approx(c2.stationary()[j]).epsilon(1e-10));

    auto three = belief_other_csi({&c1, &c1, &c2}, 1);
    REQUIRE(three.size() == 2);
    for (int j = 0; j < 10; ++j) {
        CHECK(three[0][j] == doctest::Approx(c1.stationary()[j]).epsilon(1e-10));
        CHECK(three[1][j] == doctest::Approx(c2.stationary()[j]).epsilon(1e-10));
    }
    for (auto& b : three)
        CHECK(std::abs(std::accumulate(b.begin(), b.end(), 0.0) - 1.0) < 1e-10);
}

TEST_CASE("propagated belief matches Monte Carlo") {
    const auto& c2 = fixtures::fading_model_2();
    auto belief = belief_other_csi({&fixtures::fading_model_1(), &c2}, 0)[0];
    oracle::Rng rng(77001u);
    const long n = 1'000'000;
    std::vector<long> counts(10, 0);
    for (long i = 0; i < n; ++i) {
        int h_prev = rng.categorical(c2.stationary());
        ++counts[rng.markov_step(c2, h_prev)];
    }
    for (int j = 0; j < 10; ++j) {
        double mc = static_cast<double>(counts[j]) / n;
        CHECK(std::abs(mc - belief[j]) <= 3.0 * oracle::standard_error(mc, n) + 1e-9);
    }
}

TEST_CASE("asymmetric kernel: a guaranteed lone transmitter yields ACK") {
    const auto& c1 = fixtures::fading_model_1();
    const auto& c2 = fixtures::fading_model_2();
    std::vector<const FsmcChannel*> chans{&c1, &c2};
    // other user's current threshold is the lowest state: it always transmits
    auto fb = feedback_kernel_asymmetric(Feedback::nak, TransmissionEvent::silent,
                                         TransmissionEvent::silent, {5, 5}, {5, 0}, chans, 0);
    CHECK(fb[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("asymmetric kernel reduces to the symmetric kernel") {
    const auto& ch = fixtures::fading_model_1();
    std::vector<const FsmcChannel*> chans{&ch, &ch};
    for (int gp : {2, 5, 8}) {
        for (int gc : {1, 5, 9}) {
            for (Feedback z : kAllFeedback) {
                for (auto bp : {TransmissionEvent::silent, TransmissionEvent::transmitted}) {
                    if (!history_possible(z, bp, gp, 2)) continue;
                    for (auto bc : {TransmissionEvent::silent, TransmissionEvent::transmitted}) {
                        auto sym = feedback_kernel_symmetric(z, bp, bc, gp, gc, 2, ch);
                        auto asym = feedback_kernel_asymmetric(z, bp, bc, {gp, gp}, {gc, gc},
                                                               chans, 0);
                        for (int i = 0; i < 3; ++i) CHECK(std::abs(sym[i] - asym[i]) < 1e-10);
                    }
                }
            }
        }
    }
}

TEST_CASE("asymmetric kernel matches Monte Carlo on heterogeneous users") {
    const auto& c1 = fixtures::fading_model_1();
    const auto& c2 = fixtures::fading_model_2();
    std::vector<const FsmcChannel*> chans{&c1, &c2};
    const std::vector<int> gp{5, 4}, gc{6, 5};
    oracle::Rng rng(90210u);
    const long want = 2'000'000;
    for (Feedback z : {Feedback::ack, Feedback::collision}) {
        for (auto bp : {TransmissionEvent::silent, TransmissionEvent::transmitted}) {
            // with K=2 a collision implies both users transmitted
            if (z == Feedback::collision && bp == TransmissionEvent::silent) continue;
            if (z == Feedback::ack && bp == TransmissionEvent::silent) {
                // valid: the other user transmitted alone
            }
            for (auto bc : {TransmissionEvent::silent, TransmissionEvent::transmitted}) {
                auto exact = feedback_kernel_asymmetric(z, bp, bc, gp, gc, chans, 0);
                // rejection sampler over user 2's two-step CSI
                std::array<long, 3> counts{0, 0, 0};
                long accepted = 0;
                while (accepted < want / 4) {
                    int h2p = rng.categorical(c2.stationary());
                    bool other_tx = h2p >= gp[1];
                    int total_prev = int(other_tx) + (bp == TransmissionEvent::transmitted);
                    bool ok = z == Feedback::ack ? total_prev == 1 : total_prev >= 2;
                    if (!ok) continue;
                    ++accepted;
                    int h2c = rng.markov_step(c2, h2p);
                    int tx_cur = int(h2c >= gc[1]) + (bc == TransmissionEvent::transmitted);
                    ++counts[tx_cur == 0 ? 0 : tx_cur == 1 ? 1 : 2];
                }
                for (int i = 0; i < 3; ++i) {
                    double mc = static_cast<double>(counts[i]) / accepted;
                    double se = oracle::standard_error(mc, accepted);
                    INFO("z=", static_cast<int>(z), " bp=", static_cast<int>(bp),
                         " bc=", static_cast<int>(bc), " i=", i);
                    CHECK(std::abs(mc - exact[i]) <= 3.0 * se + 1e-9);
                }
            }
        }
    }
}

TEST_CASE("system parameter validation") {
    SystemParams p = default_params(2);
    CHECK_NOTHROW(p.validate());
    p.lambda_pkts_per_s = 2000.0; // lambda * tau >= 1
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = default_params(2);
    p.buffer_pkts = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
