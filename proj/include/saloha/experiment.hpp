// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "saloha/channel.hpp"
#include "saloha/dynamics.hpp"
#include "saloha/fixtures.hpp"
#include "saloha/policy.hpp"
#include "saloha/sim.hpp"
#include "saloha/solver.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace saloha {

enum class PolicyKind { proposed, binary_scheduling, lcsihp_fixed_power, variable_rate, bsp };

inline const char* to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::proposed: return "proposed";
        case PolicyKind::binary_scheduling: return "binary_scheduling";
        case PolicyKind::lcsihp_fixed_power: return "lcsihp_fixed_power";
        case PolicyKind::variable_rate: return "variable_rate";
        default: return "bsp";
    }
}

inline PolicyKind policy_kind_from(const std::string& s) {
    if (s == "proposed") return PolicyKind::proposed;
    if (s == "binary_scheduling") return PolicyKind::binary_scheduling;
    if (s == "lcsihp_fixed_power") return PolicyKind::lcsihp_fixed_power;
    if (s == "variable_rate") return PolicyKind::variable_rate;
    if (s == "bsp") return PolicyKind::bsp;
    throw std::invalid_argument("unknown policy '" + s + "'");
}

/// A full experiment description: scenario, channels, SNR sweep, the policies
/// to synthesize and the simulation settings.
struct ExperimentSpec {
    std::string name;
    std::string scenario;          // symmetric | asymmetric | capture
    SystemParams params;
    std::vector<FsmcChannel> channels; // one per user
    std::vector<double> snr_db;
    std::vector<PolicyKind> baselines;
    SimMode mode = SimMode::dominant;
    ChannelModel channel_model = ChannelModel::collision;
    double beta = 0.9;
    long horizon_slots = 1'000'000;
    long warmup_slots = 100'000;
    int num_seeds = 10;
    std::uint64_t base_seed = 1;

    double power_budget_w(double snr_db_point) const {
        return params.noise_power_w() * std::pow(10.0, snr_db_point / 10.0);
    }

    bool symmetric_channels() const {
        for (const auto& ch : channels)
            if (!(ch == channels.front())) return false;
        return true;
    }

    static ExperimentSpec parse(const nlohmann::json& j);
    static ExperimentSpec load(const std::string& path);
};

namespace detail {

inline FsmcChannel channel_from_json(const nlohmann::json& j) {
    if (j.contains("builtin")) {
        const std::string name = j.at("builtin").get<std::string>();
        if (name == "table1_user1") return fixtures::fading_model_1();
        if (name == "table1_user2") return fixtures::fading_model_2();
        throw std::invalid_argument("unknown builtin channel '" + name + "'");
    }
    if (j.contains("blend")) return fixtures::blended_model(j.at("blend").get<double>());
    auto states = j.at("states").get<std::vector<double>>();
    auto rows = j.at("transition").get<std::vector<std::vector<double>>>();
    std::vector<double> flat;
    for (auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return FsmcChannel(std::move(states), std::move(flat));
}

} // namespace detail

inline ExperimentSpec ExperimentSpec::parse(const nlohmann::json& j) {
    ExperimentSpec s;
    s.name = j.at("name").get<std::string>();
    s.scenario = j.at("scenario").get<std::string>();
    if (s.scenario != "symmetric" && s.scenario != "asymmetric" && s.scenario != "capture")
        throw std::invalid_argument("scenario must be symmetric, asymmetric or capture");

    const auto& p = j.at("params");
    s.params.tau_s = p.at("tau_s").get<double>();
    s.params.bandwidth_hz = p.at("bandwidth_hz").get<double>();
    s.params.noise_psd_w_per_hz = p.at("noise_psd_w_per_hz").get<double>();
    s.params.lambda_pkts_per_s = p.at("lambda_pkts_per_s").get<double>();
    s.params.mean_packet_bits = p.at("mean_packet_bits").get<double>();
    s.params.buffer_pkts = p.at("buffer_pkts").get<int>();
    s.params.num_users = j.at("users").get<int>();
    s.params.validate();

    if (j.contains("channel")) {
        auto ch = detail::channel_from_json(j.at("channel"));
        s.channels.assign(s.params.num_users, ch);
    } else {
        for (const auto& cj : j.at("channels")) s.channels.push_back(detail::channel_from_json(cj));
        if (static_cast<int>(s.channels.size()) != s.params.num_users)
            throw std::invalid_argument("channels list must have one entry per user");
    }

    s.snr_db = j.at("snr_db").get<std::vector<double>>();
    if (s.snr_db.empty()) throw std::invalid_argument("snr_db sweep must not be empty");
    for (const auto& b : j.at("baselines")) s.baselines.push_back(policy_kind_from(b.get<std::string>()));
    if (s.baselines.empty()) throw std::invalid_argument("baselines must not be empty");
    for (PolicyKind k : s.baselines) {
        if (k == PolicyKind::bsp && s.scenario != "asymmetric")
            throw std::invalid_argument("bsp baseline is only defined for the asymmetric scenario");
    }

    const auto& sim = j.at("sim");
    const std::string mode = sim.value("mode", "dominant");
    if (mode == "dominant") s.mode = SimMode::dominant;
    else if (mode == "actual") s.mode = SimMode::actual;
    else throw std::invalid_argument("sim.mode must be dominant or actual");
    const std::string cm = sim.value("channel_model", s.scenario == "capture" ? "capture"
                                                                              : "collision");
    if (cm == "collision") s.channel_model = ChannelModel::collision;
    else if (cm == "capture") s.channel_model = ChannelModel::capture;
    else throw std::invalid_argument("sim.channel_model must be collision or capture");
    if (s.scenario == "capture" && s.channel_model != ChannelModel::capture)
        throw std::invalid_argument("capture scenario requires the capture channel model");
    s.beta = sim.value("beta", 0.9);
    s.horizon_slots = sim.at("horizon_slots").get<long>();
    s.warmup_slots = sim.at("warmup_slots").get<long>();
    s.num_seeds = sim.at("num_seeds").get<int>();
    s.base_seed = sim.value("base_seed", 1ull);
    if (s.horizon_slots <= s.warmup_slots || s.num_seeds < 1)
        throw std::invalid_argument("sim needs horizon > warmup and at least one seed");
    return s;
}

inline ExperimentSpec ExperimentSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open spec file '" + path + "'");
    nlohmann::json j;
    in >> j;
    return parse(j);
}

/// Everything the online phase needs for one (policy, SNR) point.
struct SynthesisResult {
    PolicyKind kind = PolicyKind::proposed;
    double snr_db = 0.0;
    CommonInfoPolicy policy;
    std::vector<PowerTable> tables;    // one per user, or a single shared table
    bool shared_table = true;
    double theta = 0.0;
    double xi = 0.0;
    bool saturated = false;
    long reduced_states = 0;
    // relative values of the solved policies, per user, indexed (q * |phi| + i)
    std::vector<std::vector<int>> value_phi;
    std::vector<std::vector<double>> values;
    std::string synth_log;             // human-readable convergence/calibration log
};

namespace detail {

inline PowerTable uniform_power_table(int buffer, int states, int gammas,
                                      const std::vector<double>& per_state_power) {
    PowerTable t;
    t.buffer = buffer;
    t.states = states;
    t.gammas = gammas;
    const std::size_t sz = static_cast<std::size_t>(buffer + 1) * states * gammas * 3 * states;
    t.power.assign(sz, 0.0);
    t.defined.assign(sz, 1);
    for (int q = 0; q <= buffer; ++q)
        for (int h = 0; h < states; ++h)
            for (int g = 0; g < gammas; ++g)
                for (int z = 0; z < 3; ++z)
                    for (int hc = 0; hc < states; ++hc)
                        t.power[t.index(q, h, g, z, hc)] = per_state_power[hc];
    return t;
}

} // namespace detail

/// Offline pipeline for one sweep point: threshold policy, unichain, value
/// iteration and power-budget calibration (where the policy calls for them).
inline SynthesisResult synthesize_point(const ExperimentSpec& spec, PolicyKind kind,
                                        double snr_db) {
    SynthesisResult out;
    out.kind = kind;
    out.snr_db = snr_db;
    const double P0 = spec.power_budget_w(snr_db);
    const auto& params = spec.params;
    const int K = params.num_users;
    const bool symmetric = spec.scenario != "asymmetric";
    std::vector<const FsmcChannel*> chans;
    for (const auto& ch : spec.channels) chans.push_back(&ch);
    std::ostringstream log;
    log << "# policy " << to_string(kind) << " snr_db " << snr_db << " power_budget_w " << P0
        << "\n";

    switch (kind) {
        case PolicyKind::proposed: {
            if (symmetric) {
                out.policy = build_lcsihp_policy(K, spec.channels[0]);
                ReducedModel model(spec.channels[0], params, out.policy);
                auto cal = calibrate_lagrange(model, P0);
                out.tables.push_back(std::move(cal.table));
                out.value_phi.push_back(cal.solution.phi_states);
                out.values.push_back(cal.solution.value);
                out.shared_table = true;
                out.theta = cal.theta;
                out.xi = cal.xi;
                out.saturated = cal.saturated;
                out.reduced_states =
                    static_cast<long>(cal.states.phi_states.size()) * (params.buffer_pkts + 1);
                for (const auto& e : cal.log)
                    log << "calibration xi " << e.xi << " avg_power_w " << e.avg_power
                        << " theta " << e.theta << "\n";
                for (const auto& e : cal.solution.log)
                    log << "iteration " << e.iteration << " span " << e.span << " theta "
                        << e.theta << "\n";
            } else {
                out.policy = build_asymmetric_policy(chans);
                out.shared_table = false;
                for (int k = 0; k < K; ++k) {
                    ReducedModel model(chans, params, out.policy, k);
                    auto cal = calibrate_lagrange(model, P0);
                    out.tables.push_back(std::move(cal.table));
                    out.value_phi.push_back(cal.solution.phi_states);
                    out.values.push_back(cal.solution.value);
                    if (k == 0) {
                        out.theta = cal.theta;
                        out.xi = cal.xi;
                        out.saturated = cal.saturated;
                        out.reduced_states = static_cast<long>(cal.states.phi_states.size()) *
                                             (params.buffer_pkts + 1);
                    }
                    log << "user " << k << " xi " << cal.xi << " theta " << cal.theta
                        << " avg_power_w " << cal.avg_power
                        << (cal.saturated ? " saturated" : "") << "\n";
                }
            }
            break;
        }
        case PolicyKind::binary_scheduling: {
            auto base = baseline_binary_scheduling(spec.channels[0], K, P0, params);
            out.policy = build_constant_policy(base.gamma);
            out.tables.push_back(
                materialize_power_table(base, params.buffer_pkts, spec.channels[0].size(), 1));
            log << "gamma " << base.gamma << "\n";
            break;
        }
        case PolicyKind::lcsihp_fixed_power: {
            out.policy = build_lcsihp_policy(K, spec.channels[0]);
            ReducedModel model(spec.channels[0], params, out.policy);
            const double tx_prob = stationary_transmit_probability(model);
            std::vector<double> per_state(spec.channels[0].size());
            for (int h = 0; h < spec.channels[0].size(); ++h)
                per_state[h] = std::min(P0 / tx_prob, max_power(params, spec.channels[0].gain(h)));
            out.tables.push_back(detail::uniform_power_table(
                params.buffer_pkts, spec.channels[0].size(), out.policy.states(), per_state));
            log << "stationary_tx_prob " << tx_prob << "\n";
            break;
        }
        case PolicyKind::variable_rate: {
            auto base = baseline_variable_rate(spec.channels[0], K, P0, params);
            out.policy = build_constant_policy(base.gamma);
            out.tables.push_back(
                materialize_power_table(base, params.buffer_pkts, spec.channels[0].size(), 1));
            log << "gamma " << base.gamma << " xi_tilde " << base.xi_tilde << "\n";
            break;
        }
        case PolicyKind::bsp: {
            auto gammas = bsp_thresholds(chans, P0, params);
            out.policy = build_constant_policy(gammas);
            out.shared_table = false;
            const double c = params.bandwidth_hz * params.tau_s /
                             (params.mean_packet_bits * std::numbers::ln2_v<double>);
            for (int k = 0; k < K; ++k) {
                const auto& ch = spec.channels[k];
                double lo = 1e-12, hi = 1.0;
                auto avg_at = [&](double xi) {
                    auto pw = saloha::detail::variable_rate_power(ch, gammas[k], c, xi, params);
                    return saloha::detail::stationary_avg_power(ch, gammas[k], pw);
                };
                while (avg_at(hi) > P0) hi *= 4.0;
                for (int i = 0; i < 200; ++i) {
                    const double mid = 0.5 * (lo + hi);
                    (avg_at(mid) > P0 ? lo : hi) = mid;
                }
                FixedThresholdPolicy fp;
                fp.gamma = gammas[k];
                fp.xi_tilde = 0.5 * (lo + hi);
                fp.power = saloha::detail::variable_rate_power(ch, gammas[k], c, fp.xi_tilde,
                                                               params);
                out.tables.push_back(
                    materialize_power_table(fp, params.buffer_pkts, ch.size(), 1));
                log << "user " << k << " gamma " << gammas[k] << " xi_tilde " << fp.xi_tilde
                    << "\n";
            }
            break;
        }
    }
    if (!symmetric && out.shared_table && kind != PolicyKind::proposed && kind != PolicyKind::bsp)
        throw std::invalid_argument(std::string("policy ") + to_string(kind) +
                                    " is not defined for heterogeneous users");
    out.synth_log = log.str();
    return out;
}

// ---------------------------------------------------------------------------
// table and CSV serialization

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt10(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace detail

inline void save_tables(const SynthesisResult& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write tables file '" + path + "'");
    out << "# saloha-tables v1\n";
    out << "policy " << to_string(r.kind) << "\n";
    out << "snr_db " << detail::fmt(r.snr_db) << "\n";
    out << "mode " << (r.policy.symmetric ? "symmetric" : "asymmetric") << "\n";
    out << "theta " << detail::fmt(r.theta) << "\n";
    out << "xi " << detail::fmt(r.xi) << "\n";
    out << "saturated " << (r.saturated ? 1 : 0) << "\n";
    out << "reduced_states " << r.reduced_states << "\n";
    out << "gamma_count " << r.policy.states() << "\n";
    for (int g = 0; g < r.policy.states(); ++g) {
        out << "thresholds " << g;
        for (int t : r.policy.thresholds[g]) out << " " << t;
        out << "\n";
    }
    for (int g = 0; g < r.policy.states(); ++g)
        for (int z = 0; z < 3; ++z)
            if (r.policy.next[g][z] >= 0) out << "next " << g << " " << z << " "
                                              << r.policy.next[g][z] << "\n";
    out << "init " << r.policy.init_state << "\n";
    out << "shared_table " << (r.shared_table ? 1 : 0) << "\n";
    for (std::size_t u = 0; u < r.tables.size(); ++u) {
        const auto& t = r.tables[u];
        out << "power_dims " << u << " " << t.buffer << " " << t.states << " " << t.gammas
            << "\n";
        for (int q = 0; q <= t.buffer; ++q)
            for (int h = 0; h < t.states; ++h)
                for (int g = 0; g < t.gammas; ++g)
                    for (int z = 0; z < 3; ++z)
                        for (int hc = 0; hc < t.states; ++hc) {
                            const auto i = t.index(q, h, g, z, hc);
                            if (!t.defined[i]) continue;
                            out << "power " << u << " " << q << " " << h << " " << g << " " << z
                                << " " << hc << " " << detail::fmt(t.power[i]) << "\n";
                        }
    }
    for (std::size_t u = 0; u < r.values.size(); ++u) {
        const auto& phis = r.value_phi[u];
        const auto& vals = r.values[u];
        if (phis.empty()) continue;
        const std::size_t width = phis.size();
        for (std::size_t s = 0; s < vals.size(); ++s)
            out << "value " << u << " " << s / width << " " << phis[s % width] << " "
                << detail::fmt(vals[s]) << "\n";
    }
}

inline SynthesisResult load_tables(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open tables file '" + path + "'");
    SynthesisResult r;
    std::string line;
    if (!std::getline(in, line) || line != "# saloha-tables v1")
        throw std::runtime_error("'" + path + "' is not a saloha tables file");
    r.policy.thresholds.clear();
    r.policy.next.clear();
    std::map<int, PowerTable> tables;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "policy") {
            std::string v;
            ls >> v;
            r.kind = policy_kind_from(v);
        } else if (key == "snr_db") {
            ls >> r.snr_db;
        } else if (key == "mode") {
            std::string v;
            ls >> v;
            r.policy.symmetric = v == "symmetric";
        } else if (key == "theta") {
            ls >> r.theta;
        } else if (key == "xi") {
            ls >> r.xi;
        } else if (key == "saturated") {
            int v;
            ls >> v;
            r.saturated = v != 0;
        } else if (key == "reduced_states") {
            ls >> r.reduced_states;
        } else if (key == "gamma_count") {
            int g;
            ls >> g;
            r.policy.thresholds.resize(g);
            r.policy.next.assign(g, {-1, -1, -1});
        } else if (key == "thresholds") {
            int g, t;
            ls >> g;
            while (ls >> t) r.policy.thresholds[g].push_back(t);
        } else if (key == "next") {
            int g, z, n;
            ls >> g >> z >> n;
            r.policy.next[g][z] = n;
        } else if (key == "init") {
            ls >> r.policy.init_state;
        } else if (key == "shared_table") {
            int v;
            ls >> v;
            r.shared_table = v != 0;
        } else if (key == "power_dims") {
            int u, buffer, states, gammas;
            ls >> u >> buffer >> states >> gammas;
            PowerTable t;
            t.buffer = buffer;
            t.states = states;
            t.gammas = gammas;
            const std::size_t sz =
                static_cast<std::size_t>(buffer + 1) * states * gammas * 3 * states;
            t.power.assign(sz, 0.0);
            t.defined.assign(sz, 0);
            tables[u] = std::move(t);
        } else if (key == "power") {
            int u, q, h, g, z, hc;
            double v;
            ls >> u >> q >> h >> g >> z >> hc >> v;
            auto& t = tables.at(u);
            const auto i = t.index(q, h, g, z, hc);
            t.power[i] = v;
            t.defined[i] = 1;
        } else if (key == "value") {
            int u, q, phi;
            double v;
            ls >> u >> q >> phi >> v;
            if (static_cast<int>(r.values.size()) <= u) {
                r.values.resize(u + 1);
                r.value_phi.resize(u + 1);
            }
            if (q == 0) r.value_phi[u].push_back(phi);
            r.values[u].push_back(v);
        }
    }
    for (auto& [u, t] : tables) r.tables.push_back(std::move(t));
    if (r.tables.empty() || r.policy.states() == 0)
        throw std::runtime_error("tables file '" + path + "' is incomplete");
    return r;
}

// ---------------------------------------------------------------------------
// experiment driver

struct RunOptions {
    std::string out_dir = "out";
    int jobs = 0;                 // 0: SALOHA_JOBS env or 1
    std::uint64_t seed_offset = 0;
    bool synth_only = false;
    std::string tables_dir;       // non-empty: load tables instead of synthesizing
    long trace_slots = 0;         // >0: dump the first-seed trace per point
};

namespace detail {

struct PointResult {
    SynthesisResult synth;
    std::vector<SimMetrics> runs;
    SimMetrics pooled;
};

inline std::string point_stem(const ExperimentSpec& spec, PolicyKind kind, double snr) {
    std::ostringstream s;
    s << spec.name << "_" << to_string(kind) << "_snr" << fmt10(snr);
    std::string v = s.str();
    for (char& c : v)
        if (c == '.') c = 'p';
    return v;
}

} // namespace detail

inline std::string csv_header() {
    return "policy,snr_db,seed,mode,channel_model,users,horizon_slots,warmup_slots,"
           "avg_queue_pkts,avg_delay_slots,avg_delay_ms,throughput_pkts_per_slot,"
           "throughput_bits_per_s,drop_prob,avg_power_w,power_budget_w,theta,xi,"
           "reduced_states,se_avg_queue,se_avg_delay_slots,se_drop_prob,se_avg_power,"
           "se_throughput,per_user_delay_slots,per_user_power_w";
}

namespace detail {

inline void csv_row(std::ostream& out, const ExperimentSpec& spec, const SynthesisResult& synth,
                    const SimMetrics& m, const std::string& seed_label) {
    out << to_string(synth.kind) << ',' << fmt10(synth.snr_db) << ',' << seed_label << ','
        << (spec.mode == SimMode::dominant ? "dominant" : "actual") << ','
        << (spec.channel_model == ChannelModel::collision ? "collision" : "capture") << ','
        << spec.params.num_users << ',' << spec.horizon_slots << ',' << spec.warmup_slots << ','
        << fmt10(m.avg_queue_pkts) << ',' << fmt10(m.avg_delay_slots) << ','
        << fmt10(m.avg_delay_ms) << ',' << fmt10(m.throughput_pkts_per_slot) << ','
        << fmt10(m.throughput_bits_per_s) << ',' << fmt10(m.drop_prob) << ','
        << fmt10(m.avg_power_w) << ',' << fmt10(spec.power_budget_w(synth.snr_db)) << ','
        << fmt10(synth.theta) << ',' << fmt10(synth.xi) << ',' << synth.reduced_states << ','
        << fmt10(m.se_queue) << ',' << fmt10(m.se_delay_slots) << ',' << fmt10(m.se_drop) << ','
        << fmt10(m.se_power) << ',' << fmt10(m.se_throughput) << ',';
    for (std::size_t k = 0; k < m.user_avg_delay_slots.size(); ++k)
        out << (k ? ";" : "") << fmt10(m.user_avg_delay_slots[k]);
    out << ',';
    for (std::size_t k = 0; k < m.user_avg_power_w.size(); ++k)
        out << (k ? ";" : "") << fmt10(m.user_avg_power_w[k]);
    out << '\n';
}

} // namespace detail

/// Runs the whole experiment: synthesis (or table loading) for every
/// (policy, SNR) point, the seeded episodes, and the CSV/table artifacts.
/// Points are dispatched to a small worker pool; outputs are written in spec
/// order regardless of scheduling.
inline int run_experiment(const ExperimentSpec& spec, const RunOptions& opts,
                          std::ostream& diag) {
    namespace fs = std::filesystem;
    try {
        fs::create_directories(opts.out_dir);
    } catch (const std::exception& e) {
        diag << "output: " << e.what() << "\n";
        return 2;
    }

    struct Task {
        PolicyKind kind;
        double snr;
    };
    std::vector<Task> tasks;
    for (PolicyKind k : spec.baselines)
        for (double snr : spec.snr_db) tasks.push_back({k, snr});

    int jobs = opts.jobs;
    if (jobs <= 0) {
        if (const char* env = std::getenv("SALOHA_JOBS")) jobs = std::atoi(env);
        if (jobs <= 0) jobs = 1;
    }
    jobs = std::min<int>(jobs, static_cast<int>(tasks.size()));

    std::vector<detail::PointResult> results(tasks.size());
    std::vector<std::string> errors(tasks.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const auto& task = tasks[i];
            auto& res = results[i];
            try {
                if (!opts.tables_dir.empty()) {
                    const std::string path = (fs::path(opts.tables_dir) /
                                              (detail::point_stem(spec, task.kind, task.snr) +
                                               ".tables"))
                                                 .string();
                    res.synth = load_tables(path);
                } else {
                    res.synth = synthesize_point(spec, task.kind, task.snr);
                }
            } catch (const std::exception& e) {
                errors[i] = std::string("synthesis[") + to_string(task.kind) + "@" +
                            detail::fmt10(task.snr) + "dB]: " + e.what();
                continue;
            }
            if (opts.synth_only) continue;
            try {
                SimConfig cfg;
                cfg.params = spec.params;
                for (const auto& ch : spec.channels) cfg.channels.push_back(&ch);
                cfg.policy = &res.synth.policy;
                for (int k = 0; k < spec.params.num_users; ++k)
                    cfg.power.push_back(res.synth.shared_table ? &res.synth.tables[0]
                                                               : &res.synth.tables[k]);
                cfg.mode = spec.mode;
                cfg.channel_model = spec.channel_model;
                cfg.beta = spec.beta;
                cfg.horizon_slots = spec.horizon_slots;
                cfg.warmup_slots = spec.warmup_slots;
                for (int s = 0; s < spec.num_seeds; ++s) {
                    cfg.seed = spec.base_seed + opts.seed_offset + static_cast<std::uint64_t>(s);
                    std::vector<SlotTrace> trace;
                    if (opts.trace_slots > 0 && s == 0) cfg.trace = &trace;
                    res.runs.push_back(run_episode(cfg));
                    if (cfg.trace) {
                        const std::string tpath =
                            (fs::path(opts.out_dir) /
                             (detail::point_stem(spec, task.kind, task.snr) + ".trace.csv"))
                                .string();
                        std::ofstream tout(tpath);
                        tout << "# saloha-trace v1\nslot,feedback,transmitters,common_state,"
                                "total_queue\n";
                        const long limit = std::min<long>(opts.trace_slots,
                                                          static_cast<long>(trace.size()));
                        for (long t = 0; t < limit; ++t)
                            tout << trace[t].slot << ',' << to_string(trace[t].z) << ','
                                 << trace[t].transmitters << ',' << trace[t].common_state << ','
                                 << trace[t].total_queue << '\n';
                        cfg.trace = nullptr;
                    }
                }
                res.pooled = aggregate_runs(res.runs);
            } catch (const std::exception& e) {
                errors[i] = std::string("simulation[") + to_string(task.kind) + "@" +
                            detail::fmt10(task.snr) + "dB]: " + e.what();
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!errors[i].empty()) {
            diag << errors[i] << "\n";
            return 3;
        }
    }

    // artifacts, in deterministic spec order
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const std::string stem = detail::point_stem(spec, tasks[i].kind, tasks[i].snr);
        if (opts.tables_dir.empty()) {
            save_tables(results[i].synth, (fs::path(opts.out_dir) / (stem + ".tables")).string());
            std::ofstream log((fs::path(opts.out_dir) / (stem + ".synth.log")).string());
            log << results[i].synth.synth_log;
        }
    }
    if (!opts.synth_only) {
        std::ofstream csv((fs::path(opts.out_dir) / (spec.name + ".csv")).string());
        csv << "# saloha-csv v1\n" << csv_header() << "\n";
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            for (const auto& run : results[i].runs)
                detail::csv_row(csv, spec, results[i].synth, run, std::to_string(run.seed));
            detail::csv_row(csv, spec, results[i].synth, results[i].pooled, "pooled");
        }
    }
    return 0;
}

inline int run_experiment(const std::string& spec_path, const RunOptions& opts,
                          std::ostream& diag) {
    ExperimentSpec spec;
    try {
        spec = ExperimentSpec::load(spec_path);
    } catch (const std::exception& e) {
        diag << "spec: " << e.what() << "\n";
        return 1;
    }
    return run_experiment(spec, opts, diag);
}

} // namespace saloha
