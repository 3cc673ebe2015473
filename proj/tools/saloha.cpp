// SPDX-License-Identifier: Apache-2.0

// Experiment driver: offline policy synthesis and online network simulation
// from a declarative spec file. See README.md for the spec and CSV formats.

#include "saloha/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"delay-aware power and threshold control for slotted ALOHA"};
    app.require_subcommand(1);

    std::string spec_path, out_dir = "out", tables_dir;
    int jobs = 0;
    std::uint64_t seed_offset = 0;
    long trace_slots = 0;

    auto add_common = [&](CLI::App* cmd, bool with_tables) {
        cmd->add_option("--spec", spec_path, "experiment spec file (JSON)")->required();
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--jobs", jobs, "worker pool size (default: SALOHA_JOBS or 1)");
        cmd->add_option("--seed-offset", seed_offset, "shift every episode seed");
        cmd->add_option("--trace-slots", trace_slots,
                        "dump the first seed's slot trace, up to this many slots");
        if (with_tables)
            cmd->add_option("--tables", tables_dir, "directory with synthesized .tables files")
                ->required();
    };

    auto* synth = app.add_subcommand("synth", "offline synthesis only: policy tables + logs");
    add_common(synth, false);
    auto* simulate =
        app.add_subcommand("simulate", "online simulation from previously synthesized tables");
    add_common(simulate, true);
    auto* run = app.add_subcommand("run", "synthesis followed by simulation");
    add_common(run, false);

    CLI11_PARSE(app, argc, argv);

    saloha::RunOptions opts;
    opts.out_dir = out_dir;
    opts.jobs = jobs;
    opts.seed_offset = seed_offset;
    opts.trace_slots = trace_slots;
    opts.synth_only = synth->parsed();
    opts.tables_dir = tables_dir;

    return saloha::run_experiment(spec_path, opts, std::cerr);
}
