#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "avatar/chord_builder.hpp"
#include "avatar/harness.hpp"
#include "avatar/oracle.hpp"
#include "avatar/protocol.hpp"
#include "avatar/serde.hpp"

using namespace avatar;

namespace {

int cmd_run(const TrialSpec& spec, const std::string& snapshot_out) {
    TrialRecord record;
    Configuration final_config;
    try {
        record = run_trial_observed(spec, nullptr, &final_config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    std::cout << "spec:            " << record.spec_id << "\n"
              << "N / hosts:       " << record.n_guests << " / " << record.host_count << "\n"
              << "seed:            " << record.seed << "\n"
              << "converged:       " << (record.converged ? "yes" : "no") << "\n"
              << "roundsToLegal:   " << record.rounds_to_legal << "\n"
              << "maxDegDuring:    " << record.max_degree_during << "\n"
              << "maxDegInitial:   " << record.max_degree_initial << "\n"
              << "maxDegFinal:     " << record.max_degree_final << "\n"
              << "degreeExpansion: " << record.degree_expansion << "\n";
    if (!record.fault_flags.empty())
        std::cout << "faultFlags:      " << record.fault_flags_joined() << "\n";

    if (!snapshot_out.empty()) {
        std::ofstream out(snapshot_out);
        if (!out) {
            std::cerr << "error: cannot write " << snapshot_out << "\n";
            return 2;
        }
        out << snapshot(final_config);
        std::cout << "snapshot:        " << snapshot_out << "\n";
    }
    return record.converged ? 0 : 1;
}

int cmd_suite(const std::string& config_path, int trials, const std::string& csv_out) {
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "error: cannot read " << config_path << "\n";
        return 2;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();

    std::vector<TrialSpec> specs;
    try {
        specs = trial_specs_from_json(buffer.str());
    } catch (const std::exception& e) {
        std::cerr << "error: bad config: " << e.what() << "\n";
        return 2;
    }

    SuiteResult result = run_suite(specs, trials);

    if (!csv_out.empty()) {
        std::ofstream out(csv_out);
        if (!out) {
            std::cerr << "error: cannot write " << csv_out << "\n";
            return 2;
        }
        write_csv(out, result.records);
    } else {
        write_csv(std::cout, result.records);
    }

    bool all_converged = true;
    for (const SuiteSummary& s : result.summaries) {
        std::cout << s.spec_id << ": " << s.converged << "/" << s.trials
                  << " converged, rounds median=" << s.median_rounds << " mean=" << s.mean_rounds
                  << " p95=" << s.p95_rounds << ", degExpansion median=" << s.median_expansion
                  << " p95=" << s.p95_expansion << "\n";
        all_converged = all_converged && s.converged == s.trials;
    }
    std::cout << "fit: median roundsToLegal ~ " << result.fit_constant
              << " * log2(N)^2 (residual " << result.fit_residual << ")\n";
    return all_converged ? 0 : 1;
}

int cmd_check(const std::string& snapshot_path) {
    std::ifstream in(snapshot_path);
    if (!in) {
        std::cerr << "error: cannot read " << snapshot_path << "\n";
        return 2;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();

    Configuration config;
    try {
        config = load_snapshot(buffer.str());
    } catch (const std::exception& e) {
        std::cerr << "error: bad snapshot: " << e.what() << "\n";
        return 2;
    }

    const GuestEdgeSet target = chord_target(config.n_guests, config.include_half_ring);
    const bool legal = is_legal(target, config);
    std::cout << "N:                   " << config.n_guests << "\n"
              << "hosts:               " << config.hosts.size() << "\n"
              << "round:               " << config.round << "\n"
              << "legal Avatar(Chord): " << (legal ? "yes" : "no") << "\n"
              << "all DONE:            " << (all_phase(config, Phase::Done) ? "yes" : "no") << "\n"
              << "quiescent:           " << (quiescent(config) ? "yes" : "no") << "\n";

    // Per-condition scaffolded diagnostics against warmed caches.
    populate_caches(config);
    static const std::vector<Message> no_msgs;
    static const std::vector<DueEvent> no_due;
    int guests_failing = 0;
    for (auto& [h, s] : config.hosts) {
        HostState scratch = s;
        std::vector<Message> outbox;
        std::vector<EdgeCommand> commands;
        HostContext ctx{config.round,  config.n_guests, config.include_half_ring,
                        config.seed,   scratch,         no_msgs,
                        no_due,        config.host_graph};
        ctx.outbox = &outbox;
        ctx.commands = &commands;
        for (auto& [g, gs] : scratch.guests) {
            ScaffoldCheck check = scaffolded(ctx, gs);
            if (check.verdict()) continue;
            ++guests_failing;
            std::cout << "scaffolded(" << g << "@" << h << "): cbtLinks=" << check.cbt_links_ok
                      << " lastWave=" << check.last_wave_in_range
                      << " neighborFingers=" << check.neighbor_fingers_ok
                      << " parent=" << check.parent_ok << "\n";
        }
    }
    if (guests_failing == 0) std::cout << "scaffolded:          all guests pass\n";
    return legal ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Synchronous-round simulator for self-stabilizing Chord construction over a Cbt scaffold"};
    app.require_subcommand(1);

    TrialSpec spec;
    std::string topology = "randomConnected";
    std::string phases = "random";
    std::string host_selection = "dense";
    std::string snapshot_out;

    CLI::App* run_cmd = app.add_subcommand("run", "Run a single seeded trial");
    run_cmd->add_option("--N", spec.n_guests, "Guest count (power of two)")->required();
    run_cmd->add_option("--hosts", spec.host_count, "Host count (defaults to N)");
    run_cmd->add_option("--host-selection", host_selection, "dense | randomSubset");
    run_cmd->add_option("--topology", topology,
                        "legalChord | legalCbt | scaffoldedPartial | randomConnected | "
                        "adversarialLine | perturbedLegal");
    run_cmd->add_option("--phases", phases, "done | chord | cbt | random");
    run_cmd->add_option("--partial-wave", spec.partial_wave, "scaffoldedPartial: next wave");
    run_cmd->add_option("--avg-degree", spec.avg_degree, "randomConnected: average degree");
    run_cmd->add_option("--edits", spec.perturb_edits, "perturbedLegal: edit count");
    run_cmd->add_option("--seed", spec.seed, "Trial seed");
    run_cmd->add_option("--max-rounds", spec.max_rounds, "Round budget (0: 50*log2(N)^2)");
    run_cmd->add_flag("--include-half-ring-finger", spec.include_half_ring,
                      "Also build the distance-N/2 finger");
    run_cmd->add_option("--snapshot-out", snapshot_out, "Write the final configuration as JSON");

    std::string suite_config, suite_csv;
    int suite_trials = 50;
    CLI::App* suite_cmd = app.add_subcommand("suite", "Run a batch of trial specs");
    suite_cmd->add_option("--config", suite_config, "JSON list of trial specs")->required();
    suite_cmd->add_option("--trials", suite_trials, "Trials per spec");
    suite_cmd->add_option("--out", suite_csv, "CSV output path (default: stdout)");

    std::string check_snapshot;
    CLI::App* check_cmd = app.add_subcommand("check", "Judge a snapshot's legality");
    check_cmd->add_option("--snapshot", check_snapshot, "Snapshot JSON path")->required();

    CLI11_PARSE(app, argc, argv);

    if (run_cmd->parsed()) {
        if (!run_cmd->count("--hosts")) spec.host_count = spec.n_guests;
        try {
            spec.host_selection = host_selection == "dense" ? HostIdSelection::Dense
                                                            : HostIdSelection::RandomSubset;
            std::vector<TrialSpec> parsed = trial_specs_from_json(
                "[{\"N\":" + std::to_string(spec.n_guests) + ",\"initialTopology\":\"" + topology +
                "\",\"initialPhases\":\"" + phases + "\"}]");
            spec.topology = parsed[0].topology;
            spec.phases = parsed[0].phases;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
        spec.spec_id = topology;
        return cmd_run(spec, snapshot_out);
    }
    if (suite_cmd->parsed()) return cmd_suite(suite_config, suite_trials, suite_csv);
    return cmd_check(check_snapshot);
}
