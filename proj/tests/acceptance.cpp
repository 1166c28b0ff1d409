// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits nonzero on any failure.

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "avatar/chord_builder.hpp"
#include "avatar/engine.hpp"
#include "avatar/harness.hpp"
#include "avatar/oracle.hpp"
#include "avatar/protocol.hpp"
#include "avatar/rng.hpp"
#include "avatar/serde.hpp"

using namespace avatar;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("criterion %d: %s - %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    if (!pass) ++g_failures;
}

std::vector<std::set<HostId>> criterion1_host_sets(std::int32_t n, SplitMix64& rng) {
    std::vector<std::set<HostId>> sets;
    std::set<HostId> dense;
    for (HostId h = 0; h < n; ++h) dense.insert(h);
    sets.push_back(dense);
    for (std::int32_t count : {std::int32_t{3}, n / 4, n / 2}) {
        if (count < 1 || count > n) continue;
        std::set<HostId> hosts;
        while (static_cast<std::int32_t>(hosts.size()) < count)
            hosts.insert(static_cast<HostId>(rng.below(n)));
        sets.push_back(hosts);
    }
    return sets;
}

// Watches the root host's wave bookkeeping and records each wave's duration.
struct WaveWatch {
    std::optional<WaveLabel> current;
    std::int64_t started = 0;
    std::int64_t longest = 0;
    int waves = 0;

    void observe(const Configuration& c) {
        const HostId root_host = host_of(tree_root_guest(c.n_guests),
                                         responsible_ranges(c.host_ids(), c.n_guests));
        const HostState& s = c.hosts.at(root_host);
        if (current && (!s.root_wave || !(*s.root_wave == *current))) {
            longest = std::max(longest, c.round - started);
            ++waves;
            current.reset();
        }
        if (s.root_wave && !current) {
            current = s.root_wave;
            started = c.round - 1;  // the wave began during the round just run
        }
    }
};

void criteria_1_2_7(std::vector<Configuration>& converged_samples) {
    bool exact_ok = true, rounds_ok = true, wave_ok = true;
    std::string detail1, detail2;
    std::int64_t worst_rounds = 0, worst_wave = 0;
    int runs = 0;
    SplitMix64 rng(0xC1);

    for (std::int32_t n : {8, 16, 32, 64}) {
        const std::int64_t lg = log2_exact(n);
        const std::int64_t round_budget = 2 * (lg + 1) * (lg + 1);
        const std::int64_t wave_budget = 2 * (lg + 1);
        for (const std::set<HostId>& hosts : criterion1_host_sets(n, rng)) {
            Configuration start = legal_cbt_config(n, hosts, Phase::Chord, 0xC1D0 + n);
            WaveWatch watch;
            RunOptions opt;
            opt.max_rounds = round_budget;
            opt.check_connectivity = true;
            opt.observer = [&](const Configuration& c) { watch.observe(c); };
            RunResult r = run(start, protocol_handler(), converged, opt);
            ++runs;

            const auto ranges = responsible_ranges(hosts, n);
            const GuestEdgeSet target = chord_target(n);
            bool graph_exact = r.converged && is_legal(target, r.config) &&
                               r.config.host_graph == legal_host_edges(target, ranges);
            if (!graph_exact && exact_ok) {
                exact_ok = false;
                detail1 = "mismatch at N=" + std::to_string(n) + ", n=" +
                          std::to_string(hosts.size());
            }
            if (r.rounds > round_budget) rounds_ok = false;
            worst_rounds = std::max(worst_rounds, r.rounds);
            if (watch.longest > wave_budget) {
                wave_ok = false;
                detail2 = "wave of " + std::to_string(watch.longest) + " rounds at N=" +
                          std::to_string(n);
            }
            worst_wave = std::max(worst_wave, watch.longest);
            if (r.converged) converged_samples.push_back(r.config);
        }
    }
    report(1, exact_ok && rounds_ok,
           exact_ok ? std::to_string(runs) + " builds bit-exact, worst rounds " +
                          std::to_string(worst_rounds) + " within 2(log2 N+1)^2"
                    : detail1);
    report(2, wave_ok,
           wave_ok ? "every wave within 2(log2 N+1) rounds (worst " +
                         std::to_string(worst_wave) + ")"
                   : detail2);
}

void criteria_3_4() {
    int trials = 0, reset_violations = 0, degree_violations = 0;
    std::int64_t worst_spread = 0;

    for (std::int32_t n : {16, 32}) {
        const std::int64_t lg = log2_exact(n);
        const std::int64_t budget = 2 * (lg + 1);
        SplitMix64 host_rng(0xC3 + n);

        for (int t = 0; t < 60; ++t) {
            std::set<HostId> hosts;
            std::int32_t count = (t % 3 == 0) ? n : 3 + static_cast<std::int32_t>(host_rng.below(n - 3));
            if (count == n)
                for (HostId h = 0; h < n; ++h) hosts.insert(h);
            else
                while (static_cast<std::int32_t>(hosts.size()) < count)
                    hosts.insert(static_cast<HostId>(host_rng.below(n)));

            Configuration c = legal_chord_config(n, hosts, 0xAB + t);
            // A non-scaffolded perturbation: some host must be able to tell
            // the result apart from any mid-build configuration.
            bool non_scaffolded = false;
            for (int edit = 0; edit < 8 && !non_scaffolded; ++edit) {
                perturb_once(c, mix_seed(0xC3C4, n, t * 16 + edit));
                Configuration probe = c;
                populate_caches(probe);
                non_scaffolded = any_host_detects_fault(probe);
            }
            if (!non_scaffolded) continue;
            ++trials;

            const std::int64_t perturbed_at = c.round;
            std::map<HostId, int> degree_at_perturb;
            for (HostId h : hosts) degree_at_perturb[h] = c.host_degree(h);

            std::map<HostId, std::int64_t> became_cbt;
            bool degree_violated = false;
            HostHandler handler = protocol_handler();
            for (int i = 0; i < static_cast<int>(budget); ++i) {
                step(c, handler);
                for (const auto& [h, s] : c.hosts) {
                    if (s.phase == Phase::Cbt && !became_cbt.count(h)) became_cbt[h] = c.round;
                    if (s.phase != Phase::Cbt && !became_cbt.count(h) &&
                        c.host_degree(h) > 2 * std::max(1, degree_at_perturb[h]))
                        degree_violated = true;
                }
            }
            if (static_cast<std::int32_t>(became_cbt.size()) != count) {
                ++reset_violations;
            } else {
                for (const auto& [h, r] : became_cbt)
                    worst_spread = std::max(worst_spread, r - perturbed_at);
            }
            if (degree_violated) ++degree_violations;
        }
    }
    report(3, trials >= 100 && reset_violations == 0,
           std::to_string(trials) + " perturbations, " + std::to_string(reset_violations) +
               " reset violations, worst spread " + std::to_string(worst_spread) +
               " rounds within 2(log2 N+1)");
    report(4, degree_violations == 0,
           std::to_string(degree_violations) + " hosts exceeded 2x degree before entering CBT");
}

void criterion_5() {
    const std::int32_t n = 16;
    int trials = 0, misses = 0;
    SplitMix64 host_rng(0xC5);

    for (int t = 0; t < 500; ++t) {
        std::set<HostId> hosts;
        std::int32_t count = (t % 4 == 0) ? n : 3 + static_cast<std::int32_t>(host_rng.below(13));
        if (count == n)
            for (HostId h = 0; h < n; ++h) hosts.insert(h);
        else
            while (static_cast<std::int32_t>(hosts.size()) < count)
                hosts.insert(static_cast<HostId>(host_rng.below(n)));

        Configuration c = legal_chord_config(n, hosts, 0xC5C5 + t);
        perturb_once(c, mix_seed(0xC5, 5, t));
        ++trials;

        // One round of the protocol: some host must raise its fault flag.
        step(c, protocol_handler());
        bool detected = false;
        for (const auto& [h, s] : c.hosts) detected = detected || s.fault_flag || s.phase == Phase::Cbt;
        if (!detected) ++misses;
    }

    // No false alarms: an unperturbed legal network stays silent and clean.
    bool false_fault = false;
    int messages = 0;
    Configuration clean = legal_chord_config(n, {0, 2, 5, 9, 11, 14}, 0xC5F);
    HostHandler handler = protocol_handler();
    for (int i = 0; i < 100; ++i) {
        StepResult sr = step(clean, handler);
        messages += sr.messages_delivered;
        for (const auto& [h, s] : clean.hosts) false_fault = false_fault || s.fault_flag;
    }
    report(5, misses == 0 && !false_fault,
           std::to_string(trials) + " single edits, " + std::to_string(misses) +
               " undetected; unperturbed: " + (false_fault ? "false fault" : "no faults") + ", " +
               std::to_string(messages) + " messages over 100 rounds");
}

void criteria_6_7_8(std::vector<Configuration>& converged_samples) {
    std::vector<TrialSpec> specs;
    for (std::int32_t n : {8, 16, 32, 64}) {
        TrialSpec spec;
        spec.spec_id = "rand" + std::to_string(n);
        spec.n_guests = n;
        spec.host_count = n;
        spec.host_selection = HostIdSelection::Dense;
        spec.topology = InitialTopology::RandomConnected;
        spec.avg_degree = 3.0;
        spec.phases = InitialPhases::Random;
        spec.seed = 0xC6 + n;
        specs.push_back(spec);
    }
    SuiteResult suite = run_suite(specs, 50);

    bool all_converged = true;
    bool monotone = true;
    double prev_median = 0;
    double expansion_constant = 0;
    std::ostringstream medians;
    for (const SuiteSummary& s : suite.summaries) {
        all_converged = all_converged && s.converged == s.trials;
        if (s.median_rounds < prev_median) monotone = false;
        prev_median = s.median_rounds;
        const double lg = static_cast<double>(log2_exact(s.n_guests));
        expansion_constant = std::max(expansion_constant, s.median_expansion / (lg * lg));
        medians << " N=" << s.n_guests << ":" << s.median_rounds;
    }
    std::ostringstream detail;
    detail << "convergence " << (all_converged ? "200/200" : "INCOMPLETE") << "; medians"
           << medians.str() << "; fit c=" << suite.fit_constant
           << " (residual " << suite.fit_residual << "); degree-expansion c'="
           << expansion_constant << " with median <= c'*log2(N)^2";
    report(6, all_converged && monotone, detail.str());

    // Criterion 7: silence at the fixpoint, on criterion-1 finals plus a few
    // fresh criterion-6 style runs.
    for (std::int32_t n : {8, 16}) {
        TrialSpec spec = specs[n == 8 ? 0 : 1];
        spec.seed = 0xC7 + n;
        Configuration final_config;
        TrialRecord rec = run_trial_observed(spec, nullptr, &final_config);
        if (rec.converged) converged_samples.push_back(final_config);
    }
    bool silent = true;
    std::string silence_detail = "all fixpoints silent for 50 rounds";
    for (Configuration c : converged_samples) {
        HostHandler handler = protocol_handler();
        Configuration before = c;
        for (int i = 0; i < 50 && silent; ++i) {
            StepResult sr = step(c, handler);
            if (sr.fault || sr.messages_delivered != 0) silent = false;
        }
        Configuration after = c;
        after.round = before.round;
        if (!(after == before)) silent = false;
        if (!silent) {
            silence_detail = "activity after convergence at N=" + std::to_string(c.n_guests);
            break;
        }
    }
    report(7, silent, silence_detail + " (" + std::to_string(converged_samples.size()) +
                          " configurations checked)");

    // Criterion 8: determinism: identical spec and seed, identical traces.
    bool deterministic = true;
    for (std::int32_t n : {16, 64}) {
        TrialSpec spec = specs[n == 16 ? 1 : 3];
        spec.seed = 0xC8 + n;
        Configuration a = generate_initial(spec);
        Configuration b = generate_initial(spec);
        HostHandler handler = protocol_handler();
        for (int i = 0; i < 150 && deterministic; ++i) {
            step(a, handler);
            step(b, handler);
            if (!(a == b)) deterministic = false;
        }
        if (snapshot(a) != snapshot(b)) deterministic = false;
    }
    report(8, deterministic, deterministic ? "re-runs bit-identical over 150 rounds at N=16,64"
                                           : "trace divergence");
}

}  // namespace

int main() {
    std::vector<Configuration> converged_samples;
    criteria_1_2_7(converged_samples);
    criteria_3_4();
    criterion_5();
    criteria_6_7_8(converged_samples);
    if (g_failures == 0)
        std::printf("all acceptance criteria passed\n");
    else
        std::printf("%d criterion(s) FAILED\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
