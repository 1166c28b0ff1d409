#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "avatar/engine.hpp"
#include "avatar/oracle.hpp"
#include "avatar/state.hpp"

// Experiment runner: seeded initial configurations, single trials with
// convergence and degree metrics, and batch suites with summary statistics.
namespace avatar {

enum class HostIdSelection : std::uint8_t { Dense = 0, RandomSubset = 1 };

enum class InitialTopology : std::uint8_t {
    LegalChord = 0,
    LegalCbt = 1,
    ScaffoldedPartial = 2,
    RandomConnected = 3,
    AdversarialLine = 4,
    PerturbedLegal = 5,
};

enum class InitialPhases : std::uint8_t { Done = 0, Chord = 1, Cbt = 2, Random = 3 };

struct TrialSpec {
    std::string spec_id = "trial";
    std::int32_t n_guests = 16;    // N, power of two
    std::int32_t host_count = 16;  // n <= N
    HostIdSelection host_selection = HostIdSelection::Dense;
    InitialTopology topology = InitialTopology::RandomConnected;
    std::int32_t partial_wave = 0;   // ScaffoldedPartial: next wave to run
    double avg_degree = 3.0;         // RandomConnected
    std::int32_t perturb_edits = 1;  // PerturbedLegal
    InitialPhases phases = InitialPhases::Random;
    std::uint64_t seed = 1;
    std::int64_t max_rounds = 0;  // 0: use 50 * log2(N)^2
    bool include_half_ring = false;
};

struct TrialRecord {
    std::string spec_id;
    std::int32_t n_guests = 0;
    std::int32_t host_count = 0;
    std::uint64_t seed = 0;
    bool converged = false;
    std::int64_t rounds_to_legal = -1;  // -1 when not converged
    std::int32_t max_degree_during = 0;
    std::int32_t max_degree_initial = 0;
    std::int32_t max_degree_final = 0;
    double degree_expansion = 0.0;  // maxDuring / max(maxInitial, maxFinal)
    std::vector<std::string> fault_flags;

    std::string fault_flags_joined() const;
};

std::int64_t default_max_rounds(std::int32_t n_guests);

// Deterministic in the spec (seed included); the host graph is always
// weakly connected. Throws std::invalid_argument on infeasible specs.
Configuration generate_initial(const TrialSpec& spec);

TrialRecord run_trial(const TrialSpec& spec);

// Runs with a per-round observer and/or captures the final configuration;
// used by the acceptance checks and the CLI.
TrialRecord run_trial_observed(const TrialSpec& spec,
                               const std::function<void(const Configuration&)>& observer,
                               Configuration* final_out = nullptr);

struct SuiteSummary {
    std::string spec_id;
    std::int32_t n_guests = 0;
    int trials = 0;
    int converged = 0;
    double median_rounds = 0.0;
    double mean_rounds = 0.0;
    double p95_rounds = 0.0;
    double median_expansion = 0.0;
    double mean_expansion = 0.0;
    double p95_expansion = 0.0;
};

struct SuiteResult {
    std::vector<TrialRecord> records;
    std::vector<SuiteSummary> summaries;  // one per spec
    double fit_constant = 0.0;   // median roundsToLegal ~ c * log2(N)^2
    double fit_residual = 0.0;   // normalized RMS residual of the fit
};

// CSV schema:
// specId,N,n,seed,roundsToLegal,maxDegDuring,maxDegInit,maxDegFinal,degExpansion,faultFlags
extern const char* kTrialCsvHeader;

SuiteResult run_suite(const std::vector<TrialSpec>& specs, int trials_per_spec);

void write_csv(std::ostream& out, const std::vector<TrialRecord>& records);

// One deterministic single-edit perturbation of a legal configuration:
// host-edge add/remove, guest link add/remove, guest reassignment, or a
// LastWave corruption. Returns a description of the edit.
std::string perturb_once(Configuration& config, std::uint64_t seed);

// Per-spec JSON (de)serialization for the CLI config file.
std::string trial_specs_to_json(const std::vector<TrialSpec>& specs);
std::vector<TrialSpec> trial_specs_from_json(const std::string& text);

}  // namespace avatar
