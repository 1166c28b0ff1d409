#include "avatar/harness.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "avatar/cbt_stabilizer.hpp"
#include "avatar/chord_builder.hpp"
#include "avatar/protocol.hpp"
#include "avatar/rng.hpp"
#include "json.hpp"

namespace avatar {

std::string TrialRecord::fault_flags_joined() const {
    std::string out;
    for (const std::string& f : fault_flags) {
        if (!out.empty()) out += "|";
        out += f;
    }
    return out;
}

std::int64_t default_max_rounds(std::int32_t n_guests) {
    const std::int64_t lg = log2_exact(n_guests);
    return 50 * lg * lg;
}

namespace {

std::set<HostId> pick_hosts(const TrialSpec& spec, SplitMix64& rng) {
    if (spec.host_count < 1 || spec.host_count > spec.n_guests)
        throw std::invalid_argument("host count must be in [1, N]");
    std::set<HostId> hosts;
    if (spec.host_selection == HostIdSelection::Dense) {
        if (spec.host_count != spec.n_guests)
            throw std::invalid_argument("dense selection requires n == N");
        for (HostId h = 0; h < spec.n_guests; ++h) hosts.insert(h);
    } else {
        while (static_cast<std::int32_t>(hosts.size()) < spec.host_count)
            hosts.insert(static_cast<HostId>(rng.below(spec.n_guests)));
    }
    return hosts;
}

Phase pick_phase(const TrialSpec& spec, SplitMix64& rng) {
    switch (spec.phases) {
        case InitialPhases::Done: return Phase::Done;
        case InitialPhases::Chord: return Phase::Chord;
        case InitialPhases::Cbt: return Phase::Cbt;
        case InitialPhases::Random:
            return static_cast<Phase>(rng.below(3));
    }
    return Phase::Cbt;
}

// Arbitrary-state host: a singleton cluster view with randomized claims so
// neighbouring hosts disagree and fault detection has real work to do.
HostState scrambled_host(HostId id, std::int32_t n, Phase phase, SplitMix64& rng) {
    HostState s;
    s.id = id;
    form_cluster(s, n, 0);
    s.phase = phase;
    s.prev_phase = phase;
    if (rng.coin()) {
        // Claim a random slice of the identifier space.
        HostId fake_succ = static_cast<HostId>(rng.below(n));
        if (fake_succ > id) s.succ = fake_succ;
        s.claims_smallest = rng.coin();
        const ResponsibleRange r = s.claimed_range(n);
        std::map<HostId, ResponsibleRange> own{{id, ResponsibleRange{0, n}}};
        s.guests.clear();
        for (GuestId g = r.lo; g < r.hi && g < n; ++g) s.guests[g] = make_cbt_guest(g, n, own);
    }
    if (phase != Phase::Cbt) {
        // Pretend some finger progress happened.
        std::int32_t k = static_cast<std::int32_t>(rng.below(log2_exact(n)));
        for (auto& [g, gs] : s.guests) gs.last_wave = k;
    }
    s.dirty = true;
    return s;
}

Configuration connected_random(const TrialSpec& spec, SplitMix64& rng) {
    if (spec.avg_degree >= spec.host_count && spec.host_count > 1)
        throw std::invalid_argument("avgDegree must be below the host count");
    Configuration c;
    c.n_guests = spec.n_guests;
    c.include_half_ring = spec.include_half_ring;
    c.seed = spec.seed;
    std::set<HostId> host_set = pick_hosts(spec, rng);
    std::vector<HostId> ids(host_set.begin(), host_set.end());
    SplitMix64 state_rng(mix_seed(spec.seed, 0x5eed, 1));
    for (HostId h : ids) c.hosts[h] = scrambled_host(h, spec.n_guests, pick_phase(spec, state_rng), state_rng);

    // Random spanning tree first, then extra edges up to the degree target.
    for (std::size_t i = 1; i < ids.size(); ++i)
        c.host_graph.insert(EdgeKey(ids[i], ids[rng.below(i)]));
    const std::int64_t target_edges =
        static_cast<std::int64_t>(spec.avg_degree * static_cast<double>(ids.size()) / 2.0);
    int guard = 0;
    while (static_cast<std::int64_t>(c.host_graph.size()) < target_edges && guard++ < 10000) {
        HostId a = ids[rng.below(ids.size())];
        HostId b = ids[rng.below(ids.size())];
        if (a != b) c.host_graph.insert(EdgeKey(a, b));
    }
    return c;
}

Configuration adversarial_line(const TrialSpec& spec, SplitMix64& rng) {
    Configuration c;
    c.n_guests = spec.n_guests;
    c.include_half_ring = spec.include_half_ring;
    c.seed = spec.seed;
    std::set<HostId> host_set = pick_hosts(spec, rng);
    std::vector<HostId> ids(host_set.begin(), host_set.end());
    // Shuffled path: worst-case diameter with arbitrary id order.
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
    SplitMix64 state_rng(mix_seed(spec.seed, 0x5eed, 2));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        c.hosts[ids[i]] = scrambled_host(ids[i], spec.n_guests, pick_phase(spec, state_rng), state_rng);
        if (i > 0) c.host_graph.insert(EdgeKey(ids[i - 1], ids[i]));
    }
    return c;
}

}  // namespace

std::string perturb_once(Configuration& config, std::uint64_t seed) {
    SplitMix64 rng(seed);
    const std::set<HostId> host_set = config.host_ids();
    std::vector<HostId> ids(host_set.begin(), host_set.end());
    auto host_at = [&](std::uint64_t i) -> HostState& { return config.hosts[ids[i % ids.size()]]; };

    for (int attempt = 0; attempt < 64; ++attempt) {
        switch (rng.below(5)) {
            case 0: {  // add a host edge
                HostId a = ids[rng.below(ids.size())];
                HostId b = ids[rng.below(ids.size())];
                if (a == b || config.adjacent(a, b)) break;
                config.host_graph.insert(EdgeKey(a, b));
                return "host-edge-add(" + std::to_string(a) + "," + std::to_string(b) + ")";
            }
            case 1: {  // remove a host edge (keep the graph connected)
                if (config.host_graph.empty()) break;
                std::vector<EdgeKey> edges(config.host_graph.begin(), config.host_graph.end());
                EdgeKey e = edges[rng.below(edges.size())];
                config.host_graph.erase(e);
                if (!weakly_connected(config)) {
                    config.host_graph.insert(e);
                    break;
                }
                return "host-edge-remove(" + std::to_string(e.a) + "," + std::to_string(e.b) + ")";
            }
            case 2: {  // corrupt a LastWave marker
                HostState& s = host_at(rng.next());
                if (s.guests.empty()) break;
                auto it = s.guests.begin();
                std::advance(it, rng.below(s.guests.size()));
                std::int32_t old = it->second.last_wave;
                it->second.last_wave = static_cast<std::int32_t>(rng.below(2 * log2_exact(config.n_guests))) - 2;
                if (it->second.last_wave == old) it->second.last_wave = old - 1;
                return "lastwave(" + std::to_string(s.id) + ":" + std::to_string(it->first) + ")";
            }
            case 3: {  // reassign a guest to the wrong host
                if (ids.size() < 2) break;
                HostState& from = host_at(rng.next());
                HostState& to = host_at(rng.next());
                if (from.id == to.id || from.guests.empty()) break;
                auto it = from.guests.begin();
                std::advance(it, rng.below(from.guests.size()));
                GuestState moved = it->second;
                from.guests.erase(it);
                to.guests[moved.id] = moved;
                return "guest-reassign(" + std::to_string(moved.id) + ":" + std::to_string(from.id) +
                       "->" + std::to_string(to.id) + ")";
            }
            case 4: {  // add or remove one guest link record
                HostState& s = host_at(rng.next());
                if (s.guests.empty()) break;
                auto it = s.guests.begin();
                std::advance(it, rng.below(s.guests.size()));
                GuestState& g = it->second;
                if (rng.coin() && !g.fingers.empty()) {
                    g.fingers.pop_back();
                    return "link-remove(" + std::to_string(s.id) + ":" + std::to_string(g.id) + ")";
                }
                GuestId bogus = static_cast<GuestId>(rng.below(config.n_guests));
                g.fingers.push_back(GuestLink{bogus, s.id});
                return "link-add(" + std::to_string(s.id) + ":" + std::to_string(g.id) + ")";
            }
        }
    }
    throw std::runtime_error("perturb_once: no applicable edit found");
}

Configuration generate_initial(const TrialSpec& spec) {
    if (!is_power_of_two(spec.n_guests) || spec.n_guests < 4)
        throw std::invalid_argument("N must be a power of two >= 4");
    SplitMix64 rng(mix_seed(spec.seed, 0x5eed, 0));

    switch (spec.topology) {
        case InitialTopology::LegalChord:
            return legal_chord_config(spec.n_guests, pick_hosts(spec, rng), spec.seed,
                                      spec.include_half_ring);
        case InitialTopology::LegalCbt: {
            Phase phase = spec.phases == InitialPhases::Cbt ? Phase::Cbt : Phase::Chord;
            return legal_cbt_config(spec.n_guests, pick_hosts(spec, rng), phase, spec.seed,
                                    spec.include_half_ring);
        }
        case InitialTopology::ScaffoldedPartial: {
            const std::int32_t last = last_wave_index(spec.n_guests, spec.include_half_ring);
            if (spec.partial_wave < 0 || spec.partial_wave > last + 1)
                throw std::invalid_argument("partial wave out of range");
            return scaffolded_partial_config(spec.n_guests, pick_hosts(spec, rng),
                                             spec.partial_wave, spec.seed, spec.include_half_ring);
        }
        case InitialTopology::RandomConnected:
            return connected_random(spec, rng);
        case InitialTopology::AdversarialLine:
            return adversarial_line(spec, rng);
        case InitialTopology::PerturbedLegal: {
            Configuration c = legal_chord_config(spec.n_guests, pick_hosts(spec, rng), spec.seed,
                                                 spec.include_half_ring);
            for (std::int32_t i = 0; i < spec.perturb_edits; ++i)
                perturb_once(c, mix_seed(spec.seed, 0xed17, i));
            return c;
        }
    }
    throw std::invalid_argument("unknown topology");
}

TrialRecord run_trial_observed(const TrialSpec& spec,
                               const std::function<void(const Configuration&)>& observer,
                               Configuration* final_out) {
    Configuration start = generate_initial(spec);

    TrialRecord record;
    record.spec_id = spec.spec_id;
    record.n_guests = spec.n_guests;
    record.host_count = static_cast<std::int32_t>(start.hosts.size());
    record.seed = spec.seed;
    record.max_degree_initial = start.max_host_degree();

    RunOptions opt;
    opt.max_rounds = spec.max_rounds > 0 ? spec.max_rounds : default_max_rounds(spec.n_guests);
    opt.check_connectivity = true;
    opt.observer = observer;

    RunResult result = run(std::move(start), protocol_handler(), converged, opt);

    record.converged = result.converged;
    record.rounds_to_legal = result.converged ? result.rounds : -1;
    record.max_degree_final = result.config.max_host_degree();
    record.max_degree_during = record.max_degree_initial;
    for (const RoundMetric& m : result.trace)
        record.max_degree_during = std::max(record.max_degree_during, m.max_host_degree);
    const int base = std::max(record.max_degree_initial, record.max_degree_final);
    record.degree_expansion =
        base > 0 ? static_cast<double>(record.max_degree_during) / base : 1.0;

    if (result.fault) {
        switch (result.fault->kind) {
            case FaultKind::IntroductionRule: record.fault_flags.push_back("introduction-rule"); break;
            case FaultKind::ChannelMissing: record.fault_flags.push_back("channel-missing"); break;
            case FaultKind::ChannelCapacity: record.fault_flags.push_back("channel-capacity"); break;
            case FaultKind::DeleteNotIncident: record.fault_flags.push_back("delete-not-incident"); break;
            case FaultKind::ConnectivityLost: record.fault_flags.push_back("connectivity-lost"); break;
        }
    }
    if (!result.converged && !result.fault) record.fault_flags.push_back("non-convergence");
    if (final_out) *final_out = std::move(result.config);
    return record;
}

TrialRecord run_trial(const TrialSpec& spec) { return run_trial_observed(spec, nullptr); }

namespace {

double percentile(std::vector<double> values, double p) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    double idx = p * (static_cast<double>(values.size()) - 1);
    std::size_t lo = static_cast<std::size_t>(idx);
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = idx - static_cast<double>(lo);
    return values[lo] * (1 - frac) + values[hi] * frac;
}

}  // namespace

const char* kTrialCsvHeader =
    "specId,N,n,seed,roundsToLegal,maxDegDuring,maxDegInit,maxDegFinal,degExpansion,faultFlags";

void write_csv(std::ostream& out, const std::vector<TrialRecord>& records) {
    out << kTrialCsvHeader << "\n";
    for (const TrialRecord& r : records) {
        out << r.spec_id << "," << r.n_guests << "," << r.host_count << "," << r.seed << ","
            << r.rounds_to_legal << "," << r.max_degree_during << "," << r.max_degree_initial
            << "," << r.max_degree_final << "," << r.degree_expansion << ","
            << r.fault_flags_joined() << "\n";
    }
}

SuiteResult run_suite(const std::vector<TrialSpec>& specs, int trials_per_spec) {
    SuiteResult result;
    std::vector<std::pair<double, double>> fit_points;  // (log2(N)^2, median rounds)

    for (const TrialSpec& base : specs) {
        std::vector<double> rounds, expansions;
        SuiteSummary summary;
        summary.spec_id = base.spec_id;
        summary.n_guests = base.n_guests;
        for (int t = 0; t < trials_per_spec; ++t) {
            TrialSpec spec = base;
            spec.seed = mix_seed(base.seed, 0x791a1, t);
            TrialRecord record = run_trial(spec);
            result.records.push_back(record);
            ++summary.trials;
            if (record.converged) {
                ++summary.converged;
                rounds.push_back(static_cast<double>(record.rounds_to_legal));
                expansions.push_back(record.degree_expansion);
            }
        }
        summary.median_rounds = percentile(rounds, 0.5);
        summary.p95_rounds = percentile(rounds, 0.95);
        summary.mean_rounds = rounds.empty() ? 0 : [&] {
            double s = 0;
            for (double v : rounds) s += v;
            return s / static_cast<double>(rounds.size());
        }();
        summary.median_expansion = percentile(expansions, 0.5);
        summary.p95_expansion = percentile(expansions, 0.95);
        summary.mean_expansion = expansions.empty() ? 0 : [&] {
            double s = 0;
            for (double v : expansions) s += v;
            return s / static_cast<double>(expansions.size());
        }();
        result.summaries.push_back(summary);

        const double lg = static_cast<double>(log2_exact(base.n_guests));
        if (!rounds.empty()) fit_points.emplace_back(lg * lg, summary.median_rounds);
    }

    // Least-squares through the origin: median rounds ~ c * log2(N)^2.
    double num = 0, den = 0;
    for (const auto& [x, y] : fit_points) {
        num += x * y;
        den += x * x;
    }
    result.fit_constant = den > 0 ? num / den : 0.0;
    double rss = 0, tss = 0;
    for (const auto& [x, y] : fit_points) {
        double e = y - result.fit_constant * x;
        rss += e * e;
        tss += y * y;
    }
    result.fit_residual = tss > 0 ? std::sqrt(rss / tss) : 0.0;
    return result;
}

namespace {

using Json = nlohmann::ordered_json;

const char* topology_name(InitialTopology t) {
    switch (t) {
        case InitialTopology::LegalChord: return "legalChord";
        case InitialTopology::LegalCbt: return "legalCbt";
        case InitialTopology::ScaffoldedPartial: return "scaffoldedPartial";
        case InitialTopology::RandomConnected: return "randomConnected";
        case InitialTopology::AdversarialLine: return "adversarialLine";
        case InitialTopology::PerturbedLegal: return "perturbedLegal";
    }
    return "?";
}

InitialTopology topology_from(const std::string& s) {
    if (s == "legalChord") return InitialTopology::LegalChord;
    if (s == "legalCbt") return InitialTopology::LegalCbt;
    if (s == "scaffoldedPartial") return InitialTopology::ScaffoldedPartial;
    if (s == "randomConnected") return InitialTopology::RandomConnected;
    if (s == "adversarialLine") return InitialTopology::AdversarialLine;
    if (s == "perturbedLegal") return InitialTopology::PerturbedLegal;
    throw std::invalid_argument("unknown topology: " + s);
}

const char* phases_name(InitialPhases p) {
    switch (p) {
        case InitialPhases::Done: return "done";
        case InitialPhases::Chord: return "chord";
        case InitialPhases::Cbt: return "cbt";
        case InitialPhases::Random: return "random";
    }
    return "?";
}

InitialPhases phases_from(const std::string& s) {
    if (s == "done") return InitialPhases::Done;
    if (s == "chord") return InitialPhases::Chord;
    if (s == "cbt") return InitialPhases::Cbt;
    if (s == "random") return InitialPhases::Random;
    throw std::invalid_argument("unknown phases: " + s);
}

}  // namespace

std::string trial_specs_to_json(const std::vector<TrialSpec>& specs) {
    Json arr = Json::array();
    for (const TrialSpec& s : specs) {
        Json j;
        j["specId"] = s.spec_id;
        j["N"] = s.n_guests;
        j["n"] = s.host_count;
        j["hostIdSelection"] = s.host_selection == HostIdSelection::Dense ? "dense" : "randomSubset";
        j["initialTopology"] = topology_name(s.topology);
        if (s.topology == InitialTopology::ScaffoldedPartial) j["partialWave"] = s.partial_wave;
        if (s.topology == InitialTopology::RandomConnected) j["avgDegree"] = s.avg_degree;
        if (s.topology == InitialTopology::PerturbedLegal) j["edits"] = s.perturb_edits;
        j["initialPhases"] = phases_name(s.phases);
        j["seed"] = s.seed;
        j["maxRounds"] = s.max_rounds;
        j["includeHalfRingFinger"] = s.include_half_ring;
        arr.push_back(j);
    }
    return arr.dump(2);
}

std::vector<TrialSpec> trial_specs_from_json(const std::string& text) {
    Json arr = Json::parse(text);
    std::vector<TrialSpec> specs;
    for (const Json& j : arr) {
        TrialSpec s;
        s.spec_id = j.value("specId", std::string("trial"));
        s.n_guests = j.at("N").get<std::int32_t>();
        s.host_count = j.value("n", s.n_guests);
        s.host_selection = j.value("hostIdSelection", std::string("dense")) == "dense"
                               ? HostIdSelection::Dense
                               : HostIdSelection::RandomSubset;
        s.topology = topology_from(j.value("initialTopology", std::string("randomConnected")));
        s.partial_wave = j.value("partialWave", 0);
        s.avg_degree = j.value("avgDegree", 3.0);
        s.perturb_edits = j.value("edits", 1);
        s.phases = phases_from(j.value("initialPhases", std::string("random")));
        s.seed = j.value("seed", std::uint64_t{1});
        s.max_rounds = j.value("maxRounds", std::int64_t{0});
        s.include_half_ring = j.value("includeHalfRingFinger", false);
        specs.push_back(s);
    }
    return specs;
}

}  // namespace avatar
