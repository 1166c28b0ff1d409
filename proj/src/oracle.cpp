#include "avatar/oracle.hpp"

#include <algorithm>

#include "avatar/cbt_stabilizer.hpp"
#include "avatar/chord_builder.hpp"
#include "avatar/pif.hpp"
#include "avatar/protocol.hpp"

namespace avatar {

GuestEdgeSet chord_target(std::int32_t n_guests, bool include_half_ring) {
    GuestEdgeSet target = chord_edges(n_guests, include_half_ring);
    for (const EdgeKey& e : cbt_edges(n_guests)) target.insert(e);
    return target;
}

bool is_legal(const GuestEdgeSet& target, const Configuration& config) {
    if (config.hosts.empty()) return false;
    const auto ranges = responsible_ranges(config.host_ids(), config.n_guests);

    // (a) hosting matches the responsible ranges.
    for (const auto& [h, state] : config.hosts) {
        const ResponsibleRange& r = ranges.at(h);
        if (static_cast<std::int32_t>(state.guests.size()) != r.size()) return false;
        for (const auto& [g, gs] : state.guests)
            if (!r.contains(g)) return false;
    }

    // (b) every guest's neighbourhood equals its target neighbourhood, with
    // host annotations matching the embedding.
    std::map<GuestId, std::set<GuestId>> want;
    for (const EdgeKey& e : target) {
        want[e.a].insert(e.b);
        want[e.b].insert(e.a);
    }
    for (const auto& [h, state] : config.hosts) {
        for (const auto& [g, gs] : state.guests) {
            std::set<GuestId> have;
            for (const GuestLink& nb : gs.neighbors()) {
                if (nb.host != host_of(nb.guest, ranges)) return false;
                have.insert(nb.guest);
            }
            auto it = want.find(g);
            const std::set<GuestId> expect = (it == want.end()) ? std::set<GuestId>{} : it->second;
            if (have != expect) return false;
        }
    }

    // (c) host graph is exactly the embedding plus successor edges.
    return config.host_graph == legal_host_edges(target, ranges);
}

bool all_phase(const Configuration& config, Phase phase) {
    for (const auto& [h, s] : config.hosts)
        if (s.phase != phase) return false;
    return true;
}

bool quiescent(const Configuration& config) {
    if (!config.in_flight.empty()) return false;
    for (const auto& [h, s] : config.hosts)
        if (!s.due.empty() || s.dirty) return false;
    return true;
}

bool converged(const Configuration& config) {
    return all_phase(config, Phase::Done) && quiescent(config) &&
           is_legal(chord_target(config.n_guests, config.include_half_ring), config);
}

void populate_caches(Configuration& config) {
    std::map<HostId, HostSummary> summaries;
    for (const auto& [h, s] : config.hosts) summaries[h] = build_summary(s, config.n_guests);
    for (const EdgeKey& e : config.host_graph) {
        if (!config.hosts.count(e.a) || !config.hosts.count(e.b)) continue;
        config.hosts[e.a].cache[e.b] = CachedSummary{summaries[e.b], config.round};
        config.hosts[e.b].cache[e.a] = CachedSummary{summaries[e.a], config.round};
    }
}

bool any_host_detects_fault(const Configuration& config) {
    static const std::vector<Message> no_msgs;
    static const std::vector<DueEvent> no_due;
    for (const auto& [h, s] : config.hosts) {
        HostState scratch = s;
        std::vector<Message> outbox;
        std::vector<EdgeCommand> commands;
        HostContext ctx{config.round,  config.n_guests, config.include_half_ring,
                        config.seed,   scratch,         no_msgs,
                        no_due,        config.host_graph};
        ctx.outbox = &outbox;
        ctx.commands = &commands;
        bool fault = false;
        if (s.phase == Phase::Done) {
            fault = done_fault(ctx);
        } else if (s.phase == Phase::Chord) {
            ChordCheckResult check = chord_checks(ctx);
            fault = check.fault && !check.all_scaffolded;
        } else {
            fault = detect_fault(ctx);
        }
        if (fault) return true;
    }
    return false;
}

namespace {

Configuration base_config(std::int32_t n_guests, const std::set<HostId>& hosts,
                          std::uint64_t seed, bool include_half_ring) {
    Configuration config;
    config.n_guests = n_guests;
    config.include_half_ring = include_half_ring;
    config.seed = seed;
    const auto ranges = responsible_ranges(hosts, n_guests);
    for (HostId h : hosts) {
        HostState s;
        s.id = h;
        const ResponsibleRange& r = ranges.at(h);
        s.claims_smallest = (h == *hosts.begin());
        auto next = std::next(hosts.find(h));
        if (next != hosts.end()) s.succ = *next;
        s.cluster_id = host_of(tree_root_guest(n_guests), ranges);
        for (GuestId g = r.lo; g < r.hi; ++g) s.guests[g] = make_cbt_guest(g, n_guests, ranges);
        s.dirty = false;
        config.hosts[h] = s;
    }
    return config;
}

void add_fingers(Configuration& config, std::int32_t upto_wave) {
    const std::int32_t n = config.n_guests;
    const auto ranges = responsible_ranges(config.host_ids(), n);
    for (auto& [h, s] : config.hosts) {
        for (auto& [g, gs] : s.guests) {
            gs.last_wave = upto_wave;
            for (std::int32_t k = 0; k <= upto_wave; ++k) {
                GuestId fwd = static_cast<GuestId>((g + (std::int64_t{1} << k)) % n);
                GuestId rev = static_cast<GuestId>(((g - (std::int64_t{1} << k)) % n + n) % n);
                gs.fingers.push_back(GuestLink{fwd, host_of(fwd, ranges)});
                gs.reverse_fingers.push_back(GuestLink{rev, host_of(rev, ranges)});
            }
        }
    }
}

void finish(Configuration& config, const GuestEdgeSet& target) {
    const auto ranges = responsible_ranges(config.host_ids(), config.n_guests);
    config.host_graph = legal_host_edges(target, ranges);
    populate_caches(config);
}

}  // namespace

Configuration legal_cbt_config(std::int32_t n_guests, const std::set<HostId>& hosts, Phase phase,
                               std::uint64_t seed, bool include_half_ring) {
    Configuration config = base_config(n_guests, hosts, seed, include_half_ring);
    for (auto& [h, s] : config.hosts) {
        s.phase = phase;
        s.prev_phase = phase;
        if (phase == Phase::Cbt)
            s.next_poll_round = 1 + (h % poll_epoch_length(n_guests));
    }
    finish(config, cbt_edges(n_guests));
    return config;
}

Configuration legal_chord_config(std::int32_t n_guests, const std::set<HostId>& hosts,
                                 std::uint64_t seed, bool include_half_ring) {
    Configuration config = base_config(n_guests, hosts, seed, include_half_ring);
    add_fingers(config, last_wave_index(n_guests, include_half_ring));
    for (auto& [h, s] : config.hosts) {
        s.phase = Phase::Done;
        s.prev_phase = Phase::Done;
        s.done_prepared = true;
    }
    finish(config, chord_target(n_guests, include_half_ring));
    return config;
}

Configuration scaffolded_partial_config(std::int32_t n_guests, const std::set<HostId>& hosts,
                                        std::int32_t next_wave, std::uint64_t seed,
                                        bool include_half_ring) {
    Configuration config = base_config(n_guests, hosts, seed, include_half_ring);
    add_fingers(config, next_wave - 1);
    for (auto& [h, s] : config.hosts) {
        s.phase = Phase::Chord;
        s.prev_phase = Phase::Chord;
    }
    GuestEdgeSet target = cbt_edges(n_guests);
    for (const EdgeKey& e : chord_edges(n_guests, include_half_ring)) {
        // Only edges from completed waves exist yet.
        std::int64_t dist = std::min((e.b - e.a + n_guests) % n_guests,
                                     (e.a - e.b + n_guests) % n_guests);
        std::int32_t k = 0;
        while ((std::int64_t{1} << k) < dist) ++k;
        if (k < next_wave) target.insert(e);
    }
    finish(config, target);
    return config;
}

}  // namespace avatar
