#pragma once

#include "avatar/state.hpp"

// Global checks used by tests, the harness, and the CLI: these see the whole
// configuration, unlike the protocol's one-hop checks.
namespace avatar {

// Target guest graph for the finished network: scaffold plus fingers.
GuestEdgeSet chord_target(std::int32_t n_guests, bool include_half_ring = false);

// Exact legality of Avatar(target): hosting matches the responsible ranges,
// every guest's neighbourhood equals the target, and the host graph is
// exactly the target's embedding plus successor edges.
bool is_legal(const GuestEdgeSet& target, const Configuration& config);

bool all_phase(const Configuration& config, Phase phase);

// Nothing in flight, nothing scheduled, nothing left to announce.
bool quiescent(const Configuration& config);

// The harness convergence target: legal Avatar(Chord), all hosts DONE,
// network silent.
bool converged(const Configuration& config);

// Fill every host's cache with its neighbours' current summaries, as if a
// round of state exchange had just happened.
void populate_caches(Configuration& config);

// Runs each host's per-phase fault check against its local view; true when
// at least one host reports a fault.
bool any_host_detects_fault(const Configuration& config);

// Legal Avatar(Cbt) over the given hosts, every phase as requested, caches
// warm, network silent.
Configuration legal_cbt_config(std::int32_t n_guests, const std::set<HostId>& hosts, Phase phase,
                               std::uint64_t seed, bool include_half_ring = false);

// Legal Avatar(Chord), all DONE, silent fixpoint.
Configuration legal_chord_config(std::int32_t n_guests, const std::set<HostId>& hosts,
                                 std::uint64_t seed, bool include_half_ring = false);

// Mid-build snapshot: finger waves 0..k-1 completed everywhere, wave k not
// yet started, all phases CHORD.
Configuration scaffolded_partial_config(std::int32_t n_guests, const std::set<HostId>& hosts,
                                        std::int32_t next_wave, std::uint64_t seed,
                                        bool include_half_ring = false);

}  // namespace avatar
