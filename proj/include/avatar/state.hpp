#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "avatar/topology.hpp"
#include "avatar/wire.hpp"

namespace avatar {

// One virtual node's state as kept by its current host.
struct GuestState {
    GuestId id = -1;
    std::optional<GuestLink> parent;
    std::optional<GuestLink> left;
    std::optional<GuestLink> right;
    std::vector<GuestLink> fingers;          // [k] -> finger k of this guest
    std::vector<GuestLink> reverse_fingers;  // [k] -> guest whose finger k is this guest
    std::int32_t last_wave = -1;             // last MakeFinger propagate seen

    // In-wave bookkeeping.
    std::optional<WaveLabel> active_wave;
    bool left_acked = false;
    bool right_acked = false;
    FeedbackPayload gathered;  // children payloads merged so far

    std::vector<GuestLink> neighbors() const;
    bool operator==(const GuestState&) const = default;
};

struct CachedSummary {
    HostSummary summary;
    std::int64_t received_round = -1;
    bool operator==(const CachedSummary&) const = default;
};

enum class ClusterRole : std::uint8_t { Idle = 0, Leader = 1, Follower = 2 };

enum class MatchPhase : std::uint8_t { Idle = 0, AwaitingGrant = 1, Merging = 2 };

struct PendingRequest {
    std::int32_t follower_cluster = -1;
    HostId follower_root = -1;
    auto operator<=>(const PendingRequest&) const = default;
};

// Per-host merge bookkeeping; tasks are created by MergeStart/MergeDescend
// and live until the pair for that guest has been processed.
struct MergeTask {
    GuestId guest = -1;
    std::int32_t level = 0;
    HostId partner_host = -1;
    bool pair_sent = false;
    bool operator==(const MergeTask&) const = default;
};

struct MergeState {
    bool active = false;
    std::int32_t other_cluster = -1;
    std::int32_t new_cluster_id = -1;
    std::int64_t end_round = -1;  // local cleanup / resume time
    std::map<GuestId, MergeTask> tasks;
    bool operator==(const MergeState&) const = default;
};

// An intra-host virtual message: same payload types as the wire, delivered
// to the owning host itself at `round`. Keeps guest hops at one round each.
struct DueEvent {
    std::int64_t round = 0;
    Payload payload;
};

bool due_equal(const DueEvent& a, const DueEvent& b);

// A send that must wait until an edge created this round becomes usable.
struct DeferredSend {
    std::int64_t round = 0;
    HostId dst = -1;
    Payload payload;
    std::int32_t retries = 0;  // re-post this many times if the edge is late
};

struct HostState {
    HostId id = -1;
    Phase phase = Phase::Cbt;
    Phase prev_phase = Phase::Cbt;
    std::optional<HostId> succ;
    bool claims_smallest = false;
    std::int32_t cluster_id = -1;
    std::map<GuestId, GuestState> guests;

    std::map<HostId, CachedSummary> cache;
    bool dirty = true;  // announce to neighbors this round

    // Chord-phase root bookkeeping.
    std::optional<WaveLabel> root_wave;
    bool done_prepared = false;
    std::int64_t wave_hold_until = 0;  // ring settle time after wave 0

    // Scheduled simultaneous phase flip.
    std::optional<std::int64_t> flip_round;
    Phase flip_target = Phase::Chord;

    // Edges held only to forward them onward: host -> round to delete.
    std::map<HostId, std::int64_t> temp_edges;

    std::vector<DueEvent> due;
    std::vector<DeferredSend> deferred;

    // Cbt-phase cluster machinery.
    ClusterRole role = ClusterRole::Idle;
    std::int64_t next_poll_round = 0;
    std::int32_t poll_epoch = 0;
    std::map<GuestId, std::int32_t> poll_route;  // guest -> -1 self, 0 left, 1 right
    std::optional<std::int32_t> poll_min_foreign;
    std::optional<HostId> poll_via;  // neighbor realizing the min foreign adjacency
    std::vector<PendingRequest> pending_requests;
    MatchPhase match_phase = MatchPhase::Idle;
    std::int64_t match_deadline = -1;
    MergeState merge;

    // Same-cluster edges under suspicion: deletion waits a few rounds so a
    // neighbour's fresh announce can veto a decision made on stale state.
    std::map<HostId, std::int64_t> sweep_since;

    // Raw fault indicator from the most recent check (diagnostics).
    bool fault_flag = false;

    ResponsibleRange claimed_range(std::int32_t n_guests) const;

    bool operator==(const HostState& o) const;
};

struct Configuration {
    std::int32_t version = 1;
    std::int32_t n_guests = 0;  // N, power of two
    bool include_half_ring = false;
    std::int64_t round = 0;
    std::uint64_t seed = 0;
    HostEdgeSet host_graph;
    std::map<HostId, HostState> hosts;
    std::vector<Message> in_flight;

    std::set<HostId> host_ids() const;
    bool adjacent(HostId a, HostId b) const { return host_graph.count(EdgeKey(a, b)) > 0; }
    int host_degree(HostId h) const;
    int max_host_degree() const;

    bool operator==(const Configuration& o) const;
};

// All guest state a legal Avatar(Cbt) member holds for `g`, given the global
// assignment implied by `ranges`. Used by generators and by form_cluster.
GuestState make_cbt_guest(GuestId g, std::int32_t n_guests,
                          const std::map<HostId, ResponsibleRange>& ranges);

}  // namespace avatar
