#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include "avatar/topology.hpp"

// Everything hosts put on the wire. One virtual-message hop between guests
// takes exactly one round whether or not it crosses hosts; intra-host hops
// go through the host's due queue carrying the same payload types.
namespace avatar {

enum class Phase : std::uint8_t { Cbt = 0, Chord = 1, Done = 2 };

const char* phase_name(Phase p);

enum class WaveKind : std::uint8_t { MakeFinger = 0, DonePrepare = 1, Poll = 2 };

struct WaveLabel {
    WaveKind kind = WaveKind::MakeFinger;
    std::int32_t index = 0;  // finger k for MakeFinger, epoch for Poll

    auto operator<=>(const WaveLabel&) const = default;
};

struct GuestLink {
    GuestId guest = -1;
    HostId host = -1;  // host annotation: where the link's endpoint lives

    auto operator<=>(const GuestLink&) const = default;
};

struct GuestDigest {
    std::int32_t last_wave = -1;
    std::int32_t finger_count = 0;
    std::vector<GuestLink> links;  // full neighbor list with annotations

    auto operator<=>(const GuestDigest&) const = default;
};

// Per-round state exchange: the one-hop view fault detection runs against.
struct HostSummary {
    HostId id = -1;
    Phase phase = Phase::Cbt;
    std::int32_t cluster_id = -1;
    std::optional<HostId> succ;
    bool claims_smallest = false;
    bool merging = false;
    std::int32_t range_lo = 0;
    std::int32_t range_hi = 0;
    std::map<GuestId, GuestDigest> guests;

    auto operator<=>(const HostSummary&) const = default;
};

// Feedback payloads merged up the tree: edge references to guests 0 / N-1
// during finger wave 0, poll aggregation during Cbt epochs, consistency
// verdicts during the pre-Done check.
struct FeedbackPayload {
    bool all_ok = true;
    std::optional<HostId> ref_low;       // host currently holding guest 0
    std::optional<HostId> ref_high;      // host currently holding guest N-1
    std::optional<std::int32_t> min_foreign;  // smallest adjacent foreign cluster
    bool any_foreign = false;            // any foreign or not-yet-identified neighbor

    auto operator<=>(const FeedbackPayload&) const = default;
};

struct Announce {
    HostSummary summary;
    auto operator<=>(const Announce&) const = default;
};

struct PifDown {
    WaveLabel label;
    GuestId parent_guest = -1;
    GuestId child_guest = -1;
    bool leader_role = false;  // Poll waves: role chosen by the root this epoch
    auto operator<=>(const PifDown&) const = default;
};

struct PifUp {
    WaveLabel label;
    GuestId child_guest = -1;
    GuestId parent_guest = -1;
    FeedbackPayload payload;
    auto operator<=>(const PifUp&) const = default;
};

// Countdown broadcast: all hosts of the cluster flip phase in the same round,
// so a phase difference between neighbors is always a fault.
struct CommitFlip {
    Phase target = Phase::Chord;
    std::int32_t flip_in = 0;  // rounds until the flip, decremented per hop
    GuestId parent_guest = -1;
    GuestId child_guest = -1;
    auto operator<=>(const CommitFlip&) const = default;
};

// Write one side of a finger edge; when `witness` is set the receiving host
// also creates the realizing host edge via the introduction rule.
struct RecordFinger {
    GuestId for_guest = -1;
    std::int32_t k = 0;
    GuestId other = -1;
    HostId other_host = -1;
    bool reverse = false;  // record as reverse finger (other -> for_guest)
    std::optional<HostId> witness;  // introducing host, kept for diagnostics
    auto operator<=>(const RecordFinger&) const = default;
};

enum class MatchStage : std::uint8_t { DescendOwn = 0, CrossEdge = 1, ClimbForeign = 2 };

// Routed from a follower root to a leader root, forwarding an edge to the
// follower root along the way so the leader can introduce matched partners.
struct MatchRequest {
    MatchStage stage = MatchStage::DescendOwn;
    GuestId at_guest = -1;              // position while descending own tree
    std::int32_t target_cluster = -1;
    std::int32_t follower_cluster = -1;
    HostId follower_root = -1;
    bool edge_minted = false;  // sender created (receiver, follower_root) for this hop
    auto operator<=>(const MatchRequest&) const = default;
};

struct MatchDecline {
    std::int32_t follower_cluster = -1;
    HostId follower_root = -1;  // queued as a due event, it is sent there
    auto operator<=>(const MatchDecline&) const = default;
};

struct MergeStart {
    HostId partner_root = -1;
    std::int32_t partner_cluster = -1;
    auto operator<=>(const MergeStart&) const = default;
};

// Exchanged between the two hosts of one guest's copies at its tree level.
struct MergePair {
    GuestId guest = -1;
    std::int32_t level = 0;
    std::optional<HostId> left_child_host;
    std::optional<HostId> right_child_host;
    std::int32_t new_cluster_id = -1;  // -1 until decided at level 0
    auto operator<=>(const MergePair&) const = default;
};

// Parent-level pair telling a child copy's host who its partner is. The
// sender is the witness for the partner-edge introduction.
struct MergeDescend {
    GuestId guest = -1;
    std::int32_t level = 0;
    HostId partner_host = -1;
    HostId witness = -1;
    std::int32_t new_cluster_id = -1;
    GuestId parent_guest = -1;
    HostId parent_owner = -1;
    auto operator<=>(const MergeDescend&) const = default;
};

// Child pair reporting the surviving owner upward so the parent's copy can
// fix its child-link annotation.
struct LinkUpdate {
    GuestId parent_guest = -1;
    GuestId child_guest = -1;
    HostId child_owner = -1;
    auto operator<=>(const LinkUpdate&) const = default;
};

using Payload = std::variant<Announce, PifDown, PifUp, CommitFlip, RecordFinger, MatchRequest,
                             MatchDecline, MergeStart, MergePair, MergeDescend, LinkUpdate>;

struct Message {
    HostId src = -1;
    HostId dst = -1;
    Payload payload;
};

bool payload_equal(const Payload& a, const Payload& b);

// Host references in the payload usable for edge creation; the engine caps
// the distinct referenced hosts per edge per round to keep channels bounded.
void intro_refs(const Payload& p, std::set<HostId>& out);
int intro_ref_count(const Payload& p);

const char* payload_kind_name(const Payload& p);

// Processing priority inside one round (announces first, wave traffic last).
int payload_order(const Payload& p);

}  // namespace avatar
