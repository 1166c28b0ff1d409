#pragma once

#include "avatar/engine.hpp"
#include "avatar/pif.hpp"
#include "avatar/state.hpp"

// Self-stabilizing construction of Avatar(Cbt) from any weakly-connected
// configuration: hosts shatter into single-host clusters on fault detection,
// cluster roots poll their trees each epoch, follower clusters request merge
// partners from leader clusters, and matched clusters merge level by level
// down the guest tree.
namespace avatar {

// One poll epoch: a wave down and back up the guest tree, with slack.
std::int64_t poll_epoch_length(std::int32_t n_guests);

// Rounds a merge needs from MergeStart to a settled cluster. Each tree level
// costs three rounds: discover the partner's child hosts, introduce them,
// then the child pair exchanges.
std::int64_t merge_duration(std::int32_t n_guests);

// Surviving owner of a guest's two copies under the merged responsible
// ranges; always one of the two hosts.
HostId merge_owner(GuestId guest, HostId a, HostId b);

// Leader matching: pair queued follower requests in ascending cluster order;
// an odd count pairs the last follower with the leader's own cluster.
std::vector<std::pair<PendingRequest, PendingRequest>> pair_followers(
    std::vector<PendingRequest> requests, std::int32_t own_cluster, HostId own_root);

// Local structural check of cluster membership; true means this host's view
// is inconsistent with being part of a legal N-guest Avatar(Cbt) cluster.
bool detect_fault(const HostContext& ctx);

// Collapse to a single-host cluster hosting the full N-guest tree. Host
// edges are retained: they are the raw material matching works with.
void form_cluster(HostState& state, std::int32_t n_guests, std::int64_t round);

struct PollWave final : WaveActions {
    void propagate(HostContext& ctx, GuestState& guest, const PifDown& msg) override;
    void child_ack(HostContext& ctx, GuestState& guest, const PifUp& msg) override;
    FeedbackPayload feedback(HostContext& ctx, GuestState& guest, const WaveLabel& label,
                             const FeedbackPayload& gathered) override;
    void complete(HostContext& ctx, GuestState& root, const WaveLabel& label,
                  const FeedbackPayload& payload) override;
};

// Edge-forwarding plumbing shared with the wave-0 reference forwarding:
// take custody of an edge minted for a forwarding flow, release it once the
// next hop took over. Returns false when the chain broke.
bool hold_forwarded_edge(HostContext& ctx, HostId target, bool minted);
void release_forwarded_edge(HostContext& ctx, HostId target, std::int64_t at_round);

// Message handlers (Cbt phase only).
void handle_match_request(HostContext& ctx, const MatchRequest& msg, HostId from);
void handle_match_decline(HostContext& ctx, const MatchDecline& msg);
void handle_merge_start(HostContext& ctx, const MergeStart& msg, HostId from);
void handle_merge_pair(HostContext& ctx, const MergePair& msg, HostId from);
void handle_merge_descend(HostContext& ctx, const MergeDescend& msg, HostId from);
void handle_link_update(HostContext& ctx, const LinkUpdate& msg);

// Per-round driver: poll cadence, merge task sends, merge completion and
// cleanup, match timeouts.
void drive_cbt(HostContext& ctx, PollWave& poll);

}  // namespace avatar
