#pragma once

#include "avatar/engine.hpp"
#include "avatar/state.hpp"

// Propagation of information with feedback over the guest tree. Waves are
// initiated by the host of the tree root and advance one guest-tree level
// per round whether or not a hop crosses hosts; intra-host hops go through
// the due queue. Label-specific behaviour is supplied through WaveActions.
namespace avatar {

struct WaveActions {
    virtual ~WaveActions() = default;
    // Propagate action of a guest (root included, when the wave starts).
    virtual void propagate(HostContext& ctx, GuestState& guest, const PifDown& msg) = 0;
    // One child's report arrived, before it is merged into the gathered
    // payload. Poll waves use this to remember which subtree had the best
    // match candidate.
    virtual void child_ack(HostContext& ctx, GuestState& guest, const PifUp& msg) {
        (void)ctx;
        (void)guest;
        (void)msg;
    }
    // Feedback action; `gathered` is the merge of the children's payloads.
    // Returns the payload to report upward.
    virtual FeedbackPayload feedback(HostContext& ctx, GuestState& guest, const WaveLabel& label,
                                     const FeedbackPayload& gathered) = 0;
    // Root received the full feedback wave; the wave is over.
    virtual void complete(HostContext& ctx, GuestState& root, const WaveLabel& label,
                          const FeedbackPayload& payload) = 0;
};

GuestId tree_root_guest(std::int32_t n_guests);

FeedbackPayload merge_payload(FeedbackPayload a, const FeedbackPayload& b);

// Starts a wave at the root guest. Fails (returns false, no effect) if the
// root still has a wave in progress: the root serializes waves.
bool start_wave(HostContext& ctx, WaveActions& actions, WaveLabel label, bool leader_role = false);

void on_propagate(HostContext& ctx, WaveActions& actions, const PifDown& msg);

void on_feedback(HostContext& ctx, WaveActions& actions, const PifUp& msg);

}  // namespace avatar
