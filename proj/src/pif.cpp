#include "avatar/pif.hpp"

#include <algorithm>

namespace avatar {

GuestId tree_root_guest(std::int32_t n_guests) { return (n_guests - 1) / 2; }

FeedbackPayload merge_payload(FeedbackPayload a, const FeedbackPayload& b) {
    a.all_ok = a.all_ok && b.all_ok;
    if (!a.ref_low) a.ref_low = b.ref_low;
    if (!a.ref_high) a.ref_high = b.ref_high;
    if (b.min_foreign && (!a.min_foreign || *b.min_foreign < *a.min_foreign))
        a.min_foreign = b.min_foreign;
    a.any_foreign = a.any_foreign || b.any_foreign;
    return a;
}

namespace {

// Upward refs are real edges being forwarded: hold the edge long enough for
// the receiver's witnessed create to validate, then drop our copy.
void forward_refs_outbound(HostContext& ctx, const FeedbackPayload& payload) {
    for (const std::optional<HostId>& ref : {payload.ref_low, payload.ref_high}) {
        if (!ref || *ref == ctx.self.id) continue;
        auto it = ctx.self.temp_edges.find(*ref);
        if (it != ctx.self.temp_edges.end()) it->second = ctx.round + 1;
    }
}

void deliver_up(HostContext& ctx, GuestState& child, const GuestLink& parent,
                const WaveLabel& label, const FeedbackPayload& payload) {
    PifUp up{label, child.id, parent.guest, payload};
    if (parent.host == ctx.self.id) {
        ctx.self.due.push_back(DueEvent{ctx.round + 1, up});
    } else {
        for (const std::optional<HostId>& ref : {payload.ref_low, payload.ref_high}) {
            if (!ref || *ref == ctx.self.id || *ref == parent.host) continue;
            if (ctx.adjacency.count(EdgeKey(ctx.self.id, *ref)))
                ctx.create_edge(parent.host, *ref, ctx.self.id, "ref-forward");
        }
        ctx.send(parent.host, up);
        forward_refs_outbound(ctx, payload);
    }
}

void run_feedback(HostContext& ctx, WaveActions& actions, GuestState& guest) {
    const WaveLabel label = *guest.active_wave;
    FeedbackPayload payload = actions.feedback(ctx, guest, label, guest.gathered);
    guest.active_wave.reset();  // clean: ready for the next wave
    guest.gathered = FeedbackPayload{};
    guest.left_acked = guest.right_acked = false;
    ctx.self.dirty = true;

    if (guest.parent) {
        deliver_up(ctx, guest, *guest.parent, label, payload);
    } else {
        ctx.self.root_wave.reset();
        actions.complete(ctx, guest, label, payload);
    }
}

void begin_propagate(HostContext& ctx, WaveActions& actions, GuestState& guest,
                     const PifDown& msg) {
    guest.active_wave = msg.label;
    guest.left_acked = !guest.left.has_value();
    guest.right_acked = !guest.right.has_value();
    guest.gathered = FeedbackPayload{};
    actions.propagate(ctx, guest, msg);
    ctx.self.dirty = true;

    for (const std::optional<GuestLink>& child : {guest.left, guest.right}) {
        if (!child) continue;
        PifDown down{msg.label, guest.id, child->guest, msg.leader_role};
        if (child->host == ctx.self.id)
            ctx.self.due.push_back(DueEvent{ctx.round + 1, down});
        else
            ctx.send(child->host, down);
    }
    if (guest.left_acked && guest.right_acked) run_feedback(ctx, actions, guest);
}

}  // namespace

bool start_wave(HostContext& ctx, WaveActions& actions, WaveLabel label, bool leader_role) {
    GuestId root = tree_root_guest(ctx.n_guests);
    auto it = ctx.self.guests.find(root);
    if (it == ctx.self.guests.end()) return false;
    if (ctx.self.root_wave || it->second.active_wave) return false;
    ctx.self.root_wave = label;
    begin_propagate(ctx, actions, it->second, PifDown{label, -1, root, leader_role});
    return true;
}

void on_propagate(HostContext& ctx, WaveActions& actions, const PifDown& msg) {
    auto it = ctx.self.guests.find(msg.child_guest);
    if (it == ctx.self.guests.end()) return;  // stale: guest moved away
    begin_propagate(ctx, actions, it->second, msg);
}

void on_feedback(HostContext& ctx, WaveActions& actions, const PifUp& msg) {
    auto it = ctx.self.guests.find(msg.parent_guest);
    if (it == ctx.self.guests.end()) return;
    GuestState& guest = it->second;
    if (!guest.active_wave || *guest.active_wave != msg.label) return;  // stale wave
    if (guest.left && guest.left->guest == msg.child_guest) guest.left_acked = true;
    if (guest.right && guest.right->guest == msg.child_guest) guest.right_acked = true;
    actions.child_ack(ctx, guest, msg);
    guest.gathered = merge_payload(guest.gathered, msg.payload);
    if (guest.left_acked && guest.right_acked) run_feedback(ctx, actions, guest);
}

}  // namespace avatar
