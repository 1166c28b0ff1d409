#pragma once

#include "avatar/engine.hpp"
#include "avatar/pif.hpp"
#include "avatar/state.hpp"

// Builds the Chord fingers over the Cbt scaffold: one MakeFinger(k) wave per
// finger, a DonePrepare wave that verifies the finished network, and a
// countdown flip to DONE. Also owns the per-guest scaffolded predicate used
// by phase selection.
namespace avatar {

// Index of the last finger wave: fingers k = 0 .. last_wave_index.
std::int32_t last_wave_index(std::int32_t n_guests, bool include_half_ring);

struct ScaffoldCheck {
    bool cbt_links_ok = true;        // tree neighbours with proper host + tree id
    bool last_wave_in_range = true;  // last wave within [start, log N)
    bool neighbor_fingers_ok = true; // neighbour finger counts within one wave
    bool parent_ok = true;           // parent at the same wave or one behind

    bool verdict() const {
        return cbt_links_ok && last_wave_in_range && neighbor_fingers_ok && parent_ok;
    }
};

// Reads a guest's (last_wave, finger_count) from own state or the one-hop
// cache; nullopt when the information is not locally available.
std::optional<GuestDigest> read_guest(const HostContext& ctx, GuestId g, HostId annotated_host);

ScaffoldCheck scaffolded(const HostContext& ctx, const GuestState& guest);

struct ChordCheckResult {
    bool fault = false;
    bool all_scaffolded = true;
    ScaffoldCheck worst;  // first failing check, for diagnostics
};

// Continuous per-round check while phase == CHORD.
ChordCheckResult chord_checks(const HostContext& ctx);

// Strict per-round check while phase == DONE: any deviation from the legal
// Avatar(Chord) neighbourhood is a fault.
bool done_fault(const HostContext& ctx);

// True when every incident host edge is explained by a guest link, the
// successor pointer, or a held forward.
bool host_edges_justified(const HostContext& ctx);

// Executes a scheduled countdown flip on this host.
void apply_phase_flip(HostState& state);

struct ChordWaves final : WaveActions {
    // Set when a feedback action hit the Fig-1 fault branch; the protocol
    // layer shatters to CBT after message processing.
    bool fault_to_cbt = false;

    void propagate(HostContext& ctx, GuestState& guest, const PifDown& msg) override;
    FeedbackPayload feedback(HostContext& ctx, GuestState& guest, const WaveLabel& label,
                             const FeedbackPayload& gathered) override;
    void complete(HostContext& ctx, GuestState& root, const WaveLabel& label,
                  const FeedbackPayload& payload) override;
};

// Applies one side of a finger creation, creating the realizing host edge
// via the message's witness when needed.
void apply_record_finger(HostContext& ctx, const RecordFinger& msg, bool& fault_to_cbt);

// Schedules (or immediately applies) a countdown phase flip and forwards the
// commit down the tree.
void handle_commit_flip(HostContext& ctx, const CommitFlip& msg, bool& fault_to_cbt);

// Root-host driver: starts the next due wave when none is in progress.
void drive_chord_root(HostContext& ctx, ChordWaves& waves);

// The host-side state reset performed when a cluster flips CBT -> CHORD.
void enter_chord_phase(HostState& state);

}  // namespace avatar
