#include "avatar/protocol.hpp"

#include <algorithm>

#include "avatar/cbt_stabilizer.hpp"
#include "avatar/chord_builder.hpp"
#include "avatar/pif.hpp"

namespace avatar {

HostSummary build_summary(const HostState& s, std::int32_t n_guests) {
    HostSummary sum;
    sum.id = s.id;
    sum.phase = s.phase;
    sum.cluster_id = s.cluster_id;
    sum.succ = s.succ;
    sum.claims_smallest = s.claims_smallest;
    sum.merging = s.merge.active;
    const ResponsibleRange range = s.claimed_range(n_guests);
    sum.range_lo = range.lo;
    sum.range_hi = range.hi;
    for (const auto& [g, gs] : s.guests) {
        GuestDigest d;
        d.last_wave = gs.last_wave;
        d.finger_count = static_cast<std::int32_t>(gs.fingers.size());
        d.links = gs.neighbors();
        sum.guests[g] = d;
    }
    return sum;
}

namespace {

void shatter(HostContext& ctx) { form_cluster(ctx.self, ctx.n_guests, ctx.round); }

struct RoundDriver {
    ChordWaves chord;
    PollWave poll;
    bool phase_conflict = false;

    void ingest(HostContext& ctx, const Payload& payload, HostId from) {
        HostState& s = ctx.self;
        std::visit(
            [&](const auto& msg) {
                using T = std::decay_t<decltype(msg)>;
                if constexpr (std::is_same_v<T, Announce>) {
                    if (msg.summary.phase != s.prev_phase) phase_conflict = true;
                    s.cache[from] = CachedSummary{msg.summary, ctx.round};
                } else if constexpr (std::is_same_v<T, PifDown>) {
                    if (s.phase == Phase::Chord && msg.label.kind != WaveKind::Poll)
                        on_propagate(ctx, chord, msg);
                    else if (s.phase == Phase::Cbt && msg.label.kind == WaveKind::Poll)
                        on_propagate(ctx, poll, msg);
                } else if constexpr (std::is_same_v<T, PifUp>) {
                    if (s.phase == Phase::Chord && msg.label.kind != WaveKind::Poll) {
                        // Edge references riding the feedback are real edges
                        // being forwarded toward the root.
                        if (from != s.id) {
                            for (const std::optional<HostId>& ref :
                                 {msg.payload.ref_low, msg.payload.ref_high})
                                if (ref) hold_forwarded_edge(ctx, *ref, true);
                        }  // register-only: the sender made these edges
                        on_feedback(ctx, chord, msg);
                    } else if (s.phase == Phase::Cbt && msg.label.kind == WaveKind::Poll) {
                        on_feedback(ctx, poll, msg);
                    }
                } else if constexpr (std::is_same_v<T, CommitFlip>) {
                    bool fault = false;
                    if ((s.phase == Phase::Cbt && msg.target == Phase::Chord) ||
                        (s.phase == Phase::Chord && msg.target == Phase::Done))
                        handle_commit_flip(ctx, msg, fault);
                    if (fault) shatter(ctx);
                } else if constexpr (std::is_same_v<T, RecordFinger>) {
                    if (s.phase == Phase::Chord) {
                        bool fault = false;
                        apply_record_finger(ctx, msg, fault);
                        if (fault) shatter(ctx);
                    }
                } else if constexpr (std::is_same_v<T, MatchRequest>) {
                    if (s.phase == Phase::Cbt) handle_match_request(ctx, msg, from);
                } else if constexpr (std::is_same_v<T, MatchDecline>) {
                    if (s.phase != Phase::Cbt) return;
                    if (from == s.id && msg.follower_root != s.id) {
                        // Queued by decline_request: deliver it now.
                        if (ctx.adjacency.count(EdgeKey(s.id, msg.follower_root)))
                            ctx.send(msg.follower_root, msg);
                    } else {
                        handle_match_decline(ctx, msg);
                    }
                } else if constexpr (std::is_same_v<T, MergeStart>) {
                    if (s.phase == Phase::Cbt) handle_merge_start(ctx, msg, from);
                } else if constexpr (std::is_same_v<T, MergePair>) {
                    if (s.phase == Phase::Cbt) handle_merge_pair(ctx, msg, from);
                } else if constexpr (std::is_same_v<T, MergeDescend>) {
                    if (s.phase == Phase::Cbt) handle_merge_descend(ctx, msg, from);
                } else if constexpr (std::is_same_v<T, LinkUpdate>) {
                    if (s.phase == Phase::Cbt) handle_link_update(ctx, msg);
                }
            },
            payload);
    }
};

void handle_round(HostContext& ctx) {
    HostState& s = ctx.self;

    // Phases compare against same-era state: remember last round's phase
    // before a scheduled flip lands.
    s.prev_phase = s.phase;
    if (s.flip_round && *s.flip_round <= ctx.round) apply_phase_flip(s);

    // Sends that waited for an edge created last round. A late edge gets a
    // few more chances; a vanished edge takes the send with it.
    std::vector<DeferredSend> still_deferred;
    for (DeferredSend& d : s.deferred) {
        if (d.round > ctx.round) {
            still_deferred.push_back(std::move(d));
        } else if (ctx.adjacency.count(EdgeKey(s.id, d.dst))) {
            ctx.send(d.dst, std::move(d.payload));
        } else if (d.retries > 0) {
            d.round = ctx.round + 1;
            d.retries -= 1;
            still_deferred.push_back(std::move(d));
        }
    }
    s.deferred = std::move(still_deferred);

    // Forget peers we are no longer connected to.
    std::set<HostId> nbrs;
    for (HostId nb : ctx.neighbors()) nbrs.insert(nb);
    for (auto it = s.cache.begin(); it != s.cache.end();)
        it = nbrs.count(it->first) ? std::next(it) : s.cache.erase(it);

    // One batch: wire messages and intra-host events interleave by payload
    // class (announces and record writes before wave traffic).
    std::vector<std::pair<const Payload*, HostId>> batch;
    for (const Message& m : ctx.inbox) batch.emplace_back(&m.payload, m.src);
    for (const DueEvent& ev : ctx.due_now) batch.emplace_back(&ev.payload, s.id);
    std::stable_sort(batch.begin(), batch.end(), [](const auto& a, const auto& b) {
        return payload_order(*a.first) < payload_order(*b.first);
    });

    RoundDriver driver;
    for (const auto& [payload, from] : batch) driver.ingest(ctx, *payload, from);

    // Edges held for forwarding whose time is up. Runs after ingestion so a
    // grant arriving this round can still promote its edge out of the ledger.
    // Custody over an edge someone else already dropped is void, and the
    // entry stays until the edge is observed gone: a delete loses to a
    // same-round re-creation, in which case custody is usually re-taken.
    for (auto it = s.temp_edges.begin(); it != s.temp_edges.end();) {
        if (!ctx.adjacency.count(EdgeKey(s.id, it->first))) {
            it = s.temp_edges.erase(it);
        } else if (it->second <= ctx.round) {
            ctx.delete_edge(s.id, it->first);
            it->second = ctx.round + 1;  // retry unless re-held meanwhile
            ++it;
        } else {
            ++it;
        }
    }

    // Phase selection: a differing neighbour phase or an inconsistency that
    // the scaffolded predicate cannot explain sends this host back to
    // building the scaffold.
    if (driver.phase_conflict && s.phase != Phase::Cbt) {
        shatter(ctx);
    } else if (s.phase == Phase::Chord) {
        ChordCheckResult check = chord_checks(ctx);
        s.fault_flag = check.fault;
        if (driver.chord.fault_to_cbt || (check.fault && !check.all_scaffolded)) shatter(ctx);
    } else if (s.phase == Phase::Done) {
        s.fault_flag = done_fault(ctx);
        if (s.fault_flag) shatter(ctx);
    } else {
        s.fault_flag = detect_fault(ctx);
        if (s.fault_flag) shatter(ctx);
    }

    if (s.phase == Phase::Chord) {
        drive_chord_root(ctx, driver.chord);
        if (driver.chord.fault_to_cbt) shatter(ctx);
    } else if (s.phase == Phase::Cbt) {
        drive_cbt(ctx, driver.poll);
    }

    // State exchange: on change to everyone, otherwise only to neighbours we
    // know nothing about yet (a fresh edge). A silent legal network sends
    // nothing.
    std::vector<HostId> announce_to;
    if (s.dirty) {
        announce_to.assign(nbrs.begin(), nbrs.end());
    } else {
        for (HostId nb : nbrs)
            if (!s.cache.count(nb)) announce_to.push_back(nb);
    }
    if (!announce_to.empty()) {
        Announce ann{build_summary(s, ctx.n_guests)};
        for (HostId nb : announce_to) ctx.send(nb, ann);
    }
    s.dirty = false;
}

}  // namespace

HostHandler protocol_handler() {
    return [](HostContext& ctx) { handle_round(ctx); };
}

}  // namespace avatar
