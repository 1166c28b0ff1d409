#include "avatar/chord_builder.hpp"

#include <algorithm>

namespace avatar {

std::int32_t last_wave_index(std::int32_t n_guests, bool include_half_ring) {
    return chord_finger_count(n_guests, include_half_ring) - 1;
}

std::optional<GuestDigest> read_guest(const HostContext& ctx, GuestId g, HostId annotated_host) {
    if (annotated_host == ctx.self.id || annotated_host < 0) {
        auto it = ctx.self.guests.find(g);
        if (it == ctx.self.guests.end()) return std::nullopt;
        GuestDigest d;
        d.last_wave = it->second.last_wave;
        d.finger_count = static_cast<std::int32_t>(it->second.fingers.size());
        return d;
    }
    auto hit = ctx.self.cache.find(annotated_host);
    if (hit == ctx.self.cache.end()) return std::nullopt;
    auto git = hit->second.summary.guests.find(g);
    if (git == hit->second.summary.guests.end()) return std::nullopt;
    return git->second;
}

namespace {

GuestId mod_guest(std::int64_t v, std::int32_t n) {
    return static_cast<GuestId>(((v % n) + n) % n);
}

// A link annotation is acceptable when the endpoint is local, or the host
// edge exists (or lands this round) and, when cached, the peer actually
// hosts that guest.
bool link_annotation_ok(const HostContext& ctx, const GuestLink& link) {
    if (link.host == ctx.self.id) return ctx.self.guests.count(link.guest) > 0;
    if (!ctx.edge_usable(ctx.self.id, link.host)) return false;
    auto it = ctx.self.cache.find(link.host);
    if (it == ctx.self.cache.end()) return true;  // not yet exchanged
    return it->second.summary.guests.count(link.guest) > 0;
}

bool tree_links_match(const HostContext& ctx, const GuestState& guest) {
    static thread_local std::map<std::int32_t, CbtTree> trees;
    auto it = trees.find(ctx.n_guests);
    if (it == trees.end()) it = trees.emplace(ctx.n_guests, cbt_tree(ctx.n_guests)).first;
    const CbtNode& node = it->second.at(guest.id);

    auto match = [&](const std::optional<GuestLink>& link, const std::optional<GuestId>& want) {
        if (want.has_value() != link.has_value()) return false;
        if (!want) return true;
        return link->guest == *want && link_annotation_ok(ctx, *link);
    };
    return match(guest.parent, node.parent) && match(guest.left, node.left) &&
           match(guest.right, node.right);
}

bool fingers_match_formula(const HostContext& ctx, const GuestState& guest) {
    const std::int32_t n = ctx.n_guests;
    for (std::size_t k = 0; k < guest.fingers.size(); ++k) {
        const GuestLink& f = guest.fingers[k];
        if (f.guest != mod_guest(guest.id + (std::int64_t{1} << k), n)) return false;
        if (!link_annotation_ok(ctx, f)) return false;
    }
    for (std::size_t k = 0; k < guest.reverse_fingers.size(); ++k) {
        const GuestLink& f = guest.reverse_fingers[k];
        if (f.guest != mod_guest(guest.id - (std::int64_t{1} << k), n)) return false;
        if (!link_annotation_ok(ctx, f)) return false;
    }
    return true;
}

}  // namespace

ScaffoldCheck scaffolded(const HostContext& ctx, const GuestState& guest) {
    ScaffoldCheck check;
    const std::int32_t k_last = last_wave_index(ctx.n_guests, ctx.include_half_ring);
    const std::int32_t lw = guest.last_wave;
    const std::int32_t fc = static_cast<std::int32_t>(guest.fingers.size());

    check.cbt_links_ok = tree_links_match(ctx, guest);

    check.last_wave_in_range = lw >= -1 && lw <= k_last && (fc == lw || fc == lw + 1) &&
                               fingers_match_formula(ctx, guest) &&
                               static_cast<std::int32_t>(guest.reverse_fingers.size()) <= fc + 1;

    auto fingers_near = [&](const GuestLink& link) {
        std::optional<GuestDigest> d = read_guest(ctx, link.guest, link.host);
        if (!d) return true;  // no information yet; not a violation
        return std::abs(d->finger_count - fc) <= 1 && std::abs(d->last_wave - lw) <= 1;
    };
    for (const GuestLink& nb : guest.neighbors())
        if (!fingers_near(nb)) check.neighbor_fingers_ok = false;

    if (guest.parent) {
        std::optional<GuestDigest> p = read_guest(ctx, guest.parent->guest, guest.parent->host);
        if (p) {
            // Propagate descends: the parent is at the same wave or one ahead;
            // feedback ascends: the parent's fingers trail by at most one.
            bool lw_ok = p->last_wave == lw || p->last_wave == lw + 1 || p->last_wave == lw - 1;
            bool fc_ok = p->finger_count == fc || p->finger_count == fc - 1 ||
                         p->finger_count == fc + 1;
            check.parent_ok = lw_ok && fc_ok;
        }
    }
    return check;
}

ChordCheckResult chord_checks(const HostContext& ctx) {
    ChordCheckResult result;
    const HostState& s = ctx.self;
    const ResponsibleRange range = s.claimed_range(ctx.n_guests);

    // Hosting must agree with the claimed range exactly.
    bool hosting_ok = static_cast<std::int32_t>(s.guests.size()) == range.size();
    if (hosting_ok)
        for (const auto& [g, gs] : s.guests)
            if (!range.contains(g)) hosting_ok = false;
    if (!hosting_ok || range.lo >= range.hi || (!s.claims_smallest && !range.contains(s.id))) {
        result.fault = true;
        result.all_scaffolded = false;
    }

    // The successor edge must be realized.
    if (s.succ && !ctx.adjacency.count(EdgeKey(s.id, *s.succ))) {
        result.fault = true;
        result.all_scaffolded = false;
    }

    // Ranges of neighbouring hosts may not overlap ours.
    for (const auto& [peer, cached] : s.cache) {
        const HostSummary& sum = cached.summary;
        if (sum.range_lo < range.hi && range.lo < sum.range_hi) {
            result.fault = true;
            result.all_scaffolded = false;
        }
    }

    for (const auto& [g, gs] : s.guests) {
        ScaffoldCheck check = scaffolded(ctx, gs);
        if (!check.verdict()) {
            result.fault = true;
            if (result.all_scaffolded) result.worst = check;
            result.all_scaffolded = false;
        }
    }
    return result;
}

bool done_fault(const HostContext& ctx) {
    const HostState& s = ctx.self;
    const std::int32_t k_last = last_wave_index(ctx.n_guests, ctx.include_half_ring);
    const ResponsibleRange range = s.claimed_range(ctx.n_guests);

    if (!s.temp_edges.empty()) return true;
    if (static_cast<std::int32_t>(s.guests.size()) != range.size()) return true;
    for (const auto& [g, gs] : s.guests) {
        if (!range.contains(g)) return true;
        if (gs.last_wave != k_last) return true;
        if (static_cast<std::int32_t>(gs.fingers.size()) != k_last + 1) return true;
        if (static_cast<std::int32_t>(gs.reverse_fingers.size()) != k_last + 1) return true;
        if (!tree_links_match(ctx, gs) || !fingers_match_formula(ctx, gs)) return true;
    }
    if (s.succ && !ctx.adjacency.count(EdgeKey(s.id, *s.succ))) return true;

    for (const auto& [peer, cached] : s.cache) {
        const HostSummary& sum = cached.summary;
        if (sum.range_lo < range.hi && range.lo < sum.range_hi) return true;
    }
    return !host_edges_justified(ctx);
}

bool host_edges_justified(const HostContext& ctx) {
    // Every incident host edge must realize some guest link, the successor
    // pointer, or an edge held for forwarding; a silent legal network has
    // nothing else.
    const HostState& s = ctx.self;
    std::set<HostId> justified;
    if (s.succ) justified.insert(*s.succ);
    for (const auto& [h, when] : s.temp_edges) justified.insert(h);
    for (const auto& [g, gs] : s.guests)
        for (const GuestLink& nb : gs.neighbors())
            if (nb.host != s.id) justified.insert(nb.host);
    for (const EdgeKey& e : ctx.adjacency) {
        HostId other = (e.a == s.id) ? e.b : (e.b == s.id ? e.a : -1);
        if (other < 0) continue;
        if (!justified.count(other)) return false;
    }
    return true;
}

namespace {

// Fig-1 guard: the partner's LastWave must be at the current wave, or one
// behind when the propagate simply has not reached it yet. Anything else is
// an inconsistency and sends the host back to building the scaffold.
bool wave_mark_consistent(const std::optional<GuestDigest>& d, std::int32_t k) {
    if (!d) return false;
    return d->last_wave == k || d->last_wave == k - 1;
}

void record_local_finger(HostContext& ctx, GuestState& guest, std::int32_t k, GuestId other,
                         HostId other_host, bool reverse, bool& fault) {
    auto& list = reverse ? guest.reverse_fingers : guest.fingers;
    if (static_cast<std::int32_t>(list.size()) == k + 1 && list[k].guest == other) {
        list[k].host = other_host;
        return;
    }
    if (static_cast<std::int32_t>(list.size()) != k) {
        fault = true;
        return;
    }
    list.push_back(GuestLink{other, other_host});
    ctx.self.dirty = true;
}

// Records take one round to land whether or not they cross hosts, so wave
// arithmetic is identical for every host layout.
void send_or_apply_record(HostContext& ctx, HostId to, const RecordFinger& rec, bool& fault) {
    (void)fault;
    if (to == ctx.self.id) {
        ctx.self.due.push_back(DueEvent{ctx.round + 1, rec});
    } else {
        ctx.send(to, rec);
    }
}

void host_flip_now(HostContext& ctx, Phase target);

}  // namespace

void apply_record_finger(HostContext& ctx, const RecordFinger& msg, bool& fault_to_cbt) {
    auto it = ctx.self.guests.find(msg.for_guest);
    if (it == ctx.self.guests.end()) return;  // stale, guest moved with a shatter
    GuestState& guest = it->second;

    // The introducing host created the realizing edge before sending us the
    // record; a missing edge means the configuration is inconsistent.
    if (msg.other_host != ctx.self.id && !ctx.edge_usable(ctx.self.id, msg.other_host)) {
        fault_to_cbt = true;
        return;
    }
    // An edge being held only for forwarding is now justified by a link.
    ctx.self.temp_edges.erase(msg.other_host);
    record_local_finger(ctx, guest, msg.k, msg.other, msg.other_host, msg.reverse, fault_to_cbt);
}

void ChordWaves::propagate(HostContext& ctx, GuestState& guest, const PifDown& msg) {
    if (msg.label.kind == WaveKind::MakeFinger) {
        guest.last_wave = msg.label.index;
        ctx.self.dirty = true;
    }
}

FeedbackPayload ChordWaves::feedback(HostContext& ctx, GuestState& guest, const WaveLabel& label,
                                     const FeedbackPayload& gathered) {
    FeedbackPayload payload = gathered;
    const std::int32_t n = ctx.n_guests;

    if (label.kind == WaveKind::DonePrepare) {
        const std::int32_t k_last = last_wave_index(n, ctx.include_half_ring);
        const ResponsibleRange range = ctx.self.claimed_range(n);
        bool complete = guest.last_wave == k_last &&
                        static_cast<std::int32_t>(guest.fingers.size()) == k_last + 1 &&
                        static_cast<std::int32_t>(guest.reverse_fingers.size()) == k_last + 1 &&
                        scaffolded(ctx, guest).verdict();
        bool host_ok = ctx.self.temp_edges.empty() && host_edges_justified(ctx) &&
                       static_cast<std::int32_t>(ctx.self.guests.size()) == range.size();
        payload.all_ok = payload.all_ok && complete && host_ok;
        return payload;
    }

    const std::int32_t k = label.index;
    if (k == 0) {
        // Wave 0: link each guest to its successor on the ring; edges to
        // guests 0 and N-1 ride the feedback so the root can close the ring.
        if (guest.id == 0) payload.ref_low = ctx.self.id;
        if (guest.id == n - 1) payload.ref_high = ctx.self.id;
        if (guest.id == n - 1) return payload;  // ring closed by the root

        GuestId b = guest.id + 1;
        HostId host_b = ctx.self.claimed_range(n).contains(b)
                            ? ctx.self.id
                            : (ctx.self.succ ? *ctx.self.succ : HostId{-1});
        if (host_b < 0 || !wave_mark_consistent(read_guest(ctx, b, host_b), 0)) {
            fault_to_cbt = true;
            return payload;
        }
        bool fault = false;
        record_local_finger(ctx, guest, 0, b, host_b, false, fault);
        send_or_apply_record(ctx, host_b,
                             RecordFinger{b, 0, guest.id, ctx.self.id, true, std::nullopt}, fault);
        if (fault) fault_to_cbt = true;
        return payload;
    }

    // Wave k >= 1: this guest introduces its two (k-1)-finger neighbours to
    // one another, creating finger k of the lower one.
    if (static_cast<std::int32_t>(guest.fingers.size()) < k ||
        static_cast<std::int32_t>(guest.reverse_fingers.size()) < k) {
        fault_to_cbt = true;
        return payload;
    }
    const GuestLink b1 = guest.fingers[k - 1];
    const GuestLink b0 = guest.reverse_fingers[k - 1];
    if (!wave_mark_consistent(read_guest(ctx, b0.guest, b0.host), k) ||
        !wave_mark_consistent(read_guest(ctx, b1.guest, b1.host), k)) {
        fault_to_cbt = true;
        return payload;
    }
    if (b0.host != b1.host && ctx.edge_usable(ctx.self.id, b0.host) &&
        ctx.edge_usable(ctx.self.id, b1.host))
        ctx.create_edge(b0.host, b1.host, ctx.self.id, "finger");
    bool fault = false;
    send_or_apply_record(ctx, b0.host,
                         RecordFinger{b0.guest, k, b1.guest, b1.host, false, ctx.self.id}, fault);
    send_or_apply_record(ctx, b1.host,
                         RecordFinger{b1.guest, k, b0.guest, b0.host, true, std::nullopt}, fault);
    if (fault) fault_to_cbt = true;
    return payload;
}

void ChordWaves::complete(HostContext& ctx, GuestState& root, const WaveLabel& label,
                          const FeedbackPayload& payload) {
    const std::int32_t n = ctx.n_guests;
    const std::int32_t k_last = last_wave_index(n, ctx.include_half_ring);

    if (label.kind == WaveKind::DonePrepare) {
        ctx.self.done_prepared = true;
        if (!payload.all_ok) {
            fault_to_cbt = true;
            return;
        }
        CommitFlip commit{Phase::Done, cbt_height(n), -1, root.id};
        handle_commit_flip(ctx, commit, fault_to_cbt);
        return;
    }

    if (label.index == 0) {
        // Close the ring: guest N-1's finger 0 is guest 0. The edges to both
        // hosts landed this round, so the records go out next round and our
        // forwarded copies survive until the witnessed create validated.
        if (!payload.ref_low || !payload.ref_high) {
            fault_to_cbt = true;
            return;
        }
        bool fault = false;
        if (*payload.ref_low != *payload.ref_high &&
            ctx.edge_usable(ctx.self.id, *payload.ref_low) &&
            ctx.edge_usable(ctx.self.id, *payload.ref_high))
            ctx.create_edge(*payload.ref_high, *payload.ref_low, ctx.self.id, "ring");
        RecordFinger high{static_cast<GuestId>(n - 1), 0, 0, *payload.ref_low, false,
                          ctx.self.id};
        RecordFinger low{0, 0, static_cast<GuestId>(n - 1), *payload.ref_high, true,
                         std::nullopt};
        if (*payload.ref_high == ctx.self.id)
            apply_record_finger(ctx, high, fault);
        else
            ctx.self.deferred.push_back(DeferredSend{ctx.round + 1, *payload.ref_high, high});
        if (*payload.ref_low == ctx.self.id)
            apply_record_finger(ctx, low, fault);
        else
            ctx.self.deferred.push_back(DeferredSend{ctx.round + 1, *payload.ref_low, low});
        if (fault) fault_to_cbt = true;
        for (HostId ref : {*payload.ref_low, *payload.ref_high})
            if (ref != ctx.self.id && ctx.self.temp_edges.count(ref))
                ctx.self.temp_edges[ref] = ctx.round + 2;
        // The next wave waits for the ring records to land everywhere.
        ctx.self.wave_hold_until = ctx.round + 2;
    }
    (void)k_last;
}

void apply_phase_flip(HostState& state) {
    if (state.flip_target == Phase::Chord) {
        enter_chord_phase(state);
    } else {
        state.phase = state.flip_target;
        state.dirty = true;
    }
    state.flip_round.reset();
}

namespace {

void host_flip_now(HostContext& ctx, Phase target) {
    ctx.self.flip_target = target;
    apply_phase_flip(ctx.self);
}

}  // namespace

void handle_commit_flip(HostContext& ctx, const CommitFlip& msg, bool& fault_to_cbt) {
    auto it = ctx.self.guests.find(msg.child_guest);
    if (it == ctx.self.guests.end()) return;
    GuestState& guest = it->second;

    const std::int64_t flip_at = ctx.round + msg.flip_in;
    if (ctx.self.flip_round && (*ctx.self.flip_round != flip_at || ctx.self.flip_target != msg.target)) {
        fault_to_cbt = true;
        return;
    }
    ctx.self.flip_target = msg.target;
    if (msg.flip_in == 0) {
        if (!ctx.self.flip_round && ctx.self.phase != msg.target) host_flip_now(ctx, msg.target);
    } else {
        ctx.self.flip_round = flip_at;
    }

    for (const std::optional<GuestLink>& child : {guest.left, guest.right}) {
        if (!child) continue;
        CommitFlip fwd{msg.target, msg.flip_in - 1, guest.id, child->guest};
        if (fwd.flip_in < 0) {
            fault_to_cbt = true;
            return;
        }
        if (child->host == ctx.self.id)
            ctx.self.due.push_back(DueEvent{ctx.round + 1, fwd});
        else
            ctx.send(child->host, fwd);
    }
}

void drive_chord_root(HostContext& ctx, ChordWaves& waves) {
    auto it = ctx.self.guests.find(tree_root_guest(ctx.n_guests));
    if (it == ctx.self.guests.end()) return;
    if (ctx.self.root_wave || it->second.active_wave) return;
    if (ctx.self.flip_round || ctx.self.done_prepared) return;
    if (ctx.round < ctx.self.wave_hold_until) return;

    const GuestState& root = it->second;
    const std::int32_t k_last = last_wave_index(ctx.n_guests, ctx.include_half_ring);
    const std::int32_t fc = static_cast<std::int32_t>(root.fingers.size());
    if (root.last_wave == -1)
        start_wave(ctx, waves, WaveLabel{WaveKind::MakeFinger, 0});
    else if (fc == root.last_wave + 1 && root.last_wave < k_last)
        start_wave(ctx, waves, WaveLabel{WaveKind::MakeFinger, root.last_wave + 1});
    else if (fc == root.last_wave + 1 && root.last_wave == k_last)
        start_wave(ctx, waves, WaveLabel{WaveKind::DonePrepare, 0});
}

void enter_chord_phase(HostState& state) {
    state.phase = Phase::Chord;
    state.root_wave.reset();
    state.done_prepared = false;
    state.wave_hold_until = 0;
    state.flip_round.reset();
    state.role = ClusterRole::Idle;
    state.match_phase = MatchPhase::Idle;
    state.pending_requests.clear();
    state.poll_route.clear();
    state.merge = MergeState{};
    for (auto& [g, gs] : state.guests) {
        gs.last_wave = -1;
        gs.fingers.clear();
        gs.reverse_fingers.clear();
        gs.active_wave.reset();
        gs.left_acked = gs.right_acked = false;
        gs.gathered = FeedbackPayload{};
    }
    state.dirty = true;
}

}  // namespace avatar
