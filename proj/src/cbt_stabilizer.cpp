#include "avatar/cbt_stabilizer.hpp"

#include <algorithm>

#include "avatar/chord_builder.hpp"
#include "avatar/rng.hpp"

namespace avatar {

std::int64_t poll_epoch_length(std::int32_t n_guests) { return 2 * (cbt_height(n_guests) + 1); }

std::int64_t merge_duration(std::int32_t n_guests) {
    return 2 * (cbt_height(n_guests) + 1) + 4;
}

HostId merge_owner(GuestId guest, HostId a, HostId b) {
    const bool a_le = a <= guest;
    const bool b_le = b <= guest;
    if (a_le && b_le) return std::max(a, b);
    if (a_le) return a;
    if (b_le) return b;
    return std::min(a, b);  // guest below both ids: smallest host covers it
}

std::vector<std::pair<PendingRequest, PendingRequest>> pair_followers(
    std::vector<PendingRequest> requests, std::int32_t own_cluster, HostId own_root) {
    std::sort(requests.begin(), requests.end());
    requests.erase(std::unique(requests.begin(), requests.end()), requests.end());
    std::vector<std::pair<PendingRequest, PendingRequest>> pairs;
    std::size_t i = 0;
    for (; i + 1 < requests.size(); i += 2) pairs.emplace_back(requests[i], requests[i + 1]);
    if (i < requests.size())
        pairs.emplace_back(requests[i], PendingRequest{own_cluster, own_root});
    return pairs;
}

bool edge_stands_alone(const HostState& s, HostId target) {
    if (s.succ && *s.succ == target) return true;
    for (const auto& [g, gs] : s.guests)
        for (const GuestLink& nb : gs.neighbors())
            if (nb.host == target) return true;
    return false;
}

bool hold_forwarded_edge(HostContext& ctx, HostId target, bool minted) {
    if (target == ctx.self.id) return true;
    // The previous holder created this edge before referring to it; if it is
    // not here the chain broke and the flow times out.
    if (!ctx.adjacency.count(EdgeKey(ctx.self.id, target))) return false;
    // Custody only over edges freshly minted for this flow (or already in
    // the ledger). A cached summary from the target means the edge predates
    // this flow, possibly load-bearing adjacency, so it stays untouched:
    // the mint was a no-op on an existing edge.
    bool fresh = minted && !ctx.self.cache.count(target);
    if ((fresh || ctx.self.temp_edges.count(target)) && !edge_stands_alone(ctx.self, target))
        ctx.self.temp_edges[target] = ctx.round + 1000000;
    return true;
}

void release_forwarded_edge(HostContext& ctx, HostId target, std::int64_t at_round) {
    if (target == ctx.self.id) return;
    auto it = ctx.self.temp_edges.find(target);
    if (it != ctx.self.temp_edges.end()) it->second = at_round;
}

namespace {

const CbtTree& tree_of(std::int32_t n_guests) {
    static thread_local std::map<std::int32_t, CbtTree> trees;
    auto it = trees.find(n_guests);
    if (it == trees.end()) it = trees.emplace(n_guests, cbt_tree(n_guests)).first;
    return it->second;
}

bool is_cluster_root(const HostContext& ctx) {
    return ctx.self.cluster_id == ctx.self.id &&
           ctx.self.guests.count(tree_root_guest(ctx.n_guests)) > 0;
}

// Shallowest hosted guest: the local top of this host's tree slice, whose
// parent points toward the cluster root.
const GuestState* shallowest_guest(const HostContext& ctx) {
    const GuestState* best = nullptr;
    int best_depth = 1 << 30;
    for (const auto& [g, gs] : ctx.self.guests) {
        int d = cbt_depth(g, ctx.n_guests);
        if (d < best_depth) {
            best_depth = d;
            best = &gs;
        }
    }
    return best;
}

// Forward the request, introducing the next hop to the follower root first.
// Only edges we can see both halves of are used, so the introduction rule
// can never trip. Returns false when the local chain is gone.
bool send_match_onward(HostContext& ctx, HostId to, MatchRequest msg) {
    HostId froot = msg.follower_root;
    if (!ctx.adjacency.count(EdgeKey(ctx.self.id, to))) return false;
    msg.edge_minted = false;
    if (froot != ctx.self.id && froot != to) {
        if (!ctx.adjacency.count(EdgeKey(ctx.self.id, froot))) return false;
        ctx.create_edge(to, froot, ctx.self.id, "match-forward");
        msg.edge_minted = true;
    }
    ctx.send(to, msg);
    release_forwarded_edge(ctx, froot, ctx.round + 1);
    return true;
}

void decline_request(HostContext& ctx, HostId follower_root, std::int32_t follower_cluster) {
    if (follower_root == ctx.self.id) return;
    // Answer over the forwarded edge next round; if we created that edge for
    // this request, let it go afterwards.
    ctx.self.due.push_back(DueEvent{ctx.round + 1, MatchDecline{follower_cluster, follower_root}});
    auto it = ctx.self.temp_edges.find(follower_root);
    if (it != ctx.self.temp_edges.end()) it->second = ctx.round + 2;
}

void start_merge_with(HostContext& ctx, HostId partner_root, std::int32_t partner_cluster);

}  // namespace

bool detect_fault(const HostContext& ctx) {
    const HostState& s = ctx.self;
    if (s.merge.active) return false;  // staging; checked at merge completion
    const ResponsibleRange range = s.claimed_range(ctx.n_guests);
    if (range.lo >= range.hi) return true;
    if (s.cluster_id < 0) return true;

    if (static_cast<std::int32_t>(s.guests.size()) != range.size()) return true;
    const CbtTree& tree = tree_of(ctx.n_guests);
    for (const auto& [g, gs] : s.guests) {
        if (!range.contains(g)) return true;
        if (gs.last_wave != -1 || !gs.fingers.empty() || !gs.reverse_fingers.empty()) return true;

        const CbtNode& node = tree.at(g);
        auto link_ok = [&](const std::optional<GuestLink>& link, const std::optional<GuestId>& want) {
            if (want.has_value() != link.has_value()) return false;
            if (!want) return true;
            if (link->guest != *want) return false;
            if (link->host == s.id) return s.guests.count(link->guest) > 0;
            if (!ctx.adjacency.count(EdgeKey(s.id, link->host))) return false;
            auto cit = s.cache.find(link->host);
            if (cit == s.cache.end()) return true;  // nothing known yet
            const HostSummary& sum = cit->second.summary;
            if (sum.merging) return true;  // neighbour mid-merge: suspend strictness
            if (sum.phase != Phase::Cbt) return false;
            if (sum.cluster_id != s.cluster_id) return false;
            return sum.guests.count(link->guest) > 0;
        };
        if (!link_ok(gs.parent, node.parent) || !link_ok(gs.left, node.left) ||
            !link_ok(gs.right, node.right))
            return true;
    }

    if (s.succ && !ctx.adjacency.count(EdgeKey(s.id, *s.succ))) return true;

    // Same-cluster neighbours must not overlap our range.
    for (const auto& [peer, cached] : s.cache) {
        const HostSummary& sum = cached.summary;
        if (sum.phase != Phase::Cbt || sum.cluster_id != s.cluster_id || sum.merging) continue;
        if (sum.range_lo < range.hi && range.lo < sum.range_hi) return true;
    }
    return false;
}

void form_cluster(HostState& s, std::int32_t n_guests, std::int64_t round) {
    s.phase = Phase::Cbt;
    s.succ.reset();
    s.claims_smallest = true;
    s.cluster_id = s.id;

    s.guests.clear();
    const std::map<HostId, ResponsibleRange> own{{s.id, ResponsibleRange{0, n_guests}}};
    for (GuestId g = 0; g < n_guests; ++g) s.guests[g] = make_cbt_guest(g, n_guests, own);

    s.root_wave.reset();
    s.done_prepared = false;
    s.wave_hold_until = 0;
    s.flip_round.reset();
    s.due.clear();
    s.deferred.clear();
    s.role = ClusterRole::Idle;
    s.poll_route.clear();
    s.poll_min_foreign.reset();
    s.poll_via.reset();
    s.pending_requests.clear();
    s.match_phase = MatchPhase::Idle;
    s.match_deadline = -1;
    s.merge = MergeState{};
    s.temp_edges.clear();
    s.sweep_since.clear();
    // Stagger poll boundaries across hosts so matching partners are not all
    // in lockstep.
    s.next_poll_round = round + 1 + (s.id % poll_epoch_length(n_guests));
    s.dirty = true;
}

void PollWave::propagate(HostContext& ctx, GuestState& guest, const PifDown& msg) {
    (void)msg;
    ctx.self.poll_route[guest.id] = -1;  // best candidate so far: this host
}

void PollWave::child_ack(HostContext& ctx, GuestState& guest, const PifUp& msg) {
    if (!msg.payload.min_foreign) return;
    const std::optional<std::int32_t>& best = guest.gathered.min_foreign;
    if (!best || *msg.payload.min_foreign < *best) {
        bool via_left = guest.left && guest.left->guest == msg.child_guest;
        ctx.self.poll_route[guest.id] = via_left ? 0 : 1;
    }
}

FeedbackPayload PollWave::feedback(HostContext& ctx, GuestState& guest, const WaveLabel& label,
                                   const FeedbackPayload& gathered) {
    (void)label;
    FeedbackPayload payload = gathered;

    // This host's own adjacency observation: foreign Cbt clusters reachable
    // over one edge, and edges we know nothing about yet.
    std::optional<std::int32_t> own_min;
    bool own_any = false;
    for (HostId nb : ctx.neighbors()) {
        auto it = ctx.self.cache.find(nb);
        if (it == ctx.self.cache.end()) {
            own_any = true;  // unidentified neighbour: cluster cannot be alone
            continue;
        }
        const HostSummary& sum = it->second.summary;
        if (sum.phase != Phase::Cbt) {
            own_any = true;  // phase conflict in progress; not a match target
            continue;
        }
        if (sum.cluster_id == ctx.self.cluster_id) continue;
        own_any = true;
        if (sum.merging) continue;  // busy clusters decline; do not target them
        if (ctx.self.temp_edges.count(nb)) continue;  // forward-held edge, not a route
        if (!own_min || sum.cluster_id < *own_min) own_min = sum.cluster_id;
    }
    if (own_min && (!payload.min_foreign || *own_min < *payload.min_foreign)) {
        payload.min_foreign = own_min;
        // children already recorded their crumbs via child_ack; ours wins
        ctx.self.poll_route[guest.id] = -1;
    }
    payload.any_foreign = payload.any_foreign || own_any || payload.min_foreign.has_value();
    return payload;
}

void PollWave::complete(HostContext& ctx, GuestState& root, const WaveLabel& label,
                        const FeedbackPayload& payload) {
    (void)label;
    HostState& s = ctx.self;
    if (s.phase != Phase::Cbt || s.merge.active) return;

    // Leaders consume the requests queued over the last epoch. A request
    // whose forwarded edge is still landing waits for the next boundary.
    if (s.role == ClusterRole::Leader && !s.pending_requests.empty()) {
        std::vector<PendingRequest> ready;
        std::vector<PendingRequest> waiting;
        for (const PendingRequest& req : s.pending_requests) {
            if (ctx.adjacency.count(EdgeKey(s.id, req.follower_root)))
                ready.push_back(req);
            else if (s.temp_edges.count(req.follower_root))
                waiting.push_back(req);
            // otherwise the edge is gone: the follower will time out
        }
        if (ready.empty()) {
            s.pending_requests = waiting;
            return;
        }
        auto pairs = pair_followers(ready, s.cluster_id, s.id);
        s.pending_requests = waiting;
        for (const auto& [a, b] : pairs) {
            if (b.follower_root == s.id) {
                // Odd follower count: our own cluster takes the last one.
                release_forwarded_edge(ctx, a.follower_root, ctx.round + 1000000);
                ctx.send(a.follower_root, MergeStart{s.id, s.cluster_id});
                s.due.push_back(
                    DueEvent{ctx.round + 1, MergeStart{a.follower_root, a.follower_cluster}});
            } else {
                ctx.create_edge(a.follower_root, b.follower_root, s.id, "match-pair");
                ctx.send(a.follower_root, MergeStart{b.follower_root, b.follower_cluster});
                ctx.send(b.follower_root, MergeStart{a.follower_root, a.follower_cluster});
                release_forwarded_edge(ctx, a.follower_root, ctx.round + 1);
                release_forwarded_edge(ctx, b.follower_root, ctx.round + 1);
            }
        }
        return;  // merge (if any) starts next round; next poll after it
    }

    // Requests that reached a non-leader root bounce so their senders retry.
    if (s.role != ClusterRole::Leader && !s.pending_requests.empty()) {
        for (const PendingRequest& req : s.pending_requests)
            decline_request(ctx, req.follower_root, req.follower_cluster);
        s.pending_requests.clear();
    }

    if (!payload.any_foreign) {
        // No foreign adjacency anywhere: the cluster spans the component.
        // Flip everyone to CHORD in the same round.
        bool fault = false;
        CommitFlip commit{Phase::Chord, cbt_height(ctx.n_guests), -1, root.id};
        handle_commit_flip(ctx, commit, fault);
        if (fault) form_cluster(s, ctx.n_guests, ctx.round);
        return;
    }

    if (s.role == ClusterRole::Follower && payload.min_foreign) {
        MatchRequest req{MatchStage::DescendOwn, root.id, *payload.min_foreign, s.cluster_id,
                         s.id};
        s.match_phase = MatchPhase::AwaitingGrant;
        s.match_deadline = ctx.round + 3 * poll_epoch_length(ctx.n_guests);
        handle_match_request(ctx, req, s.id);
    }
}

void handle_match_request(HostContext& ctx, const MatchRequest& msg, HostId from) {
    HostState& s = ctx.self;
    if (s.phase != Phase::Cbt) return;  // sender will time out

    if (msg.follower_root != s.id && from != s.id &&
        !hold_forwarded_edge(ctx, msg.follower_root, msg.edge_minted))
        return;  // introduction chain broke; the follower times out

    switch (msg.stage) {
        case MatchStage::DescendOwn: {
            if (msg.follower_cluster != s.cluster_id) return;  // stale routing
            auto rit = s.poll_route.find(msg.at_guest);
            auto git = s.guests.find(msg.at_guest);
            if (rit == s.poll_route.end() || git == s.guests.end()) return;
            if (rit->second == -1) {
                // This host saw the target cluster: hand the request across.
                // Edges held only as forwards are not stable routes.
                for (const auto& [nb, cached] : s.cache) {
                    if (cached.summary.phase == Phase::Cbt &&
                        cached.summary.cluster_id == msg.target_cluster &&
                        ctx.adjacency.count(EdgeKey(s.id, nb)) && !s.temp_edges.count(nb)) {
                        MatchRequest cross = msg;
                        cross.stage = MatchStage::ClimbForeign;
                        cross.at_guest = -1;
                        send_match_onward(ctx, nb, cross);
                        return;
                    }
                }
                release_forwarded_edge(ctx, msg.follower_root, ctx.round + 1);
                return;  // adjacency went away; follower times out
            }
            const GuestState& g = git->second;
            const std::optional<GuestLink>& next = (rit->second == 0) ? g.left : g.right;
            if (!next) return;
            MatchRequest down = msg;
            down.at_guest = next->guest;
            if (next->host == s.id)
                s.due.push_back(DueEvent{ctx.round + 1, down});
            else
                send_match_onward(ctx, next->host, down);
            return;
        }
        case MatchStage::CrossEdge:
        case MatchStage::ClimbForeign: {
            if (s.cluster_id != msg.target_cluster || s.merge.active) {
                decline_request(ctx, msg.follower_root, msg.follower_cluster);
                return;
            }
            if (is_cluster_root(ctx)) {
                // Only a leader can assign partners; anyone else bounces the
                // request so the follower retries with a fresh coin instead
                // of waiting out its deadline.
                if (s.match_phase != MatchPhase::Idle || s.role != ClusterRole::Leader) {
                    decline_request(ctx, msg.follower_root, msg.follower_cluster);
                    return;
                }
                s.pending_requests.push_back(
                    PendingRequest{msg.follower_cluster, msg.follower_root});
                s.dirty = true;
                return;  // edge stays held until the next poll boundary
            }
            const GuestState* top = shallowest_guest(ctx);
            if (!top || !top->parent) {
                decline_request(ctx, msg.follower_root, msg.follower_cluster);
                return;
            }
            MatchRequest up = msg;
            up.stage = MatchStage::ClimbForeign;
            send_match_onward(ctx, top->parent->host, up);
            return;
        }
    }
}

void handle_match_decline(HostContext& ctx, const MatchDecline& msg) {
    HostState& s = ctx.self;
    if (s.match_phase == MatchPhase::AwaitingGrant && msg.follower_cluster == s.cluster_id) {
        s.match_phase = MatchPhase::Idle;
        s.match_deadline = -1;
        s.next_poll_round = ctx.round + 1;
    }
}

namespace {

void start_merge_with(HostContext& ctx, HostId partner_root, std::int32_t partner_cluster) {
    HostState& s = ctx.self;
    s.match_phase = MatchPhase::Merging;
    s.match_deadline = -1;
    s.merge.active = true;
    s.merge.other_cluster = partner_cluster;
    s.merge.new_cluster_id = -1;
    s.merge.end_round = ctx.round + merge_duration(ctx.n_guests);
    s.next_poll_round = s.merge.end_round + 1;
    GuestId root = tree_root_guest(ctx.n_guests);
    MergeTask task{root, 0, partner_root, false};
    s.merge.tasks[root] = task;
    s.dirty = true;
}

// Send our side of the pair exchange for one task, first introducing the
// partner to our children's hosts (we are adjacent to both, so the
// introduction rule holds by construction).
void send_merge_pair(HostContext& ctx, MergeTask& task) {
    HostState& s = ctx.self;
    auto git = s.guests.find(task.guest);
    if (git == s.guests.end()) return;
    const GuestState& g = git->second;
    MergePair pair;
    pair.guest = task.guest;
    pair.level = task.level;
    if (g.left) pair.left_child_host = g.left->host;
    if (g.right) pair.right_child_host = g.right->host;
    pair.new_cluster_id = s.merge.new_cluster_id;
    for (const std::optional<GuestLink>& child : {g.left, g.right}) {
        if (!child || child->host == s.id || child->host == task.partner_host) continue;
        if (!ctx.adjacency.count(EdgeKey(s.id, child->host))) continue;  // broken link; checks react
        ctx.create_edge(task.partner_host, child->host, s.id, "merge-child-intro");
    }
    task.pair_sent = true;
    ctx.send(task.partner_host, pair);
}

}  // namespace

void handle_merge_start(HostContext& ctx, const MergeStart& msg, HostId from) {
    (void)from;
    HostState& s = ctx.self;
    if (s.phase != Phase::Cbt || !is_cluster_root(ctx) || s.merge.active) return;
    if (!ctx.adjacency.count(EdgeKey(s.id, msg.partner_root))) return;  // grant went stale
    s.temp_edges.erase(msg.partner_root);  // promoted: now a merge partner edge
    start_merge_with(ctx, msg.partner_root, msg.partner_cluster);
    send_merge_pair(ctx, s.merge.tasks[tree_root_guest(ctx.n_guests)]);
}

void handle_merge_pair(HostContext& ctx, const MergePair& msg, HostId from) {
    HostState& s = ctx.self;
    if (s.phase != Phase::Cbt || !s.merge.active) return;
    auto tit = s.merge.tasks.find(msg.guest);
    if (tit == s.merge.tasks.end() || tit->second.partner_host != from) return;
    if (!tit->second.pair_sent) send_merge_pair(ctx, tit->second);  // theirs came first
    MergeTask task = tit->second;
    s.merge.tasks.erase(tit);
    s.temp_edges.erase(from);  // the pair edge belongs to the merge now

    auto git = s.guests.find(msg.guest);
    if (git == s.guests.end()) return;
    GuestState guest = git->second;  // copy: we may erase below

    const HostId owner = merge_owner(msg.guest, s.id, from);
    std::int32_t new_cluster = s.merge.new_cluster_id;
    if (task.level == 0) {
        new_cluster = owner;
        s.merge.new_cluster_id = owner;
    }
    s.cluster_id = new_cluster;

    // Pairwise successor refinement: any partner with a smaller id disproves
    // a smallest-host claim; a partner between us and our successor becomes
    // the successor.
    if (from < s.id) s.claims_smallest = false;
    if (from > s.id && (!s.succ || from < *s.succ)) s.succ = from;

    // Pair up the children: the partner introduced us to its child hosts
    // when it sent this message, so we are now adjacent to both sides of
    // every child pair and can connect them directly.
    struct ChildWork {
        const std::optional<GuestLink>* mine;
        const std::optional<HostId>* theirs;
    };
    for (const ChildWork& w :
         {ChildWork{&guest.left, &msg.left_child_host}, ChildWork{&guest.right, &msg.right_child_host}}) {
        if (!w.mine->has_value() || !w.theirs->has_value()) continue;
        const GuestLink mine = **w.mine;
        const HostId theirs = **w.theirs;
        if (mine.host != theirs && ctx.edge_usable(s.id, mine.host) &&
            ctx.edge_usable(s.id, theirs))
            ctx.create_edge(mine.host, theirs, s.id, "merge-pair-edge");
        MergeDescend down{mine.guest, task.level + 1, theirs, s.id, new_cluster,
                          msg.guest,   owner};
        if (mine.host == s.id)
            s.due.push_back(DueEvent{ctx.round + 1, down});
        else
            ctx.send(mine.host, down);
    }

    if (owner == s.id) {
        // We keep the guest; our parent annotation was fixed by MergeDescend.
        git->second.last_wave = -1;
    } else {
        s.guests.erase(git);
    }
    s.dirty = true;

    // Report the surviving copy to the parent's owner so its child link
    // points at the right host.
    if (owner == s.id && task.level > 0) {
        auto pit = s.guests.find(guest.parent ? guest.parent->guest : -1);
        const GuestLink parent_link = guest.parent ? *guest.parent : GuestLink{};
        LinkUpdate update{parent_link.guest, msg.guest, s.id};
        if (parent_link.host == s.id && pit != s.guests.end()) {
            handle_link_update(ctx, update);
        } else if (parent_link.host >= 0) {
            if (ctx.adjacency.count(EdgeKey(s.id, parent_link.host)))
                ctx.send(parent_link.host, update);
            else  // the pair edge lands this round; report right after
                s.deferred.push_back(DeferredSend{ctx.round + 1, parent_link.host, update, 3});
        }
    }
}

void handle_merge_descend(HostContext& ctx, const MergeDescend& msg, HostId from) {
    HostState& s = ctx.self;
    if (s.phase != Phase::Cbt) return;
    auto git = s.guests.find(msg.guest);
    if (git == s.guests.end()) return;

    if (!s.merge.active) {
        // Deeper member drawn into its cluster's merge.
        s.merge.active = true;
        s.merge.other_cluster = -1;
        s.match_phase = MatchPhase::Merging;
        s.dirty = true;
    }
    s.merge.new_cluster_id = msg.new_cluster_id;
    s.cluster_id = msg.new_cluster_id;
    s.merge.end_round =
        std::max(s.merge.end_round,
                 ctx.round + merge_duration(ctx.n_guests) - 2 * msg.level);
    s.next_poll_round = s.merge.end_round + 1;

    // The parent-level pair already introduced us to our partner; if we held
    // that edge for some older flow, the merge owns it now.
    s.temp_edges.erase(msg.partner_host);
    git->second.parent = GuestLink{msg.parent_guest, msg.parent_owner};
    MergeTask task{msg.guest, msg.level, msg.partner_host, false};
    s.merge.tasks[msg.guest] = task;
    (void)from;
}

void handle_link_update(HostContext& ctx, const LinkUpdate& msg) {
    HostState& s = ctx.self;
    auto git = s.guests.find(msg.parent_guest);
    if (git == s.guests.end()) return;
    GuestState& g = git->second;
    if (g.left && g.left->guest == msg.child_guest) g.left->host = msg.child_owner;
    if (g.right && g.right->guest == msg.child_guest) g.right->host = msg.child_owner;
    s.dirty = true;
}

namespace {

// Drop edges to same-cluster hosts that neither a guest link, the successor
// pointer (either side's), nor a held forward explains. Foreign and unknown
// neighbours stay: matching needs them. A deletion only happens after the
// edge stayed unjustified for a few rounds, so a neighbour whose state just
// changed can still veto with its next announce.
void sweep_unjustified_edges(HostContext& ctx) {
    HostState& s = ctx.self;
    std::set<HostId> keep;
    if (s.succ) keep.insert(*s.succ);
    for (const auto& [h, when] : s.temp_edges) keep.insert(h);
    for (const auto& [g, gs] : s.guests)
        for (const GuestLink& nb : gs.neighbors())
            if (nb.host != s.id) keep.insert(nb.host);

    std::set<HostId> current;
    for (HostId nb : ctx.neighbors()) current.insert(nb);
    for (auto it = s.sweep_since.begin(); it != s.sweep_since.end();)
        it = current.count(it->first) ? std::next(it) : s.sweep_since.erase(it);

    for (HostId nb : current) {
        bool justified = keep.count(nb) > 0;
        if (!justified) {
            auto cit = s.cache.find(nb);
            if (cit == s.cache.end()) {
                justified = true;  // unknown neighbour: keep
            } else {
                const HostSummary& sum = cit->second.summary;
                justified = sum.phase != Phase::Cbt || sum.cluster_id != s.cluster_id ||
                            sum.merging || (sum.succ && *sum.succ == s.id);
                if (!justified) {
                    for (const auto& [g, digest] : sum.guests) {
                        for (const GuestLink& lnk : digest.links)
                            if (lnk.host == s.id) justified = true;
                        if (justified) break;
                    }
                }
            }
        }
        if (justified) {
            s.sweep_since.erase(nb);
            continue;
        }
        auto it = s.sweep_since.find(nb);
        if (it == s.sweep_since.end()) {
            s.sweep_since[nb] = ctx.round;
        } else if (ctx.round - it->second >= 3) {
            ctx.delete_edge(s.id, nb);
            s.sweep_since.erase(it);
        }
    }
}

void merge_cleanup(HostContext& ctx) {
    HostState& s = ctx.self;
    s.merge = MergeState{};
    s.match_phase = MatchPhase::Idle;
    s.match_deadline = -1;
    s.role = ClusterRole::Idle;
    s.sweep_since.clear();  // judge edges against the merged state only
    s.dirty = true;
    sweep_unjustified_edges(ctx);
}

}  // namespace

void drive_cbt(HostContext& ctx, PollWave& poll) {
    HostState& s = ctx.self;

    if (s.merge.active) {
        for (auto& [g, task] : s.merge.tasks)
            if (!task.pair_sent && s.guests.count(g) &&
                ctx.adjacency.count(EdgeKey(s.id, task.partner_host)))
                send_merge_pair(ctx, task);
        if (ctx.round >= s.merge.end_round) merge_cleanup(ctx);
        return;
    }

    if (s.match_phase == MatchPhase::AwaitingGrant && ctx.round >= s.match_deadline) {
        s.match_phase = MatchPhase::Idle;
        s.match_deadline = -1;
        s.next_poll_round = ctx.round + 1;
    }

    sweep_unjustified_edges(ctx);

    if (!is_cluster_root(ctx)) return;
    if (s.match_phase == MatchPhase::AwaitingGrant) return;
    if (ctx.round < s.next_poll_round) return;

    // Stale wave state from an interrupted epoch is discarded at the cadence.
    GuestId root = tree_root_guest(ctx.n_guests);
    s.root_wave.reset();
    for (auto& [g, gs] : s.guests) {
        gs.active_wave.reset();
        gs.left_acked = gs.right_acked = false;
        gs.gathered = FeedbackPayload{};
    }
    s.poll_route.clear();

    SplitMix64 rng(ctx.rng_stream());
    s.role = rng.coin() ? ClusterRole::Leader : ClusterRole::Follower;
    s.poll_epoch += 1;
    s.next_poll_round = ctx.round + poll_epoch_length(ctx.n_guests);
    start_wave(ctx, poll, WaveLabel{WaveKind::Poll, s.poll_epoch},
               s.role == ClusterRole::Leader);
    (void)root;
}

}  // namespace avatar
