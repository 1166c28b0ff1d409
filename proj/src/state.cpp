#include "avatar/state.hpp"

#include <algorithm>

namespace avatar {

std::vector<GuestLink> GuestState::neighbors() const {
    std::vector<GuestLink> out;
    if (parent) out.push_back(*parent);
    if (left) out.push_back(*left);
    if (right) out.push_back(*right);
    out.insert(out.end(), fingers.begin(), fingers.end());
    out.insert(out.end(), reverse_fingers.begin(), reverse_fingers.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

bool due_equal(const DueEvent& a, const DueEvent& b) {
    return a.round == b.round && a.payload == b.payload;
}

ResponsibleRange HostState::claimed_range(std::int32_t n_guests) const {
    ResponsibleRange r;
    r.lo = claims_smallest ? 0 : id;
    r.hi = succ ? *succ : n_guests;
    return r;
}

bool HostState::operator==(const HostState& o) const {
    auto due_eq = [](const std::vector<DueEvent>& x, const std::vector<DueEvent>& y) {
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!due_equal(x[i], y[i])) return false;
        return true;
    };
    auto deferred_eq = [](const std::vector<DeferredSend>& x, const std::vector<DeferredSend>& y) {
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i].round != y[i].round || x[i].dst != y[i].dst ||
                x[i].retries != y[i].retries || !(x[i].payload == y[i].payload))
                return false;
        return true;
    };
    return id == o.id && phase == o.phase && prev_phase == o.prev_phase && succ == o.succ &&
           claims_smallest == o.claims_smallest && cluster_id == o.cluster_id &&
           guests == o.guests && cache == o.cache && dirty == o.dirty &&
           root_wave == o.root_wave && done_prepared == o.done_prepared &&
           wave_hold_until == o.wave_hold_until &&
           flip_round == o.flip_round && flip_target == o.flip_target &&
           temp_edges == o.temp_edges && due_eq(due, o.due) && deferred_eq(deferred, o.deferred) &&
           role == o.role &&
           next_poll_round == o.next_poll_round && poll_epoch == o.poll_epoch &&
           poll_route == o.poll_route && poll_min_foreign == o.poll_min_foreign &&
           poll_via == o.poll_via && pending_requests == o.pending_requests &&
           match_phase == o.match_phase && match_deadline == o.match_deadline &&
           merge == o.merge && sweep_since == o.sweep_since && fault_flag == o.fault_flag;
}

std::set<HostId> Configuration::host_ids() const {
    std::set<HostId> out;
    for (const auto& [h, s] : hosts) out.insert(h);
    return out;
}

int Configuration::host_degree(HostId h) const {
    int d = 0;
    for (const EdgeKey& e : host_graph)
        if (e.a == h || e.b == h) ++d;
    return d;
}

int Configuration::max_host_degree() const {
    std::map<HostId, int> deg;
    for (const EdgeKey& e : host_graph) {
        ++deg[e.a];
        ++deg[e.b];
    }
    int best = 0;
    for (const auto& [h, d] : deg) best = std::max(best, d);
    return best;
}

bool Configuration::operator==(const Configuration& o) const {
    if (!(version == o.version && n_guests == o.n_guests &&
          include_half_ring == o.include_half_ring && round == o.round && seed == o.seed &&
          host_graph == o.host_graph && hosts == o.hosts))
        return false;
    if (in_flight.size() != o.in_flight.size()) return false;
    for (std::size_t i = 0; i < in_flight.size(); ++i) {
        const Message& a = in_flight[i];
        const Message& b = o.in_flight[i];
        if (a.src != b.src || a.dst != b.dst || !(a.payload == b.payload)) return false;
    }
    return true;
}

GuestState make_cbt_guest(GuestId g, std::int32_t n_guests,
                          const std::map<HostId, ResponsibleRange>& ranges) {
    static thread_local std::map<std::int32_t, CbtTree> tree_cache;
    auto it = tree_cache.find(n_guests);
    if (it == tree_cache.end()) it = tree_cache.emplace(n_guests, cbt_tree(n_guests)).first;
    const CbtNode& node = it->second.at(g);

    GuestState gs;
    gs.id = g;
    auto link = [&](GuestId other) { return GuestLink{other, host_of(other, ranges)}; };
    if (node.parent) gs.parent = link(*node.parent);
    if (node.left) gs.left = link(*node.left);
    if (node.right) gs.right = link(*node.right);
    return gs;
}

}  // namespace avatar
