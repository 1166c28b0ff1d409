#include "avatar/topology.hpp"

#include <stdexcept>

namespace avatar {

bool is_power_of_two(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

int log2_exact(std::int64_t n) {
    if (!is_power_of_two(n)) throw std::invalid_argument("log2_exact: not a power of two");
    int k = 0;
    while ((std::int64_t{1} << k) < n) ++k;
    return k;
}

namespace {

void require_guest_count(std::int32_t n_guests, std::int32_t minimum) {
    if (n_guests < minimum || !is_power_of_two(n_guests))
        throw std::invalid_argument("N must be a power of two >= " + std::to_string(minimum));
}

void build_bst(std::int32_t lo, std::int32_t hi, std::optional<GuestId> parent, CbtTree& out) {
    if (lo > hi) return;
    GuestId root = (lo + hi) / 2;
    CbtNode& node = out[root];
    node.parent = parent;
    if (lo <= root - 1) {
        node.left = (lo + root - 1) / 2;
        build_bst(lo, root - 1, root, out);
    }
    if (root + 1 <= hi) {
        node.right = (root + 1 + hi) / 2;
        build_bst(root + 1, hi, root, out);
    }
}

}  // namespace

CbtTree cbt_tree(std::int32_t n_guests) {
    require_guest_count(n_guests, 1);
    CbtTree tree;
    build_bst(0, n_guests - 1, std::nullopt, tree);
    return tree;
}

GuestEdgeSet cbt_edges(std::int32_t n_guests) {
    GuestEdgeSet edges;
    for (const auto& [id, node] : cbt_tree(n_guests)) {
        if (node.left) edges.insert(EdgeKey(id, *node.left));
        if (node.right) edges.insert(EdgeKey(id, *node.right));
    }
    return edges;
}

int cbt_height(std::int32_t n_guests) {
    require_guest_count(n_guests, 1);
    return log2_exact(n_guests);
}

int cbt_depth(GuestId g, std::int32_t n_guests) {
    require_guest_count(n_guests, 1);
    if (g < 0 || g >= n_guests) throw std::invalid_argument("cbt_depth: guest out of range");
    std::int32_t lo = 0, hi = n_guests - 1;
    int depth = 0;
    while (true) {
        GuestId root = (lo + hi) / 2;
        if (root == g) return depth;
        if (g < root)
            hi = root - 1;
        else
            lo = root + 1;
        ++depth;
    }
}

int chord_finger_count(std::int32_t n_guests, bool include_half_ring) {
    require_guest_count(n_guests, 4);
    return log2_exact(n_guests) - 1 + (include_half_ring ? 1 : 0);
}

std::vector<GuestId> chord_fingers(GuestId i, std::int32_t n_guests, bool include_half_ring) {
    require_guest_count(n_guests, 4);
    if (i < 0 || i >= n_guests) throw std::invalid_argument("chord_fingers: guest out of range");
    std::vector<GuestId> fingers;
    const int count = chord_finger_count(n_guests, include_half_ring);
    for (int k = 0; k < count; ++k)
        fingers.push_back(static_cast<GuestId>((i + (std::int64_t{1} << k)) % n_guests));
    return fingers;
}

GuestEdgeSet chord_edges(std::int32_t n_guests, bool include_half_ring) {
    GuestEdgeSet edges;
    for (GuestId i = 0; i < n_guests; ++i)
        for (GuestId j : chord_fingers(i, n_guests, include_half_ring)) edges.insert(EdgeKey(i, j));
    return edges;
}

std::map<HostId, ResponsibleRange> responsible_ranges(const std::set<HostId>& hosts,
                                                      std::int32_t n_guests) {
    require_guest_count(n_guests, 1);
    if (hosts.empty()) throw std::invalid_argument("responsible_ranges: empty host set");
    for (HostId h : hosts)
        if (h < 0 || h >= n_guests)
            throw std::invalid_argument("responsible_ranges: host id out of [0, N)");

    std::map<HostId, ResponsibleRange> ranges;
    for (auto it = hosts.begin(); it != hosts.end(); ++it) {
        auto next = std::next(it);
        ResponsibleRange r;
        r.lo = (it == hosts.begin()) ? 0 : *it;
        r.hi = (next == hosts.end()) ? n_guests : *next;
        ranges[*it] = r;
    }
    return ranges;
}

HostId host_of(GuestId g, const std::map<HostId, ResponsibleRange>& ranges) {
    for (const auto& [h, r] : ranges)
        if (r.contains(g)) return h;
    throw std::invalid_argument("host_of: guest not covered by any range");
}

HostEdgeSet embed(const GuestEdgeSet& guest_edges,
                  const std::map<HostId, ResponsibleRange>& ranges) {
    HostEdgeSet out;
    for (const EdgeKey& e : guest_edges) {
        HostId ha = host_of(e.a, ranges);
        HostId hb = host_of(e.b, ranges);
        if (ha != hb) out.insert(EdgeKey(ha, hb));
    }
    return out;
}

HostEdgeSet successor_edges(const std::set<HostId>& hosts) {
    HostEdgeSet out;
    for (auto it = hosts.begin(); it != hosts.end(); ++it) {
        auto next = std::next(it);
        if (next != hosts.end()) out.insert(EdgeKey(*it, *next));
    }
    return out;
}

HostEdgeSet legal_host_edges(const GuestEdgeSet& target,
                             const std::map<HostId, ResponsibleRange>& ranges) {
    std::set<HostId> hosts;
    for (const auto& [h, r] : ranges) hosts.insert(h);
    HostEdgeSet out = embed(target, ranges);
    for (const EdgeKey& e : successor_edges(hosts)) out.insert(e);
    return out;
}

}  // namespace avatar
