#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

// Guest topologies (Cbt, Chord), the host embedding, and exact legality
// oracles. Everything here is pure and stateless; the protocol uses these
// functions for local checks, the tests use them as global oracles.
namespace avatar {

using GuestId = std::int32_t;
using HostId = std::int32_t;

// Undirected edge with endpoints kept sorted so set semantics work.
struct EdgeKey {
    std::int32_t a = 0;
    std::int32_t b = 0;

    EdgeKey() = default;
    EdgeKey(std::int32_t x, std::int32_t y) : a(x < y ? x : y), b(x < y ? y : x) {}

    auto operator<=>(const EdgeKey&) const = default;
};

using GuestEdgeSet = std::set<EdgeKey>;
using HostEdgeSet = std::set<EdgeKey>;

// Half-open interval of guest identifiers a host simulates.
struct ResponsibleRange {
    GuestId lo = 0;   // inclusive
    std::int32_t hi = 0;  // exclusive, in [1, N]

    bool contains(GuestId g) const { return lo <= g && g < hi; }
    std::int32_t size() const { return hi - lo; }
    auto operator<=>(const ResponsibleRange&) const = default;
};

struct CbtNode {
    std::optional<GuestId> parent;
    std::optional<GuestId> left;
    std::optional<GuestId> right;

    auto operator<=>(const CbtNode&) const = default;
};

using CbtTree = std::map<GuestId, CbtNode>;

bool is_power_of_two(std::int64_t n);
int log2_exact(std::int64_t n);

// Binary search tree over [0, N) by recursive median selection: the root of
// [lo, hi] is floor((lo+hi)/2). In-order traversal yields 0..N-1 and the
// height is exactly log2(N) for N a power of two.
CbtTree cbt_tree(std::int32_t n_guests);

GuestEdgeSet cbt_edges(std::int32_t n_guests);

int cbt_height(std::int32_t n_guests);

// Depth of a guest in cbt_tree(N); root has depth 0.
int cbt_depth(GuestId g, std::int32_t n_guests);

// Fingers of i: (i + 2^k) mod N for k = 0 .. log2(N)-2. With the half-ring
// finger enabled the k = log2(N)-1 finger (distance N/2) is appended.
std::vector<GuestId> chord_fingers(GuestId i, std::int32_t n_guests,
                                   bool include_half_ring = false);

// Number of fingers per guest for the given N and flag.
int chord_finger_count(std::int32_t n_guests, bool include_half_ring = false);

GuestEdgeSet chord_edges(std::int32_t n_guests, bool include_half_ring = false);

// Smallest host covers [0, succ); interior hosts [id, succ); largest [id, N).
std::map<HostId, ResponsibleRange> responsible_ranges(const std::set<HostId>& hosts,
                                                      std::int32_t n_guests);

HostId host_of(GuestId g, const std::map<HostId, ResponsibleRange>& ranges);

// Dilation-1 image of the guest edges: one host edge per cross-host guest
// edge, intra-host guest edges produce nothing.
HostEdgeSet embed(const GuestEdgeSet& guest_edges,
                  const std::map<HostId, ResponsibleRange>& ranges);

// Successor edges (u, succ(u)) for consecutive host ids. Part of the legal
// Avatar host graph: a host must be able to talk to its successor to agree
// on the range boundary, and wave 0 of the Chord build relies on it.
HostEdgeSet successor_edges(const std::set<HostId>& hosts);

// Legal host graph for Avatar(target): embedding plus successor edges.
HostEdgeSet legal_host_edges(const GuestEdgeSet& target,
                             const std::map<HostId, ResponsibleRange>& ranges);

}  // namespace avatar
