#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "avatar/state.hpp"

namespace avatar {

struct EdgeCommand {
    enum class Kind : std::uint8_t { Create = 0, Delete = 1 };
    Kind kind = Kind::Create;
    HostId u = -1;
    HostId v = -1;
    std::optional<HostId> witness;  // introducing neighbor, required for Create
    HostId issuer = -1;
    const char* reason = "";  // diagnostic tag for fault reports

    auto operator<=>(const EdgeCommand&) const = default;
};

enum class FaultKind : std::uint8_t {
    IntroductionRule,   // create without a valid witness
    ChannelMissing,     // message sent over a non-edge
    ChannelCapacity,    // too many edge references on one edge in one round
    DeleteNotIncident,  // delete issued by a non-endpoint
    ConnectivityLost,   // weak connectivity broken (checked when enabled)
};

struct SimFault {
    FaultKind kind;
    std::int64_t round = 0;
    std::string detail;
};

struct RoundMetric {
    std::int64_t round = 0;
    std::int32_t max_host_degree = 0;
    std::int32_t phase_counts[3] = {0, 0, 0};  // indexed by Phase
    std::int32_t messages_delivered = 0;
};

// Everything a protocol handler may touch during its single invocation per
// round. Handlers read only their own state, delivered messages and the
// (round-stable) adjacency view, so invocation order cannot matter.
struct HostContext {
    std::int64_t round = 0;
    std::int32_t n_guests = 0;
    bool include_half_ring = false;
    std::uint64_t trial_seed = 0;
    HostState& self;
    const std::vector<Message>& inbox;        // delivered wire messages
    const std::vector<DueEvent>& due_now;     // intra-host events for this round
    const HostEdgeSet& adjacency;             // this round's host graph

    std::vector<Message>* outbox = nullptr;
    std::vector<EdgeCommand>* commands = nullptr;
    // Creates this host issued this round; they apply at round end but the
    // host's own checks already count on them.
    std::set<EdgeKey> own_creates;

    std::vector<HostId> neighbors() const;
    void send(HostId to, Payload payload);
    void create_edge(HostId a, HostId b, HostId witness, const char* reason = "");
    void delete_edge(HostId a, HostId b);
    bool edge_usable(HostId a, HostId b) const;
    std::uint64_t rng_stream() const;  // per-host per-round seed
};

using HostHandler = std::function<void(HostContext&)>;

struct StepResult {
    std::optional<SimFault> fault;
    std::int32_t messages_delivered = 0;
};

// One synchronous round: deliver last round's messages, run every host's
// handler (ascending id), then apply edge commands (creates before deletes,
// all effects at round end) and advance the round counter.
StepResult step(Configuration& config, const HostHandler& handler);

struct RunOptions {
    std::int64_t max_rounds = 0;
    bool check_connectivity = false;
    // Called after each step with the new configuration.
    std::function<void(const Configuration&)> observer;
};

struct RunResult {
    Configuration config;
    std::int64_t rounds = 0;
    std::vector<RoundMetric> trace;
    std::optional<SimFault> fault;
    bool converged = false;  // stop predicate held before max_rounds ran out
};

using StopPredicate = std::function<bool(const Configuration&)>;

RunResult run(Configuration config, const HostHandler& handler, const StopPredicate& stop,
              const RunOptions& options);

bool weakly_connected(const Configuration& config);

}  // namespace avatar
