#include "avatar/engine.hpp"

#include <algorithm>
#include <sstream>

#include "avatar/rng.hpp"

namespace avatar {

std::vector<HostId> HostContext::neighbors() const {
    std::vector<HostId> out;
    for (const EdgeKey& e : adjacency) {
        if (e.a == self.id) out.push_back(e.b);
        if (e.b == self.id) out.push_back(e.a);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void HostContext::send(HostId to, Payload payload) {
    outbox->push_back(Message{self.id, to, std::move(payload)});
}

void HostContext::create_edge(HostId a, HostId b, HostId witness, const char* reason) {
    commands->push_back(EdgeCommand{EdgeCommand::Kind::Create, a, b, witness, self.id, reason});
    own_creates.insert(EdgeKey(a, b));
}

bool HostContext::edge_usable(HostId a, HostId b) const {
    return adjacency.count(EdgeKey(a, b)) > 0 || own_creates.count(EdgeKey(a, b)) > 0;
}

void HostContext::delete_edge(HostId a, HostId b) {
    commands->push_back(EdgeCommand{EdgeCommand::Kind::Delete, a, b, std::nullopt, self.id});
}

std::uint64_t HostContext::rng_stream() const {
    return mix_seed(trial_seed, static_cast<std::uint64_t>(self.id),
                    static_cast<std::uint64_t>(round));
}

namespace {

std::string edge_str(HostId a, HostId b) {
    std::ostringstream os;
    os << "(" << a << "," << b << ")";
    return os.str();
}

int channel_ref_cap(std::int32_t n_guests) { return 6 * (log2_exact(n_guests) + 2); }

}  // namespace

StepResult step(Configuration& config, const HostHandler& handler) {
    StepResult result;

    // Deliver messages sent last round, grouped per destination. Order within
    // a destination: payload class, then source, then send order, fixed so
    // runs are reproducible.
    std::map<HostId, std::vector<Message>> inboxes;
    for (const Message& m : config.in_flight) inboxes[m.dst].push_back(m);
    for (auto& [dst, msgs] : inboxes) {
        std::stable_sort(msgs.begin(), msgs.end(), [](const Message& a, const Message& b) {
            int oa = payload_order(a.payload), ob = payload_order(b.payload);
            if (oa != ob) return oa < ob;
            return a.src < b.src;
        });
        result.messages_delivered += static_cast<std::int32_t>(msgs.size());
    }
    config.in_flight.clear();

    std::vector<Message> outbox;
    std::vector<EdgeCommand> commands;
    static const std::vector<Message> no_messages;

    for (auto& [id, state] : config.hosts) {
        // Pull this round's intra-host events out of the due queue.
        std::vector<DueEvent> due_now;
        std::vector<DueEvent> later;
        for (DueEvent& ev : state.due) {
            if (ev.round <= config.round)
                due_now.push_back(std::move(ev));
            else
                later.push_back(std::move(ev));
        }
        std::stable_sort(due_now.begin(), due_now.end(), [](const DueEvent& a, const DueEvent& b) {
            return payload_order(a.payload) < payload_order(b.payload);
        });
        state.due = std::move(later);

        auto it = inboxes.find(id);
        const std::vector<Message>& inbox = (it == inboxes.end()) ? no_messages : it->second;

        HostContext ctx{config.round,  config.n_guests, config.include_half_ring,
                        config.seed,   state,           inbox,
                        due_now,       config.host_graph};
        ctx.outbox = &outbox;
        ctx.commands = &commands;
        handler(ctx);
    }

    // Channel existence + bounded-capacity checks against this round's graph.
    // Capacity counts distinct referenced hosts: each distinct reference can
    // introduce at most one new edge at the receiver.
    std::map<EdgeKey, std::set<HostId>> refs_per_edge;
    const int cap = channel_ref_cap(config.n_guests);
    for (const Message& m : outbox) {
        if (!config.adjacent(m.src, m.dst)) {
            result.fault = SimFault{FaultKind::ChannelMissing, config.round,
                                    std::string(payload_kind_name(m.payload)) + " over missing edge " +
                                        edge_str(m.src, m.dst)};
            return result;
        }
        std::set<HostId>& refs = refs_per_edge[EdgeKey(m.src, m.dst)];
        intro_refs(m.payload, refs);
        if (static_cast<int>(refs.size()) > cap) {
            result.fault = SimFault{FaultKind::ChannelCapacity, config.round,
                                    "edge " + edge_str(m.src, m.dst) + " carried more than " +
                                        std::to_string(cap) + " distinct references"};
            return result;
        }
    }

    // Edge commands validate against the graph as it stood during the round;
    // creates apply before deletes so handoffs cannot transiently disconnect.
    const HostEdgeSet before = config.host_graph;
    for (const EdgeCommand& cmd : commands) {
        if (cmd.kind != EdgeCommand::Kind::Create) continue;
        if (cmd.u == cmd.v) continue;
        if (before.count(EdgeKey(cmd.u, cmd.v))) continue;  // already present
        if (!cmd.witness || !before.count(EdgeKey(cmd.u, *cmd.witness)) ||
            !before.count(EdgeKey(*cmd.witness, cmd.v))) {
            std::string detail = "create " + edge_str(cmd.u, cmd.v) + " by " +
                                 std::to_string(cmd.issuer) + " [" + cmd.reason +
                                 "] without valid witness";
            if (cmd.witness)
                detail += " (w=" + std::to_string(*cmd.witness) + " uw=" +
                          std::to_string(before.count(EdgeKey(cmd.u, *cmd.witness))) + " wv=" +
                          std::to_string(before.count(EdgeKey(*cmd.witness, cmd.v))) + ")";
            result.fault = SimFault{FaultKind::IntroductionRule, config.round, detail};
            return result;
        }
        config.host_graph.insert(EdgeKey(cmd.u, cmd.v));
    }
    std::set<EdgeKey> created_now;
    for (const EdgeCommand& cmd : commands)
        if (cmd.kind == EdgeCommand::Kind::Create) created_now.insert(EdgeKey(cmd.u, cmd.v));
    for (const EdgeCommand& cmd : commands) {
        if (cmd.kind != EdgeCommand::Kind::Delete) continue;
        if (cmd.issuer != cmd.u && cmd.issuer != cmd.v) {
            result.fault = SimFault{FaultKind::DeleteNotIncident, config.round,
                                    "delete " + edge_str(cmd.u, cmd.v) + " by non-endpoint " +
                                        std::to_string(cmd.issuer)};
            return result;
        }
        // An edge re-affirmed by a create this round survives the handoff.
        if (created_now.count(EdgeKey(cmd.u, cmd.v))) continue;
        config.host_graph.erase(EdgeKey(cmd.u, cmd.v));
    }

    config.in_flight = std::move(outbox);
    ++config.round;
    return result;
}

bool weakly_connected(const Configuration& config) {
    if (config.hosts.empty()) return true;
    std::set<HostId> seen;
    std::vector<HostId> queue{config.hosts.begin()->first};
    seen.insert(queue.front());
    std::map<HostId, std::vector<HostId>> adj;
    for (const EdgeKey& e : config.host_graph) {
        adj[e.a].push_back(e.b);
        adj[e.b].push_back(e.a);
    }
    while (!queue.empty()) {
        HostId h = queue.back();
        queue.pop_back();
        for (HostId nb : adj[h])
            if (seen.insert(nb).second) queue.push_back(nb);
    }
    return seen.size() == config.hosts.size();
}

RunResult run(Configuration config, const HostHandler& handler, const StopPredicate& stop,
              const RunOptions& options) {
    RunResult result;
    for (std::int64_t i = 0; i <= options.max_rounds; ++i) {
        if (stop(config)) {
            result.converged = true;
            break;
        }
        if (i == options.max_rounds) break;  // budget exhausted, stop never held

        StepResult sr = step(config, handler);
        ++result.rounds;

        RoundMetric metric;
        metric.round = config.round;
        metric.max_host_degree = config.max_host_degree();
        metric.messages_delivered = sr.messages_delivered;
        for (const auto& [id, st] : config.hosts)
            ++metric.phase_counts[static_cast<int>(st.phase)];
        result.trace.push_back(metric);

        if (sr.fault) {
            result.fault = sr.fault;
            break;
        }
        if (options.check_connectivity && !weakly_connected(config)) {
            result.fault =
                SimFault{FaultKind::ConnectivityLost, config.round, "host graph disconnected"};
            break;
        }
        if (options.observer) options.observer(config);
    }
    result.config = std::move(config);
    return result;
}

}  // namespace avatar
