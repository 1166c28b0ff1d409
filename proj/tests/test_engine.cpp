#include "avatar/engine.hpp"

#include "doctest.h"

using namespace avatar;

namespace {

Configuration line_config(std::int32_t n_guests, std::vector<HostId> hosts) {
    Configuration c;
    c.n_guests = n_guests;
    c.seed = 1;
    for (std::size_t i = 0; i < hosts.size(); ++i) {
        HostState s;
        s.id = hosts[i];
        s.dirty = false;
        c.hosts[hosts[i]] = s;
        if (i > 0) c.host_graph.insert(EdgeKey(hosts[i - 1], hosts[i]));
    }
    return c;
}

const HostHandler kNoop = [](HostContext&) {};

}  // namespace

TEST_CASE("step: silent network is a fixpoint apart from the round counter") {
    Configuration c = line_config(8, {0, 1, 2});
    for (auto& [id, s] : c.hosts) s.phase = Phase::Done;
    Configuration before = c;
    StepResult r = step(c, kNoop);
    CHECK(!r.fault);
    CHECK(c.round == before.round + 1);
    Configuration after = c;
    after.round = before.round;
    CHECK(after == before);
}

TEST_CASE("step: introduction rule allows witnessed create") {
    Configuration c = line_config(8, {0, 1, 2});  // 0-1-2
    HostHandler handler = [](HostContext& ctx) {
        if (ctx.self.id == 0 && ctx.round == 0) ctx.create_edge(0, 2, 1);
    };
    StepResult r = step(c, handler);
    CHECK(!r.fault);
    CHECK(c.adjacent(0, 2));
}

TEST_CASE("step: create without common neighbor is a hard fault") {
    Configuration c = line_config(8, {0, 1, 2, 3});  // 0-1-2-3
    HostHandler handler = [](HostContext& ctx) {
        if (ctx.self.id == 0) ctx.create_edge(0, 3, 1);  // (1,3) missing
    };
    StepResult r = step(c, handler);
    REQUIRE(r.fault);
    CHECK(r.fault->kind == FaultKind::IntroductionRule);
}

TEST_CASE("step: creating an existing edge is a no-op, not a fault") {
    Configuration c = line_config(8, {0, 1});
    HostHandler handler = [](HostContext& ctx) {
        if (ctx.self.id == 0) ctx.create_edge(0, 1, 99);
    };
    StepResult r = step(c, handler);
    CHECK(!r.fault);
    CHECK(c.adjacent(0, 1));
}

TEST_CASE("step: messages must ride existing channels") {
    Configuration c = line_config(8, {0, 1, 2});
    HostHandler handler = [](HostContext& ctx) {
        if (ctx.self.id == 0) ctx.send(2, Announce{});
    };
    StepResult r = step(c, handler);
    REQUIRE(r.fault);
    CHECK(r.fault->kind == FaultKind::ChannelMissing);
}

TEST_CASE("step: delivery happens exactly one round after send") {
    Configuration c = line_config(8, {0, 1});
    std::vector<std::pair<std::int64_t, int>> deliveries;  // (round, count)
    HostHandler handler = [&](HostContext& ctx) {
        if (ctx.self.id == 0 && ctx.round == 0) ctx.send(1, Announce{});
        if (ctx.self.id == 1 && !ctx.inbox.empty())
            deliveries.emplace_back(ctx.round, static_cast<int>(ctx.inbox.size()));
    };
    step(c, handler);
    CHECK(deliveries.empty());
    step(c, handler);
    REQUIRE(deliveries.size() == 1);
    CHECK(deliveries[0] == std::pair<std::int64_t, int>{1, 1});
    step(c, handler);
    CHECK(deliveries.size() == 1);
}

TEST_CASE("step: deletes apply after creates in the same round") {
    Configuration c = line_config(8, {0, 1, 2});
    HostHandler handler = [](HostContext& ctx) {
        if (ctx.round != 0) return;
        if (ctx.self.id == 1) {
            ctx.create_edge(0, 2, 1);  // hand the 0-2 connection over
            ctx.delete_edge(1, 2);
        }
    };
    StepResult r = step(c, handler);
    CHECK(!r.fault);
    CHECK(c.adjacent(0, 2));
    CHECK(!c.adjacent(1, 2));
    CHECK(weakly_connected(c));
}

TEST_CASE("step: only endpoints may delete an edge") {
    Configuration c = line_config(8, {0, 1, 2});
    HostHandler handler = [](HostContext& ctx) {
        if (ctx.self.id == 0) ctx.delete_edge(1, 2);
    };
    StepResult r = step(c, handler);
    REQUIRE(r.fault);
    CHECK(r.fault->kind == FaultKind::DeleteNotIncident);
}

TEST_CASE("step: due events fire at their round, in one batch with the inbox") {
    Configuration c = line_config(8, {0});
    c.hosts[0].due.push_back(DueEvent{2, Announce{}});
    std::vector<std::int64_t> fired;
    HostHandler handler = [&](HostContext& ctx) {
        if (!ctx.due_now.empty()) fired.push_back(ctx.round);
    };
    for (int i = 0; i < 4; ++i) step(c, handler);
    CHECK(fired == std::vector<std::int64_t>{2});
    CHECK(c.hosts[0].due.empty());
}

TEST_CASE("run: stop predicate checked before stepping") {
    Configuration c = line_config(8, {0, 1});
    RunOptions opt;
    opt.max_rounds = 10;
    RunResult r = run(c, kNoop, [](const Configuration&) { return true; }, opt);
    CHECK(r.converged);
    CHECK(r.rounds == 0);
    CHECK(r.config == c);
}

TEST_CASE("run: exhausting the budget reports non-convergence") {
    Configuration c = line_config(8, {0, 1});
    RunOptions opt;
    opt.max_rounds = 0;
    RunResult r = run(c, kNoop, [](const Configuration&) { return false; }, opt);
    CHECK(!r.converged);
    CHECK(r.rounds == 0);

    opt.max_rounds = 5;
    r = run(c, kNoop, [](const Configuration&) { return false; }, opt);
    CHECK(!r.converged);
    CHECK(r.rounds == 5);
    CHECK(r.trace.size() == 5);
}

TEST_CASE("run: per-round metrics track degree and phases") {
    Configuration c = line_config(8, {0, 1, 2});
    c.hosts[1].phase = Phase::Chord;
    RunOptions opt;
    opt.max_rounds = 1;
    RunResult r = run(c, kNoop, [](const Configuration&) { return false; }, opt);
    REQUIRE(r.trace.size() == 1);
    CHECK(r.trace[0].max_host_degree == 2);
    CHECK(r.trace[0].phase_counts[static_cast<int>(Phase::Cbt)] == 2);
    CHECK(r.trace[0].phase_counts[static_cast<int>(Phase::Chord)] == 1);
}

TEST_CASE("run: connectivity check reports a fault when enabled") {
    Configuration c = line_config(8, {0, 1, 2});
    HostHandler handler = [](HostContext& ctx) {
        if (ctx.self.id == 2 && ctx.round == 0) ctx.delete_edge(1, 2);
    };
    RunOptions opt;
    opt.max_rounds = 3;
    opt.check_connectivity = true;
    RunResult r = run(c, handler, [](const Configuration&) { return false; }, opt);
    REQUIRE(r.fault);
    CHECK(r.fault->kind == FaultKind::ConnectivityLost);
}

// --- snapshot + determinism over the full protocol ---

#include "avatar/oracle.hpp"
#include "avatar/protocol.hpp"
#include "avatar/serde.hpp"

TEST_CASE("snapshot: load gives back an equal configuration") {
    Configuration c = legal_cbt_config(8, {2, 5, 6}, Phase::Chord, 11);
    HostHandler handler = protocol_handler();
    for (int i = 0; i < 5; ++i) step(c, handler);  // mid-wave, queues nonempty
    Configuration back = load_snapshot(snapshot(c));
    CHECK(back == c);
}

TEST_CASE("snapshot: counts and fields for a fresh legal scaffold") {
    std::set<HostId> dense{0, 1, 2, 3, 4, 5, 6, 7};
    Configuration c = legal_cbt_config(8, dense, Phase::Cbt, 1);
    std::string text = snapshot(c);
    Configuration back = load_snapshot(text);
    CHECK(back.hosts.size() == 8);
    std::size_t guests = 0;
    for (const auto& [h, s] : back.hosts) guests += s.guests.size();
    CHECK(guests == 8);
    const auto ranges = responsible_ranges(dense, 8);
    CHECK(back.host_graph == legal_host_edges(cbt_edges(8), ranges));
    CHECK(text.find("\"round\": 0") != std::string::npos);

    c.round = 5;
    CHECK(snapshot(c).find("\"round\": 5") != std::string::npos);
}

TEST_CASE("snapshot survives a resumed run") {
    Configuration c = legal_cbt_config(16, {1, 9, 13}, Phase::Chord, 4);
    HostHandler handler = protocol_handler();
    for (int i = 0; i < 7; ++i) step(c, handler);
    Configuration resumed = load_snapshot(snapshot(c));
    RunOptions opt;
    opt.max_rounds = 200;
    RunResult a = run(c, handler, converged, opt);
    RunResult b = run(resumed, handler, converged, opt);
    CHECK(a.converged);
    CHECK(b.converged);
    CHECK(a.rounds == b.rounds);
    CHECK(a.config == b.config);
}

TEST_CASE("determinism: identical start and seed give bit-identical traces") {
    for (std::uint64_t seed : {3ull, 17ull}) {
        Configuration c1 = legal_cbt_config(16, {0, 3, 6, 9, 12}, Phase::Cbt, seed);
        Configuration c2 = legal_cbt_config(16, {0, 3, 6, 9, 12}, Phase::Cbt, seed);
        HostHandler handler = protocol_handler();
        for (int i = 0; i < 120; ++i) {
            step(c1, handler);
            step(c2, handler);
            REQUIRE(snapshot(c1) == snapshot(c2));
        }
    }
}
