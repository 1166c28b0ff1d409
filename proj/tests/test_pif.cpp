#include "avatar/pif.hpp"

#include <set>

#include "avatar/engine.hpp"
#include "avatar/oracle.hpp"
#include "avatar/protocol.hpp"
#include "doctest.h"

using namespace avatar;

namespace {

// Wave harness: a bare handler that runs only the PIF machinery with
// recording actions, over a legal Avatar(Cbt) configuration.
struct Recorder final : WaveActions {
    std::map<GuestId, std::int64_t> propagate_round;
    std::map<GuestId, int> feedback_count;
    std::map<GuestId, std::int64_t> feedback_round;
    std::optional<std::int64_t> completed_round;
    FeedbackPayload completed_payload;

    HostId low_host = -1;   // pretend refs: guest 0 / N-1 contribute
    HostId high_host = -1;

    void propagate(HostContext& ctx, GuestState& guest, const PifDown&) override {
        propagate_round[guest.id] = ctx.round;
    }
    FeedbackPayload feedback(HostContext& ctx, GuestState& guest, const WaveLabel&,
                             const FeedbackPayload& gathered) override {
        feedback_count[guest.id] += 1;
        feedback_round[guest.id] = ctx.round;
        FeedbackPayload p = gathered;
        if (guest.id == 0) p.ref_low = ctx.self.id;
        if (guest.id == ctx.n_guests - 1) p.ref_high = ctx.self.id;
        return p;
    }
    void complete(HostContext& ctx, GuestState&, const WaveLabel&,
                  const FeedbackPayload& payload) override {
        completed_round = ctx.round;
        completed_payload = payload;
    }
};

struct WaveFixture {
    Configuration config;
    Recorder recorder;
    bool started = false;

    explicit WaveFixture(std::int32_t n, std::set<HostId> hosts)
        : config(legal_cbt_config(n, hosts, Phase::Chord, 1)) {}

    HostHandler handler() {
        return [this](HostContext& ctx) {
            for (const Message& m : ctx.inbox) {
                if (const PifDown* down = std::get_if<PifDown>(&m.payload))
                    on_propagate(ctx, recorder, *down);
                if (const PifUp* up = std::get_if<PifUp>(&m.payload))
                    on_feedback(ctx, recorder, *up);
            }
            for (const DueEvent& ev : ctx.due_now) {
                if (const PifDown* down = std::get_if<PifDown>(&ev.payload))
                    on_propagate(ctx, recorder, *down);
                if (const PifUp* up = std::get_if<PifUp>(&ev.payload))
                    on_feedback(ctx, recorder, *up);
            }
            if (!started && ctx.self.guests.count(tree_root_guest(ctx.n_guests))) {
                started = start_wave(ctx, recorder, WaveLabel{WaveKind::MakeFinger, 0});
            }
            ctx.self.dirty = false;  // keep the wire quiet apart from the wave
        };
    }

    std::int64_t run_until_complete(std::int64_t max_rounds) {
        HostHandler h = handler();
        while (!recorder.completed_round && config.round < max_rounds) {
            StepResult r = step(config, h);
            REQUIRE(!r.fault);
        }
        REQUIRE(recorder.completed_round.has_value());
        return *recorder.completed_round;
    }
};

}  // namespace

TEST_CASE("wave reaches the root's children one round after the start") {
    WaveFixture fx(8, {0, 1, 2, 3, 4, 5, 6, 7});
    HostHandler h = fx.handler();
    step(fx.config, h);  // round 0: root (guest 3, host 3) starts
    CHECK(fx.recorder.propagate_round[3] == 0);
    CHECK(!fx.recorder.propagate_round.count(1));
    CHECK(!fx.recorder.propagate_round.count(5));
    step(fx.config, h);
    CHECK(fx.recorder.propagate_round[1] == 1);
    CHECK(fx.recorder.propagate_round[5] == 1);
}

TEST_CASE("wave pacing is one tree level per round even intra-host") {
    WaveFixture fx(8, {0});  // one host simulates everything
    fx.run_until_complete(64);
    for (GuestId g = 0; g < 8; ++g)
        CHECK(fx.recorder.propagate_round[g] == cbt_depth(g, 8));
}

TEST_CASE("exactly one feedback execution per guest per wave") {
    for (std::set<HostId> hosts : {std::set<HostId>{0, 1, 2, 3, 4, 5, 6, 7},
                                   std::set<HostId>{2, 5}, std::set<HostId>{0}}) {
        WaveFixture fx(8, hosts);
        fx.run_until_complete(64);
        for (GuestId g = 0; g < 8; ++g) CHECK(fx.recorder.feedback_count[g] == 1);
    }
}

TEST_CASE("wave duration is within the 2(log N + 1) budget") {
    for (std::int32_t n : {8, 16, 32}) {
        const std::int64_t budget = 2 * (log2_exact(n) + 1);
        std::set<HostId> dense;
        for (HostId h = 0; h < n; ++h) dense.insert(h);
        for (std::set<HostId> hosts :
             {dense, std::set<HostId>{0}, std::set<HostId>{1, static_cast<HostId>(n / 2)}}) {
            WaveFixture fx(n, hosts);
            std::int64_t done = fx.run_until_complete(4 * budget);
            CHECK(done <= budget);
        }
    }
}

TEST_CASE("payload references reach the root intact") {
    WaveFixture fx(8, {0, 4});
    fx.run_until_complete(64);
    CHECK(fx.recorder.completed_payload.ref_low == 0);   // guest 0 lives on host 0
    CHECK(fx.recorder.completed_payload.ref_high == 4);  // guest 7 lives on host 4
}

TEST_CASE("root serializes waves: second start rejected until feedback returns") {
    WaveFixture fx(8, {0});
    Recorder& rec = fx.recorder;
    HostHandler h = [&](HostContext& ctx) {
        for (const DueEvent& ev : ctx.due_now) {
            if (const PifDown* down = std::get_if<PifDown>(&ev.payload))
                on_propagate(ctx, rec, *down);
            if (const PifUp* up = std::get_if<PifUp>(&ev.payload)) on_feedback(ctx, rec, *up);
        }
        if (ctx.round == 0) {
            CHECK(start_wave(ctx, rec, WaveLabel{WaveKind::MakeFinger, 0}));
            CHECK(!start_wave(ctx, rec, WaveLabel{WaveKind::MakeFinger, 1}));
        }
        if (ctx.round == 2)  // mid-wave: still rejected
            CHECK(!start_wave(ctx, rec, WaveLabel{WaveKind::MakeFinger, 1}));
    };
    for (int i = 0; i < 10 && !rec.completed_round; ++i) step(fx.config, h);
    REQUIRE(rec.completed_round.has_value());
}

TEST_CASE("single-guest tree: wave completes immediately at the root") {
    Configuration config;
    config.n_guests = 1;
    config.seed = 1;
    HostState s;
    s.id = 0;
    s.guests[0] = make_cbt_guest(0, 1, {{0, ResponsibleRange{0, 1}}});
    s.dirty = false;
    config.hosts[0] = s;

    Recorder rec;
    bool completed_same_round = false;
    HostHandler h = [&](HostContext& ctx) {
        if (ctx.round == 0) {
            start_wave(ctx, rec, WaveLabel{WaveKind::MakeFinger, 0});
            completed_same_round = rec.completed_round.has_value();
        }
    };
    step(config, h);
    CHECK(completed_same_round);
    CHECK(rec.feedback_count[0] == 1);
}
