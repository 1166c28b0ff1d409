#include "avatar/serde.hpp"

#include <stdexcept>

#include "json.hpp"

namespace avatar {

namespace {

using Json = nlohmann::ordered_json;

const char* phase_tag(Phase p) { return phase_name(p); }

Phase phase_from(const std::string& s) {
    if (s == "CBT") return Phase::Cbt;
    if (s == "CHORD") return Phase::Chord;
    if (s == "DONE") return Phase::Done;
    throw std::invalid_argument("snapshot: bad phase " + s);
}

Json opt_to_json(const std::optional<HostId>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<HostId> opt_from_json(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<HostId>();
}

Json link_to_json(const GuestLink& l) { return Json::array({l.guest, l.host}); }

GuestLink link_from_json(const Json& j) { return GuestLink{j.at(0), j.at(1)}; }

Json opt_link_to_json(const std::optional<GuestLink>& l) {
    return l ? link_to_json(*l) : Json(nullptr);
}

std::optional<GuestLink> opt_link_from_json(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return link_from_json(j);
}

Json links_to_json(const std::vector<GuestLink>& ls) {
    Json out = Json::array();
    for (const GuestLink& l : ls) out.push_back(link_to_json(l));
    return out;
}

std::vector<GuestLink> links_from_json(const Json& j) {
    std::vector<GuestLink> out;
    for (const Json& e : j) out.push_back(link_from_json(e));
    return out;
}

Json label_to_json(const WaveLabel& l) {
    return Json{{"kind", static_cast<int>(l.kind)}, {"index", l.index}};
}

WaveLabel label_from_json(const Json& j) {
    return WaveLabel{static_cast<WaveKind>(j.at("kind").get<int>()), j.at("index").get<std::int32_t>()};
}

Json payload_feedback_to_json(const FeedbackPayload& p) {
    Json out;
    out["allOk"] = p.all_ok;
    out["refLow"] = opt_to_json(p.ref_low);
    out["refHigh"] = opt_to_json(p.ref_high);
    out["minForeign"] = p.min_foreign ? Json(*p.min_foreign) : Json(nullptr);
    out["anyForeign"] = p.any_foreign;
    return out;
}

FeedbackPayload feedback_from_json(const Json& j) {
    FeedbackPayload p;
    p.all_ok = j.at("allOk").get<bool>();
    p.ref_low = opt_from_json(j.at("refLow"));
    p.ref_high = opt_from_json(j.at("refHigh"));
    if (!j.at("minForeign").is_null()) p.min_foreign = j.at("minForeign").get<std::int32_t>();
    p.any_foreign = j.at("anyForeign").get<bool>();
    return p;
}

Json payload_to_json(const Payload& p) {
    Json out;
    out["kind"] = payload_kind_name(p);
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Announce>) {
                const HostSummary& s = v.summary;
                Json sum;
                sum["id"] = s.id;
                sum["phase"] = phase_tag(s.phase);
                sum["clusterId"] = s.cluster_id;
                sum["succ"] = opt_to_json(s.succ);
                sum["claimsSmallest"] = s.claims_smallest;
                sum["merging"] = s.merging;
                sum["rangeLo"] = s.range_lo;
                sum["rangeHi"] = s.range_hi;
                Json guests = Json::array();
                for (const auto& [g, d] : s.guests)
                    guests.push_back(Json{{"id", g},
                                          {"lastWave", d.last_wave},
                                          {"fingerCount", d.finger_count},
                                          {"links", links_to_json(d.links)}});
                sum["guests"] = guests;
                out["summary"] = sum;
            } else if constexpr (std::is_same_v<T, PifDown>) {
                out["label"] = label_to_json(v.label);
                out["parentGuest"] = v.parent_guest;
                out["childGuest"] = v.child_guest;
                out["leaderRole"] = v.leader_role;
            } else if constexpr (std::is_same_v<T, PifUp>) {
                out["label"] = label_to_json(v.label);
                out["childGuest"] = v.child_guest;
                out["parentGuest"] = v.parent_guest;
                out["payload"] = payload_feedback_to_json(v.payload);
            } else if constexpr (std::is_same_v<T, CommitFlip>) {
                out["target"] = phase_tag(v.target);
                out["flipIn"] = v.flip_in;
                out["parentGuest"] = v.parent_guest;
                out["childGuest"] = v.child_guest;
            } else if constexpr (std::is_same_v<T, RecordFinger>) {
                out["forGuest"] = v.for_guest;
                out["k"] = v.k;
                out["other"] = v.other;
                out["otherHost"] = v.other_host;
                out["reverse"] = v.reverse;
                out["witness"] = opt_to_json(v.witness);
            } else if constexpr (std::is_same_v<T, MatchRequest>) {
                out["stage"] = static_cast<int>(v.stage);
                out["atGuest"] = v.at_guest;
                out["targetCluster"] = v.target_cluster;
                out["followerCluster"] = v.follower_cluster;
                out["followerRoot"] = v.follower_root;
                out["edgeMinted"] = v.edge_minted;
            } else if constexpr (std::is_same_v<T, MatchDecline>) {
                out["followerCluster"] = v.follower_cluster;
                out["followerRoot"] = v.follower_root;
            } else if constexpr (std::is_same_v<T, MergeStart>) {
                out["partnerRoot"] = v.partner_root;
                out["partnerCluster"] = v.partner_cluster;
            } else if constexpr (std::is_same_v<T, MergePair>) {
                out["guest"] = v.guest;
                out["level"] = v.level;
                out["leftChildHost"] = opt_to_json(v.left_child_host);
                out["rightChildHost"] = opt_to_json(v.right_child_host);
                out["newClusterId"] = v.new_cluster_id;
            } else if constexpr (std::is_same_v<T, MergeDescend>) {
                out["guest"] = v.guest;
                out["level"] = v.level;
                out["partnerHost"] = v.partner_host;
                out["witness"] = v.witness;
                out["newClusterId"] = v.new_cluster_id;
                out["parentGuest"] = v.parent_guest;
                out["parentOwner"] = v.parent_owner;
            } else if constexpr (std::is_same_v<T, LinkUpdate>) {
                out["parentGuest"] = v.parent_guest;
                out["childGuest"] = v.child_guest;
                out["childOwner"] = v.child_owner;
            }
        },
        p);
    return out;
}

Payload payload_from_json(const Json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "announce") {
        Announce a;
        const Json& sum = j.at("summary");
        a.summary.id = sum.at("id").get<HostId>();
        a.summary.phase = phase_from(sum.at("phase").get<std::string>());
        a.summary.cluster_id = sum.at("clusterId").get<std::int32_t>();
        a.summary.succ = opt_from_json(sum.at("succ"));
        a.summary.claims_smallest = sum.at("claimsSmallest").get<bool>();
        a.summary.merging = sum.at("merging").get<bool>();
        a.summary.range_lo = sum.at("rangeLo").get<std::int32_t>();
        a.summary.range_hi = sum.at("rangeHi").get<std::int32_t>();
        for (const Json& g : sum.at("guests")) {
            GuestDigest d;
            d.last_wave = g.at("lastWave").get<std::int32_t>();
            d.finger_count = g.at("fingerCount").get<std::int32_t>();
            d.links = links_from_json(g.at("links"));
            a.summary.guests[g.at("id").get<GuestId>()] = d;
        }
        return a;
    }
    if (kind == "pif_down")
        return PifDown{label_from_json(j.at("label")), j.at("parentGuest").get<GuestId>(),
                       j.at("childGuest").get<GuestId>(), j.at("leaderRole").get<bool>()};
    if (kind == "pif_up")
        return PifUp{label_from_json(j.at("label")), j.at("childGuest").get<GuestId>(),
                     j.at("parentGuest").get<GuestId>(), feedback_from_json(j.at("payload"))};
    if (kind == "commit_flip")
        return CommitFlip{phase_from(j.at("target").get<std::string>()),
                          j.at("flipIn").get<std::int32_t>(), j.at("parentGuest").get<GuestId>(),
                          j.at("childGuest").get<GuestId>()};
    if (kind == "record_finger")
        return RecordFinger{j.at("forGuest").get<GuestId>(),  j.at("k").get<std::int32_t>(),
                            j.at("other").get<GuestId>(),     j.at("otherHost").get<HostId>(),
                            j.at("reverse").get<bool>(),      opt_from_json(j.at("witness"))};
    if (kind == "match_request")
        return MatchRequest{static_cast<MatchStage>(j.at("stage").get<int>()),
                            j.at("atGuest").get<GuestId>(),
                            j.at("targetCluster").get<std::int32_t>(),
                            j.at("followerCluster").get<std::int32_t>(),
                            j.at("followerRoot").get<HostId>(),
                            j.at("edgeMinted").get<bool>()};
    if (kind == "match_decline")
        return MatchDecline{j.at("followerCluster").get<std::int32_t>(),
                            j.at("followerRoot").get<HostId>()};
    if (kind == "merge_start")
        return MergeStart{j.at("partnerRoot").get<HostId>(),
                          j.at("partnerCluster").get<std::int32_t>()};
    if (kind == "merge_pair") {
        MergePair p;
        p.guest = j.at("guest").get<GuestId>();
        p.level = j.at("level").get<std::int32_t>();
        p.left_child_host = opt_from_json(j.at("leftChildHost"));
        p.right_child_host = opt_from_json(j.at("rightChildHost"));
        p.new_cluster_id = j.at("newClusterId").get<std::int32_t>();
        return p;
    }
    if (kind == "merge_descend")
        return MergeDescend{j.at("guest").get<GuestId>(),      j.at("level").get<std::int32_t>(),
                            j.at("partnerHost").get<HostId>(), j.at("witness").get<HostId>(),
                            j.at("newClusterId").get<std::int32_t>(),
                            j.at("parentGuest").get<GuestId>(), j.at("parentOwner").get<HostId>()};
    if (kind == "link_update")
        return LinkUpdate{j.at("parentGuest").get<GuestId>(), j.at("childGuest").get<GuestId>(),
                          j.at("childOwner").get<HostId>()};
    throw std::invalid_argument("snapshot: unknown payload kind " + kind);
}

Json guest_to_json(const GuestState& g) {
    Json out;
    out["id"] = g.id;
    out["treeLinks"] = Json{{"parent", opt_link_to_json(g.parent)},
                            {"left", opt_link_to_json(g.left)},
                            {"right", opt_link_to_json(g.right)}};
    out["fingerLinks"] = links_to_json(g.fingers);
    out["reverseFingerLinks"] = links_to_json(g.reverse_fingers);
    out["lastWave"] = g.last_wave;
    if (g.active_wave) {
        out["wave"] = Json{{"label", label_to_json(*g.active_wave)},
                           {"leftAcked", g.left_acked},
                           {"rightAcked", g.right_acked},
                           {"gathered", payload_feedback_to_json(g.gathered)}};
    }
    return out;
}

GuestState guest_from_json(const Json& j) {
    GuestState g;
    g.id = j.at("id").get<GuestId>();
    const Json& tl = j.at("treeLinks");
    g.parent = opt_link_from_json(tl.at("parent"));
    g.left = opt_link_from_json(tl.at("left"));
    g.right = opt_link_from_json(tl.at("right"));
    g.fingers = links_from_json(j.at("fingerLinks"));
    g.reverse_fingers = links_from_json(j.at("reverseFingerLinks"));
    g.last_wave = j.at("lastWave").get<std::int32_t>();
    if (j.contains("wave")) {
        const Json& w = j.at("wave");
        g.active_wave = label_from_json(w.at("label"));
        g.left_acked = w.at("leftAcked").get<bool>();
        g.right_acked = w.at("rightAcked").get<bool>();
        g.gathered = feedback_from_json(w.at("gathered"));
    }
    return g;
}

Json host_to_json(const HostState& s) {
    Json out;
    out["id"] = s.id;
    out["phase"] = phase_tag(s.phase);
    out["successor"] = opt_to_json(s.succ);
    Json guests = Json::array();
    for (const auto& [g, gs] : s.guests) guests.push_back(guest_to_json(gs));
    out["guests"] = guests;

    Json prot;
    prot["prevPhase"] = phase_tag(s.prev_phase);
    prot["claimsSmallest"] = s.claims_smallest;
    prot["clusterId"] = s.cluster_id;
    prot["dirty"] = s.dirty;
    prot["rootWave"] = s.root_wave ? label_to_json(*s.root_wave) : Json(nullptr);
    prot["donePrepared"] = s.done_prepared;
    prot["waveHoldUntil"] = s.wave_hold_until;
    prot["flipRound"] = s.flip_round ? Json(*s.flip_round) : Json(nullptr);
    prot["flipTarget"] = phase_tag(s.flip_target);
    Json temps = Json::array();
    for (const auto& [h, when] : s.temp_edges) temps.push_back(Json::array({h, when}));
    prot["tempEdges"] = temps;
    Json due = Json::array();
    for (const DueEvent& ev : s.due)
        due.push_back(Json{{"round", ev.round}, {"payload", payload_to_json(ev.payload)}});
    prot["due"] = due;
    Json deferred = Json::array();
    for (const DeferredSend& d : s.deferred)
        deferred.push_back(Json{{"round", d.round},
                                {"dst", d.dst},
                                {"payload", payload_to_json(d.payload)},
                                {"retries", d.retries}});
    prot["deferred"] = deferred;
    prot["role"] = static_cast<int>(s.role);
    prot["nextPollRound"] = s.next_poll_round;
    prot["pollEpoch"] = s.poll_epoch;
    Json route = Json::array();
    for (const auto& [g, dir] : s.poll_route) route.push_back(Json::array({g, dir}));
    prot["pollRoute"] = route;
    prot["pollMinForeign"] = s.poll_min_foreign ? Json(*s.poll_min_foreign) : Json(nullptr);
    prot["pollVia"] = opt_to_json(s.poll_via);
    Json pending = Json::array();
    for (const PendingRequest& r : s.pending_requests)
        pending.push_back(Json::array({r.follower_cluster, r.follower_root}));
    prot["pendingRequests"] = pending;
    prot["matchPhase"] = static_cast<int>(s.match_phase);
    prot["matchDeadline"] = s.match_deadline;
    Json merge;
    merge["active"] = s.merge.active;
    merge["otherCluster"] = s.merge.other_cluster;
    merge["newClusterId"] = s.merge.new_cluster_id;
    merge["endRound"] = s.merge.end_round;
    Json tasks = Json::array();
    for (const auto& [g, t] : s.merge.tasks)
        tasks.push_back(Json{{"guest", t.guest},
                             {"level", t.level},
                             {"partnerHost", t.partner_host},
                             {"pairSent", t.pair_sent}});
    merge["tasks"] = tasks;
    prot["merge"] = merge;
    Json sweeps = Json::array();
    for (const auto& [h, r] : s.sweep_since) sweeps.push_back(Json::array({h, r}));
    prot["sweepSince"] = sweeps;
    prot["faultFlag"] = s.fault_flag;
    Json cache = Json::array();
    for (const auto& [h, c] : s.cache) {
        Json entry;
        entry["from"] = h;
        entry["receivedRound"] = c.received_round;
        entry["summary"] = payload_to_json(Announce{c.summary})["summary"];
        cache.push_back(entry);
    }
    prot["cache"] = cache;
    out["protocol"] = prot;
    return out;
}

HostState host_from_json(const Json& j) {
    HostState s;
    s.id = j.at("id").get<HostId>();
    s.phase = phase_from(j.at("phase").get<std::string>());
    s.succ = opt_from_json(j.at("successor"));
    for (const Json& g : j.at("guests")) {
        GuestState gs = guest_from_json(g);
        s.guests[gs.id] = gs;
    }
    const Json& prot = j.at("protocol");
    s.prev_phase = phase_from(prot.at("prevPhase").get<std::string>());
    s.claims_smallest = prot.at("claimsSmallest").get<bool>();
    s.cluster_id = prot.at("clusterId").get<std::int32_t>();
    s.dirty = prot.at("dirty").get<bool>();
    if (!prot.at("rootWave").is_null()) s.root_wave = label_from_json(prot.at("rootWave"));
    s.done_prepared = prot.at("donePrepared").get<bool>();
    s.wave_hold_until = prot.at("waveHoldUntil").get<std::int64_t>();
    if (!prot.at("flipRound").is_null()) s.flip_round = prot.at("flipRound").get<std::int64_t>();
    s.flip_target = phase_from(prot.at("flipTarget").get<std::string>());
    for (const Json& t : prot.at("tempEdges"))
        s.temp_edges[t.at(0).get<HostId>()] = t.at(1).get<std::int64_t>();
    for (const Json& d : prot.at("due"))
        s.due.push_back(DueEvent{d.at("round").get<std::int64_t>(), payload_from_json(d.at("payload"))});
    for (const Json& d : prot.at("deferred"))
        s.deferred.push_back(DeferredSend{d.at("round").get<std::int64_t>(),
                                          d.at("dst").get<HostId>(),
                                          payload_from_json(d.at("payload")),
                                          d.at("retries").get<std::int32_t>()});
    s.role = static_cast<ClusterRole>(prot.at("role").get<int>());
    s.next_poll_round = prot.at("nextPollRound").get<std::int64_t>();
    s.poll_epoch = prot.at("pollEpoch").get<std::int32_t>();
    for (const Json& r : prot.at("pollRoute"))
        s.poll_route[r.at(0).get<GuestId>()] = r.at(1).get<std::int32_t>();
    if (!prot.at("pollMinForeign").is_null())
        s.poll_min_foreign = prot.at("pollMinForeign").get<std::int32_t>();
    s.poll_via = opt_from_json(prot.at("pollVia"));
    for (const Json& p : prot.at("pendingRequests"))
        s.pending_requests.push_back(
            PendingRequest{p.at(0).get<std::int32_t>(), p.at(1).get<HostId>()});
    s.match_phase = static_cast<MatchPhase>(prot.at("matchPhase").get<int>());
    s.match_deadline = prot.at("matchDeadline").get<std::int64_t>();
    const Json& merge = prot.at("merge");
    s.merge.active = merge.at("active").get<bool>();
    s.merge.other_cluster = merge.at("otherCluster").get<std::int32_t>();
    s.merge.new_cluster_id = merge.at("newClusterId").get<std::int32_t>();
    s.merge.end_round = merge.at("endRound").get<std::int64_t>();
    for (const Json& t : merge.at("tasks")) {
        MergeTask task{t.at("guest").get<GuestId>(), t.at("level").get<std::int32_t>(),
                       t.at("partnerHost").get<HostId>(), t.at("pairSent").get<bool>()};
        s.merge.tasks[task.guest] = task;
    }
    for (const Json& w : prot.at("sweepSince"))
        s.sweep_since[w.at(0).get<HostId>()] = w.at(1).get<std::int64_t>();
    s.fault_flag = prot.at("faultFlag").get<bool>();
    for (const Json& c : prot.at("cache")) {
        Json wrapped;
        wrapped["kind"] = "announce";
        wrapped["summary"] = c.at("summary");
        Announce ann = std::get<Announce>(payload_from_json(wrapped));
        s.cache[c.at("from").get<HostId>()] =
            CachedSummary{ann.summary, c.at("receivedRound").get<std::int64_t>()};
    }
    return s;
}

}  // namespace

std::string snapshot(const Configuration& config) {
    Json out;
    out["version"] = config.version;
    out["N"] = config.n_guests;
    out["includeHalfRing"] = config.include_half_ring;
    out["round"] = config.round;
    out["seed"] = config.seed;
    Json hosts = Json::array();
    for (const auto& [h, s] : config.hosts) hosts.push_back(host_to_json(s));
    out["hosts"] = hosts;
    Json edges = Json::array();
    for (const EdgeKey& e : config.host_graph) edges.push_back(Json::array({e.a, e.b}));
    out["hostEdges"] = edges;
    Json msgs = Json::array();
    for (const Message& m : config.in_flight)
        msgs.push_back(Json{{"src", m.src}, {"dst", m.dst}, {"payload", payload_to_json(m.payload)}});
    out["inFlight"] = msgs;
    return out.dump(2);
}

Configuration load_snapshot(const std::string& text) {
    Json j = Json::parse(text);
    Configuration config;
    config.version = j.at("version").get<std::int32_t>();
    config.n_guests = j.at("N").get<std::int32_t>();
    config.include_half_ring = j.value("includeHalfRing", false);
    config.round = j.at("round").get<std::int64_t>();
    config.seed = j.at("seed").get<std::uint64_t>();
    for (const Json& h : j.at("hosts")) {
        HostState s = host_from_json(h);
        config.hosts[s.id] = s;
    }
    for (const Json& e : j.at("hostEdges"))
        config.host_graph.insert(EdgeKey(e.at(0).get<HostId>(), e.at(1).get<HostId>()));
    for (const Json& m : j.at("inFlight"))
        config.in_flight.push_back(Message{m.at("src").get<HostId>(), m.at("dst").get<HostId>(),
                                           payload_from_json(m.at("payload"))});
    return config;
}

}  // namespace avatar
