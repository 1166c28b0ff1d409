#include "avatar/wire.hpp"

namespace avatar {

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::Cbt: return "CBT";
        case Phase::Chord: return "CHORD";
        case Phase::Done: return "DONE";
    }
    return "?";
}

bool payload_equal(const Payload& a, const Payload& b) { return a == b; }

void intro_refs(const Payload& p, std::set<HostId>& out) {
    std::visit(
        [&out](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, PifUp>) {
                if (v.payload.ref_low) out.insert(*v.payload.ref_low);
                if (v.payload.ref_high) out.insert(*v.payload.ref_high);
            } else if constexpr (std::is_same_v<T, RecordFinger>) {
                if (v.witness) out.insert(v.other_host);
            } else if constexpr (std::is_same_v<T, MatchRequest>) {
                out.insert(v.follower_root);  // the forwarded edge
            } else if constexpr (std::is_same_v<T, MergePair>) {
                if (v.left_child_host) out.insert(*v.left_child_host);
                if (v.right_child_host) out.insert(*v.right_child_host);
            } else if constexpr (std::is_same_v<T, MergeDescend>) {
                out.insert(v.partner_host);  // the partner introduction
            }
        },
        p);
}

int intro_ref_count(const Payload& p) {
    std::set<HostId> refs;
    intro_refs(p, refs);
    return static_cast<int>(refs.size());
}

const char* payload_kind_name(const Payload& p) {
    return std::visit(
        [](const auto& v) -> const char* {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Announce>) return "announce";
            else if constexpr (std::is_same_v<T, PifDown>) return "pif_down";
            else if constexpr (std::is_same_v<T, PifUp>) return "pif_up";
            else if constexpr (std::is_same_v<T, CommitFlip>) return "commit_flip";
            else if constexpr (std::is_same_v<T, RecordFinger>) return "record_finger";
            else if constexpr (std::is_same_v<T, MatchRequest>) return "match_request";
            else if constexpr (std::is_same_v<T, MatchDecline>) return "match_decline";
            else if constexpr (std::is_same_v<T, MergeStart>) return "merge_start";
            else if constexpr (std::is_same_v<T, MergePair>) return "merge_pair";
            else if constexpr (std::is_same_v<T, MergeDescend>) return "merge_descend";
            else return "link_update";
        },
        p);
}

int payload_order(const Payload& p) {
    // Announces refresh caches before anything reads them; record/link writes
    // land before wave traffic that may depend on them.
    return std::visit(
        [](const auto& v) -> int {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Announce>) return 0;
            else if constexpr (std::is_same_v<T, RecordFinger>) return 1;
            else if constexpr (std::is_same_v<T, LinkUpdate>) return 1;
            else if constexpr (std::is_same_v<T, CommitFlip>) return 2;
            else if constexpr (std::is_same_v<T, MergeStart>) return 3;
            else if constexpr (std::is_same_v<T, MergeDescend>) return 3;
            else if constexpr (std::is_same_v<T, MergePair>) return 4;
            else if constexpr (std::is_same_v<T, MatchRequest>) return 5;
            else if constexpr (std::is_same_v<T, MatchDecline>) return 5;
            else if constexpr (std::is_same_v<T, PifDown>) return 6;
            else return 7;  // PifUp
        },
        p);
}

}  // namespace avatar
