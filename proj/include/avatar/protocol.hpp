#pragma once

#include "avatar/engine.hpp"
#include "avatar/state.hpp"

namespace avatar {

// One-hop state summary as announced to neighbours.
HostSummary build_summary(const HostState& state, std::int32_t n_guests);

// The full per-round protocol: phase flips, state exchange, fault detection
// and phase selection, plus the phase-specific machinery (scaffold building,
// finger waves, done wave).
HostHandler protocol_handler();

}  // namespace avatar
