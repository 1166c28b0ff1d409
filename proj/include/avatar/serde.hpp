#pragma once

#include <string>

#include "avatar/state.hpp"

namespace avatar {

// Round-trippable dump of a configuration. Stable key order so snapshots
// diff cleanly.
std::string snapshot(const Configuration& config);

Configuration load_snapshot(const std::string& text);

}  // namespace avatar
