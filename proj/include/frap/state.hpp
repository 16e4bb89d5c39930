#pragma once

#include <vector>

namespace frap {

inline constexpr int kClearancePhase = -1;

/// Observation of one intersection at a decision instant.
struct TrafficState {
    std::vector<int> counts;       // queued vehicles per movement
    std::vector<int> signal_bits;  // 1 = green
    int phase_index = kClearancePhase;

    bool operator==(const TrafficState&) const = default;
};

}  // namespace frap
