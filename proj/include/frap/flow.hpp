#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace frap {

struct RouteStep {
    int intersection = 0;
    int movement = 0;

    bool operator==(const RouteStep&) const = default;
};

struct FlowEvent {
    std::int64_t vehicle_id = 0;
    double entry_time = 0;  // seconds
    std::vector<RouteStep> route;

    bool operator==(const FlowEvent&) const = default;
};

/// Vehicle arrivals sorted by entry time.
struct FlowSchedule {
    std::vector<FlowEvent> events;

    bool operator==(const FlowSchedule&) const = default;

    /// 1 + the largest intersection id referenced (0 for an empty schedule).
    int max_intersections() const;
    bool single_intersection() const;
    /// Arrivals per hour on each first-hop movement of `intersection`.
    std::vector<double> movement_volumes(int intersection, int num_movements, double duration_s) const;
};

/// Reads `vehicle_id,entry_time,route` CSV. Rows are stable-sorted by entry
/// time. Throws std::runtime_error with the offending line number on
/// malformed input. When `num_movements` > 0, movement ids are range-checked.
FlowSchedule parse_flow_csv(const std::string& path, int num_movements = 0);
FlowSchedule parse_flow_csv(std::istream& in, const std::string& source, int num_movements = 0);

void write_flow_csv(const std::string& path, const FlowSchedule& flow);
void write_flow_csv(std::ostream& out, const FlowSchedule& flow);

/// Shortest float text with 6 significant digits, as used in every emitted CSV.
std::string format_real(double v);

/// Shortest text that parses back to exactly v; used for flow files.
std::string format_exact(double v);

enum class ArrivalProcess { Uniform, Poisson };

struct RateSegment {
    double start = 0;  // seconds
    double end = 0;
    std::vector<double> rates;  // veh/h per movement
};

/// Recipe for a synthetic single-intersection or corridor flow.
struct FlowSynthesisSpec {
    std::vector<double> rates;  // veh/h per movement, used when `segments` is empty
    ArrivalProcess process = ArrivalProcess::Poisson;
    double duration = 3600;
    std::vector<RateSegment> segments;  // optional time-varying rates; must tile [0, duration)
    int rows = 1;
    int cols = 1;

    void validate(int num_movements) const;
};

/// Poisson: exponential gaps per movement; uniform: evenly spaced arrivals
/// starting at the segment start. On grids, through movements that enter at
/// the boundary travel straight across the grid; everything else is one hop.
FlowSchedule synthesize_flow(const FlowSynthesisSpec& spec, std::uint64_t seed);

}  // namespace frap
