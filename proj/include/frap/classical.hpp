#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "frap/simulator.hpp"

namespace frap {

inline constexpr double kMinGreen = 5.0;

struct PlanEntry {
    int phase = 0;
    double green = 0;  // seconds
};

/// Ordered cycle of (phase, green duration).
struct FixedPlan {
    std::vector<PlanEntry> entries;

    double total_green() const;
    void validate(const PhaseTable& table) const;
};

/// Cycles through a plan regardless of the observed state. Each entry is held
/// for round((green + clearance) / decision_interval) decisions (at least
/// one), since the simulator charges clearance inside the first interval.
class FixedTimeController final : public Controller {
public:
    FixedTimeController(FixedPlan plan, const PhaseTable& table, int decision_interval, int clearance);

    void reset() override { decisions_ = 0; }
    int decide(const TrafficState& state) override;

    /// Phase chosen at the k-th decision of an episode.
    int phase_at(std::int64_t decision) const;
    const FixedPlan& plan() const { return plan_; }

private:
    FixedPlan plan_;
    std::vector<int> schedule_;  // phase per decision slot within one cycle
    std::int64_t decisions_ = 0;
};

/// Phases a plan cycles through: the 4-phase set on 4-approach tables,
/// every active phase otherwise.
std::vector<int> default_plan_phases(const PhaseTable& table);

FixedPlan equal_split_plan(const std::vector<int>& phases, double cycle, double clearance);

struct GridSearchResult {
    FixedPlan plan;
    double cycle = 0;
    double score = 0;
    std::vector<std::pair<double, double>> evaluated;  // (cycle, score)
};

/// Evaluates an equal-split plan for every candidate cycle length and keeps
/// the one with the lowest censored travel time on the calibration flow.
GridSearchResult grid_search_fixedtime(const std::vector<double>& cycles, const SimConfig& config,
                                       const PhaseTable& table, GridShape shape, const FlowSchedule& flow,
                                       std::uint64_t seed = 0);

struct WebsterPlan {
    double cycle = 0;
    double lost_time = 0;
    double flow_ratio = 0;  // Y
    FixedPlan plan;
};

/// C = (1.5 L + 5) / (1 - Y), clamped to [20, 180]; Y >= 0.95 gives 180.
double webster_cycle(double lost_time, double flow_ratio);

/// Webster plan over `phases` from per-movement volumes (veh/h). Greens split
/// in proportion to each phase's critical (largest member) volume, with every
/// green at least kMinGreen; all-zero volumes give an equal split.
WebsterPlan formula_plan(const std::vector<double>& volumes, const PhaseTable& table, const std::vector<int>& phases,
                         const SimConfig& config);

struct SotlConfig {
    double theta = 4;   // vehicles waiting on red before a switch is considered
    int t_min = 20;     // s of green before a switch is allowed
};

/// Self-organizing threshold rule over queue counts.
class SotlController final : public Controller {
public:
    SotlController(SotlConfig cfg, const PhaseTable& table, int decision_interval);

    void reset() override;
    int decide(const TrafficState& state) override;

private:
    SotlConfig cfg_;
    std::vector<std::array<int, 2>> members_;
    std::vector<int> allowed_;
    int interval_;
    int last_phase_ = kClearancePhase;
    int elapsed_ = 0;
};

}  // namespace frap
