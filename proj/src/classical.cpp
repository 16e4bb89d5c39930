#include "frap/classical.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace frap {

double FixedPlan::total_green() const
{
    double s = 0;
    for (const PlanEntry& e : entries) s += e.green;
    return s;
}

void FixedPlan::validate(const PhaseTable& table) const
{
    if (entries.empty()) throw std::invalid_argument("fixed plan is empty");
    std::vector<int> seen;
    for (const PlanEntry& e : entries) {
        if (e.phase < 0 || e.phase >= table.num_phases() || !table.phase(e.phase).active)
            throw std::invalid_argument("fixed plan references invalid phase " + std::to_string(e.phase));
        if (e.green < kMinGreen - 1e-9) throw std::invalid_argument("fixed plan green below the minimum green");
        if (std::find(seen.begin(), seen.end(), e.phase) != seen.end())
            throw std::invalid_argument("fixed plan lists a phase twice");
        seen.push_back(e.phase);
    }
}

FixedTimeController::FixedTimeController(FixedPlan plan, const PhaseTable& table, int decision_interval, int clearance)
    : plan_(std::move(plan))
{
    plan_.validate(table);
    if (decision_interval <= 0) throw std::invalid_argument("decision interval must be positive");
    if (clearance < 0) throw std::invalid_argument("clearance must be non-negative");
    for (const PlanEntry& e : plan_.entries) {
        const long slots = std::max(1L, std::lround((e.green + clearance) / decision_interval));
        for (long i = 0; i < slots; ++i) schedule_.push_back(e.phase);
    }
}

int FixedTimeController::phase_at(std::int64_t decision) const
{
    return schedule_[static_cast<std::size_t>(decision % static_cast<std::int64_t>(schedule_.size()))];
}

int FixedTimeController::decide(const TrafficState&) { return phase_at(decisions_++); }

std::vector<int> default_plan_phases(const PhaseTable& table)
{
    if (table.n_approaches() == 4) return table.four_phase_indices();
    return table.active_phases();
}

FixedPlan equal_split_plan(const std::vector<int>& phases, double cycle, double clearance)
{
    if (phases.empty()) throw std::invalid_argument("no plan phases");
    const double n = static_cast<double>(phases.size());
    const double green = std::max(kMinGreen, (cycle - clearance * n) / n);
    FixedPlan plan;
    for (int p : phases) plan.entries.push_back(PlanEntry{p, green});
    return plan;
}

GridSearchResult grid_search_fixedtime(const std::vector<double>& cycles, const SimConfig& config,
                                       const PhaseTable& table, GridShape shape, const FlowSchedule& flow,
                                       std::uint64_t seed)
{
    if (cycles.empty()) throw std::invalid_argument("grid search needs at least one cycle length");
    const std::vector<int> phases = default_plan_phases(table);
    GridSearchResult best;
    bool have = false;
    for (double c : cycles) {
        FixedPlan plan = equal_split_plan(phases, c, config.clearance());
        std::vector<FixedTimeController> ctl;
        ctl.reserve(static_cast<std::size_t>(shape.size()));
        std::vector<Controller*> ptrs;
        for (int k = 0; k < shape.size(); ++k) {
            ctl.emplace_back(plan, table, config.decision_interval, config.clearance());
            ptrs.push_back(&ctl.back());
        }
        const EpisodeMetrics m = run_grid_controllers(ptrs, config, table, shape, flow, seed);
        best.evaluated.emplace_back(c, m.censored_travel_time);
        if (!have || m.censored_travel_time < best.score) {
            have = true;
            best.plan = plan;
            best.cycle = c;
            best.score = m.censored_travel_time;
        }
    }
    return best;
}

double webster_cycle(double lost_time, double flow_ratio)
{
    if (flow_ratio >= 0.95) return 180.0;
    const double c = (1.5 * lost_time + 5.0) / (1.0 - flow_ratio);
    return std::clamp(c, 20.0, 180.0);
}

WebsterPlan formula_plan(const std::vector<double>& volumes, const PhaseTable& table, const std::vector<int>& phases,
                         const SimConfig& config)
{
    if (static_cast<int>(volumes.size()) != table.num_movements())
        throw std::invalid_argument("one volume per movement expected");
    for (double v : volumes)
        if (!(v >= 0)) throw std::invalid_argument("volumes must be non-negative");
    if (phases.empty()) throw std::invalid_argument("no plan phases");

    const double saturation = 3600.0 / config.saturation_headway;
    const double n = static_cast<double>(phases.size());
    WebsterPlan w;
    w.lost_time = config.clearance() * n;

    std::vector<double> critical;
    double total = 0;
    for (int p : phases) {
        const Phase& ph = table.phase(p);
        const double c = std::max(volumes[static_cast<std::size_t>(ph.members[0])],
                                  volumes[static_cast<std::size_t>(ph.members[1])]);
        critical.push_back(c);
        total += c;
    }
    w.flow_ratio = total / saturation;
    w.cycle = webster_cycle(w.lost_time, w.flow_ratio);
    // Every phase needs at least the minimum green inside the cycle.
    w.cycle = std::max(w.cycle, w.lost_time + kMinGreen * n);
    const double green = w.cycle - w.lost_time;

    std::vector<double> split(phases.size(), green / n);
    if (total > 0) {
        // Proportional split; phases that fall under the minimum are pinned
        // there and the rest is re-divided among the others.
        std::vector<bool> pinned(phases.size(), false);
        for (bool changed = true; changed;) {
            changed = false;
            double free_green = green, free_volume = 0;
            for (std::size_t i = 0; i < phases.size(); ++i) {
                if (pinned[i])
                    free_green -= kMinGreen;
                else
                    free_volume += critical[i];
            }
            for (std::size_t i = 0; i < phases.size(); ++i) {
                if (pinned[i]) {
                    split[i] = kMinGreen;
                    continue;
                }
                split[i] = free_volume > 0 ? free_green * critical[i] / free_volume : kMinGreen;
            }
            for (std::size_t i = 0; i < phases.size(); ++i) {
                if (!pinned[i] && split[i] < kMinGreen) {
                    pinned[i] = true;
                    changed = true;
                }
            }
        }
    }
    for (std::size_t i = 0; i < phases.size(); ++i) w.plan.entries.push_back(PlanEntry{phases[i], split[i]});
    return w;
}

SotlController::SotlController(SotlConfig cfg, const PhaseTable& table, int decision_interval)
    : cfg_(cfg), allowed_(table.active_phases()), interval_(decision_interval)
{
    if (!(cfg_.theta > 0)) throw std::invalid_argument("SOTL theta must be positive");
    if (cfg_.t_min < decision_interval) throw std::invalid_argument("SOTL t_min must be at least one decision interval");
    for (const Phase& p : table.phases()) members_.push_back(p.members);
}

void SotlController::reset()
{
    last_phase_ = kClearancePhase;
    elapsed_ = 0;
}

int SotlController::decide(const TrafficState& s)
{
    if (s.phase_index != last_phase_) elapsed_ = 0;
    int choice = s.phase_index;
    if (choice < 0 || elapsed_ >= cfg_.t_min) {
        int waiting = 0;
        for (std::size_t i = 0; i < s.counts.size(); ++i)
            if (s.signal_bits[i] == 0) waiting += s.counts[i];
        if (choice < 0 || waiting > cfg_.theta) {
            int best = -1, best_sum = -1;
            for (int p : allowed_) {
                const auto& m = members_[static_cast<std::size_t>(p)];
                const int sum = s.counts[static_cast<std::size_t>(m[0])] + s.counts[static_cast<std::size_t>(m[1])];
                if (sum > best_sum) {
                    best = p;
                    best_sum = sum;
                }
            }
            choice = best;
        }
    }
    if (choice != s.phase_index)
        elapsed_ = interval_;
    else
        elapsed_ += interval_;
    last_phase_ = choice;
    return choice;
}

}  // namespace frap
