#include "frap/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace frap {

namespace {

constexpr double kCreditEps = 1e-9;

// Side a vehicle leaves through: through keeps heading, left turns once.
int exit_side(const Movement& m) { return (m.approach + (m.turn == Turn::Through ? 2 : 1)) % 4; }

constexpr int kDRow[4] = {-1, 0, 1, 0};
constexpr int kDCol[4] = {0, 1, 0, -1};

}  // namespace

void SimConfig::validate() const
{
    if (!(approach_length > 0)) throw std::invalid_argument("approach_length must be positive");
    if (!(free_flow_speed > 0)) throw std::invalid_argument("free_flow_speed must be positive");
    if (!(saturation_headway > 0)) throw std::invalid_argument("saturation_headway must be positive");
    if (lane_capacity <= 0) throw std::invalid_argument("lane_capacity must be positive");
    if (yellow <= 0 || all_red <= 0) throw std::invalid_argument("yellow and all_red must be positive");
    if (decision_interval <= 0) throw std::invalid_argument("decision_interval must be positive");
    if (episode_length <= 0) throw std::invalid_argument("episode_length must be positive");
    if (yellow + all_red >= decision_interval)
        throw std::invalid_argument("yellow + all_red must be shorter than the decision interval");
}

nlohmann::json SimConfig::to_json() const
{
    return {{"approach_length", approach_length},
            {"free_flow_speed", free_flow_speed},
            {"saturation_headway", saturation_headway},
            {"lane_capacity", lane_capacity},
            {"yellow", yellow},
            {"all_red", all_red},
            {"decision_interval", decision_interval},
            {"episode_length", episode_length}};
}

SimConfig SimConfig::from_json(const nlohmann::json& j)
{
    SimConfig c;
    c.approach_length = j.value("approach_length", c.approach_length);
    c.free_flow_speed = j.value("free_flow_speed", c.free_flow_speed);
    c.saturation_headway = j.value("saturation_headway", c.saturation_headway);
    c.lane_capacity = j.value("lane_capacity", c.lane_capacity);
    c.yellow = j.value("yellow", c.yellow);
    c.all_red = j.value("all_red", c.all_red);
    c.decision_interval = j.value("decision_interval", c.decision_interval);
    c.episode_length = j.value("episode_length", c.episode_length);
    return c;
}

GridSimulator::GridSimulator(SimConfig config, PhaseTable table, GridShape shape, FlowSchedule flow)
    : config_(config), table_(std::move(table)), shape_(shape), flow_(std::move(flow))
{
    config_.validate();
    if (shape_.rows < 1 || shape_.cols < 1) throw std::invalid_argument("grid dimensions must be positive");
    if (shape_.size() > 1 && table_.ring_size() != 4)
        throw std::invalid_argument("grids are supported for the 4-slot ring only");
    if (table_.active_phases().empty()) throw std::invalid_argument("phase table has no active phase");
    validate_flow();
    reset(0);
}

void GridSimulator::validate_flow() const
{
    double last = -1;
    for (const FlowEvent& e : flow_.events) {
        const std::string who = "vehicle " + std::to_string(e.vehicle_id);
        if (e.entry_time < last) throw std::invalid_argument("flow events are not sorted by entry time");
        if (!(e.entry_time >= 0)) throw std::invalid_argument(who + ": negative entry time");
        last = e.entry_time;
        if (e.route.empty()) throw std::invalid_argument(who + ": empty route");
        for (std::size_t h = 0; h < e.route.size(); ++h) {
            const RouteStep& s = e.route[h];
            if (s.intersection < 0 || s.intersection >= shape_.size())
                throw std::invalid_argument(who + ": unknown intersection " + std::to_string(s.intersection));
            if (s.movement < 0 || s.movement >= table_.num_movements() || !table_.movement(s.movement).present)
                throw std::invalid_argument(who + ": unknown movement " + std::to_string(s.movement));
            if (h == 0) continue;
            const RouteStep& prev = e.route[h - 1];
            const int side = exit_side(table_.movement(prev.movement));
            const int r = prev.intersection / shape_.cols + kDRow[side];
            const int c = prev.intersection % shape_.cols + kDCol[side];
            const int expect_approach = (side + 2) % 4;
            if (r < 0 || c < 0 || r >= shape_.rows || c >= shape_.cols || r * shape_.cols + c != s.intersection ||
                table_.movement(s.movement).approach != expect_approach)
                throw std::invalid_argument(who + ": route hop " + std::to_string(h) + " is not reachable from the previous hop");
        }
    }
}

std::vector<TrafficState> GridSimulator::reset(std::uint64_t seed)
{
    seed_ = seed;
    clock_ = 0;
    next_event_ = 0;
    exited_ = 0;
    lanes_.assign(static_cast<std::size_t>(shape_.size() * table_.num_movements()), Lane{});
    vehicles_.assign(flow_.events.size(), Vehicle{});
    records_.assign(flow_.events.size(), VehicleRecord{});
    for (std::size_t i = 0; i < flow_.events.size(); ++i) {
        records_[i].vehicle_id = flow_.events[i].vehicle_id;
        records_[i].entry = flow_.events[i].entry_time;
    }
    // Episodes start from all-red, which is symmetric under every relabelling.
    phase_.assign(static_cast<std::size_t>(shape_.size()), kClearancePhase);
    clearance_left_.assign(static_cast<std::size_t>(shape_.size()), 0);
    intervals_.clear();
    return observe();
}

GridSimulator::Lane& GridSimulator::lane(int intersection, int movement)
{
    return lanes_[static_cast<std::size_t>(intersection * table_.num_movements() + movement)];
}

const GridSimulator::Lane& GridSimulator::lane(int intersection, int movement) const
{
    return lanes_[static_cast<std::size_t>(intersection * table_.num_movements() + movement)];
}

void GridSimulator::enqueue_pending(int intersection, int movement, std::size_t vehicle, double join_time)
{
    vehicles_[vehicle].join_time = join_time;
    auto& pending = lane(intersection, movement).pending;
    auto it = std::upper_bound(pending.begin(), pending.end(), join_time,
                               [this](double t, std::size_t v) { return t < vehicles_[v].join_time; });
    pending.insert(it, vehicle);
}

GridStepResult GridSimulator::step(std::span<const int> actions)
{
    if (done()) throw std::logic_error("step called after the episode finished");
    if (static_cast<int>(actions.size()) != shape_.size())
        throw std::invalid_argument("expected " + std::to_string(shape_.size()) + " actions, got " +
                                    std::to_string(actions.size()));
    for (int a : actions)
        if (a < 0 || a >= table_.num_phases() || !table_.phase(a).active)
            throw std::invalid_argument("invalid phase index " + std::to_string(a));

    for (std::size_t k = 0; k < actions.size(); ++k) {
        if (actions[k] != phase_[k]) {
            // Leaving all-red needs no yellow.
            clearance_left_[k] = phase_[k] == kClearancePhase ? 0 : config_.clearance();
            phase_[k] = actions[k];
        }
    }
    for (int s = 0; s < config_.decision_interval; ++s) micro_step();

    GridStepResult r;
    r.states = observe();
    IntervalRecord rec;
    rec.t = clock_;
    rec.phases = phase_;
    for (const TrafficState& st : r.states) {
        double sum = 0;
        int present = 0;
        for (int m = 0; m < table_.num_movements(); ++m) {
            if (!table_.movement(m).present) continue;
            sum += st.counts[static_cast<std::size_t>(m)];
            ++present;
        }
        // Agents maximise return, so the mean queue enters with a negative sign.
        r.rewards.push_back(present ? -sum / present : 0.0);
        rec.queues.push_back(st.counts);
    }
    rec.rewards = r.rewards;
    intervals_.push_back(std::move(rec));
    r.done = done();
    return r;
}

void GridSimulator::micro_step()
{
    const int t = clock_;
    const double link = config_.link_time();
    const std::size_t cap = static_cast<std::size_t>(config_.lane_capacity);

    while (next_event_ < flow_.events.size() && flow_.events[next_event_].entry_time <= t) {
        const FlowEvent& e = flow_.events[next_event_];
        enqueue_pending(e.route.front().intersection, e.route.front().movement, next_event_, e.entry_time + link);
        ++next_event_;
    }

    for (Lane& l : lanes_) {
        while (!l.pending.empty() && vehicles_[l.pending.front()].join_time <= t && l.queue.size() < cap) {
            const std::size_t v = l.pending.front();
            l.pending.pop_front();
            l.queue.push_back(v);
            if (records_[v].queue_join < 0) records_[v].queue_join = t;
        }
    }

    const double rate = 1.0 / config_.saturation_headway;
    for (int k = 0; k < shape_.size(); ++k) {
        const bool green = clearance_left_[static_cast<std::size_t>(k)] == 0;
        for (int m = 0; m < table_.num_movements(); ++m) {
            Lane& l = lane(k, m);
            if (!green || !table_.phase(phase_[static_cast<std::size_t>(k)]).contains(m)) {
                l.credit = 0;
                continue;
            }
            l.credit += rate;
            while (l.credit >= 1 - kCreditEps && !l.queue.empty()) {
                const std::size_t v = l.queue.front();
                l.queue.pop_front();
                l.credit -= 1;
                const auto& route = flow_.events[v].route;
                Vehicle& veh = vehicles_[v];
                ++veh.hop;
                if (veh.hop >= route.size()) {
                    records_[v].exit = t + 1;
                    ++exited_;
                } else {
                    enqueue_pending(route[veh.hop].intersection, route[veh.hop].movement, v, t + 1 + link);
                }
            }
            if (l.queue.empty()) l.credit = 0;
        }
        if (!green) --clearance_left_[static_cast<std::size_t>(k)];
    }

    ++clock_;
    if (observer_) observer_(*this);
}

Census GridSimulator::census() const
{
    Census c;
    c.entered = static_cast<std::int64_t>(next_event_);
    c.exited = exited_;
    for (const Lane& l : lanes_) {
        c.in_queue += static_cast<std::int64_t>(l.queue.size());
        for (std::size_t v : l.pending) {
            if (std::ceil(vehicles_[v].join_time) < clock_)
                ++c.upstream_waiting;
            else
                ++c.on_approach;
        }
    }
    return c;
}

std::vector<TrafficState> GridSimulator::observe() const
{
    std::vector<TrafficState> out(static_cast<std::size_t>(shape_.size()));
    for (int k = 0; k < shape_.size(); ++k) {
        TrafficState& s = out[static_cast<std::size_t>(k)];
        const int p = phase_[static_cast<std::size_t>(k)];
        s.counts.resize(static_cast<std::size_t>(table_.num_movements()));
        for (int m = 0; m < table_.num_movements(); ++m)
            s.counts[static_cast<std::size_t>(m)] = static_cast<int>(lane(k, m).queue.size());
        s.signal_bits = p == kClearancePhase ? std::vector<int>(static_cast<std::size_t>(table_.num_movements()), 0)
                                             : table_.phase_bits(p);
        s.phase_index = p;
    }
    return out;
}

EpisodeMetrics GridSimulator::metrics() const
{
    EpisodeMetrics m;
    m.vehicles.assign(records_.begin(), records_.begin() + static_cast<std::ptrdiff_t>(next_event_));
    m.intervals = intervals_;
    double total = 0, censored = 0;
    for (const VehicleRecord& r : m.vehicles) {
        if (r.exited()) {
            total += r.exit - r.entry;
            censored += r.exit - r.entry;
            ++m.exited_count;
        } else {
            censored += clock_ - r.entry;
            ++m.in_network_count;
        }
    }
    m.avg_travel_time = m.exited_count ? total / static_cast<double>(m.exited_count) : 0.0;
    m.censored_travel_time = m.vehicles.empty() ? 0.0 : censored / static_cast<double>(m.vehicles.size());
    return m;
}

void EpisodeMetrics::write_vehicles_csv(std::ostream& out) const
{
    out << "vehicle_id,entry,queue_join,exit\n";
    for (const VehicleRecord& r : vehicles) {
        out << r.vehicle_id << ',' << format_real(r.entry) << ',';
        if (r.queue_join >= 0) out << format_real(r.queue_join);
        out << ',';
        if (r.exited()) out << format_real(r.exit);
        out << '\n';
    }
}

void EpisodeMetrics::write_intervals_csv(std::ostream& out, int intersection) const
{
    const auto k = static_cast<std::size_t>(intersection);
    std::size_t movements = 0;
    for (const IntervalRecord& r : intervals)
        if (k < r.queues.size()) movements = std::max(movements, r.queues[k].size());
    out << "t,phase,reward";
    for (std::size_t i = 0; i < movements; ++i) out << ",q" << i;
    out << '\n';
    for (const IntervalRecord& r : intervals) {
        if (k >= r.phases.size()) throw std::out_of_range("intersection index out of range");
        out << r.t << ',' << r.phases[k] << ',' << format_real(r.rewards[k]);
        for (int q : r.queues[k]) out << ',' << q;
        out << '\n';
    }
}

Simulator::Simulator(SimConfig config, PhaseTable table, FlowSchedule flow)
    : grid_(config, std::move(table), GridShape{1, 1}, std::move(flow))
{
}

TrafficState Simulator::reset(std::uint64_t seed) { return grid_.reset(seed).front(); }

StepResult Simulator::step(int action)
{
    GridStepResult r = grid_.step(std::span<const int>(&action, 1));
    return StepResult{std::move(r.states.front()), r.rewards.front(), r.done};
}

int ConjugatedController::decide(const TrafficState& state)
{
    const int a = inner_.decide(apply_symmetry(inv_, state));
    return op_.phase_perm.at(static_cast<std::size_t>(a));
}

EpisodeMetrics run_controller(Controller& controller, const SimConfig& config, const PhaseTable& table,
                              const FlowSchedule& flow, std::uint64_t seed)
{
    Controller* one[] = {&controller};
    return run_grid_controllers(one, config, table, GridShape{1, 1}, flow, seed);
}

EpisodeMetrics run_grid_controllers(std::span<Controller* const> controllers, const SimConfig& config,
                                    const PhaseTable& table, GridShape shape, const FlowSchedule& flow, std::uint64_t seed)
{
    if (static_cast<int>(controllers.size()) != shape.size())
        throw std::invalid_argument("need one controller per intersection");
    GridSimulator sim(config, table, shape, flow);
    std::vector<TrafficState> states = sim.reset(seed);
    for (Controller* c : controllers) c->reset();
    std::vector<int> actions(controllers.size());
    while (!sim.done()) {
        for (std::size_t k = 0; k < controllers.size(); ++k) actions[k] = controllers[k]->decide(states[k]);
        states = sim.step(actions).states;
    }
    return sim.metrics();
}

FlowSchedule mirror_flow(const SymmetryOp& op, const FlowSchedule& flow)
{
    if (!flow.single_intersection()) throw std::invalid_argument("mirror_flow supports single-intersection flows only");
    FlowSchedule out = flow;
    for (FlowEvent& e : out.events) {
        for (RouteStep& s : e.route) {
            if (s.movement < 0 || static_cast<std::size_t>(s.movement) >= op.movement_perm.size())
                throw std::invalid_argument("flow movement outside the symmetry's movement set");
            s.movement = op.movement_perm[static_cast<std::size_t>(s.movement)];
        }
    }
    return out;
}

}  // namespace frap
