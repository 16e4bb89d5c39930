#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "frap/flow.hpp"
#include "frap/state.hpp"
#include "frap/topology.hpp"

namespace frap {

struct SimConfig {
    double approach_length = 300;     // m
    double free_flow_speed = 10;      // m/s
    double saturation_headway = 2.0;  // s per vehicle per movement
    int lane_capacity = 40;           // vehicles per movement queue
    int yellow = 3;                   // s
    int all_red = 2;                  // s
    int decision_interval = 10;       // s
    int episode_length = 3600;        // s

    void validate() const;
    double link_time() const { return approach_length / free_flow_speed; }
    int clearance() const { return yellow + all_red; }

    nlohmann::json to_json() const;
    static SimConfig from_json(const nlohmann::json& j);
};

struct GridShape {
    int rows = 1;
    int cols = 1;

    int size() const { return rows * cols; }
};

/// Vehicle counts by location; `entered` must equal the sum of the rest.
struct Census {
    std::int64_t entered = 0;
    std::int64_t exited = 0;
    std::int64_t in_queue = 0;
    std::int64_t on_approach = 0;
    std::int64_t upstream_waiting = 0;

    bool conserved() const { return entered == exited + in_queue + on_approach + upstream_waiting; }
};

struct VehicleRecord {
    std::int64_t vehicle_id = 0;
    double entry = 0;
    double queue_join = -1;  // first time the vehicle joined a queue, -1 if never
    double exit = -1;        // -1 while still in the network

    bool exited() const { return exit >= 0; }
};

struct IntervalRecord {
    int t = 0;  // clock at the end of the interval
    std::vector<int> phases;
    std::vector<double> rewards;
    std::vector<std::vector<int>> queues;
};

struct EpisodeMetrics {
    double avg_travel_time = 0;       // over exited vehicles only
    std::int64_t exited_count = 0;
    std::int64_t in_network_count = 0;
    /// Mean over all entered vehicles, with unfinished trips cut at the episode end.
    double censored_travel_time = 0;
    std::vector<VehicleRecord> vehicles;
    std::vector<IntervalRecord> intervals;

    void write_vehicles_csv(std::ostream& out) const;
    /// `t,phase,reward,q0..qM` rows for one intersection.
    void write_intervals_csv(std::ostream& out, int intersection = 0) const;
};

struct GridStepResult {
    std::vector<TrafficState> states;
    std::vector<double> rewards;
    bool done = false;
};

/// Point-queue simulator for a rows x cols grid of identical intersections.
///
/// Time advances in 1 s micro-steps. A vehicle spends approach_length /
/// free_flow_speed on each link, then joins the queue of its movement if the
/// queue holds fewer than lane_capacity vehicles (otherwise it waits on the
/// link). Green movements discharge one vehicle per saturation_headway
/// seconds; the fractional discharge credit resets whenever the movement is
/// red or its queue empties. A phase change costs yellow + all_red seconds of
/// no discharge at the start of the decision interval. Episodes start from
/// all-red (phase kClearancePhase); the first phase needs no clearance.
///
/// The model has no stochastic elements: the trajectory is a pure function of
/// (config, flow, actions). The seed is kept for interface symmetry with
/// stochastic environments.
class GridSimulator {
public:
    GridSimulator(SimConfig config, PhaseTable table, GridShape shape, FlowSchedule flow);

    std::vector<TrafficState> reset(std::uint64_t seed = 0);
    GridStepResult step(std::span<const int> actions);

    int clock() const { return clock_; }
    bool done() const { return clock_ >= config_.episode_length; }
    int num_intersections() const { return shape_.size(); }
    const SimConfig& config() const { return config_; }
    const PhaseTable& table() const { return table_; }
    const GridShape& shape() const { return shape_; }
    const FlowSchedule& flow() const { return flow_; }

    Census census() const;
    std::vector<TrafficState> observe() const;
    EpisodeMetrics metrics() const;

    /// Called after every 1 s micro-step.
    void set_micro_step_observer(std::function<void(const GridSimulator&)> fn) { observer_ = std::move(fn); }

private:
    struct Lane {
        std::deque<std::size_t> queue;    // vehicle indices, FIFO
        std::deque<std::size_t> pending;  // on the link, ordered by join time
        double credit = 0;
    };
    struct Vehicle {
        std::size_t hop = 0;
        double join_time = 0;
    };

    void validate_flow() const;
    void micro_step();
    void enqueue_pending(int intersection, int movement, std::size_t vehicle, double join_time);
    Lane& lane(int intersection, int movement);
    const Lane& lane(int intersection, int movement) const;

    SimConfig config_;
    PhaseTable table_;
    GridShape shape_;
    FlowSchedule flow_;
    std::uint64_t seed_ = 0;

    int clock_ = 0;
    std::size_t next_event_ = 0;
    std::int64_t exited_ = 0;
    std::vector<Lane> lanes_;
    std::vector<Vehicle> vehicles_;
    std::vector<VehicleRecord> records_;
    std::vector<int> phase_;
    std::vector<int> clearance_left_;
    std::vector<IntervalRecord> intervals_;
    std::function<void(const GridSimulator&)> observer_;
};

struct StepResult {
    TrafficState state;
    double reward = 0;
    bool done = false;
};

/// Single-intersection view over a 1x1 grid.
class Simulator {
public:
    Simulator(SimConfig config, PhaseTable table, FlowSchedule flow);

    TrafficState reset(std::uint64_t seed = 0);
    StepResult step(int action);

    GridSimulator& grid() { return grid_; }
    const GridSimulator& grid() const { return grid_; }
    bool done() const { return grid_.done(); }
    int clock() const { return grid_.clock(); }
    EpisodeMetrics metrics() const { return grid_.metrics(); }

private:
    GridSimulator grid_;
};

/// A signal controller: called once per decision interval.
class Controller {
public:
    virtual ~Controller() = default;
    virtual void reset() {}
    virtual int decide(const TrafficState& state) = 0;
};

class FunctionController final : public Controller {
public:
    explicit FunctionController(std::function<int(const TrafficState&)> fn) : fn_(std::move(fn)) {}
    int decide(const TrafficState& state) override { return fn_(state); }

private:
    std::function<int(const TrafficState&)> fn_;
};

/// Runs `inner` on the mirror image: s -> phase_perm(inner(g^-1 s)).
class ConjugatedController final : public Controller {
public:
    ConjugatedController(Controller& inner, SymmetryOp op) : inner_(inner), op_(std::move(op)), inv_(op_.inverse()) {}
    void reset() override { inner_.reset(); }
    int decide(const TrafficState& state) override;

private:
    Controller& inner_;
    SymmetryOp op_;
    SymmetryOp inv_;
};

EpisodeMetrics run_controller(Controller& controller, const SimConfig& config, const PhaseTable& table,
                              const FlowSchedule& flow, std::uint64_t seed = 0);

/// One controller per intersection, all stepped synchronously.
EpisodeMetrics run_grid_controllers(std::span<Controller* const> controllers, const SimConfig& config,
                                    const PhaseTable& table, GridShape shape, const FlowSchedule& flow,
                                    std::uint64_t seed = 0);

/// Maps every movement through op.movement_perm; rejects multi-intersection flows.
FlowSchedule mirror_flow(const SymmetryOp& op, const FlowSchedule& flow);

}  // namespace frap
