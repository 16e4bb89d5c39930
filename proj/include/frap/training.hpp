#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "frap/network.hpp"
#include "frap/optim.hpp"
#include "frap/replay.hpp"
#include "frap/simulator.hpp"

namespace frap {

struct TrainConfig {
    double gamma = 0.95;
    int batch_size = 64;
    std::size_t buffer_capacity = 200000;
    int target_sync_period = 500;
    double alpha = 0.6;
    double beta_start = 0.4;
    double beta_end = 1.0;
    double epsilon = 0.4;
    double alpha_eps = 7;
    int actors = 4;
    double lr = 1e-3;
    double priority_eps = 1e-3;
    double huber_delta = 1.0;
    bool double_dqn = true;
    double reward_scale = 0.25;
    std::int64_t max_learner_steps = 20000;
    int eval_period = 500;
    std::size_t learning_starts = 1000;
    int env_steps_per_learner_step = 2;  // synchronous mode schedule
    int snapshot_period = 100;           // decisions between snapshot refreshes
    std::size_t queue_capacity = 4096;   // bounded transition queue (threaded mode)
    bool sync = true;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

/// eps_i = eps^(1 + i * alpha_eps / (N - 1)); N = 1 gives eps.
double actor_epsilon(double epsilon, double alpha_eps, int actor, int num_actors);

/// eps-greedy over `allowed`; greedy ties go to the lowest phase index.
int epsilon_greedy(const QValues& q, std::span<const int> allowed, double epsilon, std::mt19937_64& rng);

struct BellmanBatch {
    std::vector<double> targets;
    std::vector<double> q_taken;
    std::vector<double> td_errors;  // target - Q_online(s, a)
};

/// target = r if done else r + gamma * Q_target(s', a*), with a* the online
/// argmax (double DQN) or the target argmax (plain max).
/// q_taken/td_errors are left empty when `with_td` is false.
BellmanBatch bellman_targets(const QNetwork& net, std::span<const Transition* const> batch, const ParamSet& online,
                             const ParamSet& target, double gamma, bool double_dqn, std::span<const int> allowed,
                             bool with_td = true);

/// Online/target parameters and optimiser state for one agent.
struct LearnerState {
    ParamSet online;
    ParamSet target;
    AdamState adam;
    std::int64_t step = 0;
};

struct LearnerStepStats {
    double loss = 0;
    double mean_abs_td = 0;
};

/// One prioritized-replay DQN update. Throws if the buffer holds fewer
/// transitions than a batch.
LearnerStepStats learner_step(LearnerState& state, ReplayBuffer& replay, const QNetwork& net, const TrainConfig& cfg,
                              std::mt19937_64& rng);

/// Latest parameter snapshot per agent; readers never block the writer for
/// longer than a pointer swap.
class SnapshotBoard {
public:
    explicit SnapshotBoard(std::size_t agents) : snaps_(agents) {}
    void publish(std::size_t agent, ParamSet params);
    std::shared_ptr<const ParamSet> latest(std::size_t agent) const;

private:
    mutable std::mutex mu_;
    std::vector<std::shared_ptr<const ParamSet>> snaps_;
};

struct AgentTransition {
    std::size_t agent = 0;
    Transition transition;
};

/// Bounded multi-producer queue; a full queue blocks producers.
class TransitionSink {
public:
    explicit TransitionSink(std::size_t capacity) : capacity_(capacity) {}

    /// Returns false if the sink was closed while waiting.
    bool push(std::vector<AgentTransition> items);
    std::vector<AgentTransition> drain();
    void close();

private:
    std::mutex mu_;
    std::condition_variable not_full_;
    std::deque<AgentTransition> items_;
    std::size_t capacity_;
    bool closed_ = false;
};

/// Supplies the flow for an actor episode, given a per-episode seed.
using FlowProvider = std::function<FlowSchedule(std::uint64_t episode_seed)>;

struct EnvSpec {
    SimConfig sim;
    PhaseTable table;
    GridShape grid;
};

/// Exploring actor: one environment, eps-greedy over its latest snapshots.
class Actor {
public:
    Actor(int id, double epsilon, const EnvSpec& env, FlowProvider flows, std::vector<const QNetwork*> nets,
          const SnapshotBoard& board, TransitionSink& sink, std::uint64_t seed, int snapshot_period, double reward_scale);

    /// Takes one decision (starting a new episode when needed) and pushes the
    /// resulting transitions. Returns false if the sink is closed.
    bool step_once();
    double epsilon() const { return epsilon_; }
    std::int64_t decisions() const { return decisions_; }

private:
    void start_episode();
    void refresh();

    int id_;
    double epsilon_;
    EnvSpec env_;
    FlowProvider flows_;
    std::vector<const QNetwork*> nets_;
    const SnapshotBoard& board_;
    TransitionSink& sink_;
    std::mt19937_64 rng_;
    int snapshot_period_;
    double reward_scale_;
    std::vector<int> allowed_;

    std::unique_ptr<GridSimulator> sim_;
    std::vector<TrafficState> states_;
    std::vector<std::shared_ptr<const ParamSet>> params_;
    std::int64_t decisions_ = 0;
    std::uint64_t episodes_ = 0;
};

/// Greedy controller over a fixed parameter snapshot.
class GreedyController final : public Controller {
public:
    GreedyController(const QNetwork& net, std::shared_ptr<const ParamSet> params);
    int decide(const TrafficState& state) override;

private:
    const QNetwork& net_;
    std::shared_ptr<const ParamSet> params_;
    std::vector<int> allowed_;
};

/// One greedy episode with one agent per intersection.
EpisodeMetrics evaluate_greedy(const EnvSpec& env, const FlowSchedule& flow, std::span<const QNetwork* const> nets,
                               std::span<const ParamSet> params);

struct CurveRow {
    std::int64_t learner_step = 0;
    double eval_travel_time = 0;
    std::int64_t exited_count = 0;
    double censored_travel_time = 0;
};

struct TrainResult {
    std::vector<CurveRow> curve;
    std::vector<ParamSet> best_params;  // one per agent
    std::vector<ParamSet> final_params;
    std::int64_t best_step = 0;
    double best_score = 0;
};

/// Actor/learner DQN training. One agent (network + learner + replay) per
/// intersection. In synchronous mode actors and learners interleave on the
/// calling thread on a fixed schedule; otherwise each actor runs on its own
/// thread and the learner drains the shared sink at the start of each step.
/// `progress`, if set, is called after each evaluation row.
TrainResult train(const EnvSpec& env, FlowProvider train_flows, const FlowSchedule& eval_flow,
                  std::span<const QNetwork* const> nets, const TrainConfig& cfg,
                  const std::function<void(const CurveRow&)>& progress = {});

}  // namespace frap
