#include "frap/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace frap {

void TrainConfig::validate() const
{
    if (!(gamma >= 0 && gamma < 1)) throw std::invalid_argument("gamma must be in [0, 1)");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
    if (buffer_capacity < static_cast<std::size_t>(batch_size)) throw std::invalid_argument("buffer_capacity below batch_size");
    if (target_sync_period <= 0) throw std::invalid_argument("target_sync_period must be positive");
    if (!(alpha >= 0)) throw std::invalid_argument("alpha must be >= 0");
    if (!(beta_start >= 0 && beta_end >= 0)) throw std::invalid_argument("beta must be >= 0");
    if (!(epsilon >= 0 && epsilon <= 1)) throw std::invalid_argument("epsilon must be in [0, 1]");
    if (!(alpha_eps >= 0)) throw std::invalid_argument("alpha_eps must be >= 0");
    if (actors <= 0) throw std::invalid_argument("need at least one actor");
    if (!(lr > 0)) throw std::invalid_argument("lr must be positive");
    if (!(priority_eps > 0)) throw std::invalid_argument("priority_eps must be positive");
    if (!(huber_delta > 0)) throw std::invalid_argument("huber_delta must be positive");
    if (!(reward_scale > 0)) throw std::invalid_argument("reward_scale must be positive");
    if (max_learner_steps < 0) throw std::invalid_argument("max_learner_steps must be >= 0");
    if (eval_period <= 0) throw std::invalid_argument("eval_period must be positive");
    if (env_steps_per_learner_step <= 0) throw std::invalid_argument("env_steps_per_learner_step must be positive");
    if (snapshot_period <= 0) throw std::invalid_argument("snapshot_period must be positive");
    if (queue_capacity == 0) throw std::invalid_argument("queue_capacity must be positive");
}

nlohmann::json TrainConfig::to_json() const
{
    return {{"gamma", gamma},
            {"batch_size", batch_size},
            {"buffer_capacity", buffer_capacity},
            {"target_sync_period", target_sync_period},
            {"alpha", alpha},
            {"beta_start", beta_start},
            {"beta_end", beta_end},
            {"epsilon", epsilon},
            {"alpha_eps", alpha_eps},
            {"actors", actors},
            {"lr", lr},
            {"priority_eps", priority_eps},
            {"huber_delta", huber_delta},
            {"double_dqn", double_dqn},
            {"reward_scale", reward_scale},
            {"max_learner_steps", max_learner_steps},
            {"eval_period", eval_period},
            {"learning_starts", learning_starts},
            {"env_steps_per_learner_step", env_steps_per_learner_step},
            {"snapshot_period", snapshot_period},
            {"queue_capacity", queue_capacity},
            {"sync", sync},
            {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j)
{
    TrainConfig c;
    c.gamma = j.value("gamma", c.gamma);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
    c.target_sync_period = j.value("target_sync_period", c.target_sync_period);
    c.alpha = j.value("alpha", c.alpha);
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.alpha_eps = j.value("alpha_eps", c.alpha_eps);
    c.actors = j.value("actors", c.actors);
    c.lr = j.value("lr", c.lr);
    c.priority_eps = j.value("priority_eps", c.priority_eps);
    c.huber_delta = j.value("huber_delta", c.huber_delta);
    c.double_dqn = j.value("double_dqn", c.double_dqn);
    c.reward_scale = j.value("reward_scale", c.reward_scale);
    c.max_learner_steps = j.value("max_learner_steps", c.max_learner_steps);
    c.eval_period = j.value("eval_period", c.eval_period);
    c.learning_starts = j.value("learning_starts", c.learning_starts);
    c.env_steps_per_learner_step = j.value("env_steps_per_learner_step", c.env_steps_per_learner_step);
    c.snapshot_period = j.value("snapshot_period", c.snapshot_period);
    c.queue_capacity = j.value("queue_capacity", c.queue_capacity);
    c.sync = j.value("sync", c.sync);
    c.seed = j.value("seed", c.seed);
    return c;
}

double actor_epsilon(double epsilon, double alpha_eps, int actor, int num_actors)
{
    if (num_actors <= 0 || actor < 0 || actor >= num_actors) throw std::invalid_argument("actor index out of range");
    if (num_actors == 1) return epsilon;
    return std::pow(epsilon, 1.0 + actor * alpha_eps / (num_actors - 1));
}

int epsilon_greedy(const QValues& q, std::span<const int> allowed, double epsilon, std::mt19937_64& rng)
{
    if (allowed.empty()) throw std::invalid_argument("no allowed actions");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (epsilon > 0 && coin(rng) < epsilon) {
        std::uniform_int_distribution<std::size_t> pick(0, allowed.size() - 1);
        return allowed[pick(rng)];
    }
    return greedy_action(q, allowed);
}

BellmanBatch bellman_targets(const QNetwork& net, std::span<const Transition* const> batch, const ParamSet& online,
                             const ParamSet& target, double gamma, bool double_dqn, std::span<const int> allowed,
                             bool with_td)
{
    BellmanBatch out;
    if (batch.empty()) return out;
    std::vector<TrafficState> next;
    next.reserve(batch.size());
    for (const Transition* t : batch) next.push_back(t->next_state);

    const std::vector<QValues> q_target = net.q_values(target, next);
    std::vector<QValues> q_select;
    if (double_dqn) q_select = net.q_values(online, next);

    out.targets.resize(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Transition& t = *batch[b];
        if (t.done) {
            out.targets[b] = t.reward;
            continue;
        }
        const int a = greedy_action(double_dqn ? q_select[b] : q_target[b], allowed);
        out.targets[b] = t.reward + gamma * q_target[b][static_cast<std::size_t>(a)];
    }
    if (with_td) {
        std::vector<TrafficState> cur;
        cur.reserve(batch.size());
        for (const Transition* t : batch) cur.push_back(t->state);
        const std::vector<QValues> q = net.q_values(online, cur);
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const double qa = q[b][static_cast<std::size_t>(batch[b]->action)];
            out.q_taken.push_back(qa);
            out.td_errors.push_back(out.targets[b] - qa);
        }
    }
    return out;
}

LearnerStepStats learner_step(LearnerState& state, ReplayBuffer& replay, const QNetwork& net, const TrainConfig& cfg,
                              std::mt19937_64& rng)
{
    const auto B = static_cast<std::size_t>(cfg.batch_size);
    if (replay.size() < B) throw std::logic_error("replay buffer holds fewer transitions than one batch");

    const double progress = cfg.max_learner_steps > 0
                                ? std::min(1.0, static_cast<double>(state.step) / static_cast<double>(cfg.max_learner_steps))
                                : 1.0;
    const double beta = cfg.beta_start + (cfg.beta_end - cfg.beta_start) * progress;
    const ReplayBuffer::Sample sample = replay.sample(B, beta, rng);

    std::vector<const Transition*> batch;
    std::vector<TrafficState> states;
    batch.reserve(B);
    states.reserve(B);
    for (std::size_t slot : sample.slots) {
        batch.push_back(&replay.at(slot));
        states.push_back(batch.back()->state);
    }
    const std::vector<int> allowed = net.table().active_phases();
    const BellmanBatch bt = bellman_targets(net, batch, state.online, state.target, cfg.gamma, cfg.double_dqn, allowed, false);

    Tape tape;
    const ParamVars vars = place_params(tape, state.online);
    Var q = net.forward(tape, vars, states);
    const std::size_t P = static_cast<std::size_t>(net.num_phases());
    Tensor target(Shape{B, P}, 0), mask(Shape{B, P}, 0), weights(Shape{B});
    std::vector<double> priorities(B);
    LearnerStepStats stats;
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t k = b * P + static_cast<std::size_t>(batch[b]->action);
        target[k] = bt.targets[b];
        mask[k] = 1;
        weights[b] = sample.weights[b];
        const double td = bt.targets[b] - q.value()[k];
        priorities[b] = std::abs(td) + cfg.priority_eps;
        stats.mean_abs_td += std::abs(td) / static_cast<double>(B);
    }
    Var loss = huber_loss(q, target, mask, cfg.huber_delta, weights);
    stats.loss = loss.value().item();
    const ParamSet grads = tape.backward(loss);
    adam_update(state.online, grads, state.adam, AdamConfig{cfg.lr});
    replay.update_priorities(sample.slots, priorities);

    ++state.step;
    if (state.step % cfg.target_sync_period == 0) state.target = state.online;
    return stats;
}

void SnapshotBoard::publish(std::size_t agent, ParamSet params)
{
    auto snap = std::make_shared<const ParamSet>(std::move(params));
    std::lock_guard lock(mu_);
    snaps_.at(agent) = std::move(snap);
}

std::shared_ptr<const ParamSet> SnapshotBoard::latest(std::size_t agent) const
{
    std::lock_guard lock(mu_);
    return snaps_.at(agent);
}

bool TransitionSink::push(std::vector<AgentTransition> items)
{
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    for (AgentTransition& t : items) items_.push_back(std::move(t));
    return true;
}

std::vector<AgentTransition> TransitionSink::drain()
{
    std::vector<AgentTransition> out;
    {
        std::lock_guard lock(mu_);
        out.assign(std::make_move_iterator(items_.begin()), std::make_move_iterator(items_.end()));
        items_.clear();
    }
    not_full_.notify_all();
    return out;
}

void TransitionSink::close()
{
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    not_full_.notify_all();
}

Actor::Actor(int id, double epsilon, const EnvSpec& env, FlowProvider flows, std::vector<const QNetwork*> nets,
             const SnapshotBoard& board, TransitionSink& sink, std::uint64_t seed, int snapshot_period, double reward_scale)
    : id_(id),
      epsilon_(epsilon),
      env_(env),
      flows_(std::move(flows)),
      nets_(std::move(nets)),
      board_(board),
      sink_(sink),
      rng_(seed),
      snapshot_period_(snapshot_period),
      reward_scale_(reward_scale),
      allowed_(env.table.active_phases())
{
    if (static_cast<int>(nets_.size()) != env_.grid.size()) throw std::invalid_argument("one network per intersection expected");
}

void Actor::start_episode()
{
    const std::uint64_t episode_seed = rng_();
    sim_ = std::make_unique<GridSimulator>(env_.sim, env_.table, env_.grid, flows_(episode_seed));
    states_ = sim_->reset(episode_seed);
    ++episodes_;
}

void Actor::refresh()
{
    params_.resize(nets_.size());
    for (std::size_t k = 0; k < nets_.size(); ++k) params_[k] = board_.latest(k);
}

bool Actor::step_once()
{
    if (!sim_ || sim_->done()) start_episode();
    if (params_.empty() || decisions_ % snapshot_period_ == 0) refresh();

    std::vector<int> actions(nets_.size());
    for (std::size_t k = 0; k < nets_.size(); ++k) {
        const QValues q = nets_[k]->q_values(*params_[k], states_[k]);
        actions[k] = epsilon_greedy(q, allowed_, epsilon_, rng_);
    }
    GridStepResult r = sim_->step(actions);
    std::vector<AgentTransition> items;
    items.reserve(nets_.size());
    for (std::size_t k = 0; k < nets_.size(); ++k) {
        Transition t;
        t.state = std::move(states_[k]);
        t.action = actions[k];
        t.reward = r.rewards[k] * reward_scale_;
        t.next_state = r.states[k];
        // The episode horizon is a time limit, not a terminal state: keep bootstrapping.
        t.done = false;
        items.push_back(AgentTransition{k, std::move(t)});
    }
    states_ = std::move(r.states);
    ++decisions_;
    return sink_.push(std::move(items));
}

GreedyController::GreedyController(const QNetwork& net, std::shared_ptr<const ParamSet> params)
    : net_(net), params_(std::move(params)), allowed_(net.table().active_phases())
{
}

int GreedyController::decide(const TrafficState& state)
{
    return greedy_action(net_.q_values(*params_, state), allowed_, net_.table(), state);
}

EpisodeMetrics evaluate_greedy(const EnvSpec& env, const FlowSchedule& flow, std::span<const QNetwork* const> nets,
                               std::span<const ParamSet> params)
{
    if (nets.size() != params.size() || static_cast<int>(nets.size()) != env.grid.size())
        throw std::invalid_argument("one network and parameter set per intersection expected");
    std::vector<GreedyController> ctl;
    ctl.reserve(nets.size());
    std::vector<Controller*> ptrs;
    for (std::size_t k = 0; k < nets.size(); ++k) {
        ctl.emplace_back(*nets[k], std::make_shared<const ParamSet>(params[k]));
        ptrs.push_back(&ctl.back());
    }
    return run_grid_controllers(ptrs, env.sim, env.table, env.grid, flow);
}

TrainResult train(const EnvSpec& env, FlowProvider train_flows, const FlowSchedule& eval_flow,
                  std::span<const QNetwork* const> nets, const TrainConfig& cfg,
                  const std::function<void(const CurveRow&)>& progress)
{
    cfg.validate();
    const std::size_t agents = static_cast<std::size_t>(env.grid.size());
    if (nets.size() != agents) throw std::invalid_argument("one network per intersection expected");

    std::mt19937_64 rng(cfg.seed);
    std::vector<LearnerState> learners(agents);
    std::vector<ReplayBuffer> replays;
    SnapshotBoard board(agents);
    for (std::size_t k = 0; k < agents; ++k) {
        learners[k].online = nets[k]->init_params(rng);
        learners[k].target = learners[k].online;
        replays.emplace_back(cfg.buffer_capacity, cfg.alpha);
        board.publish(k, learners[k].online);
    }

    TransitionSink sink(cfg.queue_capacity);
    std::vector<std::unique_ptr<Actor>> actors;
    const std::vector<const QNetwork*> net_list(nets.begin(), nets.end());
    for (int i = 0; i < cfg.actors; ++i) {
        actors.push_back(std::make_unique<Actor>(i, actor_epsilon(cfg.epsilon, cfg.alpha_eps, i, cfg.actors), env, train_flows,
                                                 net_list, board, sink, rng(), cfg.snapshot_period, cfg.reward_scale));
    }

    TrainResult result;
    auto current_params = [&] {
        std::vector<ParamSet> p;
        for (const LearnerState& l : learners) p.push_back(l.online);
        return p;
    };
    auto evaluate = [&](std::int64_t step) {
        const std::vector<ParamSet> params = current_params();
        const EpisodeMetrics m = evaluate_greedy(env, eval_flow, nets, params);
        CurveRow row{step, m.avg_travel_time, m.exited_count, m.censored_travel_time};
        result.curve.push_back(row);
        // Unfinished trips count up to the episode end, so starving a movement cannot look good.
        if (result.best_params.empty() || row.censored_travel_time < result.best_score) {
            result.best_params = params;
            result.best_score = row.censored_travel_time;
            result.best_step = step;
        }
        if (progress) progress(row);
    };
    const std::size_t ready_at = std::max(cfg.learning_starts, static_cast<std::size_t>(cfg.batch_size));
    auto drain_into_replay = [&] {
        for (AgentTransition& t : sink.drain()) replays[t.agent].add(std::move(t.transition));
    };
    auto replay_ready = [&] {
        for (const ReplayBuffer& r : replays)
            if (r.size() < ready_at) return false;
        return true;
    };
    std::int64_t step = 0;
    auto learn = [&] {
        for (std::size_t k = 0; k < agents; ++k) {
            learner_step(learners[k], replays[k], *nets[k], cfg, rng);
            board.publish(k, learners[k].online);
        }
        ++step;
        if (step % cfg.eval_period == 0 || step == cfg.max_learner_steps) evaluate(step);
    };

    evaluate(0);
    if (cfg.sync) {
        std::size_t turn = 0;
        while (step < cfg.max_learner_steps) {
            for (int i = 0; i < cfg.env_steps_per_learner_step; ++i) {
                actors[turn % actors.size()]->step_once();
                ++turn;
            }
            drain_into_replay();
            if (replay_ready()) learn();
        }
    } else if (cfg.max_learner_steps > 0) {
        std::atomic<bool> stop{false};
        std::mutex error_mu;
        std::string actor_error;
        std::vector<std::thread> threads;
        for (auto& a : actors)
            threads.emplace_back([&, actor = a.get()] {
                try {
                    while (!stop.load(std::memory_order_relaxed))
                        if (!actor->step_once()) break;
                } catch (const std::exception& e) {
                    std::lock_guard lock(error_mu);
                    if (actor_error.empty()) actor_error = e.what();
                }
            });
        try {
            while (step < cfg.max_learner_steps) {
                {
                    std::lock_guard lock(error_mu);
                    if (!actor_error.empty()) throw std::runtime_error("actor failed: " + actor_error);
                }
                drain_into_replay();
                if (replay_ready())
                    learn();
                else
                    std::this_thread::yield();
            }
        } catch (...) {
            stop = true;
            sink.close();
            for (std::thread& t : threads) t.join();
            throw;
        }
        stop = true;
        sink.close();
        for (std::thread& t : threads) t.join();
    }
    result.final_params = current_params();
    return result;
}

}  // namespace frap
