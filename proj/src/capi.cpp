#include "frap/frap.h"

#include <cstring>
#include <filesystem>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

#include "frap/experiment.hpp"

struct frap_experiment {
    frap::ExperimentConfig cfg;
    frap_log_fn log = nullptr;
    void* log_user = nullptr;
};

struct frap_simulator {
    std::unique_ptr<frap::GridSimulator> sim;
    bool started = false;
};

namespace {

thread_local std::string g_last_error;

// Forwards complete lines to the user's callback.
class LineBuf final : public std::streambuf {
public:
    LineBuf(frap_log_fn fn, void* user) : fn_(fn), user_(user) {}
    ~LineBuf() override { flush_line(); }

protected:
    int overflow(int ch) override
    {
        if (ch == '\n')
            flush_line();
        else if (ch != traits_type::eof())
            line_.push_back(static_cast<char>(ch));
        return ch;
    }

private:
    void flush_line()
    {
        if (!line_.empty() && fn_) fn_(line_.c_str(), user_);
        line_.clear();
    }
    frap_log_fn fn_;
    void* user_;
    std::string line_;
};

struct Logger {
    explicit Logger(const frap_experiment* e) : buf(e->log, e->log_user), stream(&buf), enabled(e->log != nullptr) {}
    std::ostream* get() { return enabled ? &stream : nullptr; }
    LineBuf buf;
    std::ostream stream;
    bool enabled;
};

frap_status fail(frap_status s, const std::string& msg)
{
    g_last_error = msg;
    return s;
}

// Runs fn, mapping exceptions to status codes. `runtime_code` classifies
// std::runtime_error, whose meaning depends on the call.
template <class F>
frap_status guard(F&& fn, frap_status runtime_code = FRAP_E_INTERNAL, frap_status invalid_code = FRAP_E_CONFIG)
{
    try {
        g_last_error.clear();
        return fn();
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(FRAP_E_IO, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(FRAP_E_CONFIG, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(invalid_code, e.what());
    } catch (const std::out_of_range& e) {
        return fail(FRAP_E_INVALID_ARGUMENT, e.what());
    } catch (const std::runtime_error& e) {
        return fail(runtime_code, e.what());
    } catch (const std::exception& e) {
        return fail(FRAP_E_INTERNAL, e.what());
    } catch (...) {
        return fail(FRAP_E_INTERNAL, "unknown error");
    }
}

frap_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed)
{
    if (needed) *needed = s.size() + 1;
    if (!buf || cap < s.size() + 1) return fail(FRAP_E_BUFFER_TOO_SMALL, "buffer too small");
    std::memcpy(buf, s.c_str(), s.size() + 1);
    return FRAP_OK;
}

#define FRAP_REQUIRE(cond, what) \
    if (!(cond)) return fail(FRAP_E_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* frap_last_error(void) { return g_last_error.c_str(); }

const char* frap_status_name(frap_status status)
{
    switch (status) {
    case FRAP_OK: return "ok";
    case FRAP_E_INVALID_ARGUMENT: return "invalid argument";
    case FRAP_E_IO: return "i/o error";
    case FRAP_E_CONFIG: return "configuration error";
    case FRAP_E_CHECKPOINT: return "checkpoint error";
    case FRAP_E_STATE: return "invalid state";
    case FRAP_E_BUFFER_TOO_SMALL: return "buffer too small";
    case FRAP_E_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* frap_version(void) { return "1.0.0"; }

frap_status frap_experiment_load(const char* path, frap_experiment** out)
{
    FRAP_REQUIRE(path && out, "path and out must not be null");
    *out = nullptr;
    return guard(
        [&] {
            auto e = std::make_unique<frap_experiment>();
            e->cfg = frap::load_config(path);
            *out = e.release();
            return FRAP_OK;
        },
        FRAP_E_IO);
}

frap_status frap_experiment_from_json(const char* json, frap_experiment** out)
{
    FRAP_REQUIRE(json && out, "json and out must not be null");
    *out = nullptr;
    return guard([&] {
        auto e = std::make_unique<frap_experiment>();
        e->cfg = frap::ExperimentConfig::from_json(nlohmann::json::parse(json));
        *out = e.release();
        return FRAP_OK;
    });
}

void frap_experiment_destroy(frap_experiment* exp) { delete exp; }

frap_status frap_experiment_set_seed(frap_experiment* exp, uint64_t seed)
{
    FRAP_REQUIRE(exp, "experiment is null");
    exp->cfg.seed = seed;
    return FRAP_OK;
}

frap_status frap_experiment_set_out_dir(frap_experiment* exp, const char* dir)
{
    FRAP_REQUIRE(exp && dir && *dir, "experiment and a non-empty dir are required");
    exp->cfg.out_dir = dir;
    return FRAP_OK;
}

frap_status frap_experiment_set_agent(frap_experiment* exp, const char* agent)
{
    FRAP_REQUIRE(exp && agent, "experiment and agent must not be null");
    return guard([&] {
        frap::ExperimentConfig c = exp->cfg;
        c.agent = agent;
        c.validate();
        exp->cfg = std::move(c);
        return FRAP_OK;
    });
}

frap_status frap_experiment_set_sync(frap_experiment* exp, int sync)
{
    FRAP_REQUIRE(exp, "experiment is null");
    exp->cfg.training.sync = sync != 0;
    return FRAP_OK;
}

frap_status frap_experiment_set_log(frap_experiment* exp, frap_log_fn fn, void* user)
{
    FRAP_REQUIRE(exp, "experiment is null");
    exp->log = fn;
    exp->log_user = user;
    return FRAP_OK;
}

frap_status frap_experiment_to_json(const frap_experiment* exp, char* buf, size_t cap, size_t* needed)
{
    FRAP_REQUIRE(exp, "experiment is null");
    return guard([&] { return copy_out(exp->cfg.to_json().dump(2), buf, cap, needed); });
}

frap_status frap_cmd_train(frap_experiment* exp, double* best_travel_time)
{
    FRAP_REQUIRE(exp, "experiment is null");
    return guard(
        [&] {
            Logger log(exp);
            const frap::TrainSummary s = frap::cmd_train(exp->cfg, log.get());
            if (best_travel_time) {
                *best_travel_time = 0;
                for (const auto& r : s.result.curve)
                    if (r.learner_step == s.result.best_step) *best_travel_time = r.eval_travel_time;
            }
            return FRAP_OK;
        },
        FRAP_E_IO);
}

frap_status frap_cmd_eval(frap_experiment* exp, const char* checkpoint, double* avg_travel_time, int64_t* exited_count)
{
    FRAP_REQUIRE(exp && checkpoint, "experiment and checkpoint must not be null");
    return guard(
        [&] {
            Logger log(exp);
            const frap::EpisodeMetrics m = frap::cmd_eval(exp->cfg, checkpoint, log.get());
            if (avg_travel_time) *avg_travel_time = m.avg_travel_time;
            if (exited_count) *exited_count = m.exited_count;
            return FRAP_OK;
        },
        FRAP_E_CHECKPOINT);
}

frap_status frap_cmd_compare(frap_experiment* exp, const char* methods)
{
    FRAP_REQUIRE(exp && methods, "experiment and methods must not be null");
    return guard(
        [&] {
            std::vector<std::string> list;
            std::stringstream ss(methods);
            for (std::string m; std::getline(ss, m, ',');)
                if (!m.empty()) list.push_back(m);
            Logger log(exp);
            frap::cmd_compare(exp->cfg, list, log.get());
            return FRAP_OK;
        },
        FRAP_E_IO, FRAP_E_INVALID_ARGUMENT);
}

frap_status frap_cmd_transfer(frap_experiment* exp, const char* checkpoint, const char* op, int retrain,
                              double* original_travel_time, double* transferred_travel_time)
{
    FRAP_REQUIRE(exp && checkpoint && op, "experiment, checkpoint and op must not be null");
    return guard(
        [&] {
            Logger log(exp);
            const frap::TransferReport r = frap::cmd_transfer(exp->cfg, checkpoint, op, retrain != 0, log.get());
            if (original_travel_time) *original_travel_time = r.original_travel_time;
            if (transferred_travel_time) *transferred_travel_time = r.transferred_travel_time;
            return FRAP_OK;
        },
        FRAP_E_CHECKPOINT, FRAP_E_INVALID_ARGUMENT);
}

frap_status frap_cmd_gen_flow(frap_experiment* exp, const char* path)
{
    FRAP_REQUIRE(exp && path, "experiment and path must not be null");
    return guard(
        [&] {
            frap::cmd_gen_flow(exp->cfg, path);
            return FRAP_OK;
        },
        FRAP_E_IO);
}

frap_status frap_phase_table_json(int approaches, const char* phase_set, char* buf, size_t cap, size_t* needed)
{
    FRAP_REQUIRE(phase_set, "phase_set must not be null");
    return guard(
        [&] {
            frap::ExperimentConfig c;
            c.approaches = approaches;
            c.phase_set = phase_set;
            if (approaches < 3 || approaches > 5) throw std::invalid_argument("approaches must be 3, 4 or 5");
            if (c.phase_set != "8-phase" && c.phase_set != "4-phase") throw std::invalid_argument("unknown phase set");
            if (c.phase_set == "4-phase" && approaches != 4) throw std::invalid_argument("4-phase requires 4 approaches");
            return copy_out(frap::experiment_table(c).to_json().dump(2), buf, cap, needed);
        },
        FRAP_E_INTERNAL, FRAP_E_INVALID_ARGUMENT);
}

frap_status frap_simulator_create(const frap_experiment* exp, frap_simulator** out)
{
    FRAP_REQUIRE(exp && out, "experiment and out must not be null");
    *out = nullptr;
    return guard(
        [&] {
            auto s = std::make_unique<frap_simulator>();
            s->sim = std::make_unique<frap::GridSimulator>(exp->cfg.sim, frap::experiment_table(exp->cfg), exp->cfg.grid,
                                                           frap::experiment_flow(exp->cfg));
            *out = s.release();
            return FRAP_OK;
        },
        FRAP_E_IO);
}

void frap_simulator_destroy(frap_simulator* sim) { delete sim; }

frap_status frap_simulator_reset(frap_simulator* sim, uint64_t seed)
{
    FRAP_REQUIRE(sim, "simulator is null");
    return guard([&] {
        sim->sim->reset(seed);
        sim->started = true;
        return FRAP_OK;
    });
}

int frap_simulator_num_intersections(const frap_simulator* sim) { return sim ? sim->sim->num_intersections() : -1; }
int frap_simulator_num_movements(const frap_simulator* sim) { return sim ? sim->sim->table().num_movements() : -1; }
int frap_simulator_num_phases(const frap_simulator* sim) { return sim ? sim->sim->table().num_phases() : -1; }
int frap_simulator_clock(const frap_simulator* sim) { return sim ? sim->sim->clock() : -1; }

frap_status frap_simulator_step(frap_simulator* sim, const int* actions, size_t n, double* rewards, int* done)
{
    FRAP_REQUIRE(sim && actions, "simulator and actions must not be null");
    if (!sim->started) return fail(FRAP_E_STATE, "simulator must be reset before stepping");
    if (sim->sim->done()) return fail(FRAP_E_STATE, "episode is over; reset the simulator");
    FRAP_REQUIRE(n == static_cast<size_t>(sim->sim->num_intersections()), "one action per intersection is required");
    return guard(
        [&] {
            const frap::GridStepResult r = sim->sim->step(std::span<const int>(actions, n));
            if (rewards)
                for (size_t i = 0; i < n; ++i) rewards[i] = r.rewards[i];
            if (done) *done = r.done ? 1 : 0;
            return FRAP_OK;
        },
        FRAP_E_INTERNAL, FRAP_E_INVALID_ARGUMENT);
}

frap_status frap_simulator_observe(const frap_simulator* sim, int intersection, int* counts, int* signal_bits, int* phase)
{
    FRAP_REQUIRE(sim, "simulator is null");
    if (!sim->started) return fail(FRAP_E_STATE, "simulator must be reset before observing");
    FRAP_REQUIRE(intersection >= 0 && intersection < sim->sim->num_intersections(), "intersection index out of range");
    return guard([&] {
        const frap::TrafficState s = sim->sim->observe()[static_cast<size_t>(intersection)];
        if (counts) std::copy(s.counts.begin(), s.counts.end(), counts);
        if (signal_bits) std::copy(s.signal_bits.begin(), s.signal_bits.end(), signal_bits);
        if (phase) *phase = s.phase_index;
        return FRAP_OK;
    });
}

frap_status frap_simulator_metrics(const frap_simulator* sim, double* avg_travel_time, int64_t* exited_count,
                                   int64_t* in_network_count)
{
    FRAP_REQUIRE(sim, "simulator is null");
    if (!sim->started) return fail(FRAP_E_STATE, "simulator must be reset first");
    return guard([&] {
        const frap::EpisodeMetrics m = sim->sim->metrics();
        if (avg_travel_time) *avg_travel_time = m.avg_travel_time;
        if (exited_count) *exited_count = m.exited_count;
        if (in_network_count) *in_network_count = m.in_network_count;
        return FRAP_OK;
    });
}

}  // extern "C"
