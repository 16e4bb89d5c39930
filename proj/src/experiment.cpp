#include "frap/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <stdexcept>

#include "frap/checkpoint.hpp"

namespace frap {

namespace fs = std::filesystem;

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw std::invalid_argument("unknown config key '" + k + "' in " + where);
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    return out;
}

std::string out_file(const ExperimentConfig& cfg, const std::string& name)
{
    fs::create_directories(cfg.out_dir);
    return (fs::path(cfg.out_dir) / name).string();
}

void write_config_echo(const ExperimentConfig& cfg)
{
    auto out = open_out(out_file(cfg, "config.json"));
    out << cfg.to_json().dump(2) << "\n";
}

std::vector<const QNetwork*> replicate(const QNetwork& net, int n)
{
    return std::vector<const QNetwork*>(static_cast<std::size_t>(n), &net);
}

std::vector<ParamSet> split_agents(const ParamSet& arrays, int agents)
{
    std::vector<ParamSet> out(static_cast<std::size_t>(agents));
    for (const auto& [name, t] : arrays) {
        const auto slash = name.find('/');
        if (name.rfind("agent", 0) != 0 || slash == std::string::npos)
            throw std::runtime_error("unexpected array name in checkpoint: " + name);
        const int k = std::stoi(name.substr(5, slash - 5));
        if (k < 0 || k >= agents) throw std::runtime_error("checkpoint agent index out of range: " + name);
        out[static_cast<std::size_t>(k)][name.substr(slash + 1)] = t;
    }
    return out;
}

}  // namespace

std::vector<std::string> preset_names() { return {"balanced-8", "unbalanced-WE", "flip-pair-morning", "flip-pair-evening"}; }

std::vector<double> preset_rates(const std::string& name)
{
    //                       NT   NL   ET   EL   ST   SL   WT   WL
    if (name == "balanced-8") return {240, 240, 240, 240, 240, 240, 240, 240};
    if (name == "unbalanced-WE") return {180, 180, 120, 180, 180, 180, 600, 180};
    if (name == "flip-pair-morning") return {180, 90, 150, 90, 180, 90, 540, 180};
    if (name == "flip-pair-evening") return {180, 90, 540, 180, 180, 90, 150, 90};
    throw std::invalid_argument("unknown flow preset: " + name);
}

nlohmann::json FlowSource::to_json() const
{
    if (!file.empty()) return {{"file", file}};
    nlohmann::json j;
    if (!preset.empty())
        j["preset"] = preset;
    else
        j["rates"] = spec.rates;
    j["process"] = spec.process == ArrivalProcess::Poisson ? "poisson" : "uniform";
    j["duration"] = spec.duration;
    if (!spec.segments.empty()) {
        auto& segs = j["segments"] = nlohmann::json::array();
        for (const RateSegment& s : spec.segments) segs.push_back({{"start", s.start}, {"end", s.end}, {"rates", s.rates}});
    }
    return j;
}

void ExperimentConfig::validate() const
{
    if (approaches < 3 || approaches > 5) throw std::invalid_argument("geometry.approaches must be 3, 4 or 5");
    if (grid.rows < 1 || grid.cols < 1) throw std::invalid_argument("grid dimensions must be positive");
    if (grid.size() > 1 && approaches != 4) throw std::invalid_argument("grids require 4-approach intersections");
    sim.validate();
    if (phase_set != "8-phase" && phase_set != "4-phase") throw std::invalid_argument("phase_set must be 8-phase or 4-phase");
    if (phase_set == "4-phase" && approaches != 4) throw std::invalid_argument("the 4-phase set requires a 4-approach intersection");
    static const std::set<std::string> agents{"frap", "vanilla", "fixedtime", "formula", "sotl"};
    if (!agents.count(agent)) throw std::invalid_argument("unknown agent: " + agent);
    training.validate();
    if (fixedtime_cycles.empty()) throw std::invalid_argument("fixedtime.cycles must not be empty");
    for (double c : fixedtime_cycles)
        if (!(c > 0)) throw std::invalid_argument("fixedtime cycles must be positive");
    if (!(sotl.theta > 0) || sotl.t_min < sim.decision_interval)
        throw std::invalid_argument("sotl.theta must be positive and sotl.t_min at least one decision interval");
    if (flow.file.empty()) {
        const PhaseTable t = PhaseTable::build(approaches);
        flow.spec.validate(t.num_movements());
        for (int m = 0; m < t.num_movements(); ++m) {
            auto nonzero = [&](const std::vector<double>& r) { return r[static_cast<std::size_t>(m)] != 0; };
            bool bad = !t.movement(m).present && !flow.spec.rates.empty() && nonzero(flow.spec.rates);
            for (const RateSegment& s : flow.spec.segments) bad = bad || (!t.movement(m).present && nonzero(s.rates));
            if (bad) throw std::invalid_argument("flow rate set on a movement that does not exist");
        }
    }
}

nlohmann::json ExperimentConfig::to_json() const
{
    nlohmann::json training_json = training.to_json();
    training_json.erase("seed");
    nlohmann::json frap_json = frap.to_json();
    frap_json.erase("capacity");
    nlohmann::json vanilla_json = vanilla.to_json();
    vanilla_json.erase("capacity");
    return {{"geometry", {{"approaches", approaches}, {"rows", grid.rows}, {"cols", grid.cols}}},
            {"sim", sim.to_json()},
            {"phase_set", phase_set},
            {"agent", agent},
            {"frap", frap_json},
            {"vanilla", vanilla_json},
            {"training", training_json},
            {"fixedtime", {{"cycles", fixedtime_cycles}}},
            {"sotl", {{"theta", sotl.theta}, {"t_min", sotl.t_min}}},
            {"flow", flow.to_json()},
            {"seed", seed},
            {"out", out_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j)
{
    check_keys(j, {"geometry", "sim", "phase_set", "agent", "frap", "vanilla", "training", "fixedtime", "sotl", "flow", "seed", "out"},
               "config");
    ExperimentConfig c;
    if (j.contains("geometry")) {
        const auto& g = j.at("geometry");
        check_keys(g, {"approaches", "rows", "cols"}, "geometry");
        c.approaches = g.value("approaches", c.approaches);
        c.grid.rows = g.value("rows", c.grid.rows);
        c.grid.cols = g.value("cols", c.grid.cols);
    }
    if (j.contains("sim")) {
        check_keys(j.at("sim"), {"approach_length", "free_flow_speed", "saturation_headway", "lane_capacity", "yellow", "all_red",
                                 "decision_interval", "episode_length"},
                   "sim");
        c.sim = SimConfig::from_json(j.at("sim"));
    }
    c.phase_set = j.value("phase_set", c.phase_set);
    c.agent = j.value("agent", c.agent);
    if (j.contains("frap")) {
        check_keys(j.at("frap"), {"volume_hidden", "signal_hidden", "demand_dim", "relation_dim", "conv_width", "conv_layers", "output_relu"},
                   "frap");
        c.frap = FrapConfig::from_json(j.at("frap"));
    }
    if (j.contains("vanilla")) {
        check_keys(j.at("vanilla"), {"hidden"}, "vanilla");
        c.vanilla = VanillaConfig::from_json(j.at("vanilla"));
    }
    if (j.contains("training")) {
        nlohmann::json keys = TrainConfig{}.to_json();
        keys.erase("seed");
        std::set<std::string> allowed;
        for (const auto& [k, v] : keys.items()) allowed.insert(k);
        check_keys(j.at("training"), allowed, "training");
        c.training = TrainConfig::from_json(j.at("training"));
    }
    if (j.contains("fixedtime")) {
        check_keys(j.at("fixedtime"), {"cycles"}, "fixedtime");
        c.fixedtime_cycles = j.at("fixedtime").value("cycles", c.fixedtime_cycles);
    }
    if (j.contains("sotl")) {
        check_keys(j.at("sotl"), {"theta", "t_min"}, "sotl");
        c.sotl.theta = j.at("sotl").value("theta", c.sotl.theta);
        c.sotl.t_min = j.at("sotl").value("t_min", c.sotl.t_min);
    }
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out", c.out_dir);

    c.flow.spec.rows = c.grid.rows;
    c.flow.spec.cols = c.grid.cols;
    c.flow.spec.duration = c.sim.episode_length;
    const nlohmann::json f = j.value("flow", nlohmann::json{{"preset", "balanced-8"}});
    check_keys(f, {"file", "preset", "rates", "process", "duration", "segments"}, "flow");
    if (f.contains("file")) {
        if (f.size() != 1) throw std::invalid_argument("flow.file cannot be combined with synthesis keys");
        c.flow.file = f.at("file").get<std::string>();
    } else {
        if (f.contains("preset") == f.contains("rates") && !f.contains("segments"))
            throw std::invalid_argument("flow needs exactly one of file, preset or rates");
        const PhaseTable t = PhaseTable::build(c.approaches);
        if (f.contains("preset")) {
            c.flow.preset = f.at("preset").get<std::string>();
            if (t.ring_size() != 4) throw std::invalid_argument("flow presets are defined for the 4-slot ring");
            c.flow.spec.rates = preset_rates(c.flow.preset);
            for (int m = 0; m < t.num_movements(); ++m)
                if (!t.movement(m).present) c.flow.spec.rates[static_cast<std::size_t>(m)] = 0;
        } else if (f.contains("rates")) {
            c.flow.spec.rates = f.at("rates").get<std::vector<double>>();
        }
        const std::string process = f.value("process", "poisson");
        if (process == "poisson")
            c.flow.spec.process = ArrivalProcess::Poisson;
        else if (process == "uniform")
            c.flow.spec.process = ArrivalProcess::Uniform;
        else
            throw std::invalid_argument("flow.process must be poisson or uniform");
        c.flow.spec.duration = f.value("duration", c.flow.spec.duration);
        if (f.contains("segments")) {
            for (const auto& s : f.at("segments"))
                c.flow.spec.segments.push_back(
                    RateSegment{s.at("start").get<double>(), s.at("end").get<double>(), s.at("rates").get<std::vector<double>>()});
        }
    }
    c.frap.capacity = c.sim.lane_capacity;
    c.vanilla.capacity = c.sim.lane_capacity;
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("malformed config " + path + ": " + e.what());
    }
    return ExperimentConfig::from_json(j);
}

PhaseTable experiment_table(const ExperimentConfig& cfg)
{
    PhaseTable t = PhaseTable::build(cfg.approaches);
    if (cfg.phase_set == "4-phase") t = t.restrict_to(t.four_phase_indices());
    return t;
}

EnvSpec experiment_env(const ExperimentConfig& cfg) { return EnvSpec{cfg.sim, experiment_table(cfg), cfg.grid}; }

FlowSchedule experiment_flow(const ExperimentConfig& cfg)
{
    const int movements = PhaseTable::build(cfg.approaches).num_movements();
    if (!cfg.flow.file.empty()) return parse_flow_csv(cfg.flow.file, movements);
    return synthesize_flow(cfg.flow.spec, cfg.seed);
}

FlowProvider experiment_train_flows(const ExperimentConfig& cfg)
{
    if (!cfg.flow.file.empty()) {
        auto flow = std::make_shared<const FlowSchedule>(experiment_flow(cfg));
        return [flow](std::uint64_t) { return *flow; };
    }
    const FlowSynthesisSpec spec = cfg.flow.spec;
    const std::uint64_t held_out = cfg.seed;
    return [spec, held_out](std::uint64_t episode_seed) {
        // Never train on the evaluation instance.
        return synthesize_flow(spec, episode_seed == held_out ? episode_seed + 1 : episode_seed);
    };
}

std::unique_ptr<QNetwork> experiment_network(const ExperimentConfig& cfg, const std::string& kind)
{
    const PhaseTable table = experiment_table(cfg);
    if (kind == "frap") return std::make_unique<FrapNetwork>(table, cfg.frap);
    if (kind == "vanilla") return std::make_unique<VanillaNetwork>(table, cfg.vanilla);
    throw std::invalid_argument("not a learned method: " + kind);
}

void save_agent_checkpoint(const std::string& path, const QNetwork& net, const std::vector<ParamSet>& params,
                           const ExperimentConfig& cfg)
{
    Checkpoint ck;
    for (std::size_t k = 0; k < params.size(); ++k)
        for (const auto& [name, t] : params[k]) ck.arrays["agent" + std::to_string(k) + "/" + name] = t;
    ck.meta["network"] = net.describe();
    ck.meta["agents"] = params.size();
    ck.meta["grid"] = {{"rows", cfg.grid.rows}, {"cols", cfg.grid.cols}};
    write_checkpoint(path, ck);
}

AgentCheckpoint load_agent_checkpoint(const std::string& path, const ExperimentConfig& cfg)
{
    const Checkpoint ck = read_checkpoint(path);
    if (!ck.meta.contains("network") || !ck.meta.contains("agents"))
        throw std::runtime_error("checkpoint sidecar lacks the network description: " + path);
    const int agents = ck.meta.at("agents").get<int>();
    if (agents != cfg.grid.size())
        throw std::runtime_error("checkpoint has " + std::to_string(agents) + " agents, experiment has " +
                                 std::to_string(cfg.grid.size()) + " intersections");
    AgentCheckpoint out;
    out.network = ck.meta.at("network");
    try {
        auto net = make_network(experiment_table(cfg), out.network);
        out.params = split_agents(ck.arrays, agents);
        std::mt19937_64 rng(0);
        const ParamSet shape_ref = net->init_params(rng);
        for (const ParamSet& p : out.params) {
            if (p.size() != shape_ref.size()) throw std::invalid_argument("parameter set does not match the network");
            for (const auto& [name, t] : shape_ref) {
                auto it = p.find(name);
                if (it == p.end() || it->second.shape() != t.shape())
                    throw std::invalid_argument("parameter " + name + " missing or mis-shaped");
            }
        }
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error("incompatible checkpoint " + path + ": " + e.what());
    }
    return out;
}

EpisodeMetrics run_classical(const ExperimentConfig& cfg, const std::string& method, const FlowSchedule& flow)
{
    const PhaseTable table = experiment_table(cfg);
    const int n = cfg.grid.size();
    std::vector<std::unique_ptr<Controller>> ctl;
    if (method == "fixedtime") {
        const GridSearchResult gs = grid_search_fixedtime(cfg.fixedtime_cycles, cfg.sim, table, cfg.grid, flow, cfg.seed);
        for (int k = 0; k < n; ++k)
            ctl.push_back(std::make_unique<FixedTimeController>(gs.plan, table, cfg.sim.decision_interval, cfg.sim.clearance()));
    } else if (method == "formula") {
        for (int k = 0; k < n; ++k) {
            const std::vector<double> vol = flow.movement_volumes(k, table.num_movements(), cfg.sim.episode_length);
            const WebsterPlan w = formula_plan(vol, table, default_plan_phases(table), cfg.sim);
            ctl.push_back(std::make_unique<FixedTimeController>(w.plan, table, cfg.sim.decision_interval, cfg.sim.clearance()));
        }
    } else if (method == "sotl") {
        for (int k = 0; k < n; ++k) ctl.push_back(std::make_unique<SotlController>(cfg.sotl, table, cfg.sim.decision_interval));
    } else {
        throw std::invalid_argument("not a classical method: " + method);
    }
    std::vector<Controller*> ptrs;
    for (auto& c : ctl) ptrs.push_back(c.get());
    return run_grid_controllers(ptrs, cfg.sim, table, cfg.grid, flow, cfg.seed);
}

void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& curve)
{
    out << "learner_step,eval_travel_time,exited_count\n";
    for (const CurveRow& r : curve) out << r.learner_step << ',' << format_real(r.eval_travel_time) << ',' << r.exited_count << '\n';
}

void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows)
{
    out << "method,avg_travel_time,exited_count\n";
    for (const CompareRow& r : rows) out << r.method << ',' << format_real(r.avg_travel_time) << ',' << r.exited_count << '\n';
}

TrainSummary cmd_train(const ExperimentConfig& cfg, std::ostream* log)
{
    cfg.validate();
    if (cfg.agent != "frap" && cfg.agent != "vanilla") throw std::invalid_argument("train needs a learned agent (frap or vanilla)");
    write_config_echo(cfg);
    const EnvSpec env = experiment_env(cfg);
    const auto net = experiment_network(cfg, cfg.agent);
    const auto nets = replicate(*net, cfg.grid.size());
    TrainConfig tc = cfg.training;
    tc.seed = cfg.seed;

    TrainSummary s;
    s.result = train(env, experiment_train_flows(cfg), experiment_flow(cfg), nets, tc, [&](const CurveRow& r) {
        if (log)
            *log << "step " << r.learner_step << " travel_time " << format_real(r.eval_travel_time) << " exited "
                 << r.exited_count << std::endl;
    });
    s.curve_path = out_file(cfg, "learning_curve.csv");
    {
        auto out = open_out(s.curve_path);
        write_curve_csv(out, s.result.curve);
    }
    s.checkpoint_path = out_file(cfg, "checkpoint.bin");
    save_agent_checkpoint(s.checkpoint_path, *net, s.result.best_params, cfg);
    return s;
}

EpisodeMetrics cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint, std::ostream* log)
{
    cfg.validate();
    const AgentCheckpoint ck = load_agent_checkpoint(checkpoint, cfg);
    const auto net = make_network(experiment_table(cfg), ck.network);
    const auto nets = replicate(*net, cfg.grid.size());
    const EpisodeMetrics m = evaluate_greedy(experiment_env(cfg), experiment_flow(cfg), nets, ck.params);
    {
        auto out = open_out(out_file(cfg, "vehicles.csv"));
        m.write_vehicles_csv(out);
    }
    for (int k = 0; k < cfg.grid.size(); ++k) {
        auto out = open_out(out_file(cfg, cfg.grid.size() == 1 ? "intervals.csv" : "intervals_" + std::to_string(k) + ".csv"));
        m.write_intervals_csv(out, k);
    }
    if (log) *log << "avg_travel_time " << format_real(m.avg_travel_time) << " exited " << m.exited_count << std::endl;
    return m;
}

std::vector<CompareRow> cmd_compare(const ExperimentConfig& cfg, const std::vector<std::string>& methods, std::ostream* log)
{
    cfg.validate();
    if (methods.empty()) throw std::invalid_argument("compare needs at least one method");
    const FlowSchedule flow = experiment_flow(cfg);
    std::vector<CompareRow> rows;
    for (const std::string& method : methods) {
        EpisodeMetrics m;
        if (method == "frap" || method == "vanilla") {
            ExperimentConfig c = cfg;
            c.agent = method;
            const auto net = experiment_network(c, method);
            const auto nets = replicate(*net, c.grid.size());
            TrainConfig tc = c.training;
            tc.seed = c.seed;
            const TrainResult r = train(experiment_env(c), experiment_train_flows(c), flow, nets, tc);
            m = evaluate_greedy(experiment_env(c), flow, nets, r.best_params);
        } else {
            m = run_classical(cfg, method, flow);
        }
        rows.push_back(CompareRow{method, m.avg_travel_time, m.exited_count, m.censored_travel_time});
        if (log) *log << method << " " << format_real(m.avg_travel_time) << " " << m.exited_count << std::endl;
    }
    auto out = open_out(out_file(cfg, "compare.csv"));
    write_compare_csv(out, rows);
    return rows;
}

TransferReport cmd_transfer(const ExperimentConfig& cfg, const std::string& checkpoint, const std::string& op_name,
                            bool retrain, std::ostream* log)
{
    cfg.validate();
    if (cfg.grid.size() != 1) throw std::invalid_argument("transfer is defined for single intersections");
    const PhaseTable table = experiment_table(cfg);
    const SymmetryOp op = named_symmetry(table, op_name == "identity" ? "identity" : op_name);
    const AgentCheckpoint ck = load_agent_checkpoint(checkpoint, cfg);
    const auto net = make_network(table, ck.network);
    const auto nets = replicate(*net, 1);
    const EnvSpec env = experiment_env(cfg);

    const FlowSchedule flow = experiment_flow(cfg);
    const FlowSchedule mirrored = mirror_flow(op, flow);
    const EpisodeMetrics orig = evaluate_greedy(env, flow, nets, ck.params);
    const EpisodeMetrics moved = evaluate_greedy(env, mirrored, nets, ck.params);

    TransferReport rep;
    rep.op = op_name;
    rep.original_travel_time = orig.avg_travel_time;
    rep.original_exited = orig.exited_count;
    rep.transferred_travel_time = moved.avg_travel_time;
    rep.transferred_exited = moved.exited_count;
    if (retrain) {
        auto shared = std::make_shared<const FlowSchedule>(mirrored);
        FlowProvider flows;
        if (!cfg.flow.file.empty()) {
            flows = [shared](std::uint64_t) { return *shared; };
        } else {
            const FlowProvider base = experiment_train_flows(cfg);
            flows = [base, op](std::uint64_t s) { return mirror_flow(op, base(s)); };
        }
        TrainConfig tc = cfg.training;
        tc.seed = cfg.seed;
        const TrainResult r = train(env, flows, mirrored, nets, tc);
        rep.retrained_travel_time = evaluate_greedy(env, mirrored, nets, r.best_params).avg_travel_time;
    }
    auto out = open_out(out_file(cfg, "transfer.csv"));
    out << "op,original_travel_time,transferred_travel_time,retrained_travel_time,original_exited,transferred_exited\n";
    out << rep.op << ',' << format_real(rep.original_travel_time) << ',' << format_real(rep.transferred_travel_time) << ','
        << (rep.retrained_travel_time ? format_real(*rep.retrained_travel_time) : std::string()) << ',' << rep.original_exited
        << ',' << rep.transferred_exited << '\n';
    if (log)
        *log << "original " << format_real(rep.original_travel_time) << " transferred " << format_real(rep.transferred_travel_time)
             << std::endl;
    return rep;
}

void cmd_gen_flow(const ExperimentConfig& cfg, const std::string& path)
{
    cfg.validate();
    write_flow_csv(path, experiment_flow(cfg));
}

}  // namespace frap
