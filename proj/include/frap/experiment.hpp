#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "frap/classical.hpp"
#include "frap/network.hpp"
#include "frap/training.hpp"

namespace frap {

/// Where an experiment's vehicles come from: a CSV file or a synthesis recipe.
struct FlowSource {
    std::string file;    // non-empty: read this CSV
    std::string preset;  // named rate table, see preset_rates()
    FlowSynthesisSpec spec;

    nlohmann::json to_json() const;
};

/// Per-movement rates (veh/h, 4-approach order NT,NL,ET,EL,ST,SL,WT,WL) of
/// the shipped benchmark flows: balanced-8, unbalanced-WE, flip-pair-morning,
/// flip-pair-evening.
std::vector<double> preset_rates(const std::string& name);
std::vector<std::string> preset_names();

struct ExperimentConfig {
    int approaches = 4;
    GridShape grid;
    SimConfig sim;
    std::string phase_set = "8-phase";  // or "4-phase"
    std::string agent = "frap";         // frap | vanilla | fixedtime | formula | sotl
    FrapConfig frap;
    VanillaConfig vanilla;
    TrainConfig training;
    std::vector<double> fixedtime_cycles{20, 40, 60, 80, 120, 160};
    SotlConfig sotl;
    FlowSource flow;
    std::uint64_t seed = 0;
    std::string out_dir = "runs/default";

    /// Checks every cross-field constraint; throws std::invalid_argument.
    void validate() const;
    nlohmann::json to_json() const;
    /// Unknown keys are rejected so typos do not silently fall back to defaults.
    static ExperimentConfig from_json(const nlohmann::json& j);
};

ExperimentConfig load_config(const std::string& path);

PhaseTable experiment_table(const ExperimentConfig& cfg);
EnvSpec experiment_env(const ExperimentConfig& cfg);
/// The evaluation flow: the CSV, or the recipe synthesized with cfg.seed.
FlowSchedule experiment_flow(const ExperimentConfig& cfg);
/// Training flows: the CSV, or the recipe re-synthesized per episode seed.
FlowProvider experiment_train_flows(const ExperimentConfig& cfg);
std::unique_ptr<QNetwork> experiment_network(const ExperimentConfig& cfg, const std::string& kind);

/// Per-agent parameters plus the network self-description.
struct AgentCheckpoint {
    nlohmann::json network;
    std::vector<ParamSet> params;
};

void save_agent_checkpoint(const std::string& path, const QNetwork& net, const std::vector<ParamSet>& params,
                           const ExperimentConfig& cfg);
/// Loads and checks the sidecar against the experiment's geometry and phase set.
AgentCheckpoint load_agent_checkpoint(const std::string& path, const ExperimentConfig& cfg);

struct TrainSummary {
    TrainResult result;
    std::string checkpoint_path;
    std::string curve_path;
};

struct CompareRow {
    std::string method;
    double avg_travel_time = 0;
    std::int64_t exited_count = 0;
    double censored_travel_time = 0;
};

struct TransferReport {
    std::string op;
    double original_travel_time = 0;
    double transferred_travel_time = 0;
    std::int64_t original_exited = 0;
    std::int64_t transferred_exited = 0;
    std::optional<double> retrained_travel_time;
};

/// Runs a non-learning method on `flow` (fixedtime is grid-searched on it).
EpisodeMetrics run_classical(const ExperimentConfig& cfg, const std::string& method, const FlowSchedule& flow);

/// Writes config.json, learning_curve.csv and checkpoint.bin(.json) to cfg.out_dir.
TrainSummary cmd_train(const ExperimentConfig& cfg, std::ostream* log = nullptr);
/// Writes vehicles.csv and intervals.csv (per intersection) to cfg.out_dir.
EpisodeMetrics cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint, std::ostream* log = nullptr);
/// Writes compare.csv with one row per method, all on the same flow instance.
std::vector<CompareRow> cmd_compare(const ExperimentConfig& cfg, const std::vector<std::string>& methods,
                                    std::ostream* log = nullptr);
/// Evaluates a checkpoint on mirror_flow(op, flow) without retraining; writes transfer.csv.
TransferReport cmd_transfer(const ExperimentConfig& cfg, const std::string& checkpoint, const std::string& op,
                            bool retrain = false, std::ostream* log = nullptr);
/// Writes the evaluation flow as CSV.
void cmd_gen_flow(const ExperimentConfig& cfg, const std::string& path);

void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& curve);
void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows);

}  // namespace frap
