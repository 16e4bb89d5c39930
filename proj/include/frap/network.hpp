#pragma once

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "frap/autodiff.hpp"
#include "frap/state.hpp"
#include "frap/topology.hpp"

namespace frap {

/// Per-phase scores in PhaseTable phase order.
using QValues = std::vector<Real>;

/// A Q-network over TrafficState batches. Parameters live outside the
/// network object, so one network can evaluate any number of snapshots
/// concurrently.
class QNetwork {
public:
    explicit QNetwork(PhaseTable table) : table_(std::move(table)) {}
    virtual ~QNetwork() = default;

    virtual std::string kind() const = 0;
    virtual ParamSet init_params(std::mt19937_64& rng) const = 0;
    /// Returns a [B, P] tensor of Q values.
    virtual Var forward(Tape& tape, const ParamVars& params, std::span<const TrafficState> batch) const = 0;
    /// Self-description stored next to checkpoints.
    virtual nlohmann::json describe() const = 0;

    const PhaseTable& table() const { return table_; }
    int num_phases() const { return table_.num_phases(); }

    QValues q_values(const ParamSet& params, const TrafficState& state) const;
    std::vector<QValues> q_values(const ParamSet& params, std::span<const TrafficState> batch) const;

protected:
    void check_state(const TrafficState& s) const;

    PhaseTable table_;
};

struct FrapConfig {
    int volume_hidden = 4;   // width of h^v
    int signal_hidden = 4;   // width of h^s
    int demand_dim = 16;     // width of d_i
    int relation_dim = 4;    // relation embedding width
    int conv_width = 20;     // channels of every hidden 1x1 conv
    int conv_layers = 1;     // K
    double capacity = 40;    // counts are divided by this before the first layer
    bool output_relu = false;

    nlohmann::json to_json() const;
    static FrapConfig from_json(const nlohmann::json& j);
};

/// Phase-competition network: movement demand -> phase demand -> pair
/// volumes -> 1x1 conv competition -> per-phase sum over opponents.
class FrapNetwork final : public QNetwork {
public:
    FrapNetwork(PhaseTable table, FrapConfig cfg = {});

    std::string kind() const override { return "frap"; }
    ParamSet init_params(std::mt19937_64& rng) const override;
    Var forward(Tape& tape, const ParamVars& params, std::span<const TrafficState> batch) const override;
    nlohmann::json describe() const override;

    const FrapConfig& config() const { return cfg_; }

    /// [B, M] counts and signal bits -> [B, M, demand_dim].
    Var movement_demand(const ParamVars& params, Var counts, Var bits) const;
    /// [B, M, D] -> [B, P, D]; each row is the sum of the phase's two member demands.
    Var phase_demand(Var movement_demands) const;
    /// Pair demand volume [B, P, P-1, 2D] and relation volume [B, P, P-1, L].
    std::pair<Var, Var> build_volumes(const ParamVars& params, Var phase_demands) const;
    /// Competition stage: volumes -> [B, P] scores.
    Var compete(const ParamVars& params, Var demand_volume, Var relation_volume) const;
    /// Same result as compete(build_volumes(...)) without materializing the
    /// pair volume: the first demand conv is split into self and opponent
    /// halves applied per phase, and the relation branch is computed once and
    /// shared across the batch.
    Var compete_fast(const ParamVars& params, Var phase_demands) const;

    /// Opponents of phase p in ascending index order, skipping p.
    std::vector<int> opponents(int p) const;
    /// Relation index (0 partial, 1 full) for every (p, opponent) cell.
    const std::vector<int>& relation_cells() const { return relation_cells_; }

private:
    FrapConfig cfg_;
    std::vector<int> first_member_, second_member_;
    std::vector<int> pair_self_, pair_opponent_;
    std::vector<int> relation_cells_;
};

struct VanillaConfig {
    int hidden = 32;
    double capacity = 40;

    nlohmann::json to_json() const;
    static VanillaConfig from_json(const nlohmann::json& j);
};

/// Flat two-hidden-layer DQN over the concatenated [counts / n, bits] vector.
class VanillaNetwork final : public QNetwork {
public:
    VanillaNetwork(PhaseTable table, VanillaConfig cfg = {});

    std::string kind() const override { return "vanilla"; }
    ParamSet init_params(std::mt19937_64& rng) const override;
    Var forward(Tape& tape, const ParamVars& params, std::span<const TrafficState> batch) const override;
    nlohmann::json describe() const override;

    const VanillaConfig& config() const { return cfg_; }

private:
    VanillaConfig cfg_;
};

/// Rebuilds a network from its describe() output.
std::unique_ptr<QNetwork> make_network(const PhaseTable& table, const nlohmann::json& description);

/// argmax over the allowed phases; ties go to the lowest phase index.
int greedy_action(const QValues& q, std::span<const int> allowed);

/// Relative gap below which two Q-values count as tied.
inline constexpr double kTieTolerance = 1e-9;

/// argmax with a tie-break that commutes with every symmetry op: tied
/// Q-values are ordered by the phase's own queues (total, through share,
/// longest member), the queue on the approaches it serves, keeping the
/// current phase, and finally the lowest index.
int greedy_action(const QValues& q, std::span<const int> allowed, const PhaseTable& table, const TrafficState& state);

/// Glorot-uniform weights, zero biases.
Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace frap
