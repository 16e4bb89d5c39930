#include "frap/network.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace frap {

namespace {

nlohmann::json phases_json(const PhaseTable& table)
{
    nlohmann::json out = nlohmann::json::array();
    for (const Phase& p : table.phases()) out.push_back({p.members[0], p.members[1]});
    return out;
}

void check_positive(int v, const char* name)
{
    if (v <= 0) throw std::invalid_argument(std::string(name) + " must be positive");
}

// Normalised counts and bits as two [B, M] constants.
std::pair<Var, Var> state_inputs(Tape& tape, std::span<const TrafficState> batch, std::size_t m, double capacity)
{
    Tensor counts(Shape{batch.size(), m});
    Tensor bits(Shape{batch.size(), m});
    for (std::size_t b = 0; b < batch.size(); ++b) {
        for (std::size_t i = 0; i < m; ++i) {
            counts[b * m + i] = static_cast<Real>(batch[b].counts[i]) / capacity;
            bits[b * m + i] = static_cast<Real>(batch[b].signal_bits[i]);
        }
    }
    return {tape.constant(std::move(counts)), tape.constant(std::move(bits))};
}

}  // namespace

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor w(Shape{fan_in, fan_out});
    for (Real& v : w.data()) v = u(rng);
    return w;
}

void QNetwork::check_state(const TrafficState& s) const
{
    const auto m = static_cast<std::size_t>(table_.num_movements());
    if (s.counts.size() != m || s.signal_bits.size() != m)
        throw std::invalid_argument("state has " + std::to_string(s.counts.size()) + " movements, network expects " +
                                    std::to_string(m));
    for (std::size_t i = 0; i < m; ++i) {
        if (s.counts[i] < 0) throw std::invalid_argument("negative vehicle count");
        if (s.signal_bits[i] != 0 && s.signal_bits[i] != 1) throw std::invalid_argument("signal bit must be 0 or 1");
    }
}

QValues QNetwork::q_values(const ParamSet& params, const TrafficState& state) const
{
    return q_values(params, std::span<const TrafficState>(&state, 1)).front();
}

std::vector<QValues> QNetwork::q_values(const ParamSet& params, std::span<const TrafficState> batch) const
{
    Tape tape(false);
    const ParamVars vars = place_params(tape, params);
    const Tensor& q = forward(tape, vars, batch).value();
    const std::size_t P = static_cast<std::size_t>(num_phases());
    std::vector<QValues> out(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) out[b].assign(q.ptr() + b * P, q.ptr() + (b + 1) * P);
    return out;
}

nlohmann::json FrapConfig::to_json() const
{
    return {{"volume_hidden", volume_hidden}, {"signal_hidden", signal_hidden}, {"demand_dim", demand_dim},
            {"relation_dim", relation_dim},   {"conv_width", conv_width},       {"conv_layers", conv_layers},
            {"capacity", capacity},           {"output_relu", output_relu}};
}

FrapConfig FrapConfig::from_json(const nlohmann::json& j)
{
    FrapConfig c;
    c.volume_hidden = j.value("volume_hidden", c.volume_hidden);
    c.signal_hidden = j.value("signal_hidden", c.signal_hidden);
    c.demand_dim = j.value("demand_dim", c.demand_dim);
    c.relation_dim = j.value("relation_dim", c.relation_dim);
    c.conv_width = j.value("conv_width", c.conv_width);
    c.conv_layers = j.value("conv_layers", c.conv_layers);
    c.capacity = j.value("capacity", c.capacity);
    c.output_relu = j.value("output_relu", c.output_relu);
    return c;
}

FrapNetwork::FrapNetwork(PhaseTable table, FrapConfig cfg) : QNetwork(std::move(table)), cfg_(cfg)
{
    check_positive(cfg_.volume_hidden, "volume_hidden");
    check_positive(cfg_.signal_hidden, "signal_hidden");
    check_positive(cfg_.demand_dim, "demand_dim");
    check_positive(cfg_.relation_dim, "relation_dim");
    check_positive(cfg_.conv_width, "conv_width");
    check_positive(cfg_.conv_layers, "conv_layers");
    if (!(cfg_.capacity > 0)) throw std::invalid_argument("capacity must be positive");

    const int P = table_.num_phases();
    for (int p = 0; p < P; ++p) {
        first_member_.push_back(table_.phase(p).members[0]);
        second_member_.push_back(table_.phase(p).members[1]);
        for (int q : opponents(p)) {
            pair_self_.push_back(p);
            pair_opponent_.push_back(q);
            relation_cells_.push_back(static_cast<int>(table_.relation(p, q)));
        }
    }
}

std::vector<int> FrapNetwork::opponents(int p) const
{
    std::vector<int> out;
    for (int q = 0; q < table_.num_phases(); ++q)
        if (q != p) out.push_back(q);
    return out;
}

ParamSet FrapNetwork::init_params(std::mt19937_64& rng) const
{
    const auto hv = static_cast<std::size_t>(cfg_.volume_hidden);
    const auto hs = static_cast<std::size_t>(cfg_.signal_hidden);
    const auto d = static_cast<std::size_t>(cfg_.demand_dim);
    const auto l1 = static_cast<std::size_t>(cfg_.relation_dim);
    const auto w = static_cast<std::size_t>(cfg_.conv_width);

    ParamSet p;
    p["demand.Wv"] = glorot(1, hv, rng);
    p["demand.bv"] = Tensor(Shape{hv}, 0);
    p["demand.Ws"] = glorot(1, hs, rng);
    p["demand.bs"] = Tensor(Shape{hs}, 0);
    p["demand.Wh"] = glorot(hv + hs, d, rng);
    p["demand.bh"] = Tensor(Shape{d}, 0);
    Tensor emb(Shape{2, l1});
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Real& v : emb.data()) v = u(rng);
    p["relation.embedding"] = std::move(emb);
    std::size_t din = 2 * d, rin = l1;
    for (int k = 0; k < cfg_.conv_layers; ++k) {
        const std::string s = std::to_string(k);
        p["conv.demand" + s + ".W"] = glorot(din, w, rng);
        p["conv.demand" + s + ".b"] = Tensor(Shape{w}, 0);
        p["conv.relation" + s + ".W"] = glorot(rin, w, rng);
        p["conv.relation" + s + ".b"] = Tensor(Shape{w}, 0);
        din = rin = w;
    }
    p["output.W"] = glorot(w, 1, rng);
    p["output.b"] = Tensor(Shape{1}, 0);
    return p;
}

Var FrapNetwork::movement_demand(const ParamVars& params, Var counts, Var bits) const
{
    const Shape s = counts.shape();
    Var fv = reshape(counts, Shape{s[0], s[1], 1});
    Var fs = reshape(bits, Shape{s[0], s[1], 1});
    Var hv = relu(affine(fv, params.at("demand.Wv"), params.at("demand.bv")));
    Var hs = relu(affine(fs, params.at("demand.Ws"), params.at("demand.bs")));
    return relu(affine(concat({hv, hs}, 2), params.at("demand.Wh"), params.at("demand.bh")));
}

Var FrapNetwork::phase_demand(Var movement_demands) const
{
    return add(gather(movement_demands, 1, first_member_), gather(movement_demands, 1, second_member_));
}

std::pair<Var, Var> FrapNetwork::build_volumes(const ParamVars& params, Var phase_demands) const
{
    const std::size_t B = phase_demands.shape()[0];
    const std::size_t D = phase_demands.shape()[2];
    const auto P = static_cast<std::size_t>(table_.num_phases());
    const std::size_t O = P - 1;
    Var pair = concat({gather(phase_demands, 1, pair_self_), gather(phase_demands, 1, pair_opponent_)}, 2);
    Var demand_volume = reshape(pair, Shape{B, P, O, 2 * D});

    std::vector<int> rel;
    rel.reserve(B * relation_cells_.size());
    for (std::size_t b = 0; b < B; ++b) rel.insert(rel.end(), relation_cells_.begin(), relation_cells_.end());
    Var relation_volume = embed(params.at("relation.embedding"), std::move(rel), Shape{B, P, O});
    return {demand_volume, relation_volume};
}

Var FrapNetwork::compete(const ParamVars& params, Var demand_volume, Var relation_volume) const
{
    Var hd = demand_volume;
    Var hr = relation_volume;
    for (int k = 0; k < cfg_.conv_layers; ++k) {
        const std::string s = std::to_string(k);
        hd = relu(conv1x1(hd, params.at("conv.demand" + s + ".W"), params.at("conv.demand" + s + ".b")));
        hr = relu(conv1x1(hr, params.at("conv.relation" + s + ".W"), params.at("conv.relation" + s + ".b")));
    }
    Var c = conv1x1(mul_elem(hd, hr), params.at("output.W"), params.at("output.b"));
    if (cfg_.output_relu) c = relu(c);
    const Shape s = c.shape();
    return sum_axis(reshape(c, Shape{s[0], s[1], s[2]}), 2);
}

Var FrapNetwork::compete_fast(const ParamVars& params, Var phase_demands) const
{
    const std::size_t B = phase_demands.shape()[0];
    const std::size_t D = phase_demands.shape()[2];
    const auto P = static_cast<std::size_t>(table_.num_phases());
    const std::size_t O = P - 1;
    const auto w = static_cast<std::size_t>(cfg_.conv_width);

    std::vector<int> top(D), bottom(D);
    for (std::size_t i = 0; i < D; ++i) {
        top[i] = static_cast<int>(i);
        bottom[i] = static_cast<int>(D + i);
    }
    Var W0 = params.at("conv.demand0.W");
    Tape& tape = *phase_demands.tape;
    Var self = affine(phase_demands, gather(W0, 0, top), params.at("conv.demand0.b"));
    Var opp = affine(phase_demands, gather(W0, 0, bottom), tape.constant(Tensor(Shape{w}, 0)));
    Var hd = relu(reshape(add(gather(self, 1, pair_self_), gather(opp, 1, pair_opponent_)), Shape{B, P, O, w}));

    Var hr = embed(params.at("relation.embedding"), relation_cells_, Shape{1, P, O});
    hr = relu(conv1x1(hr, params.at("conv.relation0.W"), params.at("conv.relation0.b")));
    for (int k = 1; k < cfg_.conv_layers; ++k) {
        const std::string s = std::to_string(k);
        hd = relu(conv1x1(hd, params.at("conv.demand" + s + ".W"), params.at("conv.demand" + s + ".b")));
        hr = relu(conv1x1(hr, params.at("conv.relation" + s + ".W"), params.at("conv.relation" + s + ".b")));
    }
    hr = gather(hr, 0, std::vector<int>(B, 0));
    Var c = conv1x1(mul_elem(hd, hr), params.at("output.W"), params.at("output.b"));
    if (cfg_.output_relu) c = relu(c);
    return sum_axis(reshape(c, Shape{B, P, O}), 2);
}

Var FrapNetwork::forward(Tape& tape, const ParamVars& params, std::span<const TrafficState> batch) const
{
    if (batch.empty()) throw std::invalid_argument("empty batch");
    for (const TrafficState& s : batch) check_state(s);
    auto [counts, bits] = state_inputs(tape, batch, static_cast<std::size_t>(table_.num_movements()), cfg_.capacity);
    return compete_fast(params, phase_demand(movement_demand(params, counts, bits)));
}

nlohmann::json FrapNetwork::describe() const
{
    return {{"kind", kind()},
            {"n_approaches", table_.n_approaches()},
            {"phases", phases_json(table_)},
            {"frap", cfg_.to_json()}};
}

nlohmann::json VanillaConfig::to_json() const { return {{"hidden", hidden}, {"capacity", capacity}}; }

VanillaConfig VanillaConfig::from_json(const nlohmann::json& j)
{
    VanillaConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.capacity = j.value("capacity", c.capacity);
    return c;
}

VanillaNetwork::VanillaNetwork(PhaseTable table, VanillaConfig cfg) : QNetwork(std::move(table)), cfg_(cfg)
{
    check_positive(cfg_.hidden, "hidden");
    if (!(cfg_.capacity > 0)) throw std::invalid_argument("capacity must be positive");
}

ParamSet VanillaNetwork::init_params(std::mt19937_64& rng) const
{
    const auto in = static_cast<std::size_t>(2 * table_.num_movements());
    const auto h = static_cast<std::size_t>(cfg_.hidden);
    const auto P = static_cast<std::size_t>(table_.num_phases());
    ParamSet p;
    p["fc1.W"] = glorot(in, h, rng);
    p["fc1.b"] = Tensor(Shape{h}, 0);
    p["fc2.W"] = glorot(h, h, rng);
    p["fc2.b"] = Tensor(Shape{h}, 0);
    p["out.W"] = glorot(h, P, rng);
    p["out.b"] = Tensor(Shape{P}, 0);
    return p;
}

Var VanillaNetwork::forward(Tape& tape, const ParamVars& params, std::span<const TrafficState> batch) const
{
    if (batch.empty()) throw std::invalid_argument("empty batch");
    for (const TrafficState& s : batch) check_state(s);
    auto [counts, bits] = state_inputs(tape, batch, static_cast<std::size_t>(table_.num_movements()), cfg_.capacity);
    Var x = concat({counts, bits}, 1);
    Var h1 = relu(affine(x, params.at("fc1.W"), params.at("fc1.b")));
    Var h2 = relu(affine(h1, params.at("fc2.W"), params.at("fc2.b")));
    return affine(h2, params.at("out.W"), params.at("out.b"));
}

nlohmann::json VanillaNetwork::describe() const
{
    return {{"kind", kind()},
            {"n_approaches", table_.n_approaches()},
            {"phases", phases_json(table_)},
            {"vanilla", cfg_.to_json()}};
}

std::unique_ptr<QNetwork> make_network(const PhaseTable& table, const nlohmann::json& description)
{
    if (description.value("n_approaches", -1) != table.n_approaches())
        throw std::invalid_argument("network description is for a different intersection geometry");
    if (description.value("phases", nlohmann::json()) != phases_json(table))
        throw std::invalid_argument("network description uses a different phase set");
    const std::string kind = description.value("kind", "");
    if (kind == "frap") return std::make_unique<FrapNetwork>(table, FrapConfig::from_json(description.at("frap")));
    if (kind == "vanilla") return std::make_unique<VanillaNetwork>(table, VanillaConfig::from_json(description.at("vanilla")));
    throw std::invalid_argument("unknown network kind: " + kind);
}

int greedy_action(const QValues& q, std::span<const int> allowed)
{
    if (allowed.empty()) throw std::invalid_argument("no allowed actions");
    int best = -1;
    for (int a : allowed) {
        if (a < 0 || static_cast<std::size_t>(a) >= q.size()) throw std::out_of_range("allowed action out of range");
        if (best < 0 || q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)] ||
            (q[static_cast<std::size_t>(a)] == q[static_cast<std::size_t>(best)] && a < best))
            best = a;
    }
    return best;
}

int greedy_action(const QValues& q, std::span<const int> allowed, const PhaseTable& table, const TrafficState& state)
{
    const double top = q[static_cast<std::size_t>(greedy_action(q, allowed))];
    // Mirror-image phases may differ by summation-order rounding only.
    const double floor = top - kTieTolerance * std::max(1.0, std::abs(top));
    auto key = [&](int p) {
        const Phase& ph = table.phase(p);
        std::array<int, 5> k{0, 0, 0, 0, p == state.phase_index ? 1 : 0};
        for (int m : ph.members) {
            const int c = state.counts.at(static_cast<std::size_t>(m));
            k[0] += c;
            if (table.movement(m).turn == Turn::Through) k[1] += c;
            k[2] = std::max(k[2], c);
        }
        // Queue on every approach the phase serves.
        for (int m = 0; m < table.num_movements(); ++m) {
            const int a = table.movement(m).approach;
            if (a == table.movement(ph.members[0]).approach || a == table.movement(ph.members[1]).approach)
                k[3] += state.counts.at(static_cast<std::size_t>(m));
        }
        return k;
    };
    int choice = -1;
    std::array<int, 5> choice_key{};
    for (int a : allowed) {
        if (q[static_cast<std::size_t>(a)] < floor) continue;
        const auto k = key(a);
        if (choice < 0 || k > choice_key || (k == choice_key && a < choice)) {
            choice = a;
            choice_key = k;
        }
    }
    return choice;
}

}  // namespace frap
