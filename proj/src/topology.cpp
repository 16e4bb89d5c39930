#include "frap/topology.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace frap {

namespace {

const char* kApproachNames4[] = {"N", "E", "S", "W"};

int ring_mod(int v, int r) { return ((v % r) + r) % r; }

}  // namespace

bool opposite_approaches(int ring_size, int a, int b)
{
    const int d = ring_mod(b - a, ring_size);
    if (ring_size == 4) return d == 2;
    // Odd ring: the two approaches at ring distance 2 both count as opposite.
    return std::min(d, ring_size - d) == 2;
}

bool geometric_non_conflicting(int ring_size, const Movement& a, const Movement& b)
{
    if (a.id == b.id) return true;
    if (a.approach == b.approach) return true;
    return a.turn == b.turn && opposite_approaches(ring_size, a.approach, b.approach);
}

PhaseTable PhaseTable::build(int n_approaches)
{
    if (n_approaches < 3 || n_approaches > 5)
        throw std::invalid_argument("n_approaches must be 3, 4 or 5 (got " + std::to_string(n_approaches) + ")");

    PhaseTable t;
    t.n_approaches_ = n_approaches;
    t.ring_size_ = n_approaches == 5 ? 5 : 4;
    // The 3-approach layout keeps the 4-slot ring with the south approach padded.
    const int missing = n_approaches == 3 ? 2 : -1;

    for (int a = 0; a < t.ring_size_; ++a) {
        for (Turn turn : {Turn::Through, Turn::Left}) {
            Movement m;
            m.id = static_cast<int>(t.movements_.size());
            m.approach = a;
            m.turn = turn;
            m.present = a != missing;
            t.movements_.push_back(m);
        }
    }

    const int n = t.num_movements();
    t.conflict_.assign(static_cast<std::size_t>(n * n), 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            t.conflict_[static_cast<std::size_t>(i * n + j)] =
                geometric_non_conflicting(t.ring_size_, t.movements_[i], t.movements_[j]) ? 0 : 1;

    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (t.conflicts(i, j)) continue;
            Phase p;
            p.members = {i, j};
            p.active = t.movements_[i].present && t.movements_[j].present;
            t.phases_.push_back(p);
        }
    }
    return t;
}

PhaseTable PhaseTable::restrict_to(const std::vector<int>& phase_indices) const
{
    if (phase_indices.size() < 2) throw std::invalid_argument("a phase set needs at least two phases");
    PhaseTable t = *this;
    t.phases_.clear();
    for (int p : phase_indices) {
        if (p < 0 || p >= num_phases()) throw std::out_of_range("phase index out of range: " + std::to_string(p));
        for (const Phase& q : t.phases_)
            if (q.members == phases_[p].members) throw std::invalid_argument("duplicate phase in phase set");
        t.phases_.push_back(phases_[static_cast<std::size_t>(p)]);
    }
    return t;
}

bool PhaseTable::conflicts(int a, int b) const
{
    const int n = num_movements();
    if (a < 0 || b < 0 || a >= n || b >= n) throw std::out_of_range("movement index out of range");
    return conflict_[static_cast<std::size_t>(a * n + b)] != 0;
}

PhaseRelation PhaseTable::relation(int p, int q) const
{
    if (p == q) throw std::invalid_argument("relation is defined for distinct phases only");
    const Phase& a = phase(p);
    const Phase& b = phase(q);
    int shared = 0;
    for (int m : a.members)
        if (b.contains(m)) ++shared;
    return shared == 1 ? PhaseRelation::PartialCompeting : PhaseRelation::FullyCompeting;
}

int PhaseTable::find_phase(int a, int b) const
{
    const std::array<int, 2> key{std::min(a, b), std::max(a, b)};
    for (int p = 0; p < num_phases(); ++p)
        if (phases_[static_cast<std::size_t>(p)].members == key) return p;
    return -1;
}

std::vector<int> PhaseTable::active_phases() const
{
    std::vector<int> out;
    for (int p = 0; p < num_phases(); ++p)
        if (phases_[static_cast<std::size_t>(p)].active) out.push_back(p);
    return out;
}

std::vector<int> PhaseTable::phase_bits(int p) const
{
    std::vector<int> bits(static_cast<std::size_t>(num_movements()), 0);
    for (int m : phase(p).members) bits[static_cast<std::size_t>(m)] = 1;
    return bits;
}

std::vector<int> PhaseTable::four_phase_indices() const
{
    if (n_approaches_ != 4) throw std::invalid_argument("the 4-phase set is defined for 4-approach intersections only");
    const int NT = movement_index(0, Turn::Through), NL = movement_index(0, Turn::Left);
    const int ET = movement_index(1, Turn::Through), EL = movement_index(1, Turn::Left);
    const int ST = movement_index(2, Turn::Through), SL = movement_index(2, Turn::Left);
    const int WT = movement_index(3, Turn::Through), WL = movement_index(3, Turn::Left);
    std::vector<int> out{find_phase(NT, ST), find_phase(NL, SL), find_phase(ET, WT), find_phase(EL, WL)};
    for (int p : out)
        if (p < 0) throw std::logic_error("4-phase set not contained in this table");
    return out;
}

std::string PhaseTable::movement_name(int i) const
{
    const Movement& m = movement(i);
    std::string a = ring_size_ == 4 ? kApproachNames4[m.approach] : "A" + std::to_string(m.approach);
    return a + (m.turn == Turn::Through ? "T" : "L");
}

nlohmann::json PhaseTable::to_json() const
{
    nlohmann::json j;
    j["n_approaches"] = n_approaches_;
    j["ring_size"] = ring_size_;
    auto& mv = j["movements"] = nlohmann::json::array();
    for (const Movement& m : movements_) {
        mv.push_back({{"id", m.id},
                      {"name", movement_name(m.id)},
                      {"approach", m.approach},
                      {"turn", m.turn == Turn::Through ? "through" : "left"},
                      {"present", m.present}});
    }
    auto& ph = j["phases"] = nlohmann::json::array();
    for (int p = 0; p < num_phases(); ++p) {
        const Phase& x = phases_[static_cast<std::size_t>(p)];
        ph.push_back({{"index", p},
                      {"members", {x.members[0], x.members[1]}},
                      {"name", movement_name(x.members[0]) + "+" + movement_name(x.members[1])},
                      {"active", x.active}});
    }
    auto& cm = j["conflict"] = nlohmann::json::array();
    for (int a = 0; a < num_movements(); ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (int b = 0; b < num_movements(); ++b) row.push_back(conflicts(a, b) ? 1 : 0);
        cm.push_back(row);
    }
    auto& rel = j["relation"] = nlohmann::json::array();
    for (int p = 0; p < num_phases(); ++p) {
        nlohmann::json row = nlohmann::json::array();
        for (int q = 0; q < num_phases(); ++q) {
            if (p == q)
                row.push_back(nullptr);
            else
                row.push_back(relation(p, q) == PhaseRelation::PartialCompeting ? "partial" : "full");
        }
        rel.push_back(row);
    }
    return j;
}

SymmetryOp SymmetryOp::inverse() const
{
    auto inv = [](const std::vector<int>& p) {
        std::vector<int> out(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(p[i])] = static_cast<int>(i);
        return out;
    };
    return SymmetryOp{name + "^-1", inv(approach_perm), inv(movement_perm), inv(phase_perm)};
}

bool SymmetryOp::is_identity() const
{
    for (std::size_t i = 0; i < movement_perm.size(); ++i)
        if (movement_perm[i] != static_cast<int>(i)) return false;
    for (std::size_t i = 0; i < phase_perm.size(); ++i)
        if (phase_perm[i] != static_cast<int>(i)) return false;
    return true;
}

SymmetryOp compose(const SymmetryOp& g, const SymmetryOp& h)
{
    if (g.movement_perm.size() != h.movement_perm.size() || g.phase_perm.size() != h.phase_perm.size())
        throw std::invalid_argument("cannot compose symmetries of different tables");
    auto cat = [](const std::vector<int>& a, const std::vector<int>& b) {
        std::vector<int> out(b.size());
        for (std::size_t i = 0; i < b.size(); ++i) out[i] = a[static_cast<std::size_t>(b[i])];
        return out;
    };
    return SymmetryOp{g.name + "*" + h.name, cat(g.approach_perm, h.approach_perm), cat(g.movement_perm, h.movement_perm),
                      cat(g.phase_perm, h.phase_perm)};
}

SymmetryOp make_symmetry(const PhaseTable& table, std::vector<int> approach_perm, std::string name)
{
    const int r = table.ring_size();
    if (static_cast<int>(approach_perm.size()) != r) throw std::invalid_argument("approach permutation has wrong size");
    std::vector<int> check = approach_perm;
    std::sort(check.begin(), check.end());
    for (int i = 0; i < r; ++i)
        if (check[static_cast<std::size_t>(i)] != i) throw std::invalid_argument("not a permutation");

    SymmetryOp op;
    op.name = std::move(name);
    op.approach_perm = std::move(approach_perm);
    op.movement_perm.resize(static_cast<std::size_t>(table.num_movements()));
    for (const Movement& m : table.movements()) {
        const int a = op.approach_perm[static_cast<std::size_t>(m.approach)];
        const int img = table.movement_index(a, m.turn);
        if (table.movement(img).present != m.present)
            throw std::invalid_argument("symmetry " + op.name + " does not preserve the movement set");
        op.movement_perm[static_cast<std::size_t>(m.id)] = img;
    }
    op.phase_perm.resize(static_cast<std::size_t>(table.num_phases()));
    for (int p = 0; p < table.num_phases(); ++p) {
        const Phase& ph = table.phase(p);
        const int img = table.find_phase(op.movement_perm[static_cast<std::size_t>(ph.members[0])],
                                         op.movement_perm[static_cast<std::size_t>(ph.members[1])]);
        if (img < 0) throw std::invalid_argument("symmetry " + op.name + " maps a phase outside the table");
        op.phase_perm[static_cast<std::size_t>(p)] = img;
    }
    return op;
}

std::vector<SymmetryOp> symmetry_group(const PhaseTable& table)
{
    const int r = table.ring_size();
    std::vector<std::pair<std::vector<int>, std::string>> candidates;
    for (int k = 0; k < r; ++k) {
        std::vector<int> perm(static_cast<std::size_t>(r));
        for (int a = 0; a < r; ++a) perm[static_cast<std::size_t>(a)] = ring_mod(a + k, r);
        candidates.emplace_back(perm, k == 0 ? "identity" : (r == 4 ? "rot" + std::to_string(90 * k) : "rot" + std::to_string(k)));
    }
    const char* flip_names4[] = {"flip", "flip_diag", "flip_ns", "flip_antidiag"};
    for (int k = 0; k < r; ++k) {
        std::vector<int> perm(static_cast<std::size_t>(r));
        for (int a = 0; a < r; ++a) perm[static_cast<std::size_t>(a)] = ring_mod(k - a, r);
        candidates.emplace_back(perm, r == 4 ? flip_names4[k] : "reflect" + std::to_string(k));
    }

    std::vector<SymmetryOp> group;
    for (auto& [perm, name] : candidates) {
        try {
            group.push_back(make_symmetry(table, perm, name));
        } catch (const std::invalid_argument&) {
            // not a symmetry of this table
        }
    }
    return group;
}

SymmetryOp named_symmetry(const PhaseTable& table, const std::string& name)
{
    for (SymmetryOp& op : symmetry_group(table))
        if (op.name == name) return op;
    throw std::invalid_argument("unknown or unsupported symmetry op: " + name);
}

}  // namespace frap

namespace frap {

TrafficState apply_symmetry(const SymmetryOp& op, const TrafficState& state)
{
    const std::size_t n = op.movement_perm.size();
    if (state.counts.size() != n || state.signal_bits.size() != n)
        throw std::invalid_argument("state dimension does not match symmetry op");
    if (state.phase_index >= static_cast<int>(op.phase_perm.size()))
        throw std::invalid_argument("state phase index out of range for symmetry op");
    TrafficState out;
    out.counts.resize(n);
    out.signal_bits.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = static_cast<std::size_t>(op.movement_perm[i]);
        out.counts[j] = state.counts[i];
        out.signal_bits[j] = state.signal_bits[i];
    }
    out.phase_index = state.phase_index < 0 ? state.phase_index : op.phase_perm[static_cast<std::size_t>(state.phase_index)];
    return out;
}

}  // namespace frap
