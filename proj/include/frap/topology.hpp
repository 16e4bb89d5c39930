#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "frap/state.hpp"

namespace frap {

enum class Turn : std::uint8_t { Through = 0, Left = 1 };

/// Relation between two distinct phases.
enum class PhaseRelation : std::uint8_t {
    PartialCompeting = 0,  // share exactly one movement
    FullyCompeting = 1,    // share no movement
};

struct Movement {
    int id = 0;
    int approach = 0;  // ring position; 0=N, 1=E, 2=S, 3=W in the 4-slot ring
    Turn turn = Turn::Through;
    bool present = true;  // false for zero-padded slots
};

struct Phase {
    std::array<int, 2> members{};  // sorted ascending
    bool active = true;            // false when a member is a padded slot

    bool contains(int movement) const { return members[0] == movement || members[1] == movement; }
};

/// Movements, paired-signal phases and the conflict / relation matrices of a
/// single intersection. Immutable after construction.
class PhaseTable {
public:
    static PhaseTable build(int n_approaches);

    /// Keeps only the listed phases, in the given order.
    PhaseTable restrict_to(const std::vector<int>& phase_indices) const;

    int n_approaches() const { return n_approaches_; }
    int ring_size() const { return ring_size_; }
    int num_movements() const { return static_cast<int>(movements_.size()); }
    int num_phases() const { return static_cast<int>(phases_.size()); }

    const std::vector<Movement>& movements() const { return movements_; }
    const std::vector<Phase>& phases() const { return phases_; }
    const Movement& movement(int i) const { return movements_.at(static_cast<std::size_t>(i)); }
    const Phase& phase(int p) const { return phases_.at(static_cast<std::size_t>(p)); }

    bool conflicts(int a, int b) const;
    PhaseRelation relation(int p, int q) const;

    /// Movement index for (approach, turn).
    int movement_index(int approach, Turn turn) const { return approach * 2 + static_cast<int>(turn); }
    /// Phase whose member set equals {a, b}, or -1.
    int find_phase(int a, int b) const;
    std::vector<int> active_phases() const;
    std::vector<int> phase_bits(int p) const;

    /// The four opposite-approach pairings {NT,ST},{NL,SL},{ET,WT},{EL,WL}.
    std::vector<int> four_phase_indices() const;

    std::string movement_name(int i) const;
    nlohmann::json to_json() const;

private:
    int n_approaches_ = 4;
    int ring_size_ = 4;
    std::vector<Movement> movements_;
    std::vector<Phase> phases_;
    std::vector<std::uint8_t> conflict_;  // row-major num_movements^2
};

/// Geometric rule: distinct movements may share green iff they come from the
/// same approach, or from opposite approaches with the same turn.
bool geometric_non_conflicting(int ring_size, const Movement& a, const Movement& b);

/// Approaches considered opposite in a ring of the given size.
bool opposite_approaches(int ring_size, int a, int b);

struct SymmetryOp {
    std::string name;
    std::vector<int> approach_perm;
    std::vector<int> movement_perm;
    std::vector<int> phase_perm;

    SymmetryOp inverse() const;
    bool is_identity() const;
};

/// g∘h: apply h first, then g.
SymmetryOp compose(const SymmetryOp& g, const SymmetryOp& h);

/// Builds the op induced by an approach permutation. Throws if a phase image
/// is missing from the table or if the permutation maps a present approach
/// onto a padded one.
SymmetryOp make_symmetry(const PhaseTable& table, std::vector<int> approach_perm, std::string name);

/// Dihedral symmetries of the ring that preserve the movement set.
/// For a 4-approach table this is identity, rot90, rot180, rot270 and four flips.
std::vector<SymmetryOp> symmetry_group(const PhaseTable& table);

/// Relabels movements and the phase index: out[movement_perm[i]] = in[i].
TrafficState apply_symmetry(const SymmetryOp& op, const TrafficState& state);

/// Named ops for the 4-slot ring: identity, flip (E<->W mirror), flip_ns,
/// rot90, rot180, rot270.
SymmetryOp named_symmetry(const PhaseTable& table, const std::string& name);

}  // namespace frap
