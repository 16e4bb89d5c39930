#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <utility>

#include "frap/topology.hpp"
#include "oracles.hpp"

using namespace frap;
using oracle::compatible;
using oracle::stream_of;
using oracle::Stream;

namespace {

std::set<std::pair<int, int>> phase_set(const PhaseTable& t)
{
    std::set<std::pair<int, int>> s;
    for (const Phase& p : t.phases()) s.insert({p.members[0], p.members[1]});
    return s;
}

}  // namespace

TEST_CASE("4-approach conflict matrix matches compass enumeration")
{
    const PhaseTable t = PhaseTable::build(4);
    REQUIRE(t.num_movements() == 8);
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
            if (a == b) continue;
            const Stream sa = stream_of(t.movement(a).approach, t.movement(a).turn);
            const Stream sb = stream_of(t.movement(b).approach, t.movement(b).turn);
            CHECK(t.conflicts(a, b) == !compatible(sa, sb));
        }
}

TEST_CASE("4-approach phases are the eight compatible pairs")
{
    const PhaseTable t = PhaseTable::build(4);
    std::set<std::pair<int, int>> oracle;
    for (int a = 0; a < 8; ++a)
        for (int b = a + 1; b < 8; ++b)
            if (compatible(stream_of(a / 2, Turn(a % 2)), stream_of(b / 2, Turn(b % 2)))) oracle.insert({a, b});
    CHECK(oracle.size() == 8);
    CHECK(phase_set(t) == oracle);

    // Hand list: NT+NL, NT+ST, NL+SL, ET+EL, ET+WT, EL+WL, ST+SL, WT+WL.
    const std::set<std::pair<int, int>> hand{{0, 1}, {0, 4}, {1, 5}, {2, 3}, {2, 6}, {3, 7}, {4, 5}, {6, 7}};
    CHECK(phase_set(t) == hand);
}

TEST_CASE("relation is partial iff phases share a movement")
{
    for (int n : {3, 4, 5}) {
        const PhaseTable t = PhaseTable::build(n);
        for (int p = 0; p < t.num_phases(); ++p)
            for (int q = 0; q < t.num_phases(); ++q) {
                if (p == q) continue;
                int shared = 0;
                for (int m : t.phase(p).members) shared += t.phase(q).contains(m) ? 1 : 0;
                CHECK(shared <= 1);
                CHECK((t.relation(p, q) == PhaseRelation::PartialCompeting) == (shared == 1));
            }
    }
}

TEST_CASE("4-phase subset")
{
    const PhaseTable t = PhaseTable::build(4);
    const PhaseTable four = t.restrict_to(t.four_phase_indices());
    CHECK(four.num_phases() == 4);
    CHECK(phase_set(four) == std::set<std::pair<int, int>>{{0, 4}, {1, 5}, {2, 6}, {3, 7}});
    for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 4; ++q)
            if (p != q) CHECK(four.relation(p, q) == PhaseRelation::FullyCompeting);
}

TEST_CASE("3- and 5-approach tables")
{
    const PhaseTable t3 = PhaseTable::build(3);
    int present = 0;
    for (const Movement& m : t3.movements()) present += m.present ? 1 : 0;
    CHECK(present == 6);
    CHECK(t3.active_phases().size() == 5);
    for (int p : t3.active_phases())
        for (int m : t3.phase(p).members) CHECK(t3.movement(m).present);

    const PhaseTable t5 = PhaseTable::build(5);
    CHECK(t5.num_movements() == 10);
    // Same-approach pairs (5) plus, per movement type, the 5 pairs at ring distance two.
    CHECK(t5.num_phases() == 15);
    for (const Phase& p : t5.phases()) CHECK_FALSE(t5.conflicts(p.members[0], p.members[1]));

    CHECK_THROWS(PhaseTable::build(2));
    CHECK_THROWS(PhaseTable::build(6));
}

TEST_CASE("phase bits mark exactly the two members")
{
    const PhaseTable t = PhaseTable::build(4);
    for (int p = 0; p < t.num_phases(); ++p) {
        const auto bits = t.phase_bits(p);
        int ones = 0;
        for (int m = 0; m < 8; ++m) {
            ones += bits[m];
            CHECK(bits[m] == (t.phase(p).contains(m) ? 1 : 0));
        }
        CHECK(ones == 2);
    }
}

TEST_CASE("symmetry group of the 4-approach table")
{
    const PhaseTable t = PhaseTable::build(4);
    const auto group = symmetry_group(t);
    CHECK(group.size() == 8);
    std::set<std::string> names;
    for (const SymmetryOp& g : group) names.insert(g.name);
    CHECK(names.count("identity"));
    CHECK(names.count("rot90"));
    CHECK(names.count("flip"));

    for (const SymmetryOp& g : group) {
        // Member images: phase p is carried to the phase made of the images of its members.
        for (int p = 0; p < t.num_phases(); ++p) {
            const Phase& ph = t.phase(p);
            const int a = g.movement_perm[ph.members[0]], b = g.movement_perm[ph.members[1]];
            const Phase& img = t.phase(g.phase_perm[p]);
            CHECK(std::minmax(a, b) == std::minmax(img.members[0], img.members[1]));
        }
        // Movements keep their turn and follow the approach permutation.
        for (int m = 0; m < 8; ++m) {
            const Movement& src = t.movement(m);
            const Movement& dst = t.movement(g.movement_perm[m]);
            CHECK(dst.turn == src.turn);
            CHECK(dst.approach == g.approach_perm[src.approach]);
        }
        // Conflicts and relations are preserved.
        for (int a = 0; a < 8; ++a)
            for (int b = 0; b < 8; ++b)
                if (a != b) CHECK(t.conflicts(a, b) == t.conflicts(g.movement_perm[a], g.movement_perm[b]));
        for (int p = 0; p < 8; ++p)
            for (int q = 0; q < 8; ++q)
                if (p != q) CHECK(t.relation(p, q) == t.relation(g.phase_perm[p], g.phase_perm[q]));
        CHECK(compose(g, g.inverse()).is_identity());
        // Closure.
        for (const SymmetryOp& h : group) {
            const SymmetryOp gh = compose(g, h);
            CHECK(std::any_of(group.begin(), group.end(), [&](const SymmetryOp& k) { return k.movement_perm == gh.movement_perm; }));
        }
    }
}

TEST_CASE("named symmetries on hand examples")
{
    const PhaseTable t = PhaseTable::build(4);
    const SymmetryOp rot = named_symmetry(t, "rot90");
    CHECK(rot.approach_perm == std::vector<int>{1, 2, 3, 0});
    CHECK(rot.movement_perm[t.movement_index(0, Turn::Left)] == t.movement_index(1, Turn::Left));
    const SymmetryOp flip = named_symmetry(t, "flip");
    CHECK(flip.approach_perm == std::vector<int>{0, 3, 2, 1});
    // {ET, WT} maps to itself under the E<->W mirror; {ET, EL} maps to {WT, WL}.
    CHECK(flip.phase_perm[t.find_phase(2, 6)] == t.find_phase(2, 6));
    CHECK(flip.phase_perm[t.find_phase(2, 3)] == t.find_phase(6, 7));
    CHECK(compose(rot, compose(rot, compose(rot, rot))).is_identity());
    CHECK_THROWS(named_symmetry(t, "shear"));
}

TEST_CASE("apply_symmetry relabels counts, bits and phase")
{
    const PhaseTable t = PhaseTable::build(4);
    const SymmetryOp rot = named_symmetry(t, "rot90");
    TrafficState s;
    s.counts = {1, 2, 3, 4, 5, 6, 7, 8};
    s.phase_index = t.find_phase(0, 4);
    s.signal_bits = t.phase_bits(s.phase_index);
    const TrafficState r = apply_symmetry(rot, s);
    // NT (1 vehicle) moves to ET.
    CHECK(r.counts[2] == 1);
    CHECK(r.counts[0] == 7);
    CHECK(r.phase_index == t.find_phase(2, 6));
    CHECK(r.signal_bits == t.phase_bits(r.phase_index));
    CHECK(apply_symmetry(rot.inverse(), r) == s);

    TrafficState clearing = s;
    clearing.phase_index = kClearancePhase;
    clearing.signal_bits.assign(8, 0);
    CHECK(apply_symmetry(rot, clearing).phase_index == kClearancePhase);
}

TEST_CASE("symmetry groups of 3- and 5-approach tables")
{
    const PhaseTable t3 = PhaseTable::build(3);
    const auto g3 = symmetry_group(t3);
    CHECK(g3.size() == 2);
    for (const SymmetryOp& g : g3)
        for (int m = 0; m < t3.num_movements(); ++m)
            CHECK(t3.movement(g.movement_perm[m]).present == t3.movement(m).present);

    const PhaseTable t5 = PhaseTable::build(5);
    const auto g5 = symmetry_group(t5);
    CHECK(g5.size() == 10);
    for (const SymmetryOp& g : g5)
        for (int a = 0; a < 10; ++a)
            for (int b = 0; b < 10; ++b)
                if (a != b) CHECK(t5.conflicts(a, b) == t5.conflicts(g.movement_perm[a], g.movement_perm[b]));
}

TEST_CASE("phase table json")
{
    const auto j = PhaseTable::build(4).to_json();
    CHECK(j.at("phases").size() == 8);
    CHECK(j.at("conflict").size() == 8);
    CHECK(j.at("relation").size() == 8);
}
