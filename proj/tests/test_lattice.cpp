#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "tfim/errors.hpp"
#include "tfim/lattice.hpp"

using namespace tfim;

namespace {

std::vector<int> degrees(const LatticeSpec& lat) {
    std::vector<int> deg(lat.n_sites(), 0);
    for (const auto& [a, b] : lat.bonds()) {
        ++deg[a];
        ++deg[b];
    }
    return deg;
}

std::multiset<std::pair<int, int>> edge_set(const LatticeSpec& lat, const std::vector<int>& perm) {
    std::multiset<std::pair<int, int>> edges;
    for (const auto& [a, b] : lat.bonds()) {
        const int pa = perm.empty() ? a : perm[a];
        const int pb = perm.empty() ? b : perm[b];
        edges.emplace(std::min(pa, pb), std::max(pa, pb));
    }
    return edges;
}

} // namespace

TEST(BuildLattice, ThreeByThreeIsDegreeFourTorus) {
    const auto lat = build_lattice(3);
    EXPECT_EQ(lat.n_sites(), 9);
    EXPECT_EQ(lat.n_bonds(), 18);
    for (int d : degrees(lat)) EXPECT_EQ(d, 4);
    EXPECT_FALSE(lat.degenerate_torus());
}

TEST(BuildLattice, PaperScaleCounts) {
    const auto lat = build_lattice(24);
    EXPECT_EQ(lat.n_sites(), 576);
    EXPECT_EQ(lat.n_bonds(), 1152);
}

TEST(BuildLattice, TwoTorusDoublesEveryEdge) {
    const auto lat = build_lattice(2);
    EXPECT_EQ(lat.n_sites(), 4);
    EXPECT_EQ(lat.n_bonds(), 8);
    EXPECT_TRUE(lat.degenerate_torus());
    std::map<std::pair<int, int>, int> count;
    for (const auto& [a, b] : lat.bonds()) ++count[{std::min(a, b), std::max(a, b)}];
    EXPECT_EQ(count.size(), 4u);
    for (const auto& [pair, c] : count) EXPECT_EQ(c, 2) << pair.first << "-" << pair.second;
}

TEST(BuildLattice, RejectsTinySizes) {
    EXPECT_THROW(build_lattice(1), InvalidArgument);
    EXPECT_THROW(build_lattice(0), InvalidArgument);
    EXPECT_THROW(build_lattice(-3), InvalidArgument);
}

TEST(BuildLattice, RowMajorRightThenUpOrdering) {
    const auto lat = build_lattice(4);
    // site 5 = (1, 1): right neighbour (2, 1) = 6, up neighbour (1, 2) = 9
    EXPECT_EQ(lat.bond(10), (Bond{5, 6}));
    EXPECT_EQ(lat.bond(11), (Bond{5, 9}));
    // wrap-around at (3, 3)
    EXPECT_EQ(lat.bond(30), (Bond{15, 12}));
    EXPECT_EQ(lat.bond(31), (Bond{15, 3}));
}

TEST(BuildLattice, HandshakeAndDeterminism) {
    for (int L = 2; L <= 9; ++L) {
        const auto lat = build_lattice(L);
        const auto deg = degrees(lat);
        int total = 0;
        for (int d : deg) total += d;
        EXPECT_EQ(total, 2 * lat.n_bonds());
        EXPECT_EQ(lat.n_bonds(), 2 * L * L);
        EXPECT_EQ(lat, build_lattice(L));
    }
}

TEST(ClassicalGroundEnergy, CountsSatisfiedBonds) {
    EXPECT_DOUBLE_EQ(classical_ground_energy(build_lattice(3), {1.0, 0.0}), -18.0);
    EXPECT_DOUBLE_EQ(classical_ground_energy(build_lattice(24), {1.0, 0.0}), -1152.0);
    EXPECT_DOUBLE_EQ(classical_ground_energy(build_lattice(4), {2.0, 0.0}), -64.0);
    EXPECT_THROW(classical_ground_energy(build_lattice(3), {1.0, 0.5}), InvalidArgument);
}

TEST(TranslationOrbits, GroupStructure) {
    for (int L : {2, 3, 4, 5}) {
        const auto lat = build_lattice(L);
        const auto table = translation_orbits(lat);
        ASSERT_EQ(table.size(), L * L);
        std::vector<int> identity(L * L);
        for (int s = 0; s < L * L; ++s) identity[s] = s;
        EXPECT_EQ(table.perms[table.index(0, 0)], identity);

        // Every translation has order dividing L.
        for (const auto& perm : table.perms) {
            std::vector<int> power = identity;
            for (int k = 0; k < L; ++k)
                for (auto& s : power) s = perm[s];
            EXPECT_EQ(power, identity);
        }

        // Composition of all L^2 translations is the identity.
        std::vector<int> composed = identity;
        for (const auto& perm : table.perms)
            for (auto& s : composed) s = perm[s];
        EXPECT_EQ(composed, identity);

        // Edge multiset invariant under every translation.
        const auto edges = edge_set(lat, {});
        for (const auto& perm : table.perms) EXPECT_EQ(edge_set(lat, perm), edges);
    }
}

TEST(TranslationOrbits, TwoByTwoIsKleinFourGroup) {
    const auto table = translation_orbits(build_lattice(2));
    ASSERT_EQ(table.size(), 4);
    for (const auto& p : table.perms) {
        for (const auto& q : table.perms) {
            std::vector<int> pq(4), qp(4);
            for (int s = 0; s < 4; ++s) {
                pq[s] = p[q[s]];
                qp[s] = q[p[s]];
            }
            EXPECT_EQ(pq, qp);
        }
        std::vector<int> squared(4);
        for (int s = 0; s < 4; ++s) squared[s] = p[p[s]];
        EXPECT_EQ(squared, (std::vector<int>{0, 1, 2, 3}));
    }
}

TEST(Validation, RejectsBadParameters) {
    EXPECT_THROW(validate(ModelParams{1.0, -0.1}), InvalidArgument);
    EXPECT_THROW(validate(ThermalPoint{1.0, 0.0}), InvalidArgument);
    EXPECT_THROW(validate(ThermalPoint{1.0, -1.0}), InvalidArgument);
    EXPECT_THROW(validate(QuenchSpec{1.0, 0.0, 2.0, false}), InvalidArgument);
    EXPECT_NO_THROW(validate(QuenchSpec{0.0, 0.0, 2.0, true}));
}
