#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "blockrg/region.hpp"

#include <cmath>
#include <set>

using namespace blockrg;

TEST_CASE("refinement family bookkeeping") {
    Lattice fine(3, 2, 1);
    CHECK(fine.side() == 9);
    CHECK(fine.n_sites() == 729);
    CHECK(fine.spacing() == doctest::Approx(1.0 / 3.0));
    CHECK(fine.extent() == doctest::Approx(3.0));

    Lattice unit(3, 1, 0);
    CHECK(unit.n_sites() == 27);
    CHECK(unit.n_bonds() == 81);
    CHECK(unit.n_plaquettes() == 81);

    // Site count per side is independent of the refinement tag.
    for (int k = 0; k <= 2; ++k) CHECK(Lattice(3, 2, k).side() == 9);

    CHECK_THROWS_AS(Lattice(2, 2, 1), Error);
    CHECK_THROWS_AS(Lattice(3, 2, 3), Error);
    CHECK_THROWS_AS(Lattice(3, 0, 0), Error);
}

TEST_CASE("site indexing round trip") {
    Lattice lat(3, 2, 0);
    for (long long i = 0; i < lat.n_sites(); ++i) CHECK(lat.site_index(lat.site_coord(i)) == i);
    CHECK(lat.site_index({0, 0, 1}) == 1);
    CHECK(lat.site_index({0, 1, 0}) == 9);
    CHECK(lat.site_index({1, 0, 0}) == 81);
    CHECK(lat.wrap(-1) == 8);
    CHECK(lat.wrap(9) == 0);
}

TEST_CASE("block map partitions and is translation covariant") {
    Lattice lat(3, 2, 0);
    for (int j : {1, 2}) {
        int s = lat.stride(j);
        int h = (s - 1) / 2;
        std::map<long long, int> counts;
        for (long long i = 0; i < lat.n_sites(); ++i) {
            Coord x = lat.site_coord(i);
            Coord y = lat.block_center(x, j);
            CHECK(lat.on_sublattice(y, j));
            CHECK(lat.linf_distance(x, y) <= h);
            counts[lat.subsite_index(y, j)]++;
        }
        CHECK(static_cast<long long>(counts.size()) == lat.n_subsites(j));
        for (auto& [_, c] : counts) CHECK(c == s * s * s);

        // Shifting by a full block shifts the center by the same amount.
        for (long long i = 0; i < lat.n_sites(); i += 7) {
            Coord x = lat.site_coord(i);
            Coord y1 = lat.block_center(lat.shifted(x, 0, s), j);
            Coord y2 = lat.shifted(lat.block_center(x, j), 0, s);
            CHECK(y1 == y2);
        }
    }
}

TEST_CASE("block sites enumerate exactly one block") {
    Lattice lat(3, 1, 0);
    auto sites = lat.block_sites({1, 1, 1}, 1);
    CHECK(sites.size() == 27);
    std::set<long long> seen;
    for (auto& s : sites) {
        CHECK(lat.block_center(s, 1) == Coord{1, 1, 1});
        seen.insert(lat.site_index(s));
    }
    CHECK(seen.size() == 27);

    auto cell = lat.enlarged_cell({0, 0, 0}, 0, 1);
    CHECK(cell.size() == 27);  // single site plus one layer
    auto saturated = lat.enlarged_cell({0, 0, 0}, 1, 5);
    CHECK(saturated.size() == static_cast<size_t>(lat.n_sites()));
}

TEST_CASE("full torus region sequence") {
    Lattice lat(3, 2, 1);
    auto reg = RegionSequence::full_torus(lat, 1);
    CHECK(reg.depth() == 1);
    // Only the deepest shell is populated.
    CHECK(reg.omega_volume(1) == 729);
    CHECK(reg.n_points() == 27);
    for (auto& p : reg.points()) CHECK(p.level == 1);
    CHECK(reg.point_index(1, {1, 1, 1}) == 0);
    CHECK(reg.point_index(0, {1, 1, 1}) == -1);
    CHECK(reg.point_index(1, {1, 0, 0}) == -1);

    // Distance reduces to the coarse graph distance.
    long long a = reg.point_index(1, {1, 1, 1});
    CHECK(reg.omega_distance(a, reg.point_index(1, {4, 1, 1})) == doctest::Approx(1));
    CHECK(reg.omega_distance(a, reg.point_index(1, {1, 4, 4})) == doctest::Approx(2));
    CHECK(reg.omega_distance(a, reg.point_index(1, {4, 4, 4})) == doctest::Approx(3));
    CHECK(reg.omega_distance(a, reg.point_index(1, {1, 1, 7})) == doctest::Approx(1));
    CHECK(reg.omega_distance(reg.point_index(1, {4, 1, 1}), a) == doctest::Approx(1));
}

TEST_CASE("proper region with crossing steps") {
    Lattice lat(3, 2, 1);
    // Single center tile: Omega_1 = [3,5]^3.
    auto reg = RegionSequence::from_cubes(lat, 1, 1, {{13}});
    CHECK(reg.omega_volume(1) == 27);
    CHECK(reg.in_delta(1, {4, 4, 4}));
    CHECK(reg.in_delta(0, {0, 0, 0}));
    CHECK_FALSE(reg.in_delta(0, {3, 3, 3}));
    CHECK(reg.n_points() == 702 + 1);

    long long c = reg.point_index(1, {4, 4, 4});
    CHECK(c >= 0);
    // One fine step out of the shell, then fine steps around the cube.
    CHECK(reg.omega_distance(c, reg.point_index(0, {2, 3, 3})) == doctest::Approx(1));
    CHECK(reg.omega_distance(c, reg.point_index(0, {0, 0, 0})) == doctest::Approx(9));
    CHECK(reg.omega_distance(reg.point_index(0, {2, 3, 3}), c) == doctest::Approx(1));

    // Bond and plaquette membership uses "at least one end inside".
    auto bonds0 = reg.level_bonds(0);
    for (auto& [y, mu] : bonds0) {
        bool touch = reg.in_delta(0, y) || reg.in_delta(0, lat.shifted(y, mu, 1));
        CHECK(touch);
    }
    // Bonds from the cube surface into the complement are included.
    bool found = false;
    for (auto& [y, mu] : bonds0)
        if (y == Coord{2, 3, 3} && mu == 0) found = true;
    CHECK(found);
}

TEST_CASE("region validation") {
    Lattice lat(3, 2, 2);
    // Level-2 tiles have side 9 = whole torus; level-1 tiles have side 3.
    CHECK_THROWS_AS(RegionSequence::from_cubes(lat, 2, 1, {{13}, {5}}), Error);  // bad tile index
    // Omega_2 = torus not contained in a proper Omega_1.
    CHECK_THROWS_AS(RegionSequence::from_cubes(lat, 2, 1, {{13}, {0}}), Error);
    // Strict separation is unsatisfiable on a desk torus.
    CHECK_THROWS_AS(
        RegionSequence::from_cubes(lat, 2, 1,
                                   {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17,
                                     18, 19, 20, 21, 22, 23, 24, 25, 26},
                                    {0}},
                                   "strict"),
        Error);

    // Two-level sequence with an empty deepest region is legal.
    auto reg = RegionSequence::from_cubes(lat, 2, 1, {{13}, {}});
    CHECK(reg.omega_volume(2) == 0);
    CHECK(reg.n_points() == 702 + 1);
    for (auto& p : reg.points()) CHECK(p.level <= 1);
}
