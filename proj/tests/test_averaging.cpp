#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "blockrg/averaging.hpp"
#include "blockrg/rng.hpp"
#include "blockrg/schedule.hpp"

#include <Eigen/Dense>

using namespace blockrg;

namespace {

Vec random_real_field(const FieldSpace& s, uint64_t seed) {
    Rng rng(seed);
    Vec v(s.dim());
    for (long long i = 0; i < s.dim(); ++i) v[i] = rng.uniform_pm(1.0);
    return v;
}

Vec random_complex_field(const FieldSpace& s, uint64_t seed) {
    Rng rng(seed);
    Vec v(s.dim());
    for (long long i = 0; i < s.dim(); ++i) v[i] = rng.cnormal();
    return v;
}

double op_mismatch(const SpMat& a, const SpMat& b) {
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    return SpMat(a - b).norm();
}

SpMat identity_sp(long long n) {
    SpMat m(n, n);
    m.setIdentity();
    return m;
}

// Region with one coarse tile as the deepest shell; straddling cells appear
// at every shell interface.
RegionSequence centered_region(const Lattice& lat, int depth) {
    std::vector<std::vector<long long>> cubes;
    for (int j = 1; j <= depth; ++j) {
        int tiles = lat.side() / lat.stride(j);
        long long mid = tiles / 2;
        cubes.push_back({(mid * tiles + mid) * tiles + mid});
    }
    return RegionSequence::from_cubes(lat, depth, 1, cubes, "relaxed");
}

}  // namespace

TEST_CASE("scalar block averages and adjoints") {
    for (auto [N, k] : std::vector<std::pair<int, int>>{{2, 1}, {2, 2}}) {
        Lattice lat(3, N, k);
        SpMat q = scalar_average(lat, k);
        SpMat qt = scalar_prolong(lat, k);

        // Constant fields pass through, so rows sum to one.
        Vec ones = Vec::Constant(lat.n_sites(), 1.0);
        CHECK(((q * ones).array() - 1.0).matrix().norm() < 1e-13);

        // Averaging the block-constant extension recovers the coarse field.
        CHECK(op_mismatch(SpMat(q * qt), identity_sp(q.rows())) < 1e-13);

        // Coarse difference of the average equals the averaged line field.
        SpMat d_coarse = exterior_d(FieldSpace(lat, Degree::zero, k));
        SpMat d_fine = exterior_d(FieldSpace(lat, Degree::zero, 0));
        CHECK(op_mismatch(SpMat(d_coarse * q), SpMat(bond_average(lat, k) * d_fine)) < 1e-13);

        // Fine difference of the extension lives on the joining surfaces.
        CHECK(op_mismatch(SpMat(d_fine * qt), SpMat(surface_prolong(lat, k) * d_coarse)) < 1e-13);
    }
}

TEST_CASE("line-averaged bond operators") {
    Lattice lat(3, 2, 2);
    int k = 2;
    SpMat q = bond_average(lat, k);

    // Stage composition equals the straight-line form.
    SpMat composed = bond_average_stage(lat, 0);
    composed = SpMat(bond_average_stage(lat, 1) * composed);
    CHECK(op_mismatch(q, composed) < 1e-13);

    // Constant 1-forms pass through.
    Vec ones = Vec::Constant(3 * lat.n_sites(), 1.0);
    CHECK(((q * ones).array() - 1.0).matrix().norm() == doctest::Approx(0.0).epsilon(1e-13));

    // The surface prolongation is a right inverse.
    CHECK(op_mismatch(SpMat(q * surface_prolong(lat, k)), identity_sp(q.rows())) < 1e-13);

    // The adjoint spreads along covering lines: value L^{-k} per block line
    // through the fine bond, accumulated over lines.
    SpMat qt = bond_prolong(lat, k);
    FieldSpace fine(lat, Degree::one, 0);
    FieldSpace coarse(lat, Degree::one, k);
    int len = lat.stride(k);
    for (long long cell : {0LL, 400LL, 1100LL}) {
        Coord z = fine.coord(cell / 3);
        int mu = static_cast<int>(cell % 3);
        for (long long cc = 0; cc < coarse.dim(); ++cc) {
            double got = std::abs(qt.coeff(cell, cc));
            // Count block sites whose straight +mu line covers the fine bond.
            long long cnt = 0;
            Coord y = coarse.coord(cc / 3);
            int cmu = static_cast<int>(cc % 3);
            if (cmu == mu) {
                for (const Coord& x : lat.block_sites(y, k)) {
                    bool covers = true;
                    for (int ax = 0; ax < 3; ++ax) {
                        int d = (z[ax] - x[ax]) % lat.side();
                        if (d < 0) d += lat.side();
                        if (ax == mu ? d >= len : d != 0) covers = false;
                    }
                    if (covers) ++cnt;
                }
            }
            double want = static_cast<double>(cnt) / static_cast<double>(len);
            CHECK(got == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("plaquette averages commute with the curl") {
    for (auto [N, k] : std::vector<std::pair<int, int>>{{2, 1}, {2, 2}}) {
        Lattice lat(3, N, k);
        SpMat q2 = plaquette_average(lat, k);

        SpMat composed = plaquette_average_stage(lat, 0);
        for (int j = 1; j < k; ++j) composed = SpMat(plaquette_average_stage(lat, j) * composed);
        CHECK(op_mismatch(q2, composed) < 1e-13);

        Vec ones = Vec::Constant(3 * lat.n_sites(), 1.0);
        CHECK(((q2 * ones).array() - 1.0).matrix().norm() ==
              doctest::Approx(0.0).epsilon(1e-13));

        SpMat d_coarse = exterior_d(FieldSpace(lat, Degree::one, k));
        SpMat d_fine = exterior_d(FieldSpace(lat, Degree::one, 0));
        CHECK(op_mismatch(SpMat(d_coarse * bond_average(lat, k)), SpMat(q2 * d_fine)) < 1e-13);
    }
}

TEST_CASE("surface and edge operators") {
    for (auto [N, k] : std::vector<std::pair<int, int>>{{2, 1}, {2, 2}}) {
        Lattice lat(3, N, k);
        double Lk = static_cast<double>(lat.stride(k));
        SpMat qs = surface_average(lat, k);
        SpMat qst = surface_prolong(lat, k);
        SpMat qe = edge_average(lat, k);
        SpMat qet = edge_prolong(lat, k);

        SpMat s_composed = surface_average_stage(lat, 0);
        for (int j = 1; j < k; ++j) s_composed = SpMat(surface_average_stage(lat, j) * s_composed);
        CHECK(op_mismatch(qs, s_composed) < 1e-13);
        SpMat e_composed = edge_average_stage(lat, 0);
        for (int j = 1; j < k; ++j) e_composed = SpMat(edge_average_stage(lat, j) * e_composed);
        CHECK(op_mismatch(qe, e_composed) < 1e-13);

        CHECK(op_mismatch(SpMat(qs * qst), SpMat(Lk * identity_sp(qs.rows()))) < 1e-12);
        CHECK(op_mismatch(SpMat(qe * qet), SpMat(Lk * Lk * identity_sp(qe.rows()))) < 1e-12);

        // Fine curl of the surface extension equals the edge extension of the
        // coarse curl.
        SpMat d_fine = exterior_d(FieldSpace(lat, Degree::one, 0));
        SpMat d_coarse = exterior_d(FieldSpace(lat, Degree::one, k));
        CHECK(op_mismatch(SpMat(d_fine * qst), SpMat(qet * d_coarse)) < 1e-12);

        // Support structure: each coarse bond spreads to L^{2k} joining bonds
        // with weight L^k; each coarse plaquette to L^k stack plaquettes with
        // weight L^{2k}.
        for (int c = 0; c < qst.outerSize(); ++c) {
            long long nnz = 0;
            for (SpMat::InnerIterator it(qst, c); it; ++it) {
                CHECK(std::abs(it.value() - cplx(Lk, 0.0)) < 1e-13);
                ++nnz;
            }
            CHECK(nnz == static_cast<long long>(Lk * Lk));
        }
        for (int c = 0; c < qet.outerSize(); ++c) {
            long long nnz = 0;
            for (SpMat::InnerIterator it(qet, c); it; ++it) {
                CHECK(std::abs(it.value() - cplx(Lk * Lk, 0.0)) < 1e-12);
                ++nnz;
            }
            CHECK(nnz == static_cast<long long>(Lk));
        }
    }
}

TEST_CASE("fermion block averaging") {
    Lattice lat(3, 2, 1);
    int k = 1;
    FieldSpace fine_bonds(lat, Degree::one, 0);
    FieldSpace fine_spinors(lat, Degree::spinor, 0);
    FieldSpace coarse_spinors(lat, Degree::spinor, k);
    CouplingSchedule sched;
    sched.N = 2;
    double ek = sched.e_at(k);

    SUBCASE("free field reduces to the scalar block mean") {
        Vec zero = Vec::Zero(fine_bonds.dim());
        SpMat q0 = fermion_average(lat, zero, ek, k);
        Vec ones = Vec::Constant(fine_spinors.dim(), 1.0);
        CHECK(((q0 * ones).array() - 1.0).matrix().norm() ==
              doctest::Approx(0.0).epsilon(1e-13));
        SpMat scal = scalar_average(lat, k);
        for (int col = 0; col < q0.outerSize(); ++col)
            for (SpMat::InnerIterator it(q0, col); it; ++it)
                CHECK(std::abs(it.value() - scal.coeff(it.row() / 4, col / 4)) < 1e-14);
    }

    SUBCASE("unit phases keep the sup norm") {
        Vec A = random_real_field(fine_bonds, 11);
        SpMat q = fermion_average(lat, A, ek, k);
        Vec psi = random_complex_field(fine_spinors, 12);
        Vec avg = q * psi;
        double in_max = psi.cwiseAbs().maxCoeff();
        CHECK(avg.cwiseAbs().maxCoeff() <= in_max + 1e-12);
    }

    SUBCASE("two-stage composition matches the assembled product") {
        Lattice lat2(3, 2, 2);
        FieldSpace bonds2(lat2, Degree::one, 0);
        Vec A = random_real_field(bonds2, 21);
        SpMat q2 = fermion_average(lat2, A, ek, 2);
        Vec psi = random_complex_field(FieldSpace(lat2, Degree::spinor, 0), 22);
        Vec staged = fermion_average_stage(lat2, A, ek, 0) * psi;
        staged = fermion_average_stage(lat2, A, ek, 1) * staged;
        CHECK((Vec(q2 * psi) - staged).norm() < 1e-13 * std::max(1.0, staged.norm()));
    }

    SUBCASE("gradient backgrounds conjugate by boundary phases") {
        Vec A = random_real_field(fine_bonds, 31);
        Vec lambda = random_real_field(FieldSpace(lat, Degree::zero, 0), 32);
        SpMat d = exterior_d(FieldSpace(lat, Degree::zero, 0));
        Vec shifted_A = A + d * lambda;
        // Coarse sites sample the same scalar: phases telescope stage by
        // stage with the same coupling throughout.
        FieldSpace coarse_sites(lat, Degree::zero, k);
        Vec lambda_coarse(coarse_sites.dim());
        for (long long i = 0; i < coarse_sites.cells(); ++i)
            lambda_coarse[i] = lambda[lat.site_index(coarse_sites.coord(i))];
        for (bool sym : {true, false}) {
            SpMat lhs = fermion_average(lat, shifted_A, ek, k, sym);
            SpMat rhs = SpMat(phase_diagonal(coarse_spinors, -lambda_coarse, ek) *
                              SpMat(fermion_average(lat, A, ek, k, sym) *
                                    phase_diagonal(fine_spinors, lambda, ek)));
            CHECK(op_mismatch(lhs, rhs) < 1e-12);
        }
    }

    SUBCASE("weighted transpose of the sign-flipped field is the adjoint") {
        Vec A = random_real_field(fine_bonds, 41);
        SpMat q = fermion_average(lat, A, ek, k);
        double vol = static_cast<double>(ipow(lat.L(), 3 * k));
        SpMat qt = SpMat(vol * fermion_average(lat, Vec(-A), ek, k).transpose());
        Vec psi = random_complex_field(fine_spinors, 42);
        Vec phi = random_complex_field(coarse_spinors, 43);
        cplx lhs = inner(coarse_spinors, Vec(q * psi), phi);
        cplx rhs = inner(fine_spinors, psi, Vec(qt * phi));
        CHECK(std::abs(lhs - rhs) < 1e-12 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("multiscale fermion averaging") {
    Lattice lat(3, 2, 1);
    FieldSpace fine_bonds(lat, Degree::one, 0);
    FieldSpace fine_spinors(lat, Degree::spinor, 0);
    Vec A = random_real_field(fine_bonds, 51);
    double ek = 0.13;

    SUBCASE("full-torus sequence reproduces the plain composition") {
        RegionSequence seq = RegionSequence::full_torus(lat, 1);
        SpMat ms = fermion_average_multiscale(lat, seq, A, ek);
        CHECK(op_mismatch(ms, fermion_average(lat, A, ek, 1)) < 1e-14);
    }

    SUBCASE("components restrict the per-level compositions") {
        RegionSequence seq = centered_region(lat, 1);
        SpMat ms = fermion_average_multiscale(lat, seq, A, ek);
        CHECK(ms.rows() == 4 * seq.n_points());

        // Outermost block is the identity on its own sites.
        Vec psi = random_complex_field(fine_spinors, 52);
        Vec out = ms * psi;
        long long p = 0;
        for (const auto& mp : seq.points()) {
            if (mp.level == 0) {
                long long cell = lat.site_index(mp.y);
                for (int a = 0; a < 4; ++a)
                    CHECK(std::abs(out[4 * p + a] - psi[4 * cell + a]) < 1e-14);
            } else {
                SpMat q = fermion_average(lat, A, ek, mp.level);
                FieldSpace cs(lat, Degree::spinor, mp.level);
                long long cell = cs.cell_index(mp.y);
                for (int a = 0; a < 4; ++a) {
                    cplx want = Vec(q * psi)[4 * cell + a];
                    CHECK(std::abs(out[4 * p + a] - want) < 1e-13);
                }
            }
            ++p;
        }

        // Locality: the deep component only reads its preimage block.
        Vec masked = psi;
        const auto& deep = seq.points().back();
        REQUIRE(deep.level == 1);
        for (long long s = 0; s < lat.n_sites(); ++s) {
            Coord c = lat.site_coord(s);
            bool inside = true;
            for (int ax = 0; ax < 3; ++ax) {
                int d = (c[ax] - deep.y[ax]) % lat.side();
                if (d < 0) d += lat.side();
                if (2 * d > lat.side()) d -= lat.side();
                if (std::abs(d) > (lat.stride(1) - 1) / 2) inside = false;
            }
            if (!inside)
                for (int a = 0; a < 4; ++a) masked[4 * s + a] = 0.0;
        }
        Vec full = ms * psi, part = ms * masked;
        for (int a = 0; a < 4; ++a)
            CHECK(std::abs(full[4 * (seq.n_points() - 1) + a] -
                           part[4 * (seq.n_points() - 1) + a]) < 1e-13);
    }

    SUBCASE("adjoint pairing under per-level volumes") {
        RegionSequence seq = centered_region(lat, 1);
        SpMat ms = fermion_average_multiscale(lat, seq, A, ek);
        SpMat ms_flip = fermion_average_multiscale(lat, seq, Vec(-A), ek);
        Eigen::VectorXd w_dom = Eigen::VectorXd::Constant(
            4 * lat.n_sites(), std::pow(lat.spacing(), 3));
        Eigen::VectorXd w_cod = point_weights(lat, seq, 4);
        SpMat mst = weighted_transpose_sp(ms_flip, w_dom, w_cod);
        Vec psi = random_complex_field(fine_spinors, 53);
        Rng rng(54);
        Vec phi(ms.rows());
        for (long long i = 0; i < phi.size(); ++i) phi[i] = rng.cnormal();
        cplx lhs = 0.0, rhs = 0.0;
        Vec qpsi = ms * psi, qtphi = mst * phi;
        for (long long i = 0; i < phi.size(); ++i)
            lhs += w_cod[i] * std::conj(qpsi[i]) * phi[i];
        for (long long i = 0; i < psi.size(); ++i)
            rhs += w_dom[i] * std::conj(psi[i]) * qtphi[i];
        CHECK(std::abs(lhs - rhs) < 1e-12 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("multiscale gauge averaging") {
    auto run = [](const Lattice& lat, const RegionSequence& seq, bool expect_straddle) {
        MultiscaleCells incl1 = multiscale_cells(lat, seq, Degree::one, false);
        MultiscaleCells int1 = multiscale_cells(lat, seq, Degree::one, true);
        MultiscaleCells incl2 = multiscale_cells(lat, seq, Degree::two, false);

        if (expect_straddle) {
            bool larger = false;
            for (int j = 1; j <= seq.depth(); ++j)
                if (incl1.cells[static_cast<size_t>(j)].size() >
                    int1.cells[static_cast<size_t>(j)].size())
                    larger = true;
            CHECK(larger);
        }

        // Right inverse on the independent cells.
        SpMat fwd = gauge_average_multiscale(lat, seq, int1);
        SpMat inv = surface_prolong_multiscale(lat, seq, int1);
        CHECK(op_mismatch(SpMat(fwd * inv), identity_sp(int1.dim())) < 1e-12);

        // Level derivative of the averaged field against the averaged fine
        // derivative, straddling cells included.
        SpMat lhs1 = d_of_scalar_average_multiscale(lat, seq, incl1);
        SpMat rhs1 = SpMat(gauge_average_multiscale(lat, seq, incl1) *
                           exterior_d(FieldSpace(lat, Degree::zero, 0)));
        CHECK(op_mismatch(lhs1, rhs1) < 1e-13);

        SpMat lhs2 = d_of_gauge_average_multiscale(lat, seq, incl2);
        SpMat rhs2 = SpMat(plaquette_average_multiscale(lat, seq, incl2) *
                           exterior_d(FieldSpace(lat, Degree::one, 0)));
        CHECK(op_mismatch(lhs2, rhs2) < 1e-13);
    };

    SUBCASE("single centered tile") {
        Lattice lat(3, 2, 1);
        run(lat, centered_region(lat, 1), true);
    }

    SUBCASE("two-level shells, empty deepest region") {
        Lattice lat(3, 2, 2);
        // 3x3x3 arrangement of level-1 tiles around the center; no level-2
        // region.
        std::vector<long long> tiles;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c)
                    tiles.push_back(((a % 3) * 3 + (b % 3)) * 3 + (c % 3));
        // Keep a proper subset so straddlers exist.
        tiles.resize(9);
        RegionSequence seq = RegionSequence::from_cubes(lat, 2, 1, {tiles, {}}, "relaxed");
        run(lat, seq, true);
    }

    SUBCASE("three-level nested shells") {
        Lattice lat(3, 3, 2);
        std::vector<long long> omega1;
        for (int a = 2; a <= 6; ++a)
            for (int b = 2; b <= 6; ++b)
                for (int c = 2; c <= 6; ++c)
                    omega1.push_back(((a * 9) + b) * 9 + c);
        std::vector<long long> omega2 = {13};  // center tile of the 3^3 grid
        RegionSequence seq = RegionSequence::from_cubes(lat, 2, 1, {omega1, omega2}, "relaxed");
        run(lat, seq, true);

        // Full-torus sequence collapses to the plain operators.
        RegionSequence full = RegionSequence::full_torus(lat, 2);
        MultiscaleCells rows = multiscale_cells(lat, full, Degree::one, false);
        CHECK(op_mismatch(gauge_average_multiscale(lat, full, rows), bond_average(lat, 2)) <
              1e-14);
    }
}
