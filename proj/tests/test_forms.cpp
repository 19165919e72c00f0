#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "blockrg/forms.hpp"
#include "blockrg/rng.hpp"
#include "blockrg/schedule.hpp"

#include <Eigen/Eigenvalues>

using namespace blockrg;

namespace {

Vec random_real(Rng& rng, long long n, double amp = 1.0) {
    Vec v(n);
    for (long long i = 0; i < n; ++i) v[i] = amp * rng.normal();
    return v;
}

Vec random_complex(Rng& rng, long long n, double amp = 1.0) {
    Vec v(n);
    for (long long i = 0; i < n; ++i) v[i] = amp * rng.cnormal();
    return v;
}

}  // namespace

TEST_CASE("exterior calculus closes and is adjoint-consistent") {
    Lattice lat(3, 1, 0);
    FieldSpace sites(lat, Degree::zero), bonds(lat, Degree::one), plaqs(lat, Degree::two);
    Rng rng(11);

    SpMat d0 = exterior_d(sites), d1 = exterior_d(bonds);
    CHECK(Mat(d1 * d0).cwiseAbs().maxCoeff() <= 1e-14);

    Vec f = random_complex(rng, sites.dim());
    Vec cst = Vec::Constant(sites.dim(), cplx(2.5, -1.0));
    CHECK((d0 * cst).cwiseAbs().maxCoeff() == 0.0);
    CHECK((d1 * (d0 * f)).cwiseAbs().maxCoeff() <= 1e-13);

    SpMat del1 = codifferential(bonds), del2 = codifferential(plaqs);
    CHECK(Mat(del1 * del2).cwiseAbs().maxCoeff() <= 1e-14);

    Vec A = random_complex(rng, bonds.dim());
    Vec F = random_complex(rng, plaqs.dim());
    CHECK(std::abs(inner(bonds, d0 * f, A) - inner(sites, f, del1 * A)) <= 1e-12);
    CHECK(std::abs(inner(plaqs, d1 * A, F) - inner(bonds, A, del2 * F)) <= 1e-12);
}

TEST_CASE("kernel of delta d on 1-forms has the three harmonic directions") {
    Lattice lat(3, 1, 0);
    FieldSpace bonds(lat, Degree::one);
    Mat dd = Mat(codifferential(FieldSpace(lat, Degree::two)) * exterior_d(bonds));
    Eigen::SelfAdjointEigenSolver<Mat> es(dd);
    int zeros = 0;
    for (long long i = 0; i < es.eigenvalues().size(); ++i)
        if (std::abs(es.eigenvalues()[i]) < 1e-10) ++zeros;
    // Exact forms d(lambda) span sites-1 directions; three more are harmonic.
    CHECK(zeros == 27 - 1 + 3);
}

TEST_CASE("paths and link phases") {
    Lattice lat(3, 1, 0);
    FieldSpace bonds(lat, Degree::one);
    Rng rng(5);
    Vec A = random_real(rng, bonds.dim());

    Coord y = {0, 0, 0}, x = {1, 1, 1};
    auto p = rect_path(bonds, y, x, {0, 1, 2});
    CHECK(p.size() == 3);
    cplx fwd = line_integral(bonds, A, p);
    auto pr = rect_path(bonds, x, y, {2, 1, 0});
    CHECK(std::abs(line_integral(bonds, A, pr) + fwd) <= 1e-14);

    // Axis-aligned displacement: every ordering gives the same path.
    Coord xa = {2, 0, 0};
    CHECK(std::abs(tau_average(bonds, A, y, xa) -
                   line_integral(bonds, A, rect_path(bonds, y, xa, {1, 2, 0}))) <= 1e-14);

    CHECK(std::abs(line_integral(bonds, Vec::Zero(bonds.dim()), p)) == 0.0);

    // Wrap-around uses the minimal representative.
    auto pw = rect_path(bonds, {0, 0, 0}, {2, 0, 0}, {0, 1, 2});
    CHECK(pw.size() == 1);
    CHECK(pw[0].sign == -1);
}

TEST_CASE("free Wilson-Dirac operator matches the stencil oracle") {
    Lattice lat(3, 1, 0);
    FieldSpace spinors(lat, Degree::spinor), sites(lat, Degree::zero),
        bonds(lat, Degree::one);
    CliffordRep rep = CliffordRep::standard();
    Vec A0 = Vec::Zero(bonds.dim());
    double h = sites.step();

    // Oracle: shift matrices assembled without any covariant machinery.
    auto shift = [&](int mu, int sgn) {
        SpMat m(sites.dim(), sites.dim());
        std::vector<Eigen::Triplet<cplx>> t;
        for (long long i = 0; i < sites.cells(); ++i) {
            Coord c = sites.coord(i);
            t.emplace_back(sites.idx(c), sites.idx(lat.shifted(c, mu, sgn)), 1.0);
        }
        m.setFromTriplets(t.begin(), t.end());
        return m;
    };
    SpMat id(sites.dim(), sites.dim());
    id.setIdentity();
    SpMat oracle(spinors.dim(), spinors.dim());
    for (int mu = 0; mu < 3; ++mu) {
        SpMat grad = (shift(mu, +1) - shift(mu, -1)) / (2 * h);
        SpMat lap_mu = (shift(mu, +1) + shift(mu, -1) - 2.0 * id) / (h * h);
        oracle = oracle + spinorize(grad, rep.gamma[mu]);
        oracle = oracle - spinorize(lap_mu, (h / 2) * Eigen::Matrix4cd::Identity());
    }
    SpMat D0 = wilson_dirac(spinors, A0, 0.7, rep);
    CHECK(Mat(D0 - oracle).cwiseAbs().maxCoeff() <= 1e-13);

    Vec cst = Vec::Zero(spinors.dim());
    for (long long i = 0; i < sites.cells(); ++i) cst[4 * i + 2] = 1.0;
    CHECK((D0 * cst).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("gauge covariance of the covariant operators") {
    Lattice lat(3, 1, 0);
    FieldSpace spinors(lat, Degree::spinor), sites(lat, Degree::zero),
        bonds(lat, Degree::one);
    CliffordRep rep = CliffordRep::standard();
    Rng rng(23);
    double ek = 0.45;
    Vec A = random_real(rng, bonds.dim());
    Vec lam = random_real(rng, sites.dim());
    Vec Ap = A + Vec(exterior_d(sites) * lam);

    // The 1/step in d cancels the step in the link phase, so the conjugating
    // phase carries the bare coupling only.
    Mat left = Mat(wilson_dirac(spinors, Ap, ek, rep));
    Mat right = Mat(phase_diagonal(spinors, -lam, ek)) * Mat(wilson_dirac(spinors, A, ek, rep)) *
                Mat(phase_diagonal(spinors, lam, ek));
    CHECK((left - right).cwiseAbs().maxCoeff() <= 1e-12);

    Mat lap_l = Mat(covariant_laplacian(sites, Ap, ek));
    Mat lap_r = Mat(phase_diagonal(sites, -lam, ek)) * Mat(covariant_laplacian(sites, A, ek)) *
                Mat(phase_diagonal(sites, lam, ek));
    CHECK((lap_l - lap_r).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("mass operator is chirality-conjugate to its adjoint") {
    Lattice lat(3, 1, 0);
    FieldSpace spinors(lat, Degree::spinor), bonds(lat, Degree::one);
    CliffordRep rep = CliffordRep::standard();
    Rng rng(7);
    Vec A = random_real(rng, bonds.dim());
    double mbar = 0.2;
    Mat D = Mat(wilson_dirac(spinors, A, 0.3, rep)) +
            mbar * Mat::Identity(spinors.dim(), spinors.dim());
    Mat G = Mat(spinorize(SpMat(Mat::Identity(spinors.dim() / 4, spinors.dim() / 4).sparseView()),
                          rep.chirality));
    CHECK((D.adjoint() - G * D * G).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("Hoelder difference quotient") {
    Lattice lat(3, 2, 1);  // spacing 1/3: nearby pairs stay below distance 1
    FieldSpace sites(lat, Degree::zero), bonds(lat, Degree::one);
    Rng rng(3);
    Vec f = random_complex(rng, sites.dim());
    Vec A = random_real(rng, bonds.dim());

    Vec cst = Vec::Constant(sites.dim(), 1.7);
    CHECK(std::abs(holder_derivative(sites, cst, bonds, Vec::Zero(bonds.dim()), 0.5, 0.5,
                                     {0, 0, 0}, {2, 1, 0})) == 0.0);

    // alpha -> 0 reduces to the parallel-transported difference.
    cplx d0 = holder_derivative(sites, f, bonds, A, 0.5, 0.0, {0, 0, 0}, {2, 1, 0});
    auto path = rect_path(bonds, Coord{0, 0, 0}, Coord{2, 1, 0}, {0, 1, 2});
    cplx phase = std::exp(cplx(0, 1) * 0.5 * bonds.step() * line_integral(bonds, A, path));
    CHECK(std::abs(d0 - (phase * f[sites.idx({2, 1, 0})] - f[sites.idx({0, 0, 0})])) <= 1e-13);

    CHECK_THROWS_AS(holder_derivative(sites, f, bonds, A, 0.5, 0.5, {0, 0, 0}, {0, 0, 0}), Error);
    // Physical separation >= 1 is rejected (9 steps of 1/9).
    CHECK_THROWS_AS(holder_derivative(sites, f, bonds, A, 0.5, 0.5, {0, 0, 0}, {4, 4, 4}), Error);
}

TEST_CASE("field scaling is dimension-correct and invertible") {
    Lattice lat(3, 2, 1);
    FieldSpace bonds(lat, Degree::one);
    Rng rng(17);
    Vec A = random_real(rng, bonds.dim());

    auto [coarse_sp, Ac] = scale_field(bonds, A, -1);
    CHECK(coarse_sp.lat.k() == 0);
    auto [back_sp, Ab] = scale_field(coarse_sp, Ac, +1);
    CHECK((Ab - A).cwiseAbs().maxCoeff() <= 1e-15);

    // The curvature energy is scale-invariant in three dimensions.
    double fine_energy = norm2(FieldSpace(lat, Degree::two), Vec(exterior_d(bonds) * A));
    double coarse_energy =
        norm2(FieldSpace(coarse_sp.lat, Degree::two), Vec(exterior_d(coarse_sp) * Ac));
    CHECK(fine_energy == doctest::Approx(coarse_energy).epsilon(1e-12));

    CHECK_THROWS_AS(scale_field(FieldSpace(Lattice(3, 1, 0), Degree::one),
                                Vec::Zero(81), -1),
                    Error);
}

TEST_CASE("weighted adjoint pairs rectangular maps across scales") {
    Lattice lat(3, 1, 0);
    FieldSpace fine(lat, Degree::zero, 0), coarse(lat, Degree::zero, 1);
    Rng rng(29);
    // Plain block average as a stand-in rectangular map.
    Mat Q = Mat::Zero(coarse.dim(), fine.dim());
    for (long long yb = 0; yb < coarse.cells(); ++yb)
        for (const Coord& x : lat.block_sites(coarse.coord(yb), 1))
            Q(yb, fine.idx(x)) = 1.0 / 27.0;
    Mat Qs = weighted_adjoint(Q, fine, coarse);
    Vec u = random_complex(rng, fine.dim()), v = random_complex(rng, coarse.dim());
    CHECK(std::abs(inner(coarse, Q * u, v) - inner(fine, u, Vec(Qs * v))) <= 1e-12);
    // Unit averaging weights make the weighted adjoint a right inverse.
    CHECK((Q * Qs - Mat::Identity(coarse.dim(), coarse.dim())).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("schedules") {
    CouplingSchedule cs{0.3, 0.7, 3, 4};
    for (int k = 1; k <= 4; ++k) {
        CHECK(cs.e_at(k) == doctest::Approx(std::sqrt(3.0) * cs.e_at(k - 1)));
        CHECK(cs.mbar_at(k) == doctest::Approx(3.0 * cs.mbar_at(k - 1)));
    }
    CHECK(cs.e_at(4) == doctest::Approx(0.3));
    CHECK(cs.mbar_at(4) == doctest::Approx(0.7));

    FermionWeights fw{1.3, 3};
    CHECK(fw.level(1) == doctest::Approx(1.3));
    for (int k = 1; k <= 5; ++k)
        CHECK(3.0 * harmonic(fw.level(k), fw.new_weight()) == doctest::Approx(fw.level(k + 1)));
    // One refinement step turns the appended profile into the next profile.
    auto prof2 = fw.profile(2);
    CHECK(3.0 * fw.level(2) / 3.0 == doctest::Approx(prof2[1]));
    CHECK(3.0 * fw.profile(1)[0] == doctest::Approx(prof2[0]));

    GaugeWeights gw{0.8, 3};
    CHECK(gw.level(1) == doctest::Approx(0.8));
    for (int j = 1; j <= 5; ++j)
        CHECK(9.0 * harmonic(gw.level(j), gw.new_weight()) == doctest::Approx(gw.level(j + 1)));
}

TEST_CASE("clifford representation") {
    CliffordRep rep = CliffordRep::standard();
    for (int mu = 0; mu < 3; ++mu) {
        CHECK((rep.gamma[mu] - rep.gamma[mu].adjoint()).cwiseAbs().maxCoeff() <= 1e-15);
        for (int nu = 0; nu < 3; ++nu) {
            Eigen::Matrix4cd anti = rep.gamma[mu] * rep.gamma[nu] + rep.gamma[nu] * rep.gamma[mu];
            Eigen::Matrix4cd want = Eigen::Matrix4cd::Zero();
            if (mu == nu) want = 2.0 * Eigen::Matrix4cd::Identity();
            CHECK((anti - want).cwiseAbs().maxCoeff() <= 1e-15);
        }
        Eigen::Matrix4cd flip =
            rep.chirality * rep.gamma[mu] + rep.gamma[mu] * rep.chirality;
        CHECK(flip.cwiseAbs().maxCoeff() <= 1e-15);
    }
}
