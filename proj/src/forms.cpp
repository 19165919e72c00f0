#include "blockrg/forms.hpp"

#include <cmath>

namespace blockrg {

using Trip = Eigen::Triplet<cplx>;

SpMat exterior_d(const FieldSpace& in) {
    const Lattice& lat = in.lat;
    int s = in.stride();
    double inv = 1.0 / in.step();
    std::vector<Trip> t;
    if (in.degree == Degree::zero) {
        FieldSpace out(lat, Degree::one, in.level);
        SpMat d(out.dim(), in.dim());
        for (long long i = 0; i < in.cells(); ++i) {
            Coord x = in.coord(i);
            for (int mu = 0; mu < 3; ++mu) {
                t.emplace_back(out.idx(x, mu), in.idx(lat.shifted(x, mu, s)), inv);
                t.emplace_back(out.idx(x, mu), in.idx(x), -inv);
            }
        }
        d.setFromTriplets(t.begin(), t.end());
        return d;
    }
    if (in.degree == Degree::one) {
        FieldSpace out(lat, Degree::two, in.level);
        SpMat d(out.dim(), in.dim());
        for (long long i = 0; i < in.cells(); ++i) {
            Coord x = in.coord(i);
            for (int p = 0; p < 3; ++p) {
                auto [mu, nu] = plaquette_dirs(p);
                Coord xm = lat.shifted(x, mu, s);
                Coord xn = lat.shifted(x, nu, s);
                long long r = out.idx(x, p);
                t.emplace_back(r, in.idx(x, mu), inv);
                t.emplace_back(r, in.idx(xm, nu), inv);
                t.emplace_back(r, in.idx(xn, mu), -inv);
                t.emplace_back(r, in.idx(x, nu), -inv);
            }
        }
        d.setFromTriplets(t.begin(), t.end());
        return d;
    }
    throw Error("BadDegree", "exterior_d needs a 0-form or 1-form");
}

SpMat codifferential(const FieldSpace& in) {
    if (in.degree != Degree::one && in.degree != Degree::two)
        throw Error("BadDegree", "codifferential needs a 1-form or 2-form");
    Degree lower = in.degree == Degree::one ? Degree::zero : Degree::one;
    FieldSpace below(in.lat, lower, in.level);
    // Equal volume weights on both sides: the weighted adjoint is the plain
    // conjugate transpose.
    return SpMat(exterior_d(below).adjoint());
}

Path rect_path(const FieldSpace& bond_space, const Coord& y, const Coord& x,
               const std::array<int, 3>& perm) {
    const Lattice& lat = bond_space.lat;
    int s = bond_space.stride();
    int side = lat.side();
    Path p;
    Coord at = lat.wrap(y);
    Coord to = lat.wrap(x);
    for (int axis : perm) {
        int d = to[axis] - at[axis];
        d %= side;
        if (d < 0) d += side;          // now in [0, side)
        if (2 * d > side) d -= side;   // minimal representative, side odd
        if (d % s != 0)
            throw Error("BadPath", "displacement not a multiple of the bond stride");
        int steps = std::abs(d) / s;
        int sign = d > 0 ? +1 : -1;
        for (int i = 0; i < steps; ++i) {
            p.push_back({at, axis, sign});
            at = lat.shifted(at, axis, sign * s);
        }
    }
    return p;
}

cplx line_integral(const FieldSpace& bond_space, const Vec& A, const Path& p) {
    const Lattice& lat = bond_space.lat;
    int s = bond_space.stride();
    cplx sum = 0.0;
    for (const auto& st : p) {
        if (st.sign > 0)
            sum += A[bond_space.idx(st.from, st.mu)];
        else
            sum -= A[bond_space.idx(lat.shifted(st.from, st.mu, -s), st.mu)];
    }
    return sum;
}

cplx tau_average(const FieldSpace& bond_space, const Vec& A, const Coord& y, const Coord& x) {
    static const std::array<std::array<int, 3>, 6> perms = {
        {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    cplx sum = 0.0;
    for (const auto& perm : perms) sum += line_integral(bond_space, A, rect_path(bond_space, y, x, perm));
    return sum / 6.0;
}

// Link phase on the canonical bond (x, x + stride e_mu).
static cplx link(const FieldSpace& bonds, const Vec& A, double coupling, double step,
                 const Coord& x, int mu) {
    return std::exp(cplx(0.0, 1.0) * coupling * step * A[bonds.idx(x, mu)]);
}

SpMat covariant_difference(const FieldSpace& sites, const Vec& A, double coupling, int mu) {
    const Lattice& lat = sites.lat;
    FieldSpace bonds(lat, Degree::one, sites.level);
    int s = sites.stride();
    double h = sites.step();
    std::vector<Trip> t;
    SpMat m(sites.dim(), sites.dim());
    for (long long i = 0; i < sites.cells(); ++i) {
        Coord x = sites.coord(i);
        Coord xp = lat.shifted(x, mu, s);
        Coord xm = lat.shifted(x, mu, -s);
        t.emplace_back(sites.idx(x), sites.idx(xp), link(bonds, A, coupling, h, x, mu) / (2 * h));
        // Inverse phase, not conjugate: analytic continuation in A.
        t.emplace_back(sites.idx(x), sites.idx(xm),
                       -1.0 / link(bonds, A, coupling, h, xm, mu) / (2 * h));
    }
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat covariant_laplacian(const FieldSpace& sites, const Vec& A, double coupling) {
    const Lattice& lat = sites.lat;
    FieldSpace bonds(lat, Degree::one, sites.level);
    int s = sites.stride();
    double h = sites.step();
    double inv2 = 1.0 / (h * h);
    std::vector<Trip> t;
    SpMat m(sites.dim(), sites.dim());
    for (long long i = 0; i < sites.cells(); ++i) {
        Coord x = sites.coord(i);
        t.emplace_back(sites.idx(x), sites.idx(x), -6.0 * inv2);
        for (int mu = 0; mu < 3; ++mu) {
            Coord xp = lat.shifted(x, mu, s);
            Coord xm = lat.shifted(x, mu, -s);
            t.emplace_back(sites.idx(x), sites.idx(xp), link(bonds, A, coupling, h, x, mu) * inv2);
            t.emplace_back(sites.idx(x), sites.idx(xm),
                           1.0 / link(bonds, A, coupling, h, xm, mu) * inv2);
        }
    }
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat spinorize(const SpMat& site_op, const Eigen::Matrix4cd& coef) {
    std::vector<Trip> t;
    SpMat m(4 * site_op.rows(), 4 * site_op.cols());
    for (int kk = 0; kk < site_op.outerSize(); ++kk)
        for (SpMat::InnerIterator it(site_op, kk); it; ++it)
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    if (coef(a, b) != 0.0)
                        t.emplace_back(4 * it.row() + a, 4 * it.col() + b, it.value() * coef(a, b));
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat wilson_dirac(const FieldSpace& spinors, const Vec& A, double coupling,
                   const CliffordRep& rep) {
    if (spinors.degree != Degree::spinor) throw Error("BadDegree", "wilson_dirac acts on spinors");
    FieldSpace sites(spinors.lat, Degree::zero, spinors.level);
    double h = sites.step();
    SpMat out(spinors.dim(), spinors.dim());
    for (int mu = 0; mu < 3; ++mu)
        out = out + spinorize(covariant_difference(sites, A, coupling, mu), rep.gamma[mu]);
    SpMat lap = covariant_laplacian(sites, A, coupling);
    out = out - spinorize(lap, (h / 2) * Eigen::Matrix4cd::Identity());
    return out;
}

SpMat phase_diagonal(const FieldSpace& s, const Vec& lambda, double coupling) {
    int C = components(s.degree);
    std::vector<Trip> t;
    SpMat m(s.dim(), s.dim());
    for (long long i = 0; i < s.cells(); ++i) {
        cplx ph = std::exp(cplx(0.0, 1.0) * coupling * lambda[i]);
        for (int c = 0; c < C; ++c) t.emplace_back(C * i + c, C * i + c, ph);
    }
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

cplx holder_derivative(const FieldSpace& sites, const Vec& f, const FieldSpace& bonds,
                       const Vec& A, double coupling, double alpha, const Coord& x,
                       const Coord& y) {
    const Lattice& lat = sites.lat;
    if (lat.site_index(lat.wrap(x)) == lat.site_index(lat.wrap(y)))
        throw Error("BadPair", "Hoelder difference needs x != y");
    double r2 = 0.0;
    for (int i = 0; i < 3; ++i) {
        int d = std::abs(lat.wrap(x)[i] - lat.wrap(y)[i]);
        d = std::min(d, lat.side() - d);
        double phys = d * lat.spacing();
        r2 += phys * phys;
    }
    double r = std::sqrt(r2);
    if (r >= 1.0) throw Error("BadPair", "Hoelder difference needs |x-y| < 1");
    cplx phase = std::exp(cplx(0.0, 1.0) * coupling * bonds.step() *
                          line_integral(bonds, A, rect_path(bonds, x, y, {0, 1, 2})));
    return (phase * f[sites.idx(y)] - f[sites.idx(x)]) / std::pow(r, alpha);
}

std::pair<FieldSpace, Vec> scale_field(const FieldSpace& s, const Vec& f, int dk) {
    if (dk != 1 && dk != -1) throw Error("BadScale", "dk must be +1 or -1");
    Lattice relat = s.lat.retagged(dk);  // throws when no adjacent lattice exists
    double Lr = static_cast<double>(s.lat.L());
    double expo = 0.0;
    switch (s.degree) {
        case Degree::zero: expo = +0.5; break;
        case Degree::one: expo = -0.5; break;
        case Degree::two: expo = -1.5; break;
        case Degree::spinor: expo = -1.0; break;
    }
    // dk = -1 moves toward the coarser tag; +1 inverts the factor.
    double factor = std::pow(Lr, (dk == -1 ? 1.0 : -1.0) * expo);
    return {FieldSpace(relat, s.degree, s.level), factor * f};
}

std::vector<long long> indices_where(const FieldSpace& s,
                                     const std::function<bool(const Coord&)>& keep) {
    int C = components(s.degree);
    std::vector<long long> idx;
    for (long long i = 0; i < s.cells(); ++i)
        if (keep(s.coord(i)))
            for (int c = 0; c < C; ++c) idx.push_back(C * i + c);
    return idx;
}

std::vector<long long> indices_touching(const FieldSpace& s,
                                        const std::function<bool(const Coord&)>& in_set) {
    const Lattice& lat = s.lat;
    int st = s.stride();
    std::vector<long long> idx;
    if (s.degree == Degree::one) {
        for (long long i = 0; i < s.cells(); ++i) {
            Coord x = s.coord(i);
            for (int mu = 0; mu < 3; ++mu)
                if (in_set(x) || in_set(lat.shifted(x, mu, st))) idx.push_back(3 * i + mu);
        }
        return idx;
    }
    if (s.degree == Degree::two) {
        for (long long i = 0; i < s.cells(); ++i) {
            Coord x = s.coord(i);
            for (int p = 0; p < 3; ++p) {
                auto [mu, nu] = plaquette_dirs(p);
                Coord a = lat.shifted(x, mu, st);
                Coord b = lat.shifted(x, nu, st);
                Coord c = lat.shifted(a, nu, st);
                if (in_set(x) || in_set(a) || in_set(b) || in_set(c)) idx.push_back(3 * i + p);
            }
        }
        return idx;
    }
    return indices_where(s, in_set);
}

Mat restrict_to(const Mat& M, const std::vector<long long>& idx) {
    Mat out(idx.size(), idx.size());
    for (size_t r = 0; r < idx.size(); ++r)
        for (size_t c = 0; c < idx.size(); ++c) out(r, c) = M(idx[r], idx[c]);
    return out;
}

Vec restrict_to(const Vec& v, const std::vector<long long>& idx) {
    Vec out(idx.size());
    for (size_t r = 0; r < idx.size(); ++r) out[r] = v[idx[r]];
    return out;
}

Mat embed_from(const Mat& sub, const std::vector<long long>& idx, long long dim) {
    Mat out = Mat::Zero(dim, dim);
    for (size_t r = 0; r < idx.size(); ++r)
        for (size_t c = 0; c < idx.size(); ++c) out(idx[r], idx[c]) = sub(r, c);
    return out;
}

Vec embed_from(const Vec& sub, const std::vector<long long>& idx, long long dim) {
    Vec out = Vec::Zero(dim);
    for (size_t r = 0; r < idx.size(); ++r) out[idx[r]] = sub[r];
    return out;
}

Mat inverse_on(const Mat& M, const std::vector<long long>& idx) {
    Mat sub = restrict_to(M, idx);
    Mat inv = sub.partialPivLu().inverse();
    return embed_from(inv, idx, M.rows());
}

Mat project_onto(const Mat& M, const std::vector<long long>& idx) {
    Mat out = Mat::Zero(M.rows(), M.cols());
    for (size_t r = 0; r < idx.size(); ++r)
        for (size_t c = 0; c < idx.size(); ++c) out(idx[r], idx[c]) = M(idx[r], idx[c]);
    return out;
}

Mat weighted_adjoint(const Mat& op, const FieldSpace& dom, const FieldSpace& cod) {
    return (cod.weight() / dom.weight()) * op.adjoint();
}

Mat weighted_transpose(const Mat& op, const FieldSpace& dom, const FieldSpace& cod) {
    return (cod.weight() / dom.weight()) * op.transpose();
}

}  // namespace blockrg
