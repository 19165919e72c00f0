#pragma once

#include "blockrg/clifford.hpp"
#include "blockrg/lattice.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <complex>
#include <functional>
#include <vector>

namespace blockrg {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;
using SpMat = Eigen::SparseMatrix<cplx>;

enum class Degree { zero = 0, one = 1, two = 2, spinor = 3 };

inline int components(Degree d) { return d == Degree::spinor ? 4 : (d == Degree::zero ? 1 : 3); }

/// Value space of a field: one complex component per cell of the
/// stride-L^level sublattice (scalars on sites, 1-forms on bonds, 2-forms on
/// plaquettes, spinors four per site). Cell ordering is x-major over
/// sublattice sites with the component index fastest, so idx = C*site + c.
struct FieldSpace {
    Lattice lat;
    Degree degree;
    int level = 0;

    FieldSpace(const Lattice& l, Degree d, int lev = 0) : lat(l), degree(d), level(lev) {}

    int stride() const { return lat.stride(level); }
    /// Physical distance between sublattice neighbors: L^(level-k).
    double step() const { return lat.spacing() * stride(); }
    /// Volume weight of the inner product, step^3.
    double weight() const { return step() * step() * step(); }
    long long cells() const { return lat.n_subsites(level); }
    long long dim() const { return components(degree) * cells(); }

    long long cell_index(const Coord& c) const { return lat.subsite_index(lat.wrap(c), level); }
    long long idx(const Coord& c, int comp = 0) const {
        return components(degree) * cell_index(c) + comp;
    }
    Coord coord(long long cell) const { return lat.subsite_coord(cell, level); }

    bool operator==(const FieldSpace& o) const {
        return lat.L() == o.lat.L() && lat.N() == o.lat.N() && lat.k() == o.lat.k() &&
               degree == o.degree && level == o.level;
    }
};

/// ell^2 inner product with the space's volume weight, antilinear in u.
inline cplx inner(const FieldSpace& s, const Vec& u, const Vec& v) {
    return s.weight() * u.dot(v);
}
inline double norm2(const FieldSpace& s, const Vec& u) { return s.weight() * u.squaredNorm(); }

// --- exterior calculus -----------------------------------------------------

/// d with the 1/step normalization: gradient on 0-forms, oriented plaquette
/// circulation on 1-forms. d(d(f)) = 0.
SpMat exterior_d(const FieldSpace& in);

/// Adjoint of exterior_d under the weighted inner products (equal weights on
/// both sides make it the conjugate transpose).
SpMat codifferential(const FieldSpace& in);

// --- paths and link phases -------------------------------------------------

/// One directed sublattice step: from -> from + sign * stride * e_mu.
struct PathStep {
    Coord from;
    int mu;
    int sign;
};
using Path = std::vector<PathStep>;

/// Rectilinear path from y to x exhausting axes in the order given by perm,
/// each axis along its minimal signed displacement (unique: odd side).
/// Displacements must be multiples of the space's stride.
Path rect_path(const FieldSpace& bond_space, const Coord& y, const Coord& x,
               const std::array<int, 3>& perm);

/// Sum of the 1-form over a directed path.
cplx line_integral(const FieldSpace& bond_space, const Vec& A, const Path& p);

/// Average of line integrals over the 3! axis orderings.
cplx tau_average(const FieldSpace& bond_space, const Vec& A, const Coord& y, const Coord& x);

// --- covariant operators ---------------------------------------------------

/// Per-direction covariant symmetric difference with midpoint link phases
/// exp(i coupling * step * A(b)): (1/2 step)(U f_+ - U_-^{-1} f_-). Acts on
/// scalar fields; the inverse (not the conjugate) keeps it analytic in A.
SpMat covariant_difference(const FieldSpace& sites, const Vec& A, double coupling, int mu);

/// Covariant 7-point Laplacian, same phases.
SpMat covariant_laplacian(const FieldSpace& sites, const Vec& A, double coupling);

/// gamma . covariant_difference - (step/2) covariant_laplacian on spinor
/// fields (the Wilson correction uses epsilon = step).
SpMat wilson_dirac(const FieldSpace& spinors, const Vec& A, double coupling,
                   const CliffordRep& rep);

/// Lift a site-indexed operator to spinors, tensoring each entry with coef.
SpMat spinorize(const SpMat& site_op, const Eigen::Matrix4cd& coef);

/// Diagonal phase field exp(i coupling * lambda) on sites or spinors; the
/// gauge conjugation of covariant operators under A -> A + d lambda (the
/// 1/step inside d cancels the step inside the link phase).
SpMat phase_diagonal(const FieldSpace& s, const Vec& lambda, double coupling);

/// Covariant Hoelder difference quotient
/// (phase(x<-y) f(y) - f(x)) / |x-y|^alpha with the axis-ordered path phase;
/// |x-y| is the minimal physical Euclidean distance, required < 1.
cplx holder_derivative(const FieldSpace& sites, const Vec& f, const FieldSpace& bonds,
                       const Vec& A, double coupling, double alpha, const Coord& x,
                       const Coord& y);

// --- scaling ---------------------------------------------------------------

/// Retag a whole-lattice field one refinement step with the dimension-correct
/// value factor. Toward the coarser tag (spacing grows by L): 0-forms L^+1/2,
/// 1-forms L^-1/2, 2-forms L^-3/2, spinors L^-1. Integer cell data is shared
/// by the two tags, so only values change. dk = -1 coarser, +1 finer.
std::pair<FieldSpace, Vec> scale_field(const FieldSpace& s, const Vec& f, int dk);

// --- restrictions ----------------------------------------------------------

/// Indices of spinor components at sites where keep(coord) holds.
std::vector<long long> indices_where(const FieldSpace& s,
                                     const std::function<bool(const Coord&)>& keep);

/// Indices of bond components where the bond has at least one end in the set
/// (2-forms: at least one corner).
std::vector<long long> indices_touching(const FieldSpace& s,
                                        const std::function<bool(const Coord&)>& in_set);

Mat restrict_to(const Mat& M, const std::vector<long long>& idx);
Vec restrict_to(const Vec& v, const std::vector<long long>& idx);
Mat embed_from(const Mat& sub, const std::vector<long long>& idx, long long dim);
Vec embed_from(const Vec& sub, const std::vector<long long>& idx, long long dim);

/// [M]^{-1}_X: invert the block indexed by idx, zero elsewhere.
Mat inverse_on(const Mat& M, const std::vector<long long>& idx);

/// 1_X M 1_X with 1_X the coordinate projection onto idx.
Mat project_onto(const Mat& M, const std::vector<long long>& idx);

/// Weighted adjoint (conjugate) and weighted transpose (analytic, no
/// conjugation) of an operator between two spaces: factor w_cod / w_dom.
Mat weighted_adjoint(const Mat& op, const FieldSpace& dom, const FieldSpace& cod);
Mat weighted_transpose(const Mat& op, const FieldSpace& dom, const FieldSpace& cod);

}  // namespace blockrg
