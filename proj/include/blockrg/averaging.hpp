#pragma once

#include "blockrg/forms.hpp"
#include "blockrg/region.hpp"

#include <vector>

// Block-averaging operators between the nested sublattices of one fine
// lattice.  Averages map level-0 fields to level-depth fields; prolongations
// go the other way and are the adjoints under the cell-volume inner products
// (transposes without conjugation, so they stay analytic in a complex gauge
// field).  All operators are materialized as sparse matrices over the
// canonical FieldSpace index orderings.

namespace blockrg {

// Adjoint without conjugation under diagonal weights:
//   out(j,i) = op(i,j) * w_cod[i] / w_dom[j].
SpMat weighted_transpose_sp(const SpMat& op, const Eigen::VectorXd& w_dom,
                            const Eigen::VectorXd& w_cod);

// ---- scalar (0-form) averages -------------------------------------------
// Plain block mean over the depth-fold block, weight L^{-3 depth}.
SpMat scalar_average(const Lattice& lat, int depth);
// Adjoint: block-constant extension, entries exactly 1.
SpMat scalar_prolong(const Lattice& lat, int depth);

// ---- 1-form (bond) averages ---------------------------------------------
// One stage maps level bonds to level+1 bonds: mean over the block of the
// bond's base point of the straight bond lines covering the coarse bond,
// weight L^{-4} per stage.
SpMat bond_average_stage(const Lattice& lat, int level);
// depth-fold form: straight fine lines through the depth-fold block, weight
// L^{-4 depth}.  Equals the product of the stages exactly.
SpMat bond_average(const Lattice& lat, int depth);
// Adjoint under cell volumes; spreads a coarse bond value along the covering
// lines with weight L^{-depth} times the covering-line count per fine bond.
SpMat bond_prolong(const Lattice& lat, int depth);

// ---- 2-form (plaquette) averages ----------------------------------------
// Mean over block corners and the coarse plaquette's span of fine
// plaquettes, weight L^{-5} per stage (L^{-5 depth} for the depth-fold).
SpMat plaquette_average_stage(const Lattice& lat, int level);
SpMat plaquette_average(const Lattice& lat, int depth);

// ---- surface and edge averages ------------------------------------------
// Surface average: mean over the bonds joining the two blocks of a coarse
// bond, weight L^{-2} per stage.  Its prolongation puts L^depth on each of
// the L^{2 depth} joining bonds and satisfies
//   bond_average * surface_prolong = I,
//   surface_average * surface_prolong = L^depth I.
SpMat surface_average_stage(const Lattice& lat, int level);
SpMat surface_average(const Lattice& lat, int depth);
SpMat surface_prolong(const Lattice& lat, int depth);
// Edge average: mean over the stack of fine plaquettes whose corners lie in
// the four blocks at the coarse plaquette's corners, weight L^{-1} per
// stage.  The prolongation puts L^{2 depth} on each stack plaquette and
//   edge_average * edge_prolong = L^{2 depth} I.
SpMat edge_average_stage(const Lattice& lat, int level);
SpMat edge_average(const Lattice& lat, int depth);
SpMat edge_prolong(const Lattice& lat, int depth);

// ---- fermion (spinor) averages ------------------------------------------
// Block mean with link phases: weight L^{-3} exp(i g eta tau(y,x)) per site,
// where tau is the ordering-averaged line sum of the fine gauge field along
// rectilinear level paths from the block center y to x, and eta is the fine
// spacing.  Diagonal in the spinor index.  With symmetrized=false only the
// axis-ordered path (0,1,2) is used.
SpMat fermion_average_stage(const Lattice& lat, const Vec& A, double coupling,
                            int level, bool symmetrized = true);
// depth-fold composition of the stages, every stage with the same coupling.
SpMat fermion_average(const Lattice& lat, const Vec& A, double coupling,
                      int depth, bool symmetrized = true);

// ---- multiscale operators over a region sequence ------------------------
// Level-j component cells are level-j bonds or plaquettes tied to the j-th
// shell.  Inclusive sets take every cell with at least one end (corner) in
// the shell and none in the deeper region; they carry cells straddling into
// the finer shell, whose averaged values are still well defined from the
// fine field.  Interior sets (j >= 1) require every end (corner) inside the
// shell, which makes the level components mutually independent; level 0
// keeps the inclusive rule in both flavors since its component is the
// identity.
struct MultiscaleCells {
    int depth = 0;
    std::vector<std::vector<long long>> cells;  // per level: FieldSpace cell ids, ascending
    std::vector<long long> offsets;             // size depth+2, prefix sums

    long long dim() const { return offsets.back(); }
};

MultiscaleCells multiscale_cells(const Lattice& lat, const RegionSequence& seq,
                                 Degree degree, bool interior);

// Cell-volume weights (step^3 of the owning level), one entry per multiscale
// cell; for point fields, one entry per region point repeated `components`
// times.
Eigen::VectorXd multiscale_cell_weights(const Lattice& lat, const MultiscaleCells& cells);
Eigen::VectorXd point_weights(const Lattice& lat, const RegionSequence& seq, int components);

// Fine scalars -> region points: identity on the outermost shell, the
// level-j scalar average on the j-th shell's points.
SpMat scalar_average_multiscale(const Lattice& lat, const RegionSequence& seq);
// Fine spinors -> 4 components per region point, same block structure with
// link phases.
SpMat fermion_average_multiscale(const Lattice& lat, const RegionSequence& seq,
                                 const Vec& A, double coupling, bool symmetrized = true);
// Fine bonds -> multiscale 1-form on the given row cells.
SpMat gauge_average_multiscale(const Lattice& lat, const RegionSequence& seq,
                               const MultiscaleCells& rows);
// Fine plaquettes -> multiscale 2-form on the given row cells.
SpMat plaquette_average_multiscale(const Lattice& lat, const RegionSequence& seq,
                                   const MultiscaleCells& rows);
// Multiscale 1-form (interior cells) -> fine bonds.  Identity on level-0
// cells, the level-j surface prolongation elsewhere.  Right inverse of
// gauge_average_multiscale on the same interior cells.
SpMat surface_prolong_multiscale(const Lattice& lat, const RegionSequence& seq,
                                 const MultiscaleCells& cols);
// Level derivative applied after the multiscale average, rows on 1-form
// (resp. 2-form) cells; values on cells dipping into the finer shell are
// resolved by averaging the fine field, so these equal the corresponding
// average of the fine derivative exactly.
SpMat d_of_scalar_average_multiscale(const Lattice& lat, const RegionSequence& seq,
                                     const MultiscaleCells& rows);
SpMat d_of_gauge_average_multiscale(const Lattice& lat, const RegionSequence& seq,
                                    const MultiscaleCells& rows);

}  // namespace blockrg
