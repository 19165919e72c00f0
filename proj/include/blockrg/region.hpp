#pragma once

#include "blockrg/lattice.hpp"

#include <optional>
#include <utility>

namespace blockrg {

/// A point of the multiscale index set: a site of the stride-L^level
/// sublattice lying in the level's shell (see RegionSequence).
struct MultiPoint {
    int level;
    Coord y;
};

/// Decreasing sequence of regions Omega_1 >= Omega_2 >= ... >= Omega_depth on
/// one lattice. Omega_j is a union of axis-aligned cubes of side L^j*M
/// finest-spacing units centered on the stride-L^j*M sublattice, so admissible
/// cubes tile the torus and a region is named by tile indices.
///
/// Shells: delta_0 = complement of Omega_1, delta_j = Omega_j - Omega_{j+1}
/// for 0 < j < depth, delta_depth = Omega_depth. The multiscale index set
/// carries, for each level j, the stride-L^j sublattice sites inside delta_j;
/// points are ordered level-major, then x-major within a level.
class RegionSequence {
  public:
    /// Every Omega_j the whole torus; all shells empty except the deepest.
    static RegionSequence full_torus(const Lattice& lat, int depth);

    /// cubes_per_level[j-1] lists tile indices (x-major over the admissible
    /// grid of level j) forming Omega_j. separation_mode "strict" requires
    /// each Omega_{j+1} tile's five-layer enlargement inside Omega_j;
    /// "relaxed" requires nesting only.
    static RegionSequence from_cubes(const Lattice& lat, int depth, int M,
                                     const std::vector<std::vector<long long>>& cubes_per_level,
                                     const std::string& separation_mode = "relaxed");

    const Lattice& lattice() const { return lat_; }
    int depth() const { return depth_; }
    int M() const { return M_; }

    /// Region membership; j may run 0..depth+1 with Omega_0 the whole torus
    /// and Omega_{depth+1} empty.
    bool in_omega(int j, const Coord& c) const;
    bool in_delta(int j, const Coord& c) const;
    /// Site count of Omega_j.
    long long omega_volume(int j) const;
    /// Stride-L^s sublattice sites lying in Omega_j, x-major.
    std::vector<Coord> omega_subsites(int j, int s) const;
    /// Stride-L^s sublattice sites lying in delta_j, x-major.
    std::vector<Coord> delta_subsites(int j, int s) const;

    // --- multiscale index set ---------------------------------------------

    long long n_points() const { return static_cast<long long>(points_.size()); }
    const std::vector<MultiPoint>& points() const { return points_; }
    /// Index into points(), or -1 when (level, y) is not a point.
    long long point_index(int level, const Coord& y) const;

    /// Level-j bonds (y, y + L^j e_mu) with at least one endpoint in delta_j.
    std::vector<std::pair<Coord, int>> level_bonds(int j) const;
    /// Level-j plaquettes with at least one corner in delta_j.
    std::vector<std::pair<Coord, int>> level_plaquettes(int j) const;

    // --- scaled distance ---------------------------------------------------

    /// Length of the shortest multiscale path between points p and q: steps
    /// join sublattice neighbors within one level's shell, or cross between
    /// shells at the finer of the two scales; every step counts 1. Returns
    /// +inf when no path exists.
    double omega_distance(long long p, long long q) const;

  private:
    RegionSequence(const Lattice& lat, int depth, int M);
    void finalize(const std::string& separation_mode, bool validate_separation);
    void build_points();
    void build_graph() const;

    Lattice lat_;
    int depth_;
    int M_;
    // omega_[j-1]: site mask of Omega_j over fine sites, j = 1..depth.
    std::vector<std::vector<uint8_t>> omega_;
    std::vector<MultiPoint> points_;
    // point lookup per level: n_subsites(level) entries, -1 when absent
    std::vector<std::vector<long long>> lookup_;
    mutable std::vector<std::vector<long long>> adj_;  // built on first distance query
    mutable std::vector<double> dist_;                 // n_points^2, -1 rows not yet solved
    mutable std::vector<uint8_t> dist_done_;
};

}  // namespace blockrg
