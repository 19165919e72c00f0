#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace blockrg {

/// Error with a stable machine-readable kind, e.g. "BadLatticeParams",
/// "NestingViolation", "SeparationViolation", "NotACubeUnion".
struct Error : std::runtime_error {
    std::string kind;
    Error(std::string kind_, const std::string& what_)
        : std::runtime_error(kind_ + ": " + what_), kind(std::move(kind_)) {}
};

[[nodiscard]] inline long long ipow(long long b, int e) {
    long long r = 1;
    while (e-- > 0) r *= b;
    return r;
}

/// Site coordinates in finest-spacing units, each in [0, side).
using Coord = std::array<int, 3>;

/// Periodic cubic lattice of a refinement family. Level k of the family has
/// physical spacing L^-k and extent L^(N-k); the number of sites per side is
/// L^N for every k, so fields at all levels share one coordinate system of
/// finest-spacing integer units.
///
/// Canonical orderings (x-major lexicographic):
///   site index             i(x) = (x0*side + x1)*side + x2
///   bond index at level j  3*subsite + mu, bond (y, y + L^j e_mu)
///   plaquette index        3*subsite + p,  p in {0,1,2} ~ planes (01),(02),(12)
/// where "subsite" enumerates the stride-L^j sublattice, again x-major.
class Lattice {
  public:
    Lattice(int L, int N, int k);

    int L() const { return L_; }
    int N() const { return N_; }
    int k() const { return k_; }
    int side() const { return side_; }

    double spacing() const { return spacing_; }  // L^-k
    double extent() const { return extent_; }    // L^(N-k)

    long long n_sites() const { return n_sites_; }
    long long n_bonds() const { return 3 * n_sites_; }
    long long n_plaquettes() const { return 3 * n_sites_; }

    /// The same torus tagged with spacing L^-(k+dk); site count is unchanged.
    Lattice retagged(int dk) const { return Lattice(L_, N_, k_ + dk); }

    int wrap(int c) const {
        c %= side_;
        return c < 0 ? c + side_ : c;
    }
    Coord wrap(Coord c) const { return {wrap(c[0]), wrap(c[1]), wrap(c[2])}; }

    long long site_index(const Coord& c) const {
        return (static_cast<long long>(c[0]) * side_ + c[1]) * side_ + c[2];
    }
    Coord site_coord(long long i) const {
        int z = static_cast<int>(i % side_);
        i /= side_;
        int y = static_cast<int>(i % side_);
        int x = static_cast<int>(i / side_);
        return {x, y, z};
    }

    Coord shifted(Coord c, int mu, int steps) const {
        c[mu] = wrap(c[mu] + steps);
        return c;
    }

    // --- stride-L^j sublattices -------------------------------------------

    /// Number of refinement levels a sublattice can be coarser by: 0..N.
    int stride(int j) const { return static_cast<int>(ipow(L_, j)); }
    int subside(int j) const { return side_ / stride(j); }
    long long n_subsites(int j) const {
        long long m = subside(j);
        return m * m * m;
    }

    /// Sublattice sites sit at the centers of the tiles [t*s, t*s + s - 1],
    /// so their coordinates are congruent to (s - 1) / 2 mod s.
    bool on_sublattice(const Coord& c, int j) const {
        int s = stride(j);
        int h = (s - 1) / 2;
        return c[0] % s == h && c[1] % s == h && c[2] % s == h;
    }

    /// Index of a sublattice site among sublattice sites (x-major over the
    /// subside-sized grid). Any fine coordinate maps to the subsite whose
    /// block contains it.
    long long subsite_index(const Coord& c, int j) const;
    Coord subsite_coord(long long i, int j) const;

    /// Center of the side-L^j block containing x, an element of the stride-L^j
    /// sublattice. With L odd every site has a unique nearest center.
    Coord block_center(const Coord& x, int j) const;

    /// All L^(3j) sites of the side-L^j block centered at y (y on sublattice j).
    std::vector<Coord> block_sites(const Coord& y, int j) const;

    /// Unit cell of y at level j: same site set as block_sites(y, j).
    /// enlarged_cell adds `layers` shells of side-L^j cubes on every side.
    std::vector<Coord> enlarged_cell(const Coord& y, int j, int layers) const;

    /// L^1 distance on the torus in finest-spacing units.
    long long l1_distance(const Coord& a, const Coord& b) const;
    /// Sup distance on the torus in finest-spacing units.
    long long linf_distance(const Coord& a, const Coord& b) const;

  private:
    int L_, N_, k_, side_;
    double spacing_, extent_;
    long long n_sites_;
};

/// Plaquette plane p -> the two bond directions (mu, nu), mu < nu.
inline std::pair<int, int> plaquette_dirs(int p) {
    switch (p) {
        case 0: return {0, 1};
        case 1: return {0, 2};
        default: return {1, 2};
    }
}
inline int plaquette_plane(int mu, int nu) {
    return (mu == 0) ? (nu == 1 ? 0 : 1) : 2;
}

}  // namespace blockrg
