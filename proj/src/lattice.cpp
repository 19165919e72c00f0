#include "blockrg/lattice.hpp"

namespace blockrg {

Lattice::Lattice(int L, int N, int k) : L_(L), N_(N), k_(k) {
    if (L < 3 || L % 2 == 0)
        throw Error("BadLatticeParams", "L must be odd and >= 3, got " + std::to_string(L));
    if (N < 1) throw Error("BadLatticeParams", "N must be >= 1, got " + std::to_string(N));
    if (k < 0 || k > N)
        throw Error("BadLatticeParams",
                    "k must lie in [0, N], got k=" + std::to_string(k) + " N=" + std::to_string(N));
    long long s = ipow(L, N);
    if (s > 4096) throw Error("BadLatticeParams", "side L^N too large: " + std::to_string(s));
    side_ = static_cast<int>(s);
    n_sites_ = s * s * s;
    spacing_ = 1.0;
    for (int i = 0; i < k; ++i) spacing_ /= L;
    extent_ = 1.0;
    for (int i = 0; i < N - k; ++i) extent_ *= L;
}

long long Lattice::subsite_index(const Coord& c, int j) const {
    int s = stride(j);
    long long m = subside(j);
    return (static_cast<long long>(c[0] / s) * m + c[1] / s) * m + c[2] / s;
}

Coord Lattice::subsite_coord(long long i, int j) const {
    int s = stride(j);
    int h = (s - 1) / 2;
    long long m = subside(j);
    int z = static_cast<int>(i % m);
    i /= m;
    int y = static_cast<int>(i % m);
    int x = static_cast<int>(i / m);
    return {x * s + h, y * s + h, z * s + h};
}

Coord Lattice::block_center(const Coord& x, int j) const {
    int s = stride(j);
    int h = (s - 1) / 2;
    Coord y;
    for (int i = 0; i < 3; ++i) y[i] = (x[i] / s) * s + h;
    return y;
}

std::vector<Coord> Lattice::block_sites(const Coord& y, int j) const {
    int s = stride(j);
    int h = (s - 1) / 2;
    std::vector<Coord> out;
    out.reserve(static_cast<size_t>(s) * s * s);
    for (int a = -h; a <= h; ++a)
        for (int b = -h; b <= h; ++b)
            for (int c = -h; c <= h; ++c)
                out.push_back(wrap(Coord{y[0] + a, y[1] + b, y[2] + c}));
    return out;
}

std::vector<Coord> Lattice::enlarged_cell(const Coord& y, int j, int layers) const {
    int s = stride(j);
    int h = (s - 1) / 2 + layers * s;
    // Clamp so the cube never wraps onto itself; callers that hit the clamp
    // are covering the whole torus.
    int full = side_ / 2;
    bool saturated = h >= full;
    std::vector<Coord> out;
    if (saturated) {
        out.reserve(static_cast<size_t>(n_sites_));
        for (long long i = 0; i < n_sites_; ++i) out.push_back(site_coord(i));
        return out;
    }
    long long w = 2LL * h + 1;
    out.reserve(static_cast<size_t>(w * w * w));
    for (int a = -h; a <= h; ++a)
        for (int b = -h; b <= h; ++b)
            for (int c = -h; c <= h; ++c)
                out.push_back(wrap(Coord{y[0] + a, y[1] + b, y[2] + c}));
    return out;
}

long long Lattice::l1_distance(const Coord& a, const Coord& b) const {
    long long d = 0;
    for (int i = 0; i < 3; ++i) {
        int di = std::abs(a[i] - b[i]);
        d += std::min(di, side_ - di);
    }
    return d;
}

long long Lattice::linf_distance(const Coord& a, const Coord& b) const {
    long long d = 0;
    for (int i = 0; i < 3; ++i) {
        long long di = std::abs(a[i] - b[i]);
        d = std::max(d, std::min(di, static_cast<long long>(side_) - di));
    }
    return d;
}

}  // namespace blockrg
