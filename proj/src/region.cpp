#include "blockrg/region.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace blockrg {

RegionSequence::RegionSequence(const Lattice& lat, int depth, int M)
    : lat_(lat), depth_(depth), M_(M) {
    if (depth < 1 || depth > lat.k())
        throw Error("BadRegionParams", "depth must lie in [1, k]");
    // M = L^m so every admissible cube side is again a power of L.
    int m = 0;
    long long t = M;
    while (t > 1 && t % lat.L() == 0) {
        t /= lat.L();
        ++m;
    }
    if (t != 1 || M < 1) throw Error("BadRegionParams", "M must be a power of L (or 1)");
    if (ipow(lat.L(), depth) * M > lat.side())
        throw Error("BadRegionParams", "cube side L^depth*M exceeds the torus");
}

RegionSequence RegionSequence::full_torus(const Lattice& lat, int depth) {
    RegionSequence r(lat, depth, 1);
    r.omega_.assign(depth, std::vector<uint8_t>(static_cast<size_t>(lat.n_sites()), 1));
    r.finalize("relaxed", false);
    return r;
}

RegionSequence RegionSequence::from_cubes(const Lattice& lat, int depth, int M,
                                          const std::vector<std::vector<long long>>& cubes_per_level,
                                          const std::string& separation_mode) {
    RegionSequence r(lat, depth, M);
    if (static_cast<int>(cubes_per_level.size()) != depth)
        throw Error("BadRegionParams", "expected one cube list per level 1..depth");
    r.omega_.assign(depth, std::vector<uint8_t>(static_cast<size_t>(lat.n_sites()), 0));
    for (int j = 1; j <= depth; ++j) {
        int cube = static_cast<int>(ipow(lat.L(), j)) * M;  // tile side, finest units
        int grid = lat.side() / cube;
        long long n_tiles = static_cast<long long>(grid) * grid * grid;
        int h = (cube - 1) / 2;
        for (long long t : cubes_per_level[static_cast<size_t>(j - 1)]) {
            if (t < 0 || t >= n_tiles)
                throw Error("BadCubeIndex", "tile " + std::to_string(t) + " out of range at level " +
                                                std::to_string(j));
            int z = static_cast<int>(t % grid);
            int y = static_cast<int>((t / grid) % grid);
            int x = static_cast<int>(t / (static_cast<long long>(grid) * grid));
            Coord c = {x * cube + h, y * cube + h, z * cube + h};  // tile center
            for (int a = -h; a <= h; ++a)
                for (int b = -h; b <= h; ++b)
                    for (int d = -h; d <= h; ++d) {
                        Coord s = lat.wrap(Coord{c[0] + a, c[1] + b, c[2] + d});
                        r.omega_[static_cast<size_t>(j - 1)][static_cast<size_t>(lat.site_index(s))] = 1;
                    }
        }
    }
    r.finalize(separation_mode, true);
    return r;
}

void RegionSequence::finalize(const std::string& separation_mode, bool validate_separation) {
    for (int j = 1; j < depth_; ++j) {
        const auto& outer = omega_[static_cast<size_t>(j - 1)];
        const auto& inner = omega_[static_cast<size_t>(j)];
        for (size_t i = 0; i < outer.size(); ++i)
            if (inner[i] && !outer[i])
                throw Error("NestingViolation", "Omega_" + std::to_string(j + 1) +
                                                    " leaves Omega_" + std::to_string(j));
    }
    if (validate_separation) {
        if (separation_mode != "strict" && separation_mode != "relaxed")
            throw Error("BadRegionParams", "unknown separation mode " + separation_mode);
        if (separation_mode == "strict") {
            for (int j = 1; j < depth_; ++j) {
                int cube = static_cast<int>(ipow(lat_.L(), j + 1)) * M_;
                int h = (cube - 1) / 2 + 5 * cube;  // five layers of same-size cubes
                const auto& inner = omega_[static_cast<size_t>(j)];
                const auto& outer = omega_[static_cast<size_t>(j - 1)];
                for (long long i = 0; i < lat_.n_sites(); ++i) {
                    if (!inner[static_cast<size_t>(i)]) continue;
                    Coord c = lat_.site_coord(i);
                    if (2 * h + 1 >= lat_.side())
                        throw Error("SeparationViolation",
                                    "strict separation cannot hold on this torus");
                    for (int a = -h; a <= h; ++a)
                        for (int b = -h; b <= h; ++b)
                            for (int d = -h; d <= h; ++d) {
                                Coord s = lat_.wrap(Coord{c[0] + a, c[1] + b, c[2] + d});
                                if (!outer[static_cast<size_t>(lat_.site_index(s))])
                                    throw Error("SeparationViolation",
                                                "Omega_" + std::to_string(j + 1) +
                                                    " too close to the boundary of Omega_" +
                                                    std::to_string(j));
                            }
                }
            }
        }
    }
    build_points();
}

bool RegionSequence::in_omega(int j, const Coord& c) const {
    if (j <= 0) return true;
    if (j > depth_) return false;
    return omega_[static_cast<size_t>(j - 1)][static_cast<size_t>(lat_.site_index(lat_.wrap(c)))] != 0;
}

bool RegionSequence::in_delta(int j, const Coord& c) const {
    return in_omega(j, c) && !in_omega(j + 1, c);
}

long long RegionSequence::omega_volume(int j) const {
    if (j <= 0) return lat_.n_sites();
    if (j > depth_) return 0;
    const auto& m = omega_[static_cast<size_t>(j - 1)];
    return std::count(m.begin(), m.end(), uint8_t{1});
}

std::vector<Coord> RegionSequence::omega_subsites(int j, int s) const {
    std::vector<Coord> out;
    for (long long i = 0; i < lat_.n_subsites(s); ++i) {
        Coord c = lat_.subsite_coord(i, s);
        if (in_omega(j, c)) out.push_back(c);
    }
    return out;
}

std::vector<Coord> RegionSequence::delta_subsites(int j, int s) const {
    std::vector<Coord> out;
    for (long long i = 0; i < lat_.n_subsites(s); ++i) {
        Coord c = lat_.subsite_coord(i, s);
        if (in_delta(j, c)) out.push_back(c);
    }
    return out;
}

void RegionSequence::build_points() {
    points_.clear();
    lookup_.assign(static_cast<size_t>(depth_) + 1, {});
    for (int j = 0; j <= depth_; ++j) {
        lookup_[static_cast<size_t>(j)].assign(static_cast<size_t>(lat_.n_subsites(j)), -1);
        for (long long i = 0; i < lat_.n_subsites(j); ++i) {
            Coord c = lat_.subsite_coord(i, j);
            if (in_delta(j, c)) {
                lookup_[static_cast<size_t>(j)][static_cast<size_t>(i)] =
                    static_cast<long long>(points_.size());
                points_.push_back({j, c});
            }
        }
    }
    adj_.clear();
    dist_.clear();
    dist_done_.clear();
}

long long RegionSequence::point_index(int level, const Coord& y) const {
    if (level < 0 || level > depth_) return -1;
    Coord c = lat_.wrap(y);
    if (!lat_.on_sublattice(c, level)) return -1;
    return lookup_[static_cast<size_t>(level)][static_cast<size_t>(lat_.subsite_index(c, level))];
}

std::vector<std::pair<Coord, int>> RegionSequence::level_bonds(int j) const {
    std::vector<std::pair<Coord, int>> out;
    int s = lat_.stride(j);
    for (long long i = 0; i < lat_.n_subsites(j); ++i) {
        Coord c = lat_.subsite_coord(i, j);
        for (int mu = 0; mu < 3; ++mu)
            if (in_delta(j, c) || in_delta(j, lat_.shifted(c, mu, s))) out.push_back({c, mu});
    }
    return out;
}

std::vector<std::pair<Coord, int>> RegionSequence::level_plaquettes(int j) const {
    std::vector<std::pair<Coord, int>> out;
    int s = lat_.stride(j);
    for (long long i = 0; i < lat_.n_subsites(j); ++i) {
        Coord c = lat_.subsite_coord(i, j);
        for (int p = 0; p < 3; ++p) {
            auto [mu, nu] = plaquette_dirs(p);
            Coord c1 = lat_.shifted(c, mu, s);
            Coord c2 = lat_.shifted(c, nu, s);
            Coord c3 = lat_.shifted(c1, nu, s);
            if (in_delta(j, c) || in_delta(j, c1) || in_delta(j, c2) || in_delta(j, c3))
                out.push_back({c, p});
        }
    }
    return out;
}

void RegionSequence::build_graph() const {
    size_t n = points_.size();
    adj_.assign(n, {});
    for (size_t p = 0; p < n; ++p) {
        int j = points_[p].level;
        const Coord& y = points_[p].y;
        int h = (lat_.stride(j) - 1) / 2;
        // Points are adjacent when their blocks share a face. Every such
        // neighbor owns a site in one of the six unit layers hugging the
        // block, so scanning those layers finds the full adjacency.
        for (int mu = 0; mu < 3; ++mu)
            for (int sign : {+1, -1})
                for (int a = -h; a <= h; ++a)
                    for (int b = -h; b <= h; ++b) {
                        Coord s = y;
                        s[mu] += sign * (h + 1);
                        s[(mu + 1) % 3] += a;
                        s[(mu + 2) % 3] += b;
                        s = lat_.wrap(s);
                        for (int jp = 0; jp <= depth_; ++jp) {
                            long long q = point_index(jp, lat_.block_center(s, jp));
                            if (q >= 0 && static_cast<size_t>(q) != p) adj_[p].push_back(q);
                        }
                    }
        std::sort(adj_[p].begin(), adj_[p].end());
        adj_[p].erase(std::unique(adj_[p].begin(), adj_[p].end()), adj_[p].end());
    }
    dist_.assign(n * n, std::numeric_limits<double>::infinity());
    dist_done_.assign(n, 0);
}

double RegionSequence::omega_distance(long long p, long long q) const {
    size_t n = points_.size();
    if (p < 0 || q < 0 || p >= static_cast<long long>(n) || q >= static_cast<long long>(n))
        throw Error("BadPointIndex", "omega_distance index out of range");
    if (adj_.empty()) build_graph();
    if (!dist_done_[static_cast<size_t>(p)]) {
        // All steps have unit cost, so breadth-first search solves the row.
        auto* row = &dist_[static_cast<size_t>(p) * n];
        std::deque<long long> queue;
        row[p] = 0.0;
        queue.push_back(p);
        while (!queue.empty()) {
            long long u = queue.front();
            queue.pop_front();
            for (long long v : adj_[static_cast<size_t>(u)])
                if (std::isinf(row[v])) {
                    row[v] = row[u] + 1.0;
                    queue.push_back(v);
                }
        }
        dist_done_[static_cast<size_t>(p)] = 1;
    }
    return dist_[static_cast<size_t>(p) * n + static_cast<size_t>(q)];
}

}  // namespace blockrg
