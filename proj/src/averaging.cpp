#include "blockrg/averaging.hpp"

#include <map>
#include <mutex>
#include <string>

namespace blockrg {

namespace {

using Trip = Eigen::Triplet<cplx>;
using SpMatR = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

// Depth-fold averages are immutable per (lattice, depth); assembled once.
std::mutex cache_mutex;
std::map<std::string, SpMat>& cache() {
    static std::map<std::string, SpMat> c;
    return c;
}

std::string cache_key(const char* op, const Lattice& lat, int depth) {
    return std::string(op) + ":" + std::to_string(lat.L()) + ":" + std::to_string(lat.N()) +
           ":" + std::to_string(lat.k()) + ":" + std::to_string(depth);
}

template <typename Fn>
SpMat cached(const char* op, const Lattice& lat, int depth, Fn assemble) {
    std::lock_guard<std::mutex> lock(cache_mutex);
    auto key = cache_key(op, lat, depth);
    auto it = cache().find(key);
    if (it == cache().end()) it = cache().emplace(key, assemble()).first;
    return it->second;
}

void check_depth(const Lattice& lat, int depth) {
    if (depth < 0 || depth > lat.N())
        throw Error("BadAveragerDepth", "depth must lie in [0, N]");
}

void check_stage(const Lattice& lat, int level) {
    if (level < 0) throw Error("BadAveragerDepth", "stage level must be nonnegative");
    check_depth(lat, level + 1);
}

// Level-`level` sites of the level-(level+1) block centered at y.
std::vector<Coord> stage_block(const Lattice& lat, const Coord& y, int level) {
    int s = lat.stride(level);
    int h = (lat.L() - 1) / 2;
    std::vector<Coord> out;
    out.reserve(static_cast<size_t>(lat.L()) * lat.L() * lat.L());
    for (int a = -h; a <= h; ++a)
        for (int b = -h; b <= h; ++b)
            for (int c = -h; c <= h; ++c)
                out.push_back(lat.wrap({y[0] + a * s, y[1] + b * s, y[2] + c * s}));
    return out;
}

SpMat identity_like(long long n) {
    SpMat I(n, n);
    I.setIdentity();
    return I;
}

// Sum of the fine gauge field along a path of stride-length steps, each step
// resolved into its fine bonds.
cplx resolved_line(const Lattice& lat, const FieldSpace& fine_bonds, const Vec& A,
                   const Path& p, int stride) {
    cplx sum = 0.0;
    for (const auto& st : p) {
        Coord z = st.from;
        for (int t = 0; t < stride; ++t) {
            if (st.sign > 0) {
                sum += A[fine_bonds.idx(z, st.mu)];
                z = lat.shifted(z, st.mu, 1);
            } else {
                z = lat.shifted(z, st.mu, -1);
                sum -= A[fine_bonds.idx(z, st.mu)];
            }
        }
    }
    return sum;
}

cplx resolved_tau(const Lattice& lat, const FieldSpace& path_bonds, const FieldSpace& fine_bonds,
                  const Vec& A, const Coord& y, const Coord& x, bool symmetrized) {
    static const std::array<std::array<int, 3>, 6> perms = {
        {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    int stride = path_bonds.stride();
    if (!symmetrized)
        return resolved_line(lat, fine_bonds, A, rect_path(path_bonds, y, x, perms[0]), stride);
    cplx sum = 0.0;
    for (const auto& perm : perms)
        sum += resolved_line(lat, fine_bonds, A, rect_path(path_bonds, y, x, perm), stride);
    return sum / 6.0;
}

// Emits the rows of the depth-fold bond average for the given coarse cells
// (FieldSpace indices at `depth`), offsetting row ids by row0.
void emit_bond_average_rows(std::vector<Trip>& t, const Lattice& lat, int depth,
                            const std::vector<long long>& rows, long long row0) {
    FieldSpace coarse(lat, Degree::one, depth);
    double w = 1.0 / static_cast<double>(ipow(lat.L(), 4 * depth));
    FieldSpace fine(lat, Degree::one, 0);
    int len = lat.stride(depth);
    for (size_t r = 0; r < rows.size(); ++r) {
        long long cell = rows[r] / 3;
        int mu = static_cast<int>(rows[r] % 3);
        Coord y = coarse.coord(cell);
        for (const Coord& x : lat.block_sites(y, depth)) {
            Coord z = x;
            for (int s = 0; s < len; ++s) {
                t.emplace_back(row0 + static_cast<long long>(r), fine.idx(z, mu), w);
                z = lat.shifted(z, mu, 1);
            }
        }
    }
}

void emit_plaquette_average_rows(std::vector<Trip>& t, const Lattice& lat, int depth,
                                 const std::vector<long long>& rows, long long row0) {
    FieldSpace coarse(lat, Degree::two, depth);
    double w = 1.0 / static_cast<double>(ipow(lat.L(), 5 * depth));
    FieldSpace fine(lat, Degree::two, 0);
    int len = lat.stride(depth);
    for (size_t r = 0; r < rows.size(); ++r) {
        long long cell = rows[r] / 3;
        int p = static_cast<int>(rows[r] % 3);
        auto [mu, nu] = plaquette_dirs(p);
        Coord y = coarse.coord(cell);
        for (const Coord& x : lat.block_sites(y, depth)) {
            for (int a = 0; a < len; ++a) {
                for (int b = 0; b < len; ++b) {
                    Coord z = lat.wrap({x[0], x[1], x[2]});
                    z = lat.shifted(z, mu, a);
                    z = lat.shifted(z, nu, b);
                    t.emplace_back(row0 + static_cast<long long>(r), fine.idx(z, p), w);
                }
            }
        }
    }
}

std::vector<long long> all_cells(const FieldSpace& s) {
    std::vector<long long> out(static_cast<size_t>(s.dim()));
    for (long long i = 0; i < s.dim(); ++i) out[static_cast<size_t>(i)] = i;
    return out;
}

}  // namespace

SpMat weighted_transpose_sp(const SpMat& op, const Eigen::VectorXd& w_dom,
                            const Eigen::VectorXd& w_cod) {
    if (w_cod.size() != op.rows() || w_dom.size() != op.cols())
        throw Error("BadWeights", "weight vector lengths must match the operator shape");
    std::vector<Trip> t;
    t.reserve(static_cast<size_t>(op.nonZeros()));
    for (int j = 0; j < op.outerSize(); ++j)
        for (SpMat::InnerIterator it(op, j); it; ++it)
            t.emplace_back(it.col(), it.row(), it.value() * (w_cod[it.row()] / w_dom[it.col()]));
    SpMat out(op.cols(), op.rows());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

SpMat scalar_average(const Lattice& lat, int depth) {
    check_depth(lat, depth);
    return cached("sa", lat, depth, [&] {
        FieldSpace coarse(lat, Degree::zero, depth);
        double w = 1.0 / static_cast<double>(ipow(lat.L(), 3 * depth));
        std::vector<Trip> t;
        for (long long i = 0; i < coarse.cells(); ++i) {
            Coord y = coarse.coord(i);
            for (const Coord& x : lat.block_sites(y, depth))
                t.emplace_back(i, lat.site_index(x), w);
        }
        SpMat m(coarse.dim(), lat.n_sites());
        m.setFromTriplets(t.begin(), t.end());
        return m;
    });
}

SpMat scalar_prolong(const Lattice& lat, int depth) {
    double vol = static_cast<double>(ipow(lat.L(), 3 * depth));
    return SpMat(vol * scalar_average(lat, depth).transpose());
}

SpMat bond_average_stage(const Lattice& lat, int level) {
    check_stage(lat, level);
    FieldSpace coarse(lat, Degree::one, level + 1);
    FieldSpace finer(lat, Degree::one, level);
    double w = 1.0 / static_cast<double>(ipow(lat.L(), 4));
    int s = lat.stride(level);
    std::vector<Trip> t;
    for (long long i = 0; i < coarse.cells(); ++i) {
        Coord y = coarse.coord(i);
        for (int mu = 0; mu < 3; ++mu) {
            for (const Coord& x : stage_block(lat, y, level)) {
                Coord z = x;
                for (int step = 0; step < lat.L(); ++step) {
                    t.emplace_back(3 * i + mu, finer.idx(z, mu), w);
                    z = lat.shifted(z, mu, s);
                }
            }
        }
    }
    SpMat m(coarse.dim(), finer.dim());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat bond_average(const Lattice& lat, int depth) {
    check_depth(lat, depth);
    return cached("ba", lat, depth, [&] {
        FieldSpace coarse(lat, Degree::one, depth);
        std::vector<Trip> t;
        emit_bond_average_rows(t, lat, depth, all_cells(coarse), 0);
        SpMat m(coarse.dim(), 3 * lat.n_sites());
        m.setFromTriplets(t.begin(), t.end());
        return m;
    });
}

SpMat bond_prolong(const Lattice& lat, int depth) {
    double vol = static_cast<double>(ipow(lat.L(), 3 * depth));
    return SpMat(vol * bond_average(lat, depth).transpose());
}

SpMat plaquette_average_stage(const Lattice& lat, int level) {
    check_stage(lat, level);
    FieldSpace coarse(lat, Degree::two, level + 1);
    FieldSpace finer(lat, Degree::two, level);
    double w = 1.0 / static_cast<double>(ipow(lat.L(), 5));
    int s = lat.stride(level);
    std::vector<Trip> t;
    for (long long i = 0; i < coarse.cells(); ++i) {
        Coord y = coarse.coord(i);
        for (int p = 0; p < 3; ++p) {
            auto [mu, nu] = plaquette_dirs(p);
            for (const Coord& x : stage_block(lat, y, level)) {
                for (int a = 0; a < lat.L(); ++a) {
                    for (int b = 0; b < lat.L(); ++b) {
                        Coord z = lat.shifted(lat.shifted(x, mu, a * s), nu, b * s);
                        t.emplace_back(3 * i + p, finer.idx(z, p), w);
                    }
                }
            }
        }
    }
    SpMat m(coarse.dim(), finer.dim());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat plaquette_average(const Lattice& lat, int depth) {
    check_depth(lat, depth);
    return cached("pa", lat, depth, [&] {
        FieldSpace coarse(lat, Degree::two, depth);
        std::vector<Trip> t;
        emit_plaquette_average_rows(t, lat, depth, all_cells(coarse), 0);
        SpMat m(coarse.dim(), 3 * lat.n_sites());
        m.setFromTriplets(t.begin(), t.end());
        return m;
    });
}

SpMat surface_average_stage(const Lattice& lat, int level) {
    check_stage(lat, level);
    FieldSpace coarse(lat, Degree::one, level + 1);
    FieldSpace finer(lat, Degree::one, level);
    double w = 1.0 / static_cast<double>(ipow(lat.L(), 2));
    int s = lat.stride(level);
    int h = (lat.L() - 1) / 2;
    std::vector<Trip> t;
    for (long long i = 0; i < coarse.cells(); ++i) {
        Coord y = coarse.coord(i);
        for (int mu = 0; mu < 3; ++mu) {
            int a1 = (mu + 1) % 3, a2 = (mu + 2) % 3;
            for (int u = -h; u <= h; ++u) {
                for (int v = -h; v <= h; ++v) {
                    Coord x = y;
                    x = lat.shifted(x, mu, h * s);
                    x = lat.shifted(x, a1, u * s);
                    x = lat.shifted(x, a2, v * s);
                    t.emplace_back(3 * i + mu, finer.idx(x, mu), w);
                }
            }
        }
    }
    SpMat m(coarse.dim(), finer.dim());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat surface_average(const Lattice& lat, int depth) {
    check_depth(lat, depth);
    return cached("ssa", lat, depth, [&] {
        FieldSpace coarse(lat, Degree::one, depth);
        FieldSpace fine(lat, Degree::one, 0);
        double w = 1.0 / static_cast<double>(ipow(lat.L(), 2 * depth));
        int H = (lat.stride(depth) - 1) / 2;
        std::vector<Trip> t;
        for (long long i = 0; i < coarse.cells(); ++i) {
            Coord y = coarse.coord(i);
            for (int mu = 0; mu < 3; ++mu) {
                int a1 = (mu + 1) % 3, a2 = (mu + 2) % 3;
                for (int u = -H; u <= H; ++u) {
                    for (int v = -H; v <= H; ++v) {
                        Coord x = y;
                        x = lat.shifted(x, mu, H);
                        x = lat.shifted(x, a1, u);
                        x = lat.shifted(x, a2, v);
                        t.emplace_back(3 * i + mu, fine.idx(x, mu), w);
                    }
                }
            }
        }
        SpMat m(coarse.dim(), 3 * lat.n_sites());
        m.setFromTriplets(t.begin(), t.end());
        return m;
    });
}

SpMat surface_prolong(const Lattice& lat, int depth) {
    double vol = static_cast<double>(ipow(lat.L(), 3 * depth));
    return SpMat(vol * surface_average(lat, depth).transpose());
}

SpMat edge_average_stage(const Lattice& lat, int level) {
    check_stage(lat, level);
    FieldSpace coarse(lat, Degree::two, level + 1);
    FieldSpace finer(lat, Degree::two, level);
    double w = 1.0 / lat.L();
    int s = lat.stride(level);
    int h = (lat.L() - 1) / 2;
    std::vector<Trip> t;
    for (long long i = 0; i < coarse.cells(); ++i) {
        Coord y = coarse.coord(i);
        for (int p = 0; p < 3; ++p) {
            auto [mu, nu] = plaquette_dirs(p);
            int rho = 3 - mu - nu;
            for (int u = -h; u <= h; ++u) {
                Coord x = y;
                x = lat.shifted(x, mu, h * s);
                x = lat.shifted(x, nu, h * s);
                x = lat.shifted(x, rho, u * s);
                t.emplace_back(3 * i + p, finer.idx(x, p), w);
            }
        }
    }
    SpMat m(coarse.dim(), finer.dim());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat edge_average(const Lattice& lat, int depth) {
    check_depth(lat, depth);
    return cached("ea", lat, depth, [&] {
        FieldSpace coarse(lat, Degree::two, depth);
        FieldSpace fine(lat, Degree::two, 0);
        double w = 1.0 / static_cast<double>(ipow(lat.L(), depth));
        int H = (lat.stride(depth) - 1) / 2;
        std::vector<Trip> t;
        for (long long i = 0; i < coarse.cells(); ++i) {
            Coord y = coarse.coord(i);
            for (int p = 0; p < 3; ++p) {
                auto [mu, nu] = plaquette_dirs(p);
                int rho = 3 - mu - nu;
                for (int u = -H; u <= H; ++u) {
                    Coord x = y;
                    x = lat.shifted(x, mu, H);
                    x = lat.shifted(x, nu, H);
                    x = lat.shifted(x, rho, u);
                    t.emplace_back(3 * i + p, fine.idx(x, p), w);
                }
            }
        }
        SpMat m(coarse.dim(), 3 * lat.n_sites());
        m.setFromTriplets(t.begin(), t.end());
        return m;
    });
}

SpMat edge_prolong(const Lattice& lat, int depth) {
    double vol = static_cast<double>(ipow(lat.L(), 3 * depth));
    return SpMat(vol * edge_average(lat, depth).transpose());
}

SpMat fermion_average_stage(const Lattice& lat, const Vec& A, double coupling, int level,
                            bool symmetrized) {
    check_stage(lat, level);
    FieldSpace cod(lat, Degree::spinor, level + 1);
    FieldSpace dom(lat, Degree::spinor, level);
    FieldSpace path_bonds(lat, Degree::one, level);
    FieldSpace fine_bonds(lat, Degree::one, 0);
    if (A.size() != fine_bonds.dim())
        throw Error("BadField", "gauge field must live on the fine bonds");
    double w = 1.0 / static_cast<double>(ipow(lat.L(), 3));
    double eta = lat.spacing();
    std::vector<Trip> t;
    for (long long i = 0; i < cod.cells(); ++i) {
        Coord y = cod.coord(i);
        for (const Coord& x : stage_block(lat, y, level)) {
            cplx tau = resolved_tau(lat, path_bonds, fine_bonds, A, y, x, symmetrized);
            cplx phase = w * std::exp(cplx(0.0, 1.0) * coupling * eta * tau);
            long long xc = dom.cell_index(x);
            for (int a = 0; a < 4; ++a) t.emplace_back(4 * i + a, 4 * xc + a, phase);
        }
    }
    SpMat m(cod.dim(), dom.dim());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat fermion_average(const Lattice& lat, const Vec& A, double coupling, int depth,
                      bool symmetrized) {
    check_depth(lat, depth);
    if (depth == 0) return identity_like(4 * lat.n_sites());
    SpMat q = fermion_average_stage(lat, A, coupling, 0, symmetrized);
    for (int j = 1; j < depth; ++j)
        q = SpMat(fermion_average_stage(lat, A, coupling, j, symmetrized) * q);
    return q;
}

MultiscaleCells multiscale_cells(const Lattice& lat, const RegionSequence& seq, Degree degree,
                                 bool interior) {
    if (degree != Degree::one && degree != Degree::two)
        throw Error("BadDegree", "multiscale cells are defined for 1-forms and 2-forms");
    MultiscaleCells out;
    out.depth = seq.depth();
    out.cells.resize(static_cast<size_t>(out.depth) + 1);
    out.offsets.assign(static_cast<size_t>(out.depth) + 2, 0);
    for (int j = 0; j <= out.depth; ++j) {
        FieldSpace s(lat, degree, j);
        int stride = s.stride();
        auto& list = out.cells[static_cast<size_t>(j)];
        for (long long cell = 0; cell < s.cells(); ++cell) {
            Coord y = s.coord(cell);
            for (int c = 0; c < 3; ++c) {
                // Corner set of the cell: 2 bond ends or 4 plaquette corners.
                std::vector<Coord> corners;
                if (degree == Degree::one) {
                    corners = {y, lat.shifted(y, c, stride)};
                } else {
                    auto [mu, nu] = plaquette_dirs(c);
                    corners = {y, lat.shifted(y, mu, stride), lat.shifted(y, nu, stride),
                               lat.shifted(lat.shifted(y, mu, stride), nu, stride)};
                }
                int in_shell = 0, in_deeper = 0;
                for (const Coord& q : corners) {
                    if (seq.in_delta(j, q)) ++in_shell;
                    if (seq.in_omega(j + 1, q)) ++in_deeper;
                }
                bool keep;
                if (interior && j >= 1)
                    keep = in_shell == static_cast<int>(corners.size());
                else
                    keep = in_shell > 0 && in_deeper == 0;
                if (keep) list.push_back(3 * cell + c);
            }
        }
        out.offsets[static_cast<size_t>(j) + 1] =
            out.offsets[static_cast<size_t>(j)] + static_cast<long long>(list.size());
    }
    return out;
}

Eigen::VectorXd multiscale_cell_weights(const Lattice& lat, const MultiscaleCells& cells) {
    Eigen::VectorXd w(cells.dim());
    for (int j = 0; j <= cells.depth; ++j) {
        double step = lat.spacing() * lat.stride(j);
        double vol = step * step * step;
        long long o = cells.offsets[static_cast<size_t>(j)];
        for (size_t r = 0; r < cells.cells[static_cast<size_t>(j)].size(); ++r)
            w[o + static_cast<long long>(r)] = vol;
    }
    return w;
}

Eigen::VectorXd point_weights(const Lattice& lat, const RegionSequence& seq, int components) {
    Eigen::VectorXd w(components * seq.n_points());
    for (long long p = 0; p < seq.n_points(); ++p) {
        double step = lat.spacing() * lat.stride(seq.points()[static_cast<size_t>(p)].level);
        double vol = step * step * step;
        for (int a = 0; a < components; ++a) w[components * p + a] = vol;
    }
    return w;
}

SpMat scalar_average_multiscale(const Lattice& lat, const RegionSequence& seq) {
    std::vector<Trip> t;
    long long row = 0;
    for (int j = 0; j <= seq.depth(); ++j) {
        if (j == 0) {
            for (const Coord& x : seq.delta_subsites(0, 0))
                t.emplace_back(row++, lat.site_index(x), 1.0);
            continue;
        }
        SpMatR q(scalar_average(lat, j));
        FieldSpace coarse(lat, Degree::zero, j);
        for (const Coord& y : seq.delta_subsites(j, j)) {
            long long cell = coarse.cell_index(y);
            for (SpMatR::InnerIterator it(q, cell); it; ++it)
                t.emplace_back(row, it.col(), it.value());
            ++row;
        }
    }
    SpMat m(seq.n_points(), lat.n_sites());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat fermion_average_multiscale(const Lattice& lat, const RegionSequence& seq, const Vec& A,
                                 double coupling, bool symmetrized) {
    std::vector<Trip> t;
    long long row = 0;
    SpMat q;  // running composition up to the current level
    for (int j = 0; j <= seq.depth(); ++j) {
        if (j == 0) {
            for (const Coord& x : seq.delta_subsites(0, 0)) {
                long long cell = lat.site_index(x);
                for (int a = 0; a < 4; ++a) t.emplace_back(row + a, 4 * cell + a, 1.0);
                row += 4;
            }
            continue;
        }
        SpMat stage = fermion_average_stage(lat, A, coupling, j - 1, symmetrized);
        q = (j == 1) ? stage : SpMat(stage * q);
        SpMatR qr(q);
        FieldSpace coarse(lat, Degree::spinor, j);
        for (const Coord& y : seq.delta_subsites(j, j)) {
            long long cell = coarse.cell_index(y);
            for (int a = 0; a < 4; ++a) {
                for (SpMatR::InnerIterator it(qr, 4 * cell + a); it; ++it)
                    t.emplace_back(row + a, it.col(), it.value());
            }
            row += 4;
        }
    }
    SpMat m(4 * seq.n_points(), 4 * lat.n_sites());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat gauge_average_multiscale(const Lattice& lat, const RegionSequence& seq,
                               const MultiscaleCells& rows) {
    std::vector<Trip> t;
    for (int j = 0; j <= std::min(rows.depth, seq.depth()); ++j) {
        const auto& cells = rows.cells[static_cast<size_t>(j)];
        long long o = rows.offsets[static_cast<size_t>(j)];
        if (j == 0) {
            for (size_t r = 0; r < cells.size(); ++r)
                t.emplace_back(o + static_cast<long long>(r), cells[r], 1.0);
            continue;
        }
        emit_bond_average_rows(t, lat, j, cells, o);
    }
    SpMat m(rows.dim(), 3 * lat.n_sites());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat plaquette_average_multiscale(const Lattice& lat, const RegionSequence& seq,
                                   const MultiscaleCells& rows) {
    std::vector<Trip> t;
    for (int j = 0; j <= std::min(rows.depth, seq.depth()); ++j) {
        const auto& cells = rows.cells[static_cast<size_t>(j)];
        long long o = rows.offsets[static_cast<size_t>(j)];
        if (j == 0) {
            for (size_t r = 0; r < cells.size(); ++r)
                t.emplace_back(o + static_cast<long long>(r), cells[r], 1.0);
            continue;
        }
        emit_plaquette_average_rows(t, lat, j, cells, o);
    }
    SpMat m(rows.dim(), 3 * lat.n_sites());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat surface_prolong_multiscale(const Lattice& lat, const RegionSequence& seq,
                                 const MultiscaleCells& cols) {
    std::vector<Trip> t;
    for (int j = 0; j <= std::min(cols.depth, seq.depth()); ++j) {
        const auto& cells = cols.cells[static_cast<size_t>(j)];
        long long o = cols.offsets[static_cast<size_t>(j)];
        if (j == 0) {
            for (size_t r = 0; r < cells.size(); ++r)
                t.emplace_back(cells[r], o + static_cast<long long>(r), 1.0);
            continue;
        }
        SpMat pr = surface_prolong(lat, j);
        for (size_t r = 0; r < cells.size(); ++r) {
            for (SpMat::InnerIterator it(pr, cells[r]); it; ++it)
                t.emplace_back(it.row(), o + static_cast<long long>(r), it.value());
        }
    }
    SpMat m(3 * lat.n_sites(), cols.dim());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat d_of_scalar_average_multiscale(const Lattice& lat, const RegionSequence& seq,
                                     const MultiscaleCells& rows) {
    std::vector<Trip> t;
    for (int j = 0; j <= std::min(rows.depth, seq.depth()); ++j) {
        const auto& cells = rows.cells[static_cast<size_t>(j)];
        long long o = rows.offsets[static_cast<size_t>(j)];
        SpMatR dq = (j == 0) ? SpMatR(exterior_d(FieldSpace(lat, Degree::zero, 0)))
                             : SpMatR(exterior_d(FieldSpace(lat, Degree::zero, j)) *
                                      scalar_average(lat, j));
        for (size_t r = 0; r < cells.size(); ++r)
            for (SpMatR::InnerIterator it(dq, cells[r]); it; ++it)
                t.emplace_back(o + static_cast<long long>(r), it.col(), it.value());
    }
    SpMat m(rows.dim(), lat.n_sites());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

SpMat d_of_gauge_average_multiscale(const Lattice& lat, const RegionSequence& seq,
                                    const MultiscaleCells& rows) {
    std::vector<Trip> t;
    for (int j = 0; j <= std::min(rows.depth, seq.depth()); ++j) {
        const auto& cells = rows.cells[static_cast<size_t>(j)];
        long long o = rows.offsets[static_cast<size_t>(j)];
        SpMatR dq = (j == 0) ? SpMatR(exterior_d(FieldSpace(lat, Degree::one, 0)))
                             : SpMatR(exterior_d(FieldSpace(lat, Degree::one, j)) *
                                      bond_average(lat, j));
        for (size_t r = 0; r < cells.size(); ++r)
            for (SpMatR::InnerIterator it(dq, cells[r]); it; ++it)
                t.emplace_back(o + static_cast<long long>(r), it.col(), it.value());
    }
    SpMat m(rows.dim(), 3 * lat.n_sites());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

}  // namespace blockrg
