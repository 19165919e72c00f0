#include "blockrg/fermion.hpp"

#include "blockrg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace blockrg {

namespace {

using Eigen::VectorXcd;
using Eigen::VectorXd;
using Trip = Eigen::Triplet<cplx>;

std::vector<long long> inverse_map(const std::vector<long long>& idx, long long dim) {
    std::vector<long long> inv(static_cast<size_t>(dim), -1);
    for (size_t p = 0; p < idx.size(); ++p) inv[static_cast<size_t>(idx[p])] = static_cast<long long>(p);
    return inv;
}

std::vector<long long> all_indices(long long n) {
    std::vector<long long> idx(static_cast<size_t>(n));
    for (long long i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    return idx;
}

// Dense submatrix of a sparse operator on explicit row/column index lists.
Mat dense_sub(const SpMat& m, const std::vector<long long>& rows,
              const std::vector<long long>& cols) {
    auto rinv = inverse_map(rows, m.rows());
    auto cinv = inverse_map(cols, m.cols());
    Mat out = Mat::Zero(static_cast<long long>(rows.size()), static_cast<long long>(cols.size()));
    for (int o = 0; o < m.outerSize(); ++o)
        for (SpMat::InnerIterator it(m, o); it; ++it) {
            long long r = rinv[static_cast<size_t>(it.row())];
            long long c = cinv[static_cast<size_t>(it.col())];
            if (r >= 0 && c >= 0) out(r, c) = it.value();
        }
    return out;
}

Mat dense_rows(const SpMat& m, const std::vector<long long>& rows) {
    return dense_sub(m, rows, all_indices(m.cols()));
}

Mat dense_cols(const SpMat& m, const std::vector<long long>& cols) {
    return dense_sub(m, all_indices(m.rows()), cols);
}

Mat take(const Mat& m, const std::vector<long long>& rows, const std::vector<long long>& cols) {
    Mat out(static_cast<long long>(rows.size()), static_cast<long long>(cols.size()));
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < cols.size(); ++c)
            out(static_cast<long long>(r), static_cast<long long>(c)) = m(rows[r], cols[c]);
    return out;
}

Mat embed_rows(const Mat& sub, const std::vector<long long>& idx, long long dim) {
    Mat out = Mat::Zero(dim, sub.cols());
    for (size_t r = 0; r < idx.size(); ++r) out.row(idx[r]) = sub.row(static_cast<long long>(r));
    return out;
}

Mat embed_cols(const Mat& sub, const std::vector<long long>& idx, long long dim) {
    Mat out = Mat::Zero(sub.rows(), dim);
    for (size_t c = 0; c < idx.size(); ++c) out.col(idx[c]) = sub.col(static_cast<long long>(c));
    return out;
}

// Sparse embedding of a small dense block at the given component indices.
SpMat embed_sp(const Mat& sub, const std::vector<long long>& idx, long long dim) {
    std::vector<Trip> t;
    t.reserve(static_cast<size_t>(sub.size()));
    for (long long p = 0; p < sub.rows(); ++p)
        for (long long q = 0; q < sub.cols(); ++q)
            if (sub(p, q) != cplx(0.0))
                t.emplace_back(idx[static_cast<size_t>(p)], idx[static_cast<size_t>(q)], sub(p, q));
    SpMat m(dim, dim);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

// Block diagonal with one 4x4 coefficient at each listed site; the index
// list holds four consecutive component slots per site.
SpMat block_at_sites(long long dim, const std::vector<long long>& spinor_idx,
                     const Eigen::Matrix4cd& coef) {
    std::vector<Trip> t;
    t.reserve(spinor_idx.size() * 4);
    for (size_t s = 0; 4 * s < spinor_idx.size(); ++s)
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                if (coef(a, b) != cplx(0.0))
                    t.emplace_back(spinor_idx[4 * s + static_cast<size_t>(a)],
                                   spinor_idx[4 * s + static_cast<size_t>(b)], coef(a, b));
    SpMat m(dim, dim);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

// Left-multiply by the site-wise block diagonal of a 4x4 coefficient.
Mat blockdiag_apply(const Eigen::Matrix4cd& coef, const Mat& x) {
    Mat out(x.rows(), x.cols());
    for (long long s = 0; 4 * s < x.rows(); ++s)
        out.middleRows(4 * s, 4) = coef * x.middleRows(4 * s, 4);
    return out;
}

cplx logdet_from_lu(const Eigen::PartialPivLU<Mat>& lu) {
    cplx s = 0.0;
    for (long long i = 0; i < lu.rows(); ++i) s += std::log(lu.matrixLU()(i, i));
    if (lu.permutationP().determinant() < 0) s += cplx(0.0, std::numbers::pi);
    return s;
}

struct BlockInverse {
    Mat inv;
    double rcond = 1.0;
    cplx ld = 0.0;
};

// Dense inverse with a reciprocal-condition guard and one refinement sweep,
// which keeps the block residual near round-off.
BlockInverse invert_block(const Mat& a, const char* what) {
    if (a.rows() == 0) return {};
    Eigen::PartialPivLU<Mat> lu(a);
    double rc = lu.rcond();
    if (!(rc > 1e-14))
        throw Error("SingularOperator",
                    std::string(what) + ": reciprocal condition estimate " + std::to_string(rc));
    Mat x = lu.inverse();
    x += x * (Mat::Identity(a.rows(), a.cols()) - a * x);
    return {std::move(x), rc, logdet_from_lu(lu)};
}

VectorXd fine_weights(const FieldSpace& s) { return VectorXd::Constant(s.dim(), s.weight()); }

double bl_weight(const FermionParams& par) { return par.weights.new_weight(); }

void check_params(const Lattice& lat, const FermionParams& par) {
    if (par.coupling.L != lat.L() || par.weights.L != lat.L() || par.coupling.N != lat.N())
        throw Error("ParamMismatch", "coupling and weight sides must match the lattice");
}

}  // namespace

cplx pair_bilinear(const VectorXd& w, const Vec& u, const Vec& v) {
    if (w.size() != u.size() || w.size() != v.size())
        throw Error("BadField", "pairing dimension mismatch");
    return (u.array() * v.array() * w.cast<cplx>().array()).sum();
}

VectorXd averaging_weight_diagonal(const RegionSequence& seq, const FermionWeights& w) {
    int k = seq.depth();
    std::vector<double> prof = w.profile(k);
    VectorXd out(4 * seq.n_points());
    long long i = 0;
    for (const MultiPoint& p : seq.points()) {
        double v = p.level == 0 ? 0.0 : prof[static_cast<size_t>(p.level - 1)];
        for (int a = 0; a < 4; ++a) out[4 * i + a] = v;
        ++i;
    }
    return out;
}

cplx logdet(const Mat& m) {
    if (m.rows() == 0) return 0.0;
    Eigen::PartialPivLU<Mat> lu(m);
    return logdet_from_lu(lu);
}

double logdet_mismatch(cplx a, cplx b) {
    cplx d = a - b;
    double im = std::remainder(d.imag(), 2.0 * std::numbers::pi);
    return std::hypot(d.real(), im) / std::max(1.0, std::abs(a));
}

// ---- BlockedDiracSet --------------------------------------------------------

BlockedDiracSet::BlockedDiracSet(const RegionSequence& seq, const FermionParams& par, const Vec& A,
                                 double weight_scale)
    : lat_(seq.lattice()), seq_(seq), par_(par), a_(A), fine_(lat_, Degree::spinor, 0) {
    check_params(lat_, par_);
    double ek = par_.coupling.e_at(lat_.k());
    double mk = par_.coupling.mbar_at(lat_.k());
    n_pts_ = seq_.n_points();
    bdiag_ = weight_scale * averaging_weight_diagonal(seq_, par_.weights);
    wpts_ = point_weights(lat_, seq_, 4);
    q_plus_ = fermion_average_multiscale(lat_, seq_, a_, ek, par_.symmetrized);
    q_minus_ = fermion_average_multiscale(lat_, seq_, Vec(-a_), ek, par_.symmetrized);
    VectorXd wf = fine_weights(fine_);
    qt_plus_ = weighted_transpose_sp(q_plus_, wf, wpts_);
    qt_minus_ = weighted_transpose_sp(q_minus_, wf, wpts_);

    SpMat id(fine_.dim(), fine_.dim());
    id.setIdentity();
    dirac_ = SpMat(wilson_dirac(fine_, a_, ek, CliffordRep::standard()) + cplx(mk) * id);

    VectorXcd bz = bdiag_.cast<cplx>();
    proj_ = SpMat(SpMat(qt_minus_ * bz.asDiagonal()) * q_plus_);

    interior_ = indices_where(fine_, [this](const Coord& c) { return seq_.in_omega(1, c); });
    Mat block = dense_sub(SpMat(dirac_ + proj_), interior_, interior_);
    BlockInverse inv = invert_block(block, "blocked action kernel");
    s_sub_ = std::move(inv.inv);
    rcond_ = inv.rcond;
    ld_ = inv.ld;

    Mat qtb = dense_rows(SpMat(qt_minus_ * bz.asDiagonal()), interior_);
    Mat bq = dense_cols(SpMat(bz.asDiagonal() * q_plus_), interior_);
    Mat h_sub = s_sub_ * qtb;
    h_ = embed_rows(h_sub, interior_, fine_.dim());
    g_ = embed_cols(bq * s_sub_, interior_, fine_.dim());
    d_ = Mat(bz.asDiagonal());
    d_ -= bq * h_sub;
}

Mat BlockedDiracSet::propagator_full() const {
    Mat out = Mat::Zero(fine_.dim(), fine_.dim());
    for (size_t r = 0; r < interior_.size(); ++r)
        for (size_t c = 0; c < interior_.size(); ++c)
            out(interior_[r], interior_[c]) = s_sub_(static_cast<long long>(r), static_cast<long long>(c));
    return out;
}

double BlockedDiracSet::inverse_residual() const {
    if (interior_.empty()) return 0.0;
    Mat block = dense_sub(SpMat(dirac_ + proj_), interior_, interior_);
    long long n = block.rows();
    return (block * s_sub_ - Mat::Identity(n, n)).norm() / std::sqrt(static_cast<double>(n));
}

Vec BlockedDiracSet::minimizer(const Vec& Psi, const Vec& psi_ext) const {
    VectorXcd bz = bdiag_.cast<cplx>();
    Vec rhs_full = qt_minus_ * Vec(bz.cwiseProduct(Psi)) - dirac_ * psi_ext;
    Vec x = s_sub_ * restrict_to(rhs_full, interior_);
    return embed_from(x, interior_, fine_.dim());
}

Vec BlockedDiracSet::minimizer_bar(const Vec& Psibar, const Vec& psibar_ext) const {
    VectorXcd bz = bdiag_.cast<cplx>();
    Vec rhs_full = qt_plus_ * Vec(bz.cwiseProduct(Psibar)) - SpMat(dirac_.transpose()) * psibar_ext;
    Vec x = s_sub_.transpose() * restrict_to(rhs_full, interior_);
    return embed_from(x, interior_, fine_.dim());
}

// ---- identity checks --------------------------------------------------------

double stationarity_residual(const BlockedDiracSet& set, const Vec& Psi, const Vec& psi_ext,
                             bool barred) {
    VectorXcd bz = set.weight_diagonal().cast<cplx>();
    Vec psi = barred ? set.minimizer_bar(Psi, psi_ext) : set.minimizer(Psi, psi_ext);
    Vec drive, resid;
    if (!barred) {
        drive = set.average_t(-1) * Vec(bz.cwiseProduct(Psi));
        resid = drive - set.averaging_form() * psi - set.dirac() * Vec(psi + psi_ext);
    } else {
        SpMat proj_bar = SpMat(SpMat(set.average_t(+1) * bz.asDiagonal()) * set.average(-1));
        drive = set.average_t(+1) * Vec(bz.cwiseProduct(Psi));
        resid = drive - proj_bar * psi - SpMat(set.dirac().transpose()) * Vec(psi + psi_ext);
    }
    double scale = restrict_to(drive, set.interior()).norm() +
                   restrict_to(Vec(set.dirac() * psi_ext), set.interior()).norm() + 1e-300;
    return restrict_to(resid, set.interior()).norm() / scale;
}

ActionPair reduced_action_pair(const BlockedDiracSet& set, const Vec& Psi, const Vec& Psibar) {
    Vec zero = Vec::Zero(set.fine_dim());
    Vec psi = set.minimizer(Psi, zero);
    Vec psibar = set.minimizer_bar(Psibar, zero);
    Vec u = Psibar - set.average(-1) * psibar;
    Vec v = Psi - set.average(+1) * psi;
    VectorXd wb = set.point_volume().cwiseProduct(set.weight_diagonal());
    VectorXd wf = fine_weights(set.fine());
    ActionPair out;
    out.action = pair_bilinear(wb, u, v) + pair_bilinear(wf, psibar, Vec(set.dirac() * psi));
    out.reduced = pair_bilinear(set.point_volume(), Psibar, Vec(set.quad_form() * Psi));
    return out;
}

double transpose_pair_residual(const BlockedDiracSet& set) {
    VectorXcd bz = set.weight_diagonal().cast<cplx>();
    SpMat op_bar = SpMat(SpMat(set.dirac().transpose()) +
                         SpMat(SpMat(set.average_t(+1) * bz.asDiagonal()) * set.average(-1)));
    Mat sbar = invert_block(dense_sub(op_bar, set.interior(), set.interior()),
                            "transposed action kernel")
                   .inv;
    return (sbar - set.propagator().transpose()).norm() / set.propagator().norm();
}

double hermiticity_residual(const BlockedDiracSet& set) {
    Mat p = Mat(set.averaging_form());
    return (p - p.adjoint()).norm() / p.norm();
}

cplx averaging_form_trace(const RegionSequence& seq, const FermionParams& par, const Vec& A) {
    const Lattice& lat = seq.lattice();
    check_params(lat, par);
    double ek = par.coupling.e_at(lat.k());
    FieldSpace fine(lat, Degree::spinor, 0);
    SpMat q = fermion_average_multiscale(lat, seq, A, ek, par.symmetrized);
    SpMat qm = fermion_average_multiscale(lat, seq, Vec(-A), ek, par.symmetrized);
    SpMat qt = weighted_transpose_sp(qm, fine_weights(fine), point_weights(lat, seq, 4));
    VectorXcd bz = averaging_weight_diagonal(seq, par.weights).cast<cplx>();
    SpMat prod = SpMat(SpMat(qt * bz.asDiagonal()) * q);
    return VectorXcd(prod.diagonal()).sum();
}

// ---- InterpolatedResolvent --------------------------------------------------

InterpolatedResolvent::InterpolatedResolvent(const BlockedDiracSet& base,
                                             const RegionSequence& seq_plus)
    : base_(&base), seq_plus_(seq_plus) {
    const Lattice& lat = base.lattice();
    const RegionSequence& seq = base.regions();
    int k = base.depth();
    const Lattice& latp = seq_plus_.lattice();
    if (latp.L() != lat.L() || latp.N() != lat.N() || latp.k() != lat.k())
        throw Error("RegionMismatch", "extended sequence lives on a different lattice");
    if (seq_plus_.depth() != k + 1)
        throw Error("RegionMismatch", "extended sequence must be one level deeper");
    for (int j = 1; j <= k; ++j)
        for (long long s = 0; s < lat.n_sites(); ++s)
            if (seq.in_omega(j, lat.site_coord(s)) != seq_plus_.in_omega(j, lat.site_coord(s)))
                throw Error("RegionMismatch", "extended sequence must share the first regions");

    const FermionParams& par = base.params();
    next_ = std::make_unique<BlockedDiracSet>(seq_plus_, par, base.gauge(),
                                              1.0 / static_cast<double>(lat.L()));

    double ek = par.coupling.e_at(lat.k());
    FieldSpace lvlk(lat, Degree::spinor, k), lvl1(lat, Degree::spinor, k + 1);
    FieldSpace fine(lat, Degree::spinor, 0);
    VectorXd wk = VectorXd::Constant(lvlk.dim(), lvlk.weight());
    VectorXd w1 = VectorXd::Constant(lvl1.dim(), lvl1.weight());
    Vec mA = -base.gauge();
    qs_plus_ = fermion_average_stage(lat, base.gauge(), ek, k, par.symmetrized);
    qs_minus_ = fermion_average_stage(lat, mA, ek, k, par.symmetrized);
    qst_plus_ = weighted_transpose_sp(qs_plus_, wk, w1);
    qst_minus_ = weighted_transpose_sp(qs_minus_, wk, w1);
    qk_plus_ = fermion_average(lat, base.gauge(), ek, k, par.symmetrized);
    qk_minus_ = fermion_average(lat, mA, ek, k, par.symmetrized);
    qkt_plus_ = weighted_transpose_sp(qk_plus_, fine_weights(fine), wk);
    qkt_minus_ = weighted_transpose_sp(qk_minus_, fine_weights(fine), wk);
    qk1_plus_ = fermion_average(lat, base.gauge(), ek, k + 1, par.symmetrized);
    qk1_minus_ = fermion_average(lat, mA, ek, k + 1, par.symmetrized);
    qk1t_plus_ = weighted_transpose_sp(qk1_plus_, fine_weights(fine), w1);
    qk1t_minus_ = weighted_transpose_sp(qk1_minus_, fine_weights(fine), w1);

    sub_sites_ = seq_plus_.omega_subsites(k + 1, k);
    for (const Coord& y : sub_sites_) {
        long long p = seq.point_index(k, y);
        if (p < 0) throw Error("RegionMismatch", "deepest region escapes the base points");
        sub_points_.push_back(p);
        for (int a = 0; a < 4; ++a) sub_spinor_.push_back(lvlk.idx(y, a));
    }
    next_sites_ = seq_plus_.omega_subsites(k + 1, k + 1);
    for (const Coord& y : next_sites_) {
        long long p = seq_plus_.point_index(k + 1, y);
        if (p < 0) throw Error("RegionMismatch", "deepest region escapes the extended points");
        next_points_.push_back(p);
        for (int a = 0; a < 4; ++a) next_spinor_.push_back(lvl1.idx(y, a));
    }
    plus_to_base_.reserve(static_cast<size_t>(seq_plus_.n_points()));
    for (const MultiPoint& p : seq_plus_.points())
        plus_to_base_.push_back(p.level == k + 1 ? -1 : seq.point_index(p.level, p.y));

    phat_ = dense_sub(SpMat(qst_minus_ * qs_plus_), sub_spinor_, sub_spinor_);
    std::vector<long long> pt4;
    for (long long p : sub_points_)
        for (int a = 0; a < 4; ++a) pt4.push_back(4 * p + a);
    d_sub_ = restrict_to(base.quad_form(), pt4);
}

Eigen::Matrix4cd InterpolatedResolvent::alpha(double y) const {
    double bk = base_->params().weights.level(base_->depth());
    Eigen::Matrix4cd iy = cplx(0.0, y) * CliffordRep::standard().chirality;
    Eigen::Matrix4cd m = bk * Eigen::Matrix4cd::Identity() + iy;
    return bk * iy * m.inverse();
}

Eigen::Matrix4cd InterpolatedResolvent::beta(double y) const {
    double bk = base_->params().weights.level(base_->depth());
    double bl = bl_weight(base_->params());
    Eigen::Matrix4cd iy = cplx(0.0, y) * CliffordRep::standard().chirality;
    Eigen::Matrix4cd i4 = Eigen::Matrix4cd::Identity();
    Eigen::Matrix4cd m1 = (bk + bl) * i4 + iy;
    Eigen::Matrix4cd m2 = bk * i4 + iy;
    return (bk * bk * bl) * (m1.inverse() * m2.inverse());
}

Mat InterpolatedResolvent::mixing(double y) const {
    double bk = base_->params().weights.level(base_->depth());
    double bl = bl_weight(base_->params());
    long long n = sub_dim();
    Mat m = bk * Mat::Identity(n, n) + bl * phat_;
    const Eigen::Matrix4cd g3 = CliffordRep::standard().chirality;
    for (long long s = 0; 4 * s < n; ++s)
        for (int a = 0; a < 4; ++a) m(4 * s + a, 4 * s + a) += cplx(0.0, y) * g3(a, a);
    return invert_block(m, "mixing kernel").inv;
}

double InterpolatedResolvent::mixing_split_residual(double y) const {
    double bk = base_->params().weights.level(base_->depth());
    double bl = bl_weight(base_->params());
    const Eigen::Matrix4cd g3 = CliffordRep::standard().chirality;
    Eigen::Matrix4cd i4 = Eigen::Matrix4cd::Identity();
    Eigen::Matrix4cd c1 = (bk * i4 + cplx(0.0, y) * g3).inverse();
    Eigen::Matrix4cd c2 = ((bk + bl) * i4 + cplx(0.0, y) * g3).inverse();
    long long n = sub_dim();
    Mat spectral = blockdiag_apply(c1, Mat(Mat::Identity(n, n) - phat_)) +
                   blockdiag_apply(c2, phat_);
    Mat direct = mixing(y);
    return (direct - spectral).norm() / direct.norm();
}

cplx InterpolatedResolvent::mixing_logdet() const {
    double bk = base_->params().weights.level(base_->depth());
    double bl = bl_weight(base_->params());
    long long n = sub_dim();
    return logdet(Mat(bk * Mat::Identity(n, n) + bl * phat_));
}

Mat InterpolatedResolvent::fluct_resolvent(double y) const {
    double bl = bl_weight(base_->params());
    long long n = sub_dim();
    Mat m = d_sub_ + bl * phat_;
    const Eigen::Matrix4cd g3 = CliffordRep::standard().chirality;
    for (long long s = 0; 4 * s < n; ++s)
        for (int a = 0; a < 4; ++a) m(4 * s + a, 4 * s + a) += cplx(0.0, y) * g3(a, a);
    return invert_block(m, "fluctuation kernel").inv;
}

SpMat InterpolatedResolvent::interpolated_op(double y, bool via_mixing) const {
    const BlockedDiracSet& b = *base_;
    double bk = b.params().weights.level(b.depth());
    if (via_mixing) {
        SpMat e = embed_sp(mixing(y), sub_spinor_, qk_plus_.rows());
        SpMat sand = SpMat(SpMat(qkt_minus_ * e) * qk_plus_);
        return SpMat(b.dirac() + b.averaging_form() - cplx(bk * bk) * sand);
    }
    VectorXd bd = b.weight_diagonal();
    for (long long p : sub_points_)
        for (int a = 0; a < 4; ++a) bd[4 * p + a] = 0.0;
    VectorXcd bdz = bd.cast<cplx>();
    SpMat projc = SpMat(SpMat(b.average_t(-1) * bdz.asDiagonal()) * b.average(+1));
    SpMat wa = SpMat(SpMat(qkt_minus_ * block_at_sites(qk_plus_.rows(), sub_spinor_, alpha(y))) *
                     qk_plus_);
    SpMat wb = SpMat(
        SpMat(qk1t_minus_ * block_at_sites(qk1_plus_.rows(), next_spinor_, beta(y))) * qk1_plus_);
    return SpMat(b.dirac() + projc + wa + wb);
}

Mat InterpolatedResolvent::interpolated_propagator(double y) const {
    SpMat op = interpolated_op(y, false);
    return invert_block(dense_sub(op, base_->interior(), base_->interior()),
                        "interpolated action kernel")
        .inv;
}

Vec InterpolatedResolvent::bullet(const Vec& Psi_next, const Vec& psi) const {
    double bk = base_->params().weights.level(base_->depth());
    double bl = bl_weight(base_->params());
    double c = bl / (bk + bl);
    Vec lift = Vec::Zero(qs_plus_.rows());
    for (size_t s = 0; s < next_sites_.size(); ++s)
        for (int a = 0; a < 4; ++a)
            lift[next_spinor_[4 * s + static_cast<size_t>(a)]] = Psi_next[4 * static_cast<long long>(s) + a];
    Vec base_avg = qk_plus_ * psi;
    return base_avg + c * (qst_minus_ * lift) - c * (qst_minus_ * (qs_plus_ * base_avg));
}

Vec InterpolatedResolvent::bullet_bar(const Vec& Psi_next_bar, const Vec& psibar) const {
    double bk = base_->params().weights.level(base_->depth());
    double bl = bl_weight(base_->params());
    double c = bl / (bk + bl);
    Vec lift = Vec::Zero(qs_minus_.rows());
    for (size_t s = 0; s < next_sites_.size(); ++s)
        for (int a = 0; a < 4; ++a)
            lift[next_spinor_[4 * s + static_cast<size_t>(a)]] = Psi_next_bar[4 * static_cast<long long>(s) + a];
    Vec base_avg = qk_minus_ * psibar;
    return base_avg + c * (qst_plus_ * lift) - c * (qst_plus_ * (qs_minus_ * base_avg));
}

namespace {

Vec extract_next(const InterpolatedResolvent& fam, const Vec& Psi_plus) {
    Vec out(4 * static_cast<long long>(fam.next_points().size()));
    for (size_t s = 0; s < fam.next_points().size(); ++s)
        for (int a = 0; a < 4; ++a)
            out[4 * static_cast<long long>(s) + a] = Psi_plus[4 * fam.next_points()[s] + a];
    return out;
}

}  // namespace

Vec InterpolatedResolvent::assemble_critical(const Vec& Psi_plus, const Vec& psi) const {
    Vec out = Vec::Zero(4 * base_->regions().n_points());
    for (size_t p = 0; p < plus_to_base_.size(); ++p)
        if (plus_to_base_[p] >= 0)
            out.segment(4 * plus_to_base_[p], 4) = Psi_plus.segment(4 * static_cast<long long>(p), 4);
    Vec bul = bullet(extract_next(*this, Psi_plus), psi);
    for (size_t s = 0; s < sub_sites_.size(); ++s)
        for (int a = 0; a < 4; ++a)
            out[4 * sub_points_[s] + a] = bul[sub_spinor_[4 * s + static_cast<size_t>(a)]];
    return out;
}

Vec InterpolatedResolvent::assemble_critical_bar(const Vec& Psi_plus_bar, const Vec& psibar) const {
    Vec out = Vec::Zero(4 * base_->regions().n_points());
    for (size_t p = 0; p < plus_to_base_.size(); ++p)
        if (plus_to_base_[p] >= 0)
            out.segment(4 * plus_to_base_[p], 4) =
                Psi_plus_bar.segment(4 * static_cast<long long>(p), 4);
    Vec bul = bullet_bar(extract_next(*this, Psi_plus_bar), psibar);
    for (size_t s = 0; s < sub_sites_.size(); ++s)
        for (int a = 0; a < 4; ++a)
            out[4 * sub_points_[s] + a] = bul[sub_spinor_[4 * s + static_cast<size_t>(a)]];
    return out;
}

// ---- family identity checks -------------------------------------------------

InterpReport interpolation_identities(const InterpolatedResolvent& fam, double y) {
    const BlockedDiracSet& b = fam.base();
    double bk = b.params().weights.level(b.depth());
    InterpReport rep{};

    SpMat ow = fam.interpolated_op(y, false);
    SpMat om = fam.interpolated_op(y, true);
    rep.op_split = SpMat(ow - om).norm() / ow.norm();
    rep.mixing_split = fam.mixing_split_residual(y);

    Mat sy = fam.interpolated_propagator(y);
    const Mat& s = b.propagator();
    std::vector<long long> pt4;
    for (long long p : fam.sub_points())
        for (int a = 0; a < 4; ++a) pt4.push_back(4 * p + a);
    Mat hs = take(b.interpolator(), b.interior(), pt4);
    Mat gs = take(b.interpolator_t(), pt4, b.interior());
    Mat gam = fam.fluct_resolvent(y);
    rep.propagator_sum = (sy - s - hs * gam * gs).norm() / sy.norm();

    Mat qhat = dense_sub(fam.deep_average(+1), fam_sub_spinor(fam), b.interior());
    Mat qts = dense_sub(fam.deep_average_t(-1), b.interior(), fam_sub_spinor(fam));
    Mat mix = fam.mixing(y);
    Mat rhs = mix + (bk * bk) * (mix * (qhat * sy * qts) * mix);
    rep.resolvent_sum = (gam - rhs).norm() / gam.norm();
    return rep;
}

double endpoint_residual(const InterpolatedResolvent& fam) {
    Mat s0 = fam.interpolated_propagator(0.0);
    const Mat& next = fam.next_step().propagator();
    return (s0 - next).norm() / next.norm();
}

double tail_distance(const InterpolatedResolvent& fam, double y) {
    Mat sy = fam.interpolated_propagator(y);
    const Mat& s = fam.base().propagator();
    return (sy - s).norm() / s.norm();
}

FixedPointReport next_step_fixed_point(const InterpolatedResolvent& fam, const Vec& Psi_plus,
                                       const Vec& psi_ext) {
    const BlockedDiracSet& base = fam.base();
    const BlockedDiracSet& next = fam.next_step();
    const Lattice& lat = base.lattice();
    int k = base.depth();
    double bk = base.params().weights.level(k);
    double bl = bl_weight(base.params());

    Vec psi0 = next.minimizer(Psi_plus, psi_ext);
    Vec crit = fam.assemble_critical(Psi_plus, Vec(psi0 + psi_ext));
    Vec psi1 = base.minimizer(crit, psi_ext);
    FixedPointReport rep{};
    rep.minimizer_resid = (psi0 - psi1).norm() / (psi0.norm() + 1e-300);

    FieldSpace lvlk(lat, Degree::spinor, k), lvl1(lat, Degree::spinor, k + 1);
    Vec pk = Vec::Zero(lvlk.dim());
    long long row = 0;
    for (const MultiPoint& p : base.regions().points()) {
        if (p.level == k)
            for (int a = 0; a < 4; ++a) pk[lvlk.idx(p.y, a)] = crit[4 * row + a];
        ++row;
    }
    Vec p1 = Vec::Zero(lvl1.dim());
    for (size_t s = 0; s < fam.next_sites().size(); ++s)
        for (int a = 0; a < 4; ++a)
            p1[lvl1.idx(fam.next_sites()[s], a)] = Psi_plus[4 * fam.next_points()[s] + a];

    Vec t1 = bk * (pk - fam.deep_average(+1) * Vec(psi0 + psi_ext));
    Vec t2 = bl * (fam.stage_t(-1) * Vec(p1 - fam.stage(+1) * pk));
    std::vector<long long> subi;
    for (const Coord& y : fam.sub_sites())
        for (int a = 0; a < 4; ++a) subi.push_back(lvlk.idx(y, a));
    Vec r1 = restrict_to(t1, subi), r2 = restrict_to(t2, subi);
    rep.coarse_resid = (r1 - r2).norm() / (0.5 * (r1.norm() + r2.norm()) + 1e-300);
    return rep;
}

TranslationSplit next_step_action_split(const InterpolatedResolvent& fam, const Vec& Psi_plus,
                                        const Vec& Psi_plus_bar, const Vec& W, const Vec& Wbar) {
    const BlockedDiracSet& base = fam.base();
    const BlockedDiracSet& next = fam.next_step();
    const Lattice& lat = base.lattice();
    int k = base.depth();
    double bl = bl_weight(base.params());
    Vec zero = Vec::Zero(base.fine_dim());

    Vec psi0 = next.minimizer(Psi_plus, zero);
    Vec psi0b = next.minimizer_bar(Psi_plus_bar, zero);
    Vec data = fam.assemble_critical(Psi_plus, psi0);
    Vec datab = fam.assemble_critical_bar(Psi_plus_bar, psi0b);
    for (size_t s = 0; s < fam.sub_points().size(); ++s)
        for (int a = 0; a < 4; ++a) {
            data[4 * fam.sub_points()[s] + a] += W[4 * static_cast<long long>(s) + a];
            datab[4 * fam.sub_points()[s] + a] += Wbar[4 * static_cast<long long>(s) + a];
        }

    FieldSpace lvlk(lat, Degree::spinor, k), lvl1(lat, Degree::spinor, k + 1);
    Vec pk = Vec::Zero(lvlk.dim()), pkb = Vec::Zero(lvlk.dim());
    long long row = 0;
    for (const MultiPoint& p : base.regions().points()) {
        if (p.level == k)
            for (int a = 0; a < 4; ++a) {
                pk[lvlk.idx(p.y, a)] = data[4 * row + a];
                pkb[lvlk.idx(p.y, a)] = datab[4 * row + a];
            }
        ++row;
    }
    Vec p1 = Vec::Zero(lvl1.dim()), p1b = Vec::Zero(lvl1.dim());
    for (size_t s = 0; s < fam.next_sites().size(); ++s)
        for (int a = 0; a < 4; ++a) {
            p1[lvl1.idx(fam.next_sites()[s], a)] = Psi_plus[4 * fam.next_points()[s] + a];
            p1b[lvl1.idx(fam.next_sites()[s], a)] = Psi_plus_bar[4 * fam.next_points()[s] + a];
        }

    Vec u = p1b - fam.stage(-1) * pkb;
    Vec v = p1 - fam.stage(+1) * pk;
    double cellvol = std::pow(lat.spacing() * lat.stride(k + 1), 3);
    cplx fl = 0.0;
    for (size_t s = 0; s < fam.next_sites().size(); ++s)
        for (int a = 0; a < 4; ++a) {
            long long i = lvl1.idx(fam.next_sites()[s], a);
            fl += u[i] * v[i];
        }
    fl *= bl * cellvol;

    TranslationSplit out;
    out.direct = fl + reduced_action_pair(base, data, datab).action;
    Mat q = fam.quad_sub() + bl * fam.stage_form();
    cplx wterm = (Wbar.transpose() * (q * W))(0, 0);
    out.translated = reduced_action_pair(next, Psi_plus, Psi_plus_bar).action + wterm;
    return out;
}

// ---- global-scale checks ----------------------------------------------------

ScalePairReport scale_pair_check(int L, int N, int k, const FermionParams& par, const Vec& A_fine) {
    if (k < 1 || k + 1 > N)
        throw Error("BadLatticeParams", "scale pair needs 1 <= k < N");
    Lattice latf(L, N, k + 1), latc(L, N, k);
    BlockedDiracSet setf(RegionSequence::full_torus(latf, k + 1), par, A_fine);
    Vec a_c = A_fine / std::sqrt(static_cast<double>(L));
    BlockedDiracSet setc(RegionSequence::full_torus(latc, k), par, a_c);
    InterpolatedResolvent fam(setc, RegionSequence::full_torus(latc, k + 1));

    ScalePairReport rep{};
    SpMat opf = SpMat(setf.dirac() + setf.averaging_form());
    const BlockedDiracSet& half = fam.next_step();
    SpMat oph = SpMat(half.dirac() + half.averaging_form());
    rep.action_resid = SpMat(opf - cplx(static_cast<double>(L)) * oph).norm() / opf.norm();

    double bl = bl_weight(par);
    Mat hk = bl * fam.fluct_resolvent(0.0) * Mat(fam.stage_t(-1));
    Mat hcomp = setc.interpolator() * hk;
    rep.interpolator_resid = (setf.interpolator() - hcomp).norm() / setf.interpolator().norm();
    return rep;
}

PartitionReport free_partition_check(int L, int N, int k, const FermionParams& par) {
    if (k < 1 || k > N) throw Error("BadLatticeParams", "partition chain needs 1 <= k <= N");
    const CliffordRep rep = CliffordRep::standard();
    Lattice lat0(L, N, 0), latk(L, N, k);
    check_params(lat0, par);

    FieldSpace s0(lat0, Degree::spinor, 0), b0(lat0, Degree::one, 0);
    Vec a0 = Vec::Zero(b0.dim());
    SpMat id0(s0.dim(), s0.dim());
    id0.setIdentity();
    SpMat d0 = SpMat(wilson_dirac(s0, a0, par.coupling.e_at(0), rep) +
                     cplx(par.coupling.mbar_at(0)) * id0);

    PartitionReport out{};
    out.lhs = logdet(Mat(d0));

    FieldSpace bk_sp(latk, Degree::one, 0);
    BlockedDiracSet set(RegionSequence::full_torus(latk, k), par, Vec(Vec::Zero(bk_sp.dim())));
    double bk = par.weights.level(k);
    double s_coarse = static_cast<double>(ipow(L, 3 * (N - k)));
    double s_full = static_cast<double>(ipow(L, 3 * N));
    out.rhs = set.kernel_logdet() + logdet(set.quad_form()) - 4.0 * s_coarse * std::log(bk) -
              4.0 * k * s_full * std::log(static_cast<double>(L));
    out.resid = logdet_mismatch(out.lhs, out.rhs);
    return out;
}

double determinant_split_residual(const InterpolatedResolvent& fam) {
    double bl = bl_weight(fam.base().params());
    cplx ld_fluct = logdet(Mat(fam.quad_sub() + bl * fam.stage_form()));
    cplx lhs = fam.base().kernel_logdet() + ld_fluct;
    cplx rhs = fam.next_step().kernel_logdet() + fam.mixing_logdet();
    return logdet_mismatch(lhs, rhs);
}

// ---- telescope and decay ----------------------------------------------------

namespace {

// Full-torus action kernel at gauge field zero and tag j: the covariant
// Dirac operator plus mass, plus b_j times the j-fold averaging form.
SpMat flat_kernel(const Lattice& lat, const FermionParams& par, int form_depth, double coef) {
    const CliffordRep rep = CliffordRep::standard();
    FieldSpace fs(lat, Degree::spinor, 0), fb(lat, Degree::one, 0);
    Vec a = Vec::Zero(fb.dim());
    double ej = par.coupling.e_at(lat.k());
    SpMat id(fs.dim(), fs.dim());
    id.setIdentity();
    SpMat op = SpMat(wilson_dirac(fs, a, ej, rep) + cplx(par.coupling.mbar_at(lat.k())) * id);
    if (form_depth >= 1 && coef != 0.0) {
        SpMat q = fermion_average(lat, a, ej, form_depth);
        double cellvol = std::pow(lat.spacing() * lat.stride(form_depth), 3);
        SpMat qt = weighted_transpose_sp(q, fine_weights(fs),
                                         VectorXd::Constant(q.rows(), cellvol));
        op = SpMat(op + cplx(coef) * SpMat(qt * q));
    }
    return op;
}

}  // namespace

TelescopeReport telescope_check(int L, int N, int k, const FermionParams& par, int columns,
                                uint64_t seed) {
    if (k < 1 || k > N) throw Error("BadLatticeParams", "telescope needs 1 <= k <= N");
    Rng rng(seed);
    long long dim = 4 * ipow(L, 3 * N);
    std::vector<long long> cols;
    for (int c = 0; c < columns; ++c)
        cols.push_back(static_cast<long long>(rng.uniform() * static_cast<double>(dim)));
    Mat rhs = Mat::Zero(dim, columns);
    for (int c = 0; c < columns; ++c) rhs(cols[static_cast<size_t>(c)], c) = 1.0;

    TelescopeReport rep{};
    rep.columns = columns;
    std::vector<SpMat> ops(static_cast<size_t>(k) + 1), halves(static_cast<size_t>(k));
    std::vector<Mat> scols(static_cast<size_t>(k) + 1), xcols(static_cast<size_t>(k));
    Mat t0cols;

    for (int j = 0; j <= k; ++j) {
        Lattice lat(L, N, j);
        double bj = par.weights.level(j);
        ops[static_cast<size_t>(j)] = flat_kernel(lat, par, j, j >= 1 ? bj : 0.0);
        Eigen::PartialPivLU<Mat> lu(Mat(ops[static_cast<size_t>(j)]));
        scols[static_cast<size_t>(j)] = lu.solve(rhs);
        if (j <= k - 1) {
            double bnext = par.weights.level(j + 1) / L;
            halves[static_cast<size_t>(j)] = flat_kernel(lat, par, j + 1, bnext);
            if (j == 0) t0cols = Eigen::PartialPivLU<Mat>(Mat(halves[0])).solve(rhs);
        }
        if (j >= 1 && j <= k - 1) {
            // effective coarse form and fluctuation resolvent at this tag
            FieldSpace fs(lat, Degree::spinor, 0);
            FieldSpace fb(lat, Degree::one, 0);
            Vec a = Vec::Zero(fb.dim());
            double ej = par.coupling.e_at(j);
            SpMat qj = fermion_average(lat, a, ej, j);
            SpMat qjt = weighted_transpose_sp(qj, fine_weights(fs),
                                              VectorXd::Ones(qj.rows()));
            Mat sqt = lu.solve(Mat(qjt));
            long long nj = qj.rows();
            Mat dj = bj * Mat::Identity(nj, nj) - (bj * bj) * (Mat(qj) * sqt);
            SpMat qsj = fermion_average_stage(lat, a, ej, j);
            SpMat qsjt = weighted_transpose_sp(
                qsj, VectorXd::Ones(nj),
                VectorXd::Constant(qsj.rows(), static_cast<double>(ipow(L, 3))));
            Mat pj = Mat(SpMat(qsjt * qsj));
            Mat gj = invert_block(dj + bl_weight(par) * pj, "telescope fluctuation kernel").inv;
            Mat gcols = bj * (Mat(qj) * scols[static_cast<size_t>(j)]);
            xcols[static_cast<size_t>(j)] = bj * lu.solve(Mat(qjt * (gj * gcols)));
        }
    }

    double ln = static_cast<double>(L);
    for (int j = 0; j <= k - 1; ++j) {
        double r = SpMat(ops[static_cast<size_t>(j) + 1] - cplx(ln) * halves[static_cast<size_t>(j)])
                       .norm() /
                   ops[static_cast<size_t>(j) + 1].norm();
        rep.op_resid = std::max(rep.op_resid, r);
    }
    for (int c = 0; c < columns; ++c) {
        Vec s1 = ln * scols[1].col(c);
        rep.step_resid = std::max(rep.step_resid,
                                  (s1 - t0cols.col(c)).norm() / t0cols.col(c).norm());
        for (int j = 1; j <= k - 1; ++j) {
            Vec lhs = ln * scols[static_cast<size_t>(j) + 1].col(c);
            Vec rhs2 = scols[static_cast<size_t>(j)].col(c) + xcols[static_cast<size_t>(j)].col(c);
            rep.step_resid = std::max(rep.step_resid, (lhs - rhs2).norm() / rhs2.norm());
        }
        if (k >= 2) {
            Vec acc = std::pow(ln, -k) * t0cols.col(c);
            for (int j = 1; j <= k - 1; ++j)
                acc += std::pow(ln, -(k - j)) * xcols[static_cast<size_t>(j)].col(c);
            rep.sum_resid = std::max(rep.sum_resid, (scols[static_cast<size_t>(k)].col(c) - acc).norm() /
                                                        scols[static_cast<size_t>(k)].col(c).norm());
        }
    }
    return rep;
}

DecayFit propagator_decay(int L, int N, int k, const FermionParams& par, uint64_t seed) {
    if (k < 1 || k > N) throw Error("BadLatticeParams", "decay fit needs 1 <= k <= N");
    Lattice lat(L, N, k);
    Rng rng(seed);
    double bk = par.weights.level(k);
    SpMat op = flat_kernel(lat, par, k, bk);
    Eigen::PartialPivLU<Mat> lu((Mat(op)));

    int nsrc = 4;
    std::vector<long long> srcs;
    for (int s = 0; s < nsrc; ++s)
        srcs.push_back(static_cast<long long>(rng.uniform() * static_cast<double>(lat.n_sites())));
    Mat rhs = Mat::Zero(4 * lat.n_sites(), 4 * nsrc);
    for (int s = 0; s < nsrc; ++s)
        for (int a = 0; a < 4; ++a) rhs(4 * srcs[static_cast<size_t>(s)] + a, 4 * s + a) = 1.0;
    Mat sol = lu.solve(rhs);

    double eta = lat.spacing();
    int side = lat.side();
    double dmax = 0.0;
    std::vector<std::pair<double, double>> pts;  // (distance, block norm)
    for (int s = 0; s < nsrc; ++s) {
        Coord xs = lat.site_coord(srcs[static_cast<size_t>(s)]);
        for (long long t = 0; t < lat.n_sites(); ++t) {
            if (t == srcs[static_cast<size_t>(s)]) continue;
            Coord xt = lat.site_coord(t);
            double d2 = 0.0;
            for (int mu = 0; mu < 3; ++mu) {
                int d = std::abs(xt[mu] - xs[mu]);
                d = std::min(d, side - d);
                d2 += static_cast<double>(d) * d;
            }
            double dist = eta * std::sqrt(d2);
            dmax = std::max(dmax, dist);
            double nrm = sol.block(4 * t, 4 * s, 4, 4).norm() / (eta * eta * eta);
            if (nrm > 0.0) pts.emplace_back(dist, nrm);
        }
    }

    // fit over the middle of the distance range: past the contact peak,
    // short of the wrap-around plateau
    double dlo = 2.5 * eta, dhi = 0.62 * dmax;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (auto& [d, v] : pts)
        if (d >= dlo && d <= dhi) {
            double lx = std::log(d), ly = std::log(v);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            ++n;
        }
    DecayFit fit{};
    fit.pairs = n;
    fit.dmin = dlo;
    fit.dmax = dhi;
    if (n >= 2) fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return fit;
}

// ---- analyticity ------------------------------------------------------------

double AnalyticityDomain::radius(const CouplingSchedule& c, int k, int j) const {
    return std::pow(static_cast<double>(c.L), 0.5 * (k - j)) * std::pow(c.e_at(j), -(1.0 - eps));
}

bool AnalyticityDomain::contains(const RegionSequence& seq, const CouplingSchedule& c,
                                 const Vec& A) const {
    const Lattice& lat = seq.lattice();
    FieldSpace bonds(lat, Degree::one, 0);
    int k = lat.k();
    for (long long cell = 0; cell < bonds.cells(); ++cell) {
        Coord base = bonds.coord(cell);
        int shell = 0;
        for (int j = 0; j <= seq.depth(); ++j)
            if (seq.in_delta(j, base)) shell = j;
        double r = radius(c, k, shell);
        for (int mu = 0; mu < 3; ++mu)
            if (std::abs(A[3 * cell + mu]) >= r) return false;
    }
    return true;
}

double analyticity_probe(const RegionSequence& seq, const FermionParams& par, const Vec& A,
                         int n_bonds, double h, uint64_t seed) {
    const Lattice& lat = seq.lattice();
    FieldSpace fine(lat, Degree::spinor, 0), bonds(lat, Degree::one, 0);
    Rng rng(seed);
    Vec l(fine.dim()), r(fine.dim());
    for (long long i = 0; i < fine.dim(); ++i) {
        l[i] = rng.cnormal();
        r[i] = rng.cnormal();
    }
    l /= std::sqrt(static_cast<double>(fine.dim()));
    r /= std::sqrt(static_cast<double>(fine.dim()));
    auto value = [&](const Vec& af) {
        BlockedDiracSet set(seq, par, af);
        return cplx((l.transpose() * (set.propagator_full() * r))(0, 0));
    };
    double worst = 0.0;
    for (int t = 0; t < n_bonds; ++t) {
        long long bond = static_cast<long long>(rng.uniform() * static_cast<double>(bonds.dim()));
        Vec e = Vec::Zero(bonds.dim());
        e[bond] = 1.0;
        cplx d_re = (value(A + h * e) - value(A - h * e)) / (2.0 * h);
        cplx d_im = (value(A + cplx(0.0, h) * e) - value(A - cplx(0.0, h) * e)) / cplx(0.0, 2.0 * h);
        worst = std::max(worst, std::abs(d_re - d_im) / (std::abs(d_re) + std::abs(d_im) + 1e-300));
    }
    return worst;
}

// ---- normalization ledger ---------------------------------------------------

NormalizationLedger stage_ledger(const InterpolatedResolvent& fam) {
    const BlockedDiracSet& b = fam.base();
    double bk = b.params().weights.level(b.depth());
    double bl = bl_weight(b.params());
    NormalizationLedger led{};
    led.log_partition = b.kernel_logdet();
    led.log_fluct_partition = logdet(Mat(fam.quad_sub() + bl * fam.stage_form()));
    double acc = 0.0;
    const VectorXd& bd = b.weight_diagonal();
    for (long long i = 0; i < bd.size(); ++i)
        if (bd[i] > 0.0) acc -= std::log(bd[i]);
    led.log_scale_norm = acc;
    double nk = static_cast<double>(fam.sub_sites().size());
    double nk1 = static_cast<double>(fam.next_sites().size());
    led.log_step_norm = 4.0 * ((nk - nk1) * std::log(bk) + nk1 * std::log(bk + bl));
    return led;
}

}  // namespace blockrg
