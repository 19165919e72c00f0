#pragma once

#include "blockrg/averaging.hpp"
#include "blockrg/clifford.hpp"
#include "blockrg/forms.hpp"
#include "blockrg/region.hpp"
#include "blockrg/schedule.hpp"

#include <memory>
#include <vector>

namespace blockrg {

/// Couplings and averaging weights for the fermion stage at the running
/// scale.  The lattice tag k selects e_k, mbar_k and the weight ladder; the
/// side L of coupling, weights and lattice must agree.
struct FermionParams {
    CouplingSchedule coupling;
    FermionWeights weights;
    bool symmetrized = true;  // ordering-averaged block phases
};

/// Bilinear (no conjugation) weighted pairing sum_i w_i u_i v_i.
cplx pair_bilinear(const Eigen::VectorXd& w, const Vec& u, const Vec& v);

/// Averaging-weight diagonal on the multiscale points, one value per spinor
/// component: a level-j point carries b_j L^{k-j} (so b_k on the deepest
/// level), a level-0 point carries 0, which keeps every weighted pairing a
/// sum over the averaged levels only.
Eigen::VectorXd averaging_weight_diagonal(const RegionSequence& seq, const FermionWeights& w);

/// Principal-branch log det of a square dense matrix via partial-pivot LU.
cplx logdet(const Mat& M);
/// |exp(a - b) - 1|: log-det comparison modulo 2 pi i.
double logdet_mismatch(cplx a, cplx b);

/// The quadratic data of one blocked fermion action over a region sequence:
/// the multiscale average Q(A), the averaging form P = Qt(-A) b Q(A), the
/// constrained propagator S (inverse of the action kernel on the interior
/// Omega_1), the interpolator H = S Qt(-A) b, its transpose-convention
/// partner b Q(A) S, and the coarse quadratic form D = b - b Q(A) S Qt(-A) b.
///
/// All matrices are plain coordinate matrices; volume weights enter only
/// through the weighted transposes and pairings.  weight_scale multiplies
/// the averaging diagonal (the composed next-scale diagonal is 1/L times the
/// depth-(k+1) ladder, which is how the half-step action below is built).
class BlockedDiracSet {
  public:
    BlockedDiracSet(const RegionSequence& seq, const FermionParams& par, const Vec& A,
                    double weight_scale = 1.0);

    const Lattice& lattice() const { return lat_; }
    const RegionSequence& regions() const { return seq_; }
    const FermionParams& params() const { return par_; }
    int depth() const { return seq_.depth(); }
    const FieldSpace& fine() const { return fine_; }
    long long fine_dim() const { return fine_.dim(); }
    long long coarse_dim() const { return n_pts_ * 4; }

    /// Spinor-component indices of the interior region Omega_1.
    const std::vector<long long>& interior() const { return interior_; }
    /// Point-component averaging weights (b-profile, level-0 entries 0).
    const Eigen::VectorXd& weight_diagonal() const { return bdiag_; }
    /// Point-component cell volumes.
    const Eigen::VectorXd& point_volume() const { return wpts_; }

    /// Multiscale average at +A (sign=+1) or -A (sign=-1); points x fine.
    const SpMat& average(int sign) const { return sign > 0 ? q_plus_ : q_minus_; }
    /// Weighted transpose of average(sign); fine x points.
    const SpMat& average_t(int sign) const { return sign > 0 ? qt_plus_ : qt_minus_; }
    /// Covariant Dirac operator plus mass on the fine spinors.
    const SpMat& dirac() const { return dirac_; }
    /// Averaging form Qt(-A) b Q(A) on the fine spinors.
    const SpMat& averaging_form() const { return proj_; }

    /// Constrained propagator: the interior block of the inverse of
    /// dirac() + averaging_form(), indexed by interior().
    const Mat& propagator() const { return s_sub_; }
    /// The same embedded into the full fine space.
    Mat propagator_full() const;
    /// Reciprocal condition estimate of the inverted interior block.
    double rcond() const { return rcond_; }
    /// log det of the interior block of dirac() + averaging_form().
    cplx kernel_logdet() const { return ld_; }
    /// Frobenius residual |block * propagator - 1| / sqrt(dim).
    double inverse_residual() const;
    /// The gauge field the set was assembled with.
    const Vec& gauge() const { return a_; }

    /// Interpolator H = S Qt(-A) b: coarse data to the fine minimizer.
    const Mat& interpolator() const { return h_; }
    /// Transpose-convention partner b Q(A) S: the other factor in the
    /// resolvent composition identities.
    const Mat& interpolator_t() const { return g_; }
    /// Coarse quadratic form D = b - b Q(A) S Qt(-A) b on the points.
    const Mat& quad_form() const { return d_; }

    /// Minimizer of the blocked action at coarse data Psi and exterior field
    /// psi_ext (supported off Omega_1); returns the full fine field on
    /// Omega_1.  barred uses the transposed kernel and Qt(+A).
    Vec minimizer(const Vec& Psi, const Vec& psi_ext) const;
    Vec minimizer_bar(const Vec& Psibar, const Vec& psibar_ext) const;

  private:
    Lattice lat_;
    RegionSequence seq_;
    FermionParams par_;
    Vec a_;
    FieldSpace fine_;
    long long n_pts_ = 0;
    std::vector<long long> interior_;
    Eigen::VectorXd bdiag_, wpts_;
    SpMat q_plus_, q_minus_, qt_plus_, qt_minus_, dirac_, proj_;
    Mat s_sub_, h_, g_, d_;
    double rcond_ = 0.0;
    cplx ld_ = 0.0;
};

// ---- identity checks on one blocked set -----------------------------------

/// Residual of the interior stationarity equation at random data:
/// Qt(-A) b (Psi - Q(A) psi) - (dirac) psi - dirac psi_ext = 0 on Omega_1,
/// with psi the minimizer.  barred swaps to the transposed system.
double stationarity_residual(const BlockedDiracSet& set, const Vec& Psi, const Vec& psi_ext,
                             bool barred);

/// Both sides of the reduced-action identity at psi_ext = 0: the blocked
/// action evaluated at the minimizing pair versus the coarse quadratic form
/// <Psibar, D Psi> (bilinear pairings, point volumes).
struct ActionPair {
    cplx action;
    cplx reduced;
};
ActionPair reduced_action_pair(const BlockedDiracSet& set, const Vec& Psi, const Vec& Psibar);

/// |Sbar - S^T| / |S| with Sbar assembled independently from the transposed
/// Dirac operator and the swapped-sign averaging form.
double transpose_pair_residual(const BlockedDiracSet& set);

/// |P - P^dagger| / |P| on the fine spinors; zero for real A.
double hermiticity_residual(const BlockedDiracSet& set);

/// trace of Qt(-A) b Q(A), assembled sparse; independent of A.
cplx averaging_form_trace(const RegionSequence& seq, const FermionParams& par, const Vec& A);

// ---- interpolated resolvent family ----------------------------------------

/// One-parameter family of constrained propagators joining the current-scale
/// propagator (y -> infinity) to the composed next-scale one (y = 0), over a
/// region sequence extended one level deeper.  Holds the one-stage averages
/// at the deepest scale, the fluctuation quadratic form and its resolvent,
/// and the composed half-step action built on the extended sequence.
///
/// The base set must outlive this object.
class InterpolatedResolvent {
  public:
    InterpolatedResolvent(const BlockedDiracSet& base, const RegionSequence& seq_plus);

    const BlockedDiracSet& base() const { return *base_; }
    /// Half-step action on the extended sequence: mass mbar_k, averaging
    /// diagonal 1/L times the depth-(k+1) ladder.
    const BlockedDiracSet& next_step() const { return *next_; }
    const RegionSequence& regions_plus() const { return seq_plus_; }

    /// Deepest-level subsites of Omega_{k+1} (x-major), their point rows in
    /// the base sequence, and the spinor dimension 4 * count.
    const std::vector<Coord>& sub_sites() const { return sub_sites_; }
    const std::vector<long long>& sub_points() const { return sub_points_; }
    long long sub_dim() const { return 4 * static_cast<long long>(sub_sites_.size()); }

    /// One-stage averages at the deepest scale, full level spaces.
    const SpMat& stage(int sign) const { return sign > 0 ? qs_plus_ : qs_minus_; }
    const SpMat& stage_t(int sign) const { return sign > 0 ? qst_plus_ : qst_minus_; }

    /// One-stage averaging form Qt(-A) Q(A) restricted to sub_sites();
    /// a projection there because Omega_{k+1} is a union of deeper tiles.
    const Mat& stage_form() const { return phat_; }
    /// Coarse quadratic form D restricted to sub_points().
    const Mat& quad_sub() const { return d_sub_; }

    /// Wing matrices of the spectral split of the interpolated action,
    /// rational 4x4 functions of i gamma3 y.
    Eigen::Matrix4cd alpha(double y) const;
    Eigen::Matrix4cd beta(double y) const;

    /// (b_k + (b/L) stage_form + i gamma3 y)^{-1} on sub_sites(), dense.
    Mat mixing(double y) const;
    /// |direct inverse - spectral form| / |direct| of mixing(y).
    double mixing_split_residual(double y) const;
    /// log det (b_k + (b/L) stage_form); independent of A, and equal to
    /// 4 [(n_k - n_{k+1}) log b_k + n_{k+1} log(b_k + b/L)].
    cplx mixing_logdet() const;

    /// Fluctuation resolvent (quad_sub + (b/L) stage_form + i gamma3 y)^{-1}.
    Mat fluct_resolvent(double y) const;

    /// Interpolated action kernel on the fine spinors; via_mixing assembles
    /// the averaged-sandwich form (P - b_k^2 Qt mixing Q restricted), the
    /// other route adds the alpha/beta wings to the level-k and level-(k+1)
    /// averaging forms.
    SpMat interpolated_op(double y, bool via_mixing) const;
    /// Interior inverse of interpolated_op (wing route).
    Mat interpolated_propagator(double y) const;

    /// k-fold and (k+1)-fold plain averages on the full torus spaces.
    const SpMat& deep_average(int sign) const { return sign > 0 ? qk_plus_ : qk_minus_; }
    const SpMat& deep_average_t(int sign) const { return sign > 0 ? qkt_plus_ : qkt_minus_; }

    /// Next-level interpolation of coarse data: for a field Psi_next on the
    /// level-(k+1) subsites of Omega_{k+1} and a fine field psi,
    ///   Q_k(A) psi + c Qt_step(-A) Psi_next - c stage-form Q_k(A) psi
    /// on the full level-k space, with c = (b/L) / (b_k + b/L).
    Vec bullet(const Vec& Psi_next, const Vec& psi) const;

    /// Level-(k+1) subsites of Omega_{k+1} and their rows in the extended
    /// sequence's points.
    const std::vector<Coord>& next_sites() const { return next_sites_; }
    const std::vector<long long>& next_points() const { return next_points_; }

    /// Barred interpolation: swapped-sign averages throughout.
    Vec bullet_bar(const Vec& Psi_next_bar, const Vec& psibar) const;

    /// Assemble the current-scale coarse data whose deepest level is the
    /// bullet interpolation of (Psi_plus, psi) on Omega_{k+1} and copies
    /// Psi_plus elsewhere.
    Vec assemble_critical(const Vec& Psi_plus, const Vec& psi) const;
    Vec assemble_critical_bar(const Vec& Psi_plus_bar, const Vec& psibar) const;

  private:
    const BlockedDiracSet* base_;
    RegionSequence seq_plus_;
    std::unique_ptr<BlockedDiracSet> next_;
    std::vector<Coord> sub_sites_, next_sites_;
    std::vector<long long> sub_points_, next_points_;
    std::vector<long long> sub_spinor_;   // level-k field-space indices of sub_sites
    std::vector<long long> next_spinor_;  // level-(k+1) field-space indices of next_sites
    std::vector<long long> plus_to_base_;  // base point row per extended point row, -1 on the deepest level
    SpMat qs_plus_, qs_minus_, qst_plus_, qst_minus_;
    SpMat qk_plus_, qk_minus_, qkt_plus_, qkt_minus_;
    SpMat qk1_plus_, qk1_minus_, qk1t_plus_, qk1t_minus_;
    Mat phat_, d_sub_;
};

// ---- identity checks on the family ----------------------------------------

struct InterpReport {
    double op_split;        // wing route vs averaged-sandwich route, pre-inverse
    double resolvent_sum;   // fluct resolvent vs mixing + b_k^2 mixing Q S_y Qt mixing
    double propagator_sum;  // S_y vs S + H Gamma_y G
    double mixing_split;    // direct vs spectral mixing inverse
};
InterpReport interpolation_identities(const InterpolatedResolvent& fam, double y);

/// |S_{y=0} - next-step propagator| / |next-step|.
double endpoint_residual(const InterpolatedResolvent& fam);

/// |S_y - S| for the given y (relative to |S|): decays like 1/y.
double tail_distance(const InterpolatedResolvent& fam, double y);

/// Residuals of the coupled stationarity system of the extended action at
/// random data (Psi_plus on the extended points, exterior field psi_ext):
/// the next-step minimizer must reproduce itself through the current-scale
/// minimizer at the assembled critical data, and the deepest-level data must
/// satisfy the coarse stationarity equation.
struct FixedPointReport {
    double minimizer_resid;
    double coarse_resid;
};
FixedPointReport next_step_fixed_point(const InterpolatedResolvent& fam, const Vec& Psi_plus,
                                       const Vec& psi_ext);

/// Both totals of the translated-action split at psi_ext = 0: the fluctuation
/// pairing plus the current-scale action at translated data W versus the
/// extended action plus the fluctuation quadratic form in W.
struct TranslationSplit {
    cplx direct;
    cplx translated;
};
TranslationSplit next_step_action_split(const InterpolatedResolvent& fam, const Vec& Psi_plus,
                                        const Vec& Psi_plus_bar, const Vec& W, const Vec& Wbar);

// ---- global-scale checks ---------------------------------------------------

/// Exact scaling covariance plus the interpolation composition across two
/// adjacent tags of the same torus: the coarse-tag data uses the scaled
/// gauge field (1/sqrt L times the fine-tag values on the shared bonds).
struct ScalePairReport {
    double action_resid;        // fine-tag action kernel vs L * half-step kernel
    double interpolator_resid;  // fine-tag interpolator vs composed coarse-tag one
};
ScalePairReport scale_pair_check(int L, int N, int k, const FermionParams& par, const Vec& A_fine);

/// Free-field partition chain at A = 0 on the full torus: log det of the
/// unit-lattice Dirac operator against the blocked action, the coarse
/// quadratic form, and the closed-form normalizer and spacing factors.
struct PartitionReport {
    cplx lhs;       // log det (dirac at tag (N, 0) + mbar_0)
    cplx rhs;       // log det blocked kernel + log det D - normalizers
    double resid;   // mismatch modulo 2 pi i
};
PartitionReport free_partition_check(int L, int N, int k, const FermionParams& par);

/// Per-step determinant split at A = 0 on the full torus:
/// log det Gamma^{-1} + log det S^{-1} = mixing log det + log det (S0)^{-1}.
double determinant_split_residual(const InterpolatedResolvent& fam);

// ---- telescope and decay ---------------------------------------------------

/// Iterated composition of the blocked propagator at A = 0 across scale tags
/// j = 0..k of one torus: per step, the scaling covariance of the action
/// kernels (exact) and the composition identity checked on sampled columns,
/// plus the unrolled kernel-sum form.
struct TelescopeReport {
    double op_resid;    // max over steps, action kernel scaling covariance
    double step_resid;  // max over steps and sampled columns
    double sum_resid;   // unrolled kernel sum at the sampled columns
    int columns;
};
TelescopeReport telescope_check(int L, int N, int k, const FermionParams& par, int columns,
                                uint64_t seed);

/// Log-log slope of the blocked propagator kernel against physical distance
/// at A = 0, fitted over the middle of the available distance range.
struct DecayFit {
    double slope;
    int pairs;
    double dmin, dmax;  // fitted physical distance window
};
DecayFit propagator_decay(int L, int N, int k, const FermionParams& par, uint64_t seed);

// ---- analyticity ------------------------------------------------------------

/// Per-bond membership radii for the gauge field: a fine bond owned by the
/// level-j shell admits |A| < L^{(k-j)/2} e_j^{-(1 - eps)}.
struct AnalyticityDomain {
    double eps = 0.25;
    double radius(const CouplingSchedule& c, int k, int j) const;
    bool contains(const RegionSequence& seq, const CouplingSchedule& c, const Vec& A) const;
};

/// Max over sampled bonds of the Cauchy-Riemann defect of a fixed random
/// probe functional of the propagator, central differences with step h in
/// the real and imaginary bond directions; relative to the derivative size.
double analyticity_probe(const RegionSequence& seq, const FermionParams& par, const Vec& A,
                         int n_bonds, double h, uint64_t seed);

// ---- normalization ledger ---------------------------------------------------

/// Complex log-det accumulators of one blocked stage.  Signs of the real
/// parts follow the inverse-determinant convention, so partition = -log det
/// propagator block; magnitudes are the checked quantities, phases ride
/// along modulo 2 pi.
struct NormalizationLedger {
    cplx log_partition;        // -log det propagator block
    cplx log_fluct_partition;  // -log det fluctuation resolvent
    double log_scale_norm;     // -4 s_{N-k} log b_k
    double log_step_norm;      // closed-form mixing log det at full volume
};
NormalizationLedger stage_ledger(const InterpolatedResolvent& fam);

}  // namespace blockrg
