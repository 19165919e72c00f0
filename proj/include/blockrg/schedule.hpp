#pragma once

#include "blockrg/lattice.hpp"

#include <cmath>
#include <vector>

namespace blockrg {

/// Per-level coupling and mass of the refinement family with parameters
/// (e, mbar) at the deepest level N: e_k = L^{-(N-k)/2} e, mbar_k =
/// L^{-(N-k)} mbar, so one refinement step multiplies them by sqrt(L) and L.
struct CouplingSchedule {
    double e = 0.1;
    double mbar = 0.2;
    int L = 3;
    int N = 1;

    double e_at(int k) const { return std::pow(static_cast<double>(L), -0.5 * (N - k)) * e; }
    double mbar_at(int k) const { return std::pow(static_cast<double>(L), -(N - k)) * mbar; }
};

/// Harmonic mean xy/(x+y): composing two quadratic averaging penalties with
/// weights x and y leaves a penalty with weight h(x, y).
inline double harmonic(double x, double y) { return x * y / (x + y); }

/// Averaging-weight schedule for the fermion flow: one blocking step carries
/// weight b, and k accumulated steps act like the single effective weight
/// b_k = b (1 - 1/L) / (1 - L^-k). Composition: L * harmonic(b_k, b/L) =
/// b_{k+1}. The per-shell profile at step k scales earlier levels up,
/// b^{(k)}_j = b_j L^{k-j}.
struct FermionWeights {
    double b = 1.0;
    int L = 3;

    double level(int k) const {
        double Li = 1.0 / L;
        return b * (1.0 - Li) / (1.0 - std::pow(Li, k));
    }
    double new_weight() const { return b / L; }
    std::vector<double> profile(int k) const {
        std::vector<double> p(static_cast<size_t>(k));
        for (int j = 1; j <= k; ++j)
            p[static_cast<size_t>(j - 1)] = level(j) * std::pow(static_cast<double>(L), k - j);
        return p;
    }
};

/// Same structure for the gauge flow, with the quadratic-form dimension two:
/// a_j = a (1 - L^-2) / (1 - L^-2j), L^2 * harmonic(a_j, a/L^2) = a_{j+1},
/// a^{(k)}_j = a_j L^{2(k-j)}.
struct GaugeWeights {
    double a = 1.0;
    int L = 3;

    double level(int j) const {
        double Li = 1.0 / (static_cast<double>(L) * L);
        return a * (1.0 - Li) / (1.0 - std::pow(Li, j));
    }
    double new_weight() const { return a / (static_cast<double>(L) * L); }
    std::vector<double> profile(int k) const {
        std::vector<double> p(static_cast<size_t>(k));
        for (int j = 1; j <= k; ++j)
            p[static_cast<size_t>(j - 1)] = level(j) * std::pow(static_cast<double>(L), 2 * (k - j));
        return p;
    }
};

}  // namespace blockrg
