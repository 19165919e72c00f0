#pragma once

#include <Eigen/Dense>

#include <array>

namespace blockrg {

/// Hermitian 4x4 representation of the three Euclidean gamma matrices,
/// gamma_mu gamma_nu + gamma_nu gamma_mu = 2 delta_{mu nu}. `chirality`
/// anticommutes with every gamma_mu and squares to the identity; conjugation
/// by it sends gamma.grad to its negative.
struct CliffordRep {
    std::array<Eigen::Matrix4cd, 3> gamma;
    Eigen::Matrix4cd chirality;

    static CliffordRep standard() {
        using namespace std::complex_literals;
        Eigen::Matrix2cd s1, s2, s3;
        s1 << 0, 1, 1, 0;
        s2 << 0, -1i, 1i, 0;
        s3 << 1, 0, 0, -1;
        CliffordRep rep;
        std::array<Eigen::Matrix2cd, 3> pauli = {s1, s2, s3};
        for (int mu = 0; mu < 3; ++mu) {
            rep.gamma[mu].setZero();
            rep.gamma[mu].block<2, 2>(0, 2) = pauli[mu];
            rep.gamma[mu].block<2, 2>(2, 0) = pauli[mu];
        }
        rep.chirality.setZero();
        rep.chirality.diagonal() << 1, 1, -1, -1;
        return rep;
    }
};

}  // namespace blockrg
