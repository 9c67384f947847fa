#pragma once

// Test-only brute-force reference: the full 2^n Hamiltonian built directly
// from the bit representation, with dense real eigendecompositions. Shares no
// code with the symmetry-reduced path it checks.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

namespace oracle {

struct DenseOps {
    int L = 0;
    int n = 0;
    Eigen::MatrixXd zz;
    Eigen::MatrixXd x_sum;
    Eigen::MatrixXd m2;

    Eigen::MatrixXd hamiltonian(double J, double h) const { return -J * zz - h * x_sum; }
};

inline std::vector<std::pair<int, int>> torus_edges(int L) {
    std::vector<std::pair<int, int>> edges;
    for (int y = 0; y < L; ++y)
        for (int x = 0; x < L; ++x) {
            edges.emplace_back(y * L + x, y * L + (x + 1) % L);
            edges.emplace_back(y * L + x, ((y + 1) % L) * L + x);
        }
    return edges;
}

inline DenseOps build_dense(int L) {
    DenseOps ops;
    ops.L = L;
    ops.n = L * L;
    const int dim = 1 << ops.n;
    ops.zz = Eigen::MatrixXd::Zero(dim, dim);
    ops.x_sum = Eigen::MatrixXd::Zero(dim, dim);
    ops.m2 = Eigen::MatrixXd::Zero(dim, dim);
    const auto edges = torus_edges(L);
    for (int s = 0; s < dim; ++s) {
        auto spin = [&](int i) { return ((s >> i) & 1) ? -1.0 : 1.0; };
        double zz = 0.0;
        for (auto [a, b] : edges) zz += spin(a) * spin(b);
        double m = 0.0;
        for (int i = 0; i < ops.n; ++i) {
            m += spin(i);
            ops.x_sum(s ^ (1 << i), s) += 1.0;
        }
        ops.zz(s, s) = zz;
        ops.m2(s, s) = m * m / (ops.n * ops.n);
    }
    return ops;
}

// Normalized Gibbs state exp(-H/T)/Z.
inline Eigen::MatrixXd gibbs(const Eigen::MatrixXd& H, double T) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const Eigen::VectorXd& e = es.eigenvalues();
    Eigen::VectorXd w = (-(e.array() - e[0]) / T).exp();
    w /= w.sum();
    return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().transpose();
}

inline double thermal(const Eigen::MatrixXd& H, const Eigen::MatrixXd& O, double T) {
    return (gibbs(H, T) * O).trace();
}

// Tr(U rho U^dagger O) with U = exp(-i H t) from a Pade matrix exponential.
inline double evolve(const Eigen::MatrixXd& rho, const Eigen::MatrixXd& Hf, const Eigen::MatrixXd& O, double t) {
    const Eigen::MatrixXcd generator = std::complex<double>(0.0, -t) * Hf.cast<std::complex<double>>();
    const Eigen::MatrixXcd U = generator.exp();
    const Eigen::MatrixXcd rt = U * rho.cast<std::complex<double>>() * U.adjoint();
    return (rt * O.cast<std::complex<double>>()).trace().real();
}

} // namespace oracle
