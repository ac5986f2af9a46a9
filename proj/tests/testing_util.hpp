#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "spdseq/geometry.hpp"
#include "spdseq/rng.hpp"

namespace spdseq::testing {

inline Eigen::MatrixXd random_gaussian(Rng& rng, int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
    }
    return m;
}

inline Eigen::MatrixXd random_orthogonal(Rng& rng, int n) {
    const Eigen::MatrixXd g = random_gaussian(rng, n, n);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ();
}

/// Random SPD matrix with eigenvalues log-uniform across the requested
/// condition number (largest eigenvalue sqrt(cond), smallest 1/sqrt(cond)).
inline SpdMatrix random_spd(Rng& rng, int n, double cond = 100.0) {
    const Eigen::MatrixXd q = random_orthogonal(rng, n);
    const double half_log = 0.5 * std::log(cond);
    Eigen::VectorXd eigs(n);
    for (int i = 0; i < n; ++i) eigs(i) = std::exp(rng.uniform(-half_log, half_log));
    return SpdMatrix(q * eigs.asDiagonal() * q.transpose());
}

inline SymMatrix random_sym(Rng& rng, int n) {
    return SymMatrix(random_gaussian(rng, n, n));
}

inline double rel_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).norm() / std::max(b.norm(), 1e-300);
}

} // namespace spdseq::testing
