#pragma once

#include <Eigen/Dense>

#include <vector>

#include "spdseq/errors.hpp"

namespace spdseq {

/// Dense real symmetric matrix. The constructor symmetrizes its input via
/// (S + S^T)/2, so downstream code can rely on exact symmetry.
class SymMatrix {
public:
    explicit SymMatrix(Eigen::MatrixXd entries);

    static SymMatrix zero(int dim) { return SymMatrix(Eigen::MatrixXd::Zero(dim, dim)); }

    int dim() const { return static_cast<int>(entries_.rows()); }
    const Eigen::MatrixXd& mat() const { return entries_; }
    double operator()(int i, int j) const { return entries_(i, j); }

private:
    Eigen::MatrixXd entries_;
};

/// Symmetric matrix with strictly positive eigenvalues, an element of the
/// SPD manifold. Construction validates the spectrum: the smallest
/// eigenvalue must exceed eps_spd = 1e-10 * max(largest eigenvalue, 1).
class SpdMatrix {
public:
    explicit SpdMatrix(Eigen::MatrixXd entries);

    static SpdMatrix identity(int dim) { return SpdMatrix(Eigen::MatrixXd::Identity(dim, dim)); }

    int dim() const { return static_cast<int>(entries_.rows()); }
    const Eigen::MatrixXd& mat() const { return entries_; }
    double operator()(int i, int j) const { return entries_(i, j); }

    /// Relative eigenvalue floor used by the validity check.
    static constexpr double kEpsSpdScale = 1e-10;

private:
    Eigen::MatrixXd entries_;
};

/// Spectral decomposition S = U diag(lambda) U^T with eigenvalues in
/// descending order and a fixed eigenvector sign convention (first nonzero
/// component of each column positive), so results are deterministic.
struct EigenDecomposition {
    Eigen::VectorXd eigenvalues;  // descending
    Eigen::MatrixXd eigenvectors; // columns, orthonormal
};

EigenDecomposition eig_sym(const SymMatrix& s);

/// log_mat(X) = U log(Lambda) U^T, mapping SPD(n) onto Sym(n).
SymMatrix matrix_log(const SpdMatrix& x);

/// exp_mat(S) = U exp(Lambda) U^T, the inverse of matrix_log.
SpdMatrix matrix_exp(const SymMatrix& s);

/// X^a through the spectrum: eigenvalues are raised to a, eigenvectors kept.
SpdMatrix matrix_power(const SpdMatrix& x, double a);

/// Tangent-space projection about a centre P:
/// log_mat^P(X) = P^{1/2} log_mat(P^{-1/2} X P^{-1/2}) P^{1/2}.
SymMatrix matrix_log_at(const SpdMatrix& x, const SpdMatrix& p);

/// LogEuclidean distance with centre of projection P, Frobenius norm:
/// || log_mat(P^{-1/2} X P^{-1/2}) - log_mat(P^{-1/2} Y P^{-1/2}) ||_F.
double le_distance(const SpdMatrix& x, const SpdMatrix& y, const SpdMatrix& p);

/// Closed-form Riemannian weighted sum:
/// exp_mat^P( sum_i w_i log_mat^P(X_i) ).
SpdMatrix le_weighted_sum(const std::vector<SpdMatrix>& xs, const std::vector<double>& ws,
                          const SpdMatrix& p);

/// Affine-invariant (Karcher) mean via fixed-point iteration
///   G <- G^{1/2} exp_mat( mean_i log_mat(G^{-1/2} X_i G^{-1/2}) ) G^{1/2},
/// initialized at the Euclidean mean. Converged when the summed tangent
/// residual satisfies ||sum_i log_mat(...)||_F <= 1e-8 * N; at most 60
/// iterations, after which NonConvergence reports the residual.
SpdMatrix affine_invariant_mean(const std::vector<SpdMatrix>& xs);

/// Karcher residual ||sum_i log_mat(G^{-1/2} X_i G^{-1/2})||_F at a
/// candidate mean G. Exposed so tests can check the mean condition directly.
double karcher_residual(const std::vector<SpdMatrix>& xs, const SpdMatrix& g);

/// Elementwise arithmetic mean of equally shaped real matrices.
Eigen::MatrixXd euclidean_mean(const std::vector<Eigen::MatrixXd>& as);

/// Vector-Jacobian product of matrix_log at X: the cotangent of upstream
/// pulled back through the eigendecomposition.
///
/// With X = U diag(lambda) U^T the rule is U (K .* (U^T G U)) U^T where
/// K_ij is the divided difference (ln l_i - ln l_j)/(l_i - l_j). Nearly
/// equal eigenvalue pairs (|l_i - l_j| < 1e-6 * max(l_i, l_j)) switch to
/// the second-order Taylor expansion of that quotient about the midpoint,
/// which is what keeps backpropagation stable near degenerate spectra.
SymMatrix matrix_log_vjp(const SpdMatrix& x, const SymMatrix& upstream);

} // namespace spdseq
