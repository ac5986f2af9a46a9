#pragma once

#include <Eigen/Dense>

#include <optional>

#include "spdseq/geometry.hpp"

namespace spdseq {

/// d(m) = m(m+1)/2, the dimension of Sym(m) as a vector space.
int triangular_dim(int m);

/// True if len is a triangular number d(m) for some m >= 1.
bool is_triangular_length(int len);

/// Matrix dimension m with d(m) == len; throws NotTriangularLength otherwise.
int matrix_dim_for_length(int len);

/// Triangular number closest to target (ties resolve to the smaller one).
int nearest_triangular(int target);

/// Vector image of a symmetric matrix: the upper triangle read row-major
/// with off-diagonal entries scaled by sqrt(2), so the token L2 norm equals
/// the matrix Frobenius norm and LogEuclidean distances become literal
/// vector distances.
struct Token {
    int dim_matrix = 0;        // m
    Eigen::VectorXd values;    // length d(m)
};

Token tokenize(const SymMatrix& s);

/// Exact inverse of tokenize.
SymMatrix detokenize(const Token& t);

/// tokenize(matrix_log(X)), the bijection between SPD(m) and R^{d(m)}.
Token spd_to_token(const SpdMatrix& x);

/// Linear map between triangular vector spaces R^{d(m)} -> R^{d(p)}.
/// Both endpoint lengths must be triangular; the induced SPD-to-SPD map
/// then contracts LogEuclidean distances by at most the operator norm of W.
class TriangularMap {
public:
    TriangularMap(Eigen::MatrixXd w, std::optional<Eigen::VectorXd> bias = std::nullopt);

    const Eigen::MatrixXd& weight() const { return w_; }
    const std::optional<Eigen::VectorXd>& bias() const { return bias_; }
    int in_length() const { return static_cast<int>(w_.cols()); }
    int out_length() const { return static_cast<int>(w_.rows()); }

private:
    Eigen::MatrixXd w_;
    std::optional<Eigen::VectorXd> bias_;
};

Token apply_map(const TriangularMap& map, const Token& t);

/// Operator 2-norm estimate by power iteration on W^T W (fixed iteration
/// count, seeded start vector). Used by the contraction-bound checks.
double operator_norm_power_iteration(const Eigen::MatrixXd& w, int iterations = 30);

} // namespace spdseq
