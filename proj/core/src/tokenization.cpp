#include "spdseq/tokenization.hpp"

#include <cmath>
#include <sstream>

#include "spdseq/rng.hpp"

namespace spdseq {

namespace {
const double kSqrt2 = std::sqrt(2.0);
}

int triangular_dim(int m) {
    if (m < 1) throw DimensionMismatch("triangular_dim: m must be >= 1");
    return m * (m + 1) / 2;
}

bool is_triangular_length(int len) {
    if (len < 1) return false;
    const int m = static_cast<int>((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0 + 0.5);
    return m >= 1 && m * (m + 1) / 2 == len;
}

int matrix_dim_for_length(int len) {
    if (!is_triangular_length(len)) {
        std::ostringstream os;
        os << "length " << len << " is not triangular";
        throw NotTriangularLength(os.str());
    }
    return static_cast<int>((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0 + 0.5);
}

int nearest_triangular(int target) {
    if (target < 1) return 1;
    int m = 1;
    while (triangular_dim(m + 1) <= target) ++m;
    const int lo = triangular_dim(m);
    const int hi = triangular_dim(m + 1);
    return (target - lo <= hi - target) ? lo : hi;
}

Token tokenize(const SymMatrix& s) {
    const int m = s.dim();
    Token t;
    t.dim_matrix = m;
    t.values.resize(triangular_dim(m));
    int idx = 0;
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            t.values(idx++) = (i == j) ? s(i, j) : kSqrt2 * s(i, j);
        }
    }
    return t;
}

SymMatrix detokenize(const Token& t) {
    const int m = matrix_dim_for_length(static_cast<int>(t.values.size()));
    Eigen::MatrixXd s(m, m);
    int idx = 0;
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            const double v = t.values(idx++);
            if (i == j) {
                s(i, i) = v;
            } else {
                s(i, j) = v / kSqrt2;
                s(j, i) = s(i, j);
            }
        }
    }
    return SymMatrix(s);
}

Token spd_to_token(const SpdMatrix& x) { return tokenize(matrix_log(x)); }

TriangularMap::TriangularMap(Eigen::MatrixXd w, std::optional<Eigen::VectorXd> bias)
    : w_(std::move(w)), bias_(std::move(bias)) {
    // Endpoint lengths must both be triangular for the SPD interpretation.
    matrix_dim_for_length(static_cast<int>(w_.cols()));
    matrix_dim_for_length(static_cast<int>(w_.rows()));
    if (bias_ && bias_->size() != w_.rows()) {
        throw DimensionMismatch("TriangularMap: bias length differs from output length");
    }
}

Token apply_map(const TriangularMap& map, const Token& t) {
    if (t.values.size() != map.in_length()) {
        throw DimensionMismatch("apply_map: token length differs from map input length");
    }
    Token out;
    out.dim_matrix = matrix_dim_for_length(map.out_length());
    out.values = map.weight() * t.values;
    if (map.bias()) out.values += *map.bias();
    return out;
}

double operator_norm_power_iteration(const Eigen::MatrixXd& w, int iterations) {
    const Eigen::MatrixXd gram = w.transpose() * w;
    const int n = static_cast<int>(gram.rows());
    // One run per canonical basis vector, keeping the largest Rayleigh
    // quotient: at least one start overlaps the top eigenvector by 1/sqrt(n),
    // so the iteration cannot settle on a lower eigenpair.
    double lambda = 0.0;
    for (int start = 0; start < n; ++start) {
        Eigen::VectorXd v = Eigen::VectorXd::Unit(n, start);
        for (int it = 0; it < iterations; ++it) {
            Eigen::VectorXd gv = gram * v;
            const double norm = gv.norm();
            if (norm == 0.0) break;
            v = gv / norm;
        }
        lambda = std::max(lambda, v.dot(gram * v));
    }
    return std::sqrt(std::max(lambda, 0.0));
}

} // namespace spdseq
