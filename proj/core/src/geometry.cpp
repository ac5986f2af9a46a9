#include "spdseq/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace spdseq {

namespace {

// exp of the largest eigenvalue must stay representable.
constexpr double kExpArgLimit = 700.0;

void require_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) {
        throw Error(std::string(what) + ": non-finite entries");
    }
}

void require_same_dim(int a, int b, const char* what) {
    if (a != b) {
        std::ostringstream os;
        os << what << ": dimension mismatch (" << a << " vs " << b << ")";
        throw DimensionMismatch(os.str());
    }
}

// Shared worker: decompose a symmetric matrix already known to be finite.
EigenDecomposition decompose(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
    if (solver.info() != Eigen::Success) {
        throw NonConvergence("eig_sym: eigensolver exceeded its sweep budget");
    }
    const int n = static_cast<int>(s.rows());
    EigenDecomposition d;
    d.eigenvalues.resize(n);
    d.eigenvectors.resize(n, n);
    // Reorder descending; the stable sort keeps the solver's basis order
    // within degenerate eigenvalue groups.
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&solver](int a, int b) {
        return solver.eigenvalues()(a) > solver.eigenvalues()(b);
    });
    for (int i = 0; i < n; ++i) {
        d.eigenvalues(i) = solver.eigenvalues()(order[static_cast<std::size_t>(i)]);
        d.eigenvectors.col(i) = solver.eigenvectors().col(order[static_cast<std::size_t>(i)]);
    }
    // Sign convention: first nonzero component of each eigenvector positive.
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const double v = d.eigenvectors(i, j);
            if (v != 0.0) {
                if (v < 0.0) d.eigenvectors.col(j) = -d.eigenvectors.col(j);
                break;
            }
        }
    }
    return d;
}

double spd_floor(const Eigen::VectorXd& descending_eigs) {
    return SpdMatrix::kEpsSpdScale * std::max(descending_eigs(0), 1.0);
}

Eigen::MatrixXd apply_spectral(const EigenDecomposition& d, double (*f)(double)) {
    Eigen::VectorXd mapped(d.eigenvalues.size());
    for (int i = 0; i < mapped.size(); ++i) mapped(i) = f(d.eigenvalues(i));
    Eigen::MatrixXd m =
        d.eigenvectors * mapped.asDiagonal() * d.eigenvectors.transpose();
    return 0.5 * (m + m.transpose());
}

} // namespace

SymMatrix::SymMatrix(Eigen::MatrixXd entries) {
    if (entries.rows() != entries.cols() || entries.rows() < 1) {
        throw DimensionMismatch("SymMatrix: expected a square matrix of dim >= 1");
    }
    require_finite(entries, "SymMatrix");
    entries_ = 0.5 * (entries + entries.transpose());
}

SpdMatrix::SpdMatrix(Eigen::MatrixXd entries) {
    SymMatrix sym(std::move(entries));
    EigenDecomposition d = decompose(sym.mat());
    const double floor = spd_floor(d.eigenvalues);
    const double smallest = d.eigenvalues(d.eigenvalues.size() - 1);
    if (!(smallest > floor)) {
        std::ostringstream os;
        os << "SpdMatrix: smallest eigenvalue " << smallest
           << " below validity floor " << floor;
        throw NotSpd(os.str());
    }
    entries_ = sym.mat();
}

EigenDecomposition eig_sym(const SymMatrix& s) { return decompose(s.mat()); }

SymMatrix matrix_log(const SpdMatrix& x) {
    EigenDecomposition d = decompose(x.mat());
    if (!(d.eigenvalues(d.eigenvalues.size() - 1) > spd_floor(d.eigenvalues))) {
        throw NotSpd("matrix_log: input spectrum not strictly positive");
    }
    return SymMatrix(apply_spectral(d, [](double v) { return std::log(v); }));
}

SpdMatrix matrix_exp(const SymMatrix& s) {
    EigenDecomposition d = decompose(s.mat());
    if (d.eigenvalues(0) > kExpArgLimit) {
        throw Overflow("matrix_exp: eigenvalue exceeds exponentiation range");
    }
    return SpdMatrix(apply_spectral(d, [](double v) { return std::exp(v); }));
}

SpdMatrix matrix_power(const SpdMatrix& x, double a) {
    EigenDecomposition d = decompose(x.mat());
    Eigen::VectorXd mapped(d.eigenvalues.size());
    for (int i = 0; i < mapped.size(); ++i) mapped(i) = std::pow(d.eigenvalues(i), a);
    Eigen::MatrixXd m = d.eigenvectors * mapped.asDiagonal() * d.eigenvectors.transpose();
    return SpdMatrix(0.5 * (m + m.transpose()));
}

SymMatrix matrix_log_at(const SpdMatrix& x, const SpdMatrix& p) {
    require_same_dim(x.dim(), p.dim(), "matrix_log_at");
    const Eigen::MatrixXd p_half = matrix_power(p, 0.5).mat();
    const Eigen::MatrixXd p_inv_half = matrix_power(p, -0.5).mat();
    const SpdMatrix centered(p_inv_half * x.mat() * p_inv_half);
    return SymMatrix(p_half * matrix_log(centered).mat() * p_half);
}

double le_distance(const SpdMatrix& x, const SpdMatrix& y, const SpdMatrix& p) {
    require_same_dim(x.dim(), y.dim(), "le_distance");
    require_same_dim(x.dim(), p.dim(), "le_distance");
    const Eigen::MatrixXd p_inv_half = matrix_power(p, -0.5).mat();
    const SymMatrix lx = matrix_log(SpdMatrix(p_inv_half * x.mat() * p_inv_half));
    const SymMatrix ly = matrix_log(SpdMatrix(p_inv_half * y.mat() * p_inv_half));
    return (lx.mat() - ly.mat()).norm();
}

SpdMatrix le_weighted_sum(const std::vector<SpdMatrix>& xs, const std::vector<double>& ws,
                          const SpdMatrix& p) {
    if (xs.empty()) throw EmptyInput("le_weighted_sum: empty matrix list");
    if (xs.size() != ws.size()) {
        throw DimensionMismatch("le_weighted_sum: weight count differs from matrix count");
    }
    const int n = xs.front().dim();
    require_same_dim(n, p.dim(), "le_weighted_sum");
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        require_same_dim(xs[i].dim(), n, "le_weighted_sum");
        acc += ws[i] * matrix_log_at(xs[i], p).mat();
    }
    // exp_mat^P, the inverse of log_mat^P.
    const Eigen::MatrixXd p_half = matrix_power(p, 0.5).mat();
    const Eigen::MatrixXd p_inv_half = matrix_power(p, -0.5).mat();
    const SymMatrix inner(p_inv_half * acc * p_inv_half);
    return SpdMatrix(p_half * matrix_exp(inner).mat() * p_half);
}

double karcher_residual(const std::vector<SpdMatrix>& xs, const SpdMatrix& g) {
    const Eigen::MatrixXd g_inv_half = matrix_power(g, -0.5).mat();
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(g.dim(), g.dim());
    for (const auto& x : xs) {
        acc += matrix_log(SpdMatrix(g_inv_half * x.mat() * g_inv_half)).mat();
    }
    return acc.norm();
}

SpdMatrix affine_invariant_mean(const std::vector<SpdMatrix>& xs) {
    if (xs.empty()) throw EmptyInput("affine_invariant_mean: empty matrix list");
    const int n = xs.front().dim();
    for (const auto& x : xs) require_same_dim(x.dim(), n, "affine_invariant_mean");
    if (xs.size() == 1) return xs.front();

    const double count = static_cast<double>(xs.size());
    const double tol = 1e-8 * count;
    // Plain unit-step iteration converges linearly at a data-dependent
    // rate; band-filtered covariance pools need well over 60 sweeps to
    // drive the residual under 1e-8 * N, so the cap is sized for them.
    constexpr int kMaxIterations = 300;

    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
    for (const auto& x : xs) acc += x.mat();
    SpdMatrix g(acc / count);

    double residual = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < kMaxIterations; ++iter) {
        const Eigen::MatrixXd g_half = matrix_power(g, 0.5).mat();
        const Eigen::MatrixXd g_inv_half = matrix_power(g, -0.5).mat();
        Eigen::MatrixXd tangent = Eigen::MatrixXd::Zero(n, n);
        for (const auto& x : xs) {
            tangent += matrix_log(SpdMatrix(g_inv_half * x.mat() * g_inv_half)).mat();
        }
        residual = tangent.norm();
        if (residual <= tol) return g;
        const SymMatrix step(tangent / count);
        g = SpdMatrix(g_half * matrix_exp(step).mat() * g_half);
    }
    // One more residual check at the final iterate before giving up.
    residual = karcher_residual(xs, g);
    if (residual <= tol) return g;
    std::ostringstream os;
    os << "affine_invariant_mean: no convergence after " << kMaxIterations
       << " iterations, residual " << residual << " > " << tol;
    throw NonConvergence(os.str());
}

Eigen::MatrixXd euclidean_mean(const std::vector<Eigen::MatrixXd>& as) {
    if (as.empty()) throw EmptyInput("euclidean_mean: empty list");
    const auto rows = as.front().rows();
    const auto cols = as.front().cols();
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(rows, cols);
    for (const auto& a : as) {
        if (a.rows() != rows || a.cols() != cols) {
            throw DimensionMismatch("euclidean_mean: shapes differ");
        }
        acc += a;
    }
    return acc / static_cast<double>(as.size());
}

SymMatrix matrix_log_vjp(const SpdMatrix& x, const SymMatrix& upstream) {
    require_same_dim(x.dim(), upstream.dim(), "matrix_log_vjp");
    EigenDecomposition d = decompose(x.mat());
    if (!(d.eigenvalues(d.eigenvalues.size() - 1) > spd_floor(d.eigenvalues))) {
        throw NotSpd("matrix_log_vjp: input spectrum not strictly positive");
    }
    const int n = x.dim();
    const Eigen::VectorXd& l = d.eigenvalues;

    Eigen::MatrixXd loewner(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double li = l(i);
            const double lj = l(j);
            const double gap = std::abs(li - lj);
            double k;
            if (gap < 1e-6 * std::max(li, lj)) {
                // Second-order Taylor expansion of the divided difference
                // about the midpoint: 1/mu + (l_i - l_j)^2 / (12 mu^3).
                const double mu = 0.5 * (li + lj);
                const double delta = li - lj;
                k = 1.0 / mu + (delta * delta) / (12.0 * mu * mu * mu);
            } else {
                k = (std::log(li) - std::log(lj)) / (li - lj);
            }
            loewner(i, j) = k;
            loewner(j, i) = k;
        }
    }

    const Eigen::MatrixXd rotated = d.eigenvectors.transpose() * upstream.mat() * d.eigenvectors;
    const Eigen::MatrixXd grad =
        d.eigenvectors * (loewner.cwiseProduct(rotated)) * d.eigenvectors.transpose();
    return SymMatrix(grad);
}

} // namespace spdseq
