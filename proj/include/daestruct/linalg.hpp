#pragma once

// =============================================================================
// Dense linear-algebra primitives: rank, null spaces, orthogonal projectors,
// positive-definiteness tests and the shuffle-based pencil index oracle.
// Everything downstream (topology criteria, element classification, the
// theorem decision procedure) rests on the rank decisions made here.
// =============================================================================

#include "daestruct/errors.hpp"

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <vector>

namespace daestruct {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Max-abs-entry norm; the norm used by all projector/identity bounds.
inline double max_abs(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    return m.cwiseAbs().maxCoeff();
}

inline void check_finite(const Matrix& m, const char* who) {
    if (!m.allFinite()) {
        throw InvalidMatrix(std::string(who) + ": matrix has non-finite entries");
    }
}

/// Default rank tolerance: max(rows, cols) * machine epsilon * sigma_max.
inline double default_rank_tolerance(Index rows, Index cols, double sigma_max) {
    const double eps = std::numeric_limits<double>::epsilon();
    return static_cast<double>(std::max<Index>(std::max(rows, cols), 1)) * eps * sigma_max;
}

namespace detail {

inline Eigen::JacobiSVD<Matrix> svd_of(const Matrix& m, unsigned options) {
    return Eigen::JacobiSVD<Matrix>(m, options);
}

inline Index rank_from_singular_values(const Vector& sv, Index rows, Index cols,
                                       std::optional<double> tol) {
    if (sv.size() == 0) return 0;
    const double sigma_max = sv(0);
    const double tau = tol ? *tol : default_rank_tolerance(rows, cols, sigma_max);
    Index r = 0;
    for (Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > tau) ++r;
    }
    return r;
}

} // namespace detail

/// Numerical rank via singular values. `tol` is an absolute threshold on the
/// singular values; when absent the default tolerance applies.
inline Index rank_svd(const Matrix& m, std::optional<double> tol = std::nullopt) {
    check_finite(m, "rank_svd");
    if (tol && *tol < 0.0) throw InvalidMatrix("rank_svd: negative tolerance");
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return detail::rank_from_singular_values(svd.singularValues(), m.rows(), m.cols(), tol);
}

struct PosDefResult {
    bool positive_definite = false;
    /// Smallest eigenvalue of the symmetric part (M + M^T)/2; this is the
    /// strong-monotonicity constant of the linear map x -> Mx.
    double lambda_min = 0.0;
};

/// Positive definiteness of a (not necessarily symmetric) square matrix,
/// decided on the symmetric part. Empty matrices are vacuously definite.
inline PosDefResult is_positive_definite(const Matrix& m,
                                         std::optional<double> margin = std::nullopt) {
    check_finite(m, "is_positive_definite");
    if (m.rows() != m.cols()) {
        throw ShapeMismatch("is_positive_definite: matrix must be square");
    }
    if (m.rows() == 0) {
        return {true, std::numeric_limits<double>::infinity()};
    }
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    const double lambda_min = es.eigenvalues().minCoeff();
    const double threshold = margin ? *margin : 1e-12 * max_abs(m);
    return {lambda_min > threshold, lambda_min};
}

/// Orthonormal basis of ker M as columns. A matrix with no rows has the full
/// space as kernel; a matrix with no columns has the trivial kernel.
inline Matrix null_space_basis(const Matrix& m, std::optional<double> tol = std::nullopt) {
    check_finite(m, "null_space_basis");
    if (m.cols() == 0) return Matrix(0, 0);
    if (m.rows() == 0 || m.isZero(0.0)) return Matrix::Identity(m.cols(), m.cols());
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
    const Index r =
        detail::rank_from_singular_values(svd.singularValues(), m.rows(), m.cols(), tol);
    return svd.matrixV().rightCols(m.cols() - r);
}

enum class ProjectorKind { OntoKernel, AlongKernel };

/// Orthogonal projector onto or along ker M (the canonical representative of
/// the projector family the analysis works with).
struct Projector {
    Matrix matrix;
    ProjectorKind kind = ProjectorKind::OntoKernel;
    Matrix source;
    double tolerance = 0.0;
};

namespace detail {

inline double effective_tolerance(const Matrix& m, std::optional<double> tol) {
    if (tol) return *tol;
    if (m.rows() == 0 || m.cols() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const double sigma_max = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    return default_rank_tolerance(m.rows(), m.cols(), sigma_max);
}

} // namespace detail

inline Projector projector_onto_kernel(const Matrix& m,
                                       std::optional<double> tol = std::nullopt) {
    const Matrix b = null_space_basis(m, tol);
    Matrix q;
    if (b.cols() == 0) {
        q = Matrix::Zero(m.cols(), m.cols());
    } else {
        q = b * b.transpose();
    }
    return {std::move(q), ProjectorKind::OntoKernel, m, detail::effective_tolerance(m, tol)};
}

inline Projector projector_along_kernel(const Matrix& m,
                                        std::optional<double> tol = std::nullopt) {
    Projector q = projector_onto_kernel(m, tol);
    Matrix p = Matrix::Identity(m.cols(), m.cols()) - q.matrix;
    return {std::move(p), ProjectorKind::AlongKernel, m, q.tolerance};
}

struct ShuffleStep {
    int step = 0;
    Index rank_e = 0;
    Index dimension = 0;
};

/// Result of the shuffle iteration on the linear constant-coefficient pencil
/// E x' + A x = f(t). `index` counts the shuffles needed until the leading
/// matrix becomes nonsingular (the differentiation index). The algebraic
/// constraints encountered along the way are kept: rows of `constraint_lhs`
/// constrain x through  constraint_lhs * x = sum_k constraint_rhs[k] * f^(k)(t),
/// which is what consistent initialization needs.
struct PencilIndexResult {
    int index = 0;
    bool regular = true;
    std::vector<ShuffleStep> shuffle_steps;
    Matrix constraint_lhs;
    std::vector<Matrix> constraint_rhs;
};

namespace detail {

inline bool pencil_regular_by_sampling(const Matrix& e, const Matrix& a,
                                       std::optional<double> tol) {
    // det(lambda E + A) is a polynomial of degree <= n; if it does not vanish
    // identically, at most n of the sampled points can be roots.
    static const double samples[] = {0.9322518465170437, 1.6180339887498949,
                                     2.4142135623730951, 3.1415926535897931,
                                     4.2360679774997898};
    const Index n = e.rows();
    for (double lambda : samples) {
        if (rank_svd(lambda * e + a, tol) == n) return true;
    }
    return false;
}

} // namespace detail

/// Shuffle-algorithm pencil index. Never throws on singular pencils; the
/// result carries regular = false instead.
inline PencilIndexResult try_pencil_index(const Matrix& e_in, const Matrix& a_in,
                                          std::optional<double> tol = std::nullopt) {
    check_finite(e_in, "pencil_index");
    check_finite(a_in, "pencil_index");
    if (e_in.rows() != e_in.cols() || a_in.rows() != a_in.cols() ||
        e_in.rows() != a_in.rows()) {
        throw ShapeMismatch("pencil_index: E and A must be square and of equal size");
    }

    PencilIndexResult result;
    const Index n = e_in.rows();
    if (n == 0) return result;

    if (!detail::pencil_regular_by_sampling(e_in, a_in, tol)) {
        result.regular = false;
        return result;
    }

    Matrix e = e_in;
    Matrix a = a_in;
    // rhs(t) = sum_k d[k] * f^(k)(t), tracked through row transforms so the
    // algebraic constraints stay expressed in the original forcing.
    std::vector<Matrix> d;
    d.push_back(Matrix::Identity(n, n));

    std::vector<Matrix> constraints_lhs;
    std::vector<std::vector<Matrix>> constraints_rhs;

    int steps = 0;
    while (true) {
        Eigen::JacobiSVD<Matrix> svd(e, Eigen::ComputeFullU);
        const Index r = detail::rank_from_singular_values(svd.singularValues(), n, n, tol);
        result.shuffle_steps.push_back({steps, r, n});
        if (r == n) break;
        if (steps > n) {
            result.regular = false;
            return result;
        }

        const Matrix ut = svd.matrixU().transpose();
        e = (ut * e).eval();
        a = (ut * a).eval();
        for (auto& dk : d) dk = (ut * dk).eval();
        e.bottomRows(n - r).setZero();

        // Rows r..n-1 are purely algebraic; record them, then differentiate.
        constraints_lhs.push_back(a.bottomRows(n - r));
        std::vector<Matrix> rhs_slices;
        rhs_slices.reserve(d.size());
        for (const auto& dk : d) rhs_slices.push_back(dk.bottomRows(n - r));
        constraints_rhs.push_back(std::move(rhs_slices));

        e.bottomRows(n - r) = a.bottomRows(n - r);
        a.bottomRows(n - r).setZero();
        d.push_back(Matrix::Zero(n, n));
        for (std::size_t k = d.size() - 1; k >= 1; --k) {
            d[k].bottomRows(n - r) = d[k - 1].bottomRows(n - r);
        }
        d[0].bottomRows(n - r).setZero();

        ++steps;
    }
    result.index = steps;

    // Stack the per-level constraints into one block.
    Index total = 0;
    for (const auto& c : constraints_lhs) total += c.rows();
    result.constraint_lhs.resize(total, n);
    const std::size_t max_order = d.size();
    result.constraint_rhs.assign(max_order, Matrix::Zero(total, n));
    Index row = 0;
    for (std::size_t level = 0; level < constraints_lhs.size(); ++level) {
        const Index rows = constraints_lhs[level].rows();
        result.constraint_lhs.middleRows(row, rows) = constraints_lhs[level];
        for (std::size_t k = 0; k < constraints_rhs[level].size(); ++k) {
            result.constraint_rhs[k].middleRows(row, rows) = constraints_rhs[level][k];
        }
        row += rows;
    }
    return result;
}

/// Throwing variant: a singular pencil is an error.
inline PencilIndexResult pencil_index(const Matrix& e, const Matrix& a,
                                      std::optional<double> tol = std::nullopt) {
    PencilIndexResult result = try_pencil_index(e, a, tol);
    if (!result.regular) {
        throw SingularPencil("pencil_index: det(lambda E + A) vanishes identically");
    }
    return result;
}

/// Least-squares solve via SVD (minimum-norm solution), shared by the
/// solution-form reductions.
inline Matrix pseudo_solve(const Matrix& m, const Matrix& rhs,
                           std::optional<double> tol = std::nullopt) {
    if (m.rows() != rhs.rows()) throw ShapeMismatch("pseudo_solve: row mismatch");
    if (m.cols() == 0) return Matrix::Zero(0, rhs.cols());
    if (m.rows() == 0) return Matrix::Zero(m.cols(), rhs.cols());
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double tau = tol ? *tol
                           : default_rank_tolerance(m.rows(), m.cols(),
                                                    svd.singularValues().size()
                                                        ? svd.singularValues()(0)
                                                        : 0.0);
    svd.setThreshold(Eigen::NumTraits<double>::epsilon());
    // Apply the explicit threshold by damping small singular values to zero.
    const Vector& sv = svd.singularValues();
    Vector inv = Vector::Zero(sv.size());
    for (Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > tau) inv(i) = 1.0 / sv(i);
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * rhs;
}

} // namespace daestruct
