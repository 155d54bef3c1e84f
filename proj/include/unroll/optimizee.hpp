#pragma once

// Optimizee families solved by the unrolled networks: least squares and
// LASSO sparse coding, plus the reference solvers used to label data.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace unroll {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ProblemKind : std::uint8_t { Quadratic = 0, Lasso = 1 };

inline const char* to_string(ProblemKind kind)
{
    return kind == ProblemKind::Quadratic ? "quadratic" : "lasso";
}

/// An optimizee instance. `mat` is A (quadratic) or the dictionary D (lasso),
/// rows = signal dimension p, cols = code dimension d. `nu` upper-bounds the
/// largest eigenvalue of matᵀmat and sets the ISTA step 1/nu.
template <class Scalar>
struct BasicProblemSpec {
    using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    ProblemKind kind = ProblemKind::Lasso;
    MatrixType mat;
    Scalar alpha = 0;
    Scalar nu = 1;

    Index signal_dim() const { return mat.rows(); }
    Index code_dim() const { return mat.cols(); }
    Scalar effective_alpha() const { return kind == ProblemKind::Lasso ? alpha : Scalar(0); }
};

using ProblemSpec = BasicProblemSpec<double>;

namespace detail {

inline void require(bool ok, const char* what)
{
    if (!ok) throw std::invalid_argument(what);
}

template <class Scalar, class DerivedY, class DerivedX>
void check_dims(const BasicProblemSpec<Scalar>& spec, const Eigen::MatrixBase<DerivedY>& y,
                const Eigen::MatrixBase<DerivedX>& x)
{
    if (y.size() != spec.code_dim() || x.size() != spec.signal_dim()) {
        throw std::invalid_argument("dimension mismatch: code " + std::to_string(y.size()) + " vs "
                                    + std::to_string(spec.code_dim()) + ", signal "
                                    + std::to_string(x.size()) + " vs "
                                    + std::to_string(spec.signal_dim()));
    }
}

} // namespace detail

/// Largest eigenvalue of matᵀmat by power iteration (at most 200 sweeps,
/// stops once the Rayleigh quotient changes by less than 1e-10 relative).
template <class Derived>
typename Derived::Scalar largest_gram_eigenvalue(const Eigen::MatrixBase<Derived>& mat)
{
    using Scalar = typename Derived::Scalar;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const Index d = mat.cols();
    if (d == 0 || mat.rows() == 0) return Scalar(0);

    // Fixed pseudo-random start keeps the result deterministic while avoiding
    // accidental orthogonality to the dominant eigenvector.
    std::mt19937_64 gen(0x5eedULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(d);
    for (Index i = 0; i < d; ++i) v(i) = Scalar(normal(gen));
    v.normalize();

    Scalar lambda = 0;
    for (int it = 0; it < 200; ++it) {
        Vec w = mat.transpose() * (mat * v);
        const Scalar next = v.dot(w);
        const Scalar norm = w.norm();
        if (norm == Scalar(0)) return Scalar(0);
        v = w / norm;
        const bool settled = it > 0 && std::abs(next - lambda) <= Scalar(1e-10) * std::abs(next);
        lambda = next;
        if (settled) break;
    }
    return lambda;
}

/// Builds a spec with nu = 1.01 × λ_max(matᵀmat).
template <class Scalar>
BasicProblemSpec<Scalar> make_problem(ProblemKind kind,
                                      typename BasicProblemSpec<Scalar>::MatrixType mat,
                                      Scalar alpha)
{
    detail::require(mat.rows() >= 1 && mat.cols() >= 1, "problem matrix must be non-empty");
    detail::require(alpha >= Scalar(0), "alpha must be nonnegative");
    BasicProblemSpec<Scalar> spec;
    spec.kind = kind;
    spec.alpha = alpha;
    const Scalar lmax = largest_gram_eigenvalue(mat);
    spec.nu = lmax > Scalar(0) ? Scalar(1.01) * lmax : Scalar(1);
    spec.mat = std::move(mat);
    return spec;
}

inline ProblemSpec make_problem(ProblemKind kind, Matrix mat, double alpha)
{
    return make_problem<double>(kind, std::move(mat), alpha);
}

/// Builds a spec with a caller-supplied nu, rejecting values more than 1%
/// below the power-iteration estimate of λ_max(matᵀmat).
template <class Scalar>
BasicProblemSpec<Scalar> make_problem(ProblemKind kind,
                                      typename BasicProblemSpec<Scalar>::MatrixType mat,
                                      Scalar alpha, Scalar nu)
{
    detail::require(mat.rows() >= 1 && mat.cols() >= 1, "problem matrix must be non-empty");
    detail::require(alpha >= Scalar(0), "alpha must be nonnegative");
    detail::require(nu > Scalar(0), "nu must be positive");
    const Scalar lmax = largest_gram_eigenvalue(mat);
    if (nu < Scalar(0.99) * lmax) {
        throw std::invalid_argument("nu=" + std::to_string(double(nu))
                                    + " is below the largest eigenvalue "
                                    + std::to_string(double(lmax)));
    }
    BasicProblemSpec<Scalar> spec;
    spec.kind = kind;
    spec.mat = std::move(mat);
    spec.alpha = alpha;
    spec.nu = nu;
    return spec;
}

inline ProblemSpec make_problem(ProblemKind kind, Matrix mat, double alpha, double nu)
{
    return make_problem<double>(kind, std::move(mat), alpha, nu);
}

// ---------------------------------------------------------------------------
// Objectives and (sub)gradients

/// ½‖x − Ay‖².
template <class Scalar, class DerivedY, class DerivedX>
Scalar quad_objective(const Eigen::MatrixBase<DerivedY>& y, const Eigen::MatrixBase<DerivedX>& x,
                      const BasicProblemSpec<Scalar>& spec)
{
    detail::check_dims(spec, y, x);
    return Scalar(0.5) * (x - spec.mat * y).squaredNorm();
}

/// Aᵀ(Ay − x).
template <class Scalar, class DerivedY, class DerivedX>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> quad_gradient(const Eigen::MatrixBase<DerivedY>& y,
                                                       const Eigen::MatrixBase<DerivedX>& x,
                                                       const BasicProblemSpec<Scalar>& spec)
{
    detail::check_dims(spec, y, x);
    return spec.mat.transpose() * (spec.mat * y - x);
}

/// ½‖x − Dy‖² + α‖y‖₁.
template <class Scalar, class DerivedY, class DerivedX>
Scalar lasso_objective(const Eigen::MatrixBase<DerivedY>& y, const Eigen::MatrixBase<DerivedX>& x,
                       const BasicProblemSpec<Scalar>& spec)
{
    detail::check_dims(spec, y, x);
    return Scalar(0.5) * (x - spec.mat * y).squaredNorm() + spec.alpha * y.template lpNorm<1>();
}

/// Minimum-norm element of the LASSO subdifferential at y.
template <class Scalar, class DerivedY, class DerivedX>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lasso_subgradient(const Eigen::MatrixBase<DerivedY>& y,
                                                           const Eigen::MatrixBase<DerivedX>& x,
                                                           const BasicProblemSpec<Scalar>& spec)
{
    detail::check_dims(spec, y, x);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g = spec.mat.transpose() * (spec.mat * y - x);
    const Scalar a = spec.alpha;
    for (Index i = 0; i < g.size(); ++i) {
        if (y(i) > Scalar(0)) {
            g(i) += a;
        } else if (y(i) < Scalar(0)) {
            g(i) -= a;
        } else {
            // g_i + a·s with s ∈ [−1, 1]: closest point to zero.
            const Scalar mag = std::abs(g(i)) - a;
            g(i) = mag > Scalar(0) ? std::copysign(mag, g(i)) : Scalar(0);
        }
    }
    return g;
}

/// Objective of whichever family `spec` describes.
template <class Scalar, class DerivedY, class DerivedX>
Scalar objective(const Eigen::MatrixBase<DerivedY>& y, const Eigen::MatrixBase<DerivedX>& x,
                 const BasicProblemSpec<Scalar>& spec)
{
    return spec.kind == ProblemKind::Lasso ? lasso_objective(y, x, spec)
                                           : quad_objective(y, x, spec);
}

/// Gradient (quadratic) or minimum-norm subgradient (lasso).
template <class Scalar, class DerivedY, class DerivedX>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> objective_gradient(const Eigen::MatrixBase<DerivedY>& y,
                                                            const Eigen::MatrixBase<DerivedX>& x,
                                                            const BasicProblemSpec<Scalar>& spec)
{
    return spec.kind == ProblemKind::Lasso ? lasso_subgradient(y, x, spec)
                                           : quad_gradient(y, x, spec);
}

// ---------------------------------------------------------------------------
// Soft thresholding

/// sign(v)·max(|v| − θ, 0) with a common threshold.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>
soft_threshold(const Eigen::MatrixBase<Derived>& v, typename Derived::Scalar theta)
{
    using Scalar = typename Derived::Scalar;
    if (!(theta >= Scalar(0))) throw std::invalid_argument("soft_threshold: negative threshold");
    return v.unaryExpr([theta](Scalar vi) {
        const Scalar mag = std::abs(vi) - theta;
        return mag > Scalar(0) ? std::copysign(mag, vi) : Scalar(0);
    });
}

/// Per-coordinate thresholds.
template <class DerivedV, class DerivedT>
Eigen::Matrix<typename DerivedV::Scalar, Eigen::Dynamic, 1>
soft_threshold(const Eigen::MatrixBase<DerivedV>& v, const Eigen::MatrixBase<DerivedT>& theta)
{
    using Scalar = typename DerivedV::Scalar;
    if (v.size() != theta.size()) throw std::invalid_argument("soft_threshold: size mismatch");
    if (!(theta.array() >= Scalar(0)).all())
        throw std::invalid_argument("soft_threshold: negative threshold");
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = v;
    for (Index i = 0; i < out.size(); ++i) {
        const Scalar mag = std::abs(out(i)) - theta(i);
        out(i) = mag > Scalar(0) ? std::copysign(mag, out(i)) : Scalar(0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reference solvers

/// One proximal-gradient step S_{α/ν}(y − (1/ν)Dᵀ(Dy − x)).
template <class Scalar, class DerivedY, class DerivedX>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ista_step(const Eigen::MatrixBase<DerivedY>& y,
                                                   const Eigen::MatrixBase<DerivedX>& x,
                                                   const BasicProblemSpec<Scalar>& spec)
{
    detail::check_dims(spec, y, x);
    const Scalar step = Scalar(1) / spec.nu;
    return soft_threshold(y - step * (spec.mat.transpose() * (spec.mat * y - x)),
                          spec.effective_alpha() * step);
}

template <class Scalar>
struct IstaResult {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y;
    int iters = 0;
    Scalar residual = 0; // fixed-point residual ‖y − T(y)‖ at the returned iterate
};

/// ISTA from y = 0 until ‖y_k − T(y_k)‖ ≤ tol or max_iters steps.
template <class Scalar, class DerivedX>
IstaResult<Scalar> ista_solve(const Eigen::MatrixBase<DerivedX>& x,
                              const BasicProblemSpec<Scalar>& spec, int max_iters, Scalar tol)
{
    detail::require(max_iters >= 1, "ista_solve: max_iters must be >= 1");
    detail::require(tol > Scalar(0), "ista_solve: tol must be positive");
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    Vec y = Vec::Zero(spec.code_dim());
    Vec next = ista_step(y, x, spec);

    IstaResult<Scalar> out;
    for (int k = 1; k <= max_iters; ++k) {
        y.swap(next);
        next = ista_step(y, x, spec);
        out.iters = k;
        out.residual = (next - y).norm();
        if (out.residual <= tol) break;
    }
    out.y = std::move(y);
    return out;
}

/// Minimum-norm least-squares solution of min ‖x − Ay‖.
template <class Scalar, class DerivedX>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> quad_solve(const Eigen::MatrixBase<DerivedX>& x,
                                                    const BasicProblemSpec<Scalar>& spec)
{
    if (x.size() != spec.signal_dim()) throw std::invalid_argument("quad_solve: dimension mismatch");
    return spec.mat.completeOrthogonalDecomposition().solve(x);
}

/// Global LASSO minimizer by enumerating every (support, sign) pattern and
/// solving the KKT system on each. Exact but exponential; refuses d > 12.
template <class Scalar, class DerivedX>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lasso_oracle_small(const Eigen::MatrixBase<DerivedX>& x,
                                                            const BasicProblemSpec<Scalar>& spec)
{
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const Index d = spec.code_dim();
    if (d > 12) throw std::invalid_argument("lasso_oracle_small: d > 12 is not enumerable");
    if (x.size() != spec.signal_dim())
        throw std::invalid_argument("lasso_oracle_small: dimension mismatch");

    const Scalar alpha = spec.effective_alpha();
    Vec best = Vec::Zero(d);
    Scalar best_obj = lasso_objective(best, x, spec);

    // Each coordinate is 0, + or −: base-3 counter over all patterns.
    std::vector<int> state(static_cast<std::size_t>(d), 0);
    std::vector<Index> support;
    Vec signs;
    while (true) {
        Index pos = 0;
        while (pos < d && state[pos] == 2) state[pos++] = 0;
        if (pos == d) break;
        ++state[pos];

        support.clear();
        for (Index i = 0; i < d; ++i)
            if (state[i] != 0) support.push_back(i);
        const Index k = Index(support.size());
        if (k > spec.signal_dim()) continue; // D_S has a null space
        Mat ds(spec.signal_dim(), k);
        signs.resize(k);
        for (Index j = 0; j < k; ++j) {
            ds.col(j) = spec.mat.col(support[j]);
            signs(j) = state[support[j]] == 1 ? Scalar(1) : Scalar(-1);
        }
        const Mat gram = ds.transpose() * ds;
        Eigen::LDLT<Mat> ldlt(gram);
        if (ldlt.info() != Eigen::Success) continue;
        const Vec rhs = ds.transpose() * x - alpha * signs;
        const Vec ys = ldlt.solve(rhs);
        if (!((gram * ys - rhs).norm() <= Scalar(1e-9) * (Scalar(1) + rhs.norm()))) continue;
        bool consistent = true;
        for (Index j = 0; j < k && consistent; ++j) consistent = ys(j) * signs(j) > Scalar(0);
        if (!consistent) continue;

        Vec cand = Vec::Zero(d);
        for (Index j = 0; j < k; ++j) cand(support[j]) = ys(j);
        const Scalar obj = lasso_objective(cand, x, spec);
        if (obj < best_obj) {
            best_obj = obj;
            best = std::move(cand);
        }
    }
    return best;
}

} // namespace unroll
