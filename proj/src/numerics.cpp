#include "gpode/numerics.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace gpode {

namespace {

// Attempts a single Cholesky factorization of A + jitter*I.
bool try_factorize(const Matrix& a, double jitter, PsdFactorization& out) {
    Matrix shifted = a;
    if (jitter != 0.0) {
        shifted.diagonal().array() += jitter;
    }
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) {
        return false;
    }
    Matrix lower = llt.matrixL();
    double log_det = 0.0;
    for (Index i = 0; i < lower.rows(); ++i) {
        const double d = lower(i, i);
        if (!(d > 0.0) || !std::isfinite(d)) {
            return false;
        }
        log_det += std::log(d);
    }
    out.lower = std::move(lower);
    out.jitter_used = jitter;
    out.log_det = 2.0 * log_det;
    return true;
}

} // namespace

PsdFactorization factorize_psd(const Matrix& a, double base_jitter) {
    if (a.rows() != a.cols()) {
        throw DimensionMismatch("factorize_psd: matrix is not square (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ")");
    }
    if (a.rows() == 0) {
        throw DimensionMismatch("factorize_psd: empty matrix");
    }

    PsdFactorization f;
    if (try_factorize(a, base_jitter, f)) {
        return f;
    }

    // Escalation ladder: floor the jitter at a fraction of the diagonal scale,
    // then double. base_jitter == 0 on a zero-diagonal matrix cannot escalate.
    const double diag_scale = a.diagonal().cwiseAbs().mean();
    double jitter = std::max(base_jitter, 1e-12 * diag_scale);
    for (int attempt = 0; attempt < 10 && jitter > 0.0; ++attempt) {
        if (try_factorize(a, jitter, f)) {
            return f;
        }
        jitter *= 2.0;
    }
    throw NotPositiveDefinite("factorize_psd: matrix not positive definite after jitter escalation");
}

Matrix solve_psd(const PsdFactorization& f, const Matrix& b) {
    if (b.rows() != f.lower.rows()) {
        throw DimensionMismatch("solve_psd: rhs has " + std::to_string(b.rows()) +
                                " rows, factorization has dimension " + std::to_string(f.lower.rows()));
    }
    Matrix x = f.lower.triangularView<Eigen::Lower>().solve(b);
    f.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

Vector solve_psd(const PsdFactorization& f, const Vector& b) {
    Matrix x = solve_psd(f, Matrix(b));
    return Vector(x.col(0));
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

} // namespace gpode
