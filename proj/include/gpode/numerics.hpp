#pragma once

#include <Eigen/Dense>

#include "gpode/errors.hpp"

namespace gpode {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Cholesky-style factorization of a symmetric positive (semi-)definite
/// matrix, possibly stabilized by a diagonal jitter:
///   lower * lower^T == A + jitter_used * I.
struct PsdFactorization {
    Matrix lower;       ///< lower-triangular factor
    double jitter_used = 0.0;
    double log_det = 0.0;

    Index dim() const { return lower.rows(); }
};

/// Factorizes A + jitter*I with an escalating jitter policy.
///
/// The first attempt uses exactly `base_jitter`. On failure the jitter is
/// raised to max(base_jitter, 1e-12 * mean |diag A|) and doubled on each of
/// up to 10 further attempts.
///
/// Throws DimensionMismatch if A is not square, NotPositiveDefinite if all
/// escalations fail. The lower triangle of A is used; the strict upper
/// triangle is ignored.
PsdFactorization factorize_psd(const Matrix& a, double base_jitter = 0.0);

/// Solves (A + jitter*I) X = B using a factorization from factorize_psd.
/// Throws DimensionMismatch if B has the wrong row count.
Matrix solve_psd(const PsdFactorization& f, const Matrix& b);
Vector solve_psd(const PsdFactorization& f, const Vector& b);

/// Standard Kronecker product; result is (a.rows*b.rows) x (a.cols*b.cols).
Matrix kron(const Matrix& a, const Matrix& b);

} // namespace gpode
