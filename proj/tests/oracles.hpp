#pragma once

// Test-only reference implementations, independent of the library's sparse
// path: a dense matrix-kernel GP posterior/likelihood and a brute-force FITC
// likelihood that materializes the full (N*D) x (N*D) matrices.

#include <utility>

#include <Eigen/Dense>

#include "gpode/kernels.hpp"
#include "gpode/sparse_gp.hpp"
#include "gpode/trajectory.hpp"

namespace gpode::oracle {

inline Matrix dense_gram(const MatrixKernel& k, const Matrix& a, const Matrix& b) {
    const Index d = k.output_dim();
    Matrix out(a.rows() * d, b.rows() * d);
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < b.rows(); ++j) {
            out.block(i * d, j * d, d, d) = k.eval(a.row(i), b.row(j));
        }
    }
    return out;
}

inline Vector flatten(const Matrix& rows) {
    Vector y(rows.rows() * rows.cols());
    for (Index i = 0; i < rows.rows(); ++i) {
        y.segment(i * rows.cols(), rows.cols()) = rows.row(i);
    }
    return y;
}

/// Exact dense GP posterior at a single input.
inline std::pair<Vector, Matrix> dense_posterior(const DerivativeDataset& data,
                                                 const MatrixKernel& k, const Vector& x,
                                                 double noise_std) {
    const Index d = k.output_dim();
    Matrix kxx = dense_gram(k, data.inputs, data.inputs);
    kxx.diagonal().array() += noise_std * noise_std;
    const Eigen::LLT<Matrix> llt(kxx);
    const Vector y = flatten(data.targets);

    Matrix kxs(data.inputs.rows() * d, d);
    for (Index i = 0; i < data.inputs.rows(); ++i) {
        kxs.block(i * d, 0, d, d) = k.eval(data.inputs.row(i), x);
    }
    const Vector mean = kxs.transpose() * llt.solve(y);
    const Matrix cov = k.eval(x, x) - kxs.transpose() * llt.solve(kxs);
    return {mean, cov};
}

/// Exact dense negative log marginal likelihood (constants dropped).
inline double dense_nll(const DerivativeDataset& data, const MatrixKernel& k, double noise_std) {
    Matrix kxx = dense_gram(k, data.inputs, data.inputs);
    kxx.diagonal().array() += noise_std * noise_std;
    const Eigen::LLT<Matrix> llt(kxx);
    const Vector y = flatten(data.targets);
    double log_det = 0.0;
    const Matrix l = llt.matrixL();
    for (Index i = 0; i < l.rows(); ++i) log_det += 2.0 * std::log(l(i, i));
    return y.dot(llt.solve(y)) + log_det;
}

/// Brute-force FITC likelihood: forms Q_XX + Lambda as a dense matrix.
inline double fitc_nll_bruteforce(const DerivativeDataset& data, const MatrixKernel& k,
                                  const InducingSet& z, double noise_std) {
    const Matrix kzz = dense_gram(k, z.points, z.points);
    const Matrix kxz = dense_gram(k, data.inputs, z.points);
    const Matrix q = kxz * kzz.ldlt().solve(kxz.transpose());
    Matrix kxx = dense_gram(k, data.inputs, data.inputs);

    Matrix cov = q;
    for (Index i = 0; i < cov.rows(); ++i) {
        cov(i, i) += std::max(kxx(i, i) - q(i, i), 0.0) + noise_std * noise_std;
    }
    const Eigen::LLT<Matrix> llt(cov);
    const Vector y = flatten(data.targets);
    double log_det = 0.0;
    const Matrix l = llt.matrixL();
    for (Index i = 0; i < l.rows(); ++i) log_det += 2.0 * std::log(l(i, i));
    return y.dot(llt.solve(y)) + log_det;
}

} // namespace gpode::oracle
