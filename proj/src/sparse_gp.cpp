#include "gpode/sparse_gp.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace gpode {

void GridSpec::validate() const {
    const Index d = static_cast<Index>(counts.size());
    if (d == 0) {
        throw InvalidBounds("GridSpec: no axes");
    }
    if (lo.size() != d || hi.size() != d) {
        throw InvalidBounds("GridSpec: bounds do not match axis count");
    }
    for (Index i = 0; i < d; ++i) {
        if (counts[static_cast<size_t>(i)] < 1) {
            throw InvalidBounds("GridSpec: per-axis count must be >= 1");
        }
        if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || !(hi[i] >= lo[i])) {
            throw InvalidBounds("GridSpec: invalid axis bounds");
        }
    }
}

Index GridSpec::total() const {
    Index m = 1;
    for (int c : counts) m *= c;
    return m;
}

void InducingSet::validate() const {
    if (points.rows() < 1) {
        throw Error("InducingSet: at least one inducing point required");
    }
    for (Index i = 0; i < points.rows(); ++i) {
        for (Index j = i + 1; j < points.rows(); ++j) {
            if ((points.row(i) - points.row(j)).squaredNorm() == 0.0) {
                throw Error("InducingSet: inducing points must be pairwise distinct");
            }
        }
    }
}

namespace {

void check_training_inputs(const DerivativeDataset& data, const MatrixKernel& kernel,
                           const InducingSet& z, double noise_std) {
    if (data.size() == 0) {
        throw EmptyDataset("fitc: empty training dataset");
    }
    data.validate();
    z.validate();
    if (data.input_dim() != kernel.input_dim() || z.dim() != kernel.input_dim()) {
        throw DimensionMismatch("fitc: input dimension mismatch between data, kernel and Z");
    }
    if (data.output_dim() != kernel.output_dim()) {
        throw DimensionMismatch("fitc: target dimension does not match kernel output");
    }
    if (!(noise_std > 0.0)) {
        throw Error("fitc: noise_std must be positive");
    }
}

Matrix kernel_gram(const MatrixKernel& kernel, const Matrix& a, const Matrix& b, bool symmetric) {
    const int d = kernel.output_dim();
    Matrix out(a.rows() * d, b.rows() * d);
    for (Index i = 0; i < a.rows(); ++i) {
        const Index j0 = symmetric ? i : 0;
        for (Index j = j0; j < b.rows(); ++j) {
            const Matrix block = kernel.eval(a.row(i), b.row(j));
            out.block(i * d, j * d, d, d) = block;
            if (symmetric && j != i) {
                out.block(j * d, i * d, d, d) = block.transpose();
            }
        }
    }
    return out;
}

Vector flatten_targets(const DerivativeDataset& data) {
    const Index n = data.size();
    const Index d = data.output_dim();
    Vector y(n * d);
    for (Index i = 0; i < n; ++i) {
        y.segment(i * d, d) = data.targets.row(i);
    }
    return y;
}

} // namespace

Matrix kzx_block(const MatrixKernel& kernel, const InducingSet& z, const Vector& x) {
    const int d = kernel.output_dim();
    Matrix out(z.size() * d, d);
    for (Index i = 0; i < z.size(); ++i) {
        out.block(i * d, 0, d, d) = kernel.eval(z.points.row(i), x);
    }
    return out;
}

FitcTerms fitc_assemble(const DerivativeDataset& data, const MatrixKernel& kernel,
                        const InducingSet& z, double noise_std) {
    check_training_inputs(data, kernel, z, noise_std);
    const Index n = data.size();
    const int d = kernel.output_dim();

    FitcTerms terms;
    Matrix kzz = kernel_gram(kernel, z.points, z.points, true);
    terms.kzz_factor = factorize_psd(kzz, 0.0);
    terms.kzx = kernel_gram(kernel, z.points, data.inputs, false);

    // Scalar diagonal of K_XX - Q_XX, clamped at zero, plus the noise.
    const Matrix v = solve_psd(terms.kzz_factor, terms.kzx); // (DM) x (ND)
    terms.lambda.resize(n * d);
    for (Index i = 0; i < n; ++i) {
        const Matrix k_block = kernel.eval(data.inputs.row(i), data.inputs.row(i));
        for (int a = 0; a < d; ++a) {
            const Index col = i * d + a;
            const double q_diag = terms.kzx.col(col).dot(v.col(col));
            const double deficit = std::max(k_block(a, a) - q_diag, 0.0);
            terms.lambda[col] = deficit + noise_std * noise_std;
        }
    }

    Matrix sigma_inv = kzz;
    sigma_inv.noalias() +=
        terms.kzx * terms.lambda.cwiseInverse().asDiagonal() * terms.kzx.transpose();
    terms.sigma_inv_factor = factorize_psd(sigma_inv, 0.0);
    return terms;
}

double fitc_nll(const DerivativeDataset& data, const MatrixKernel& kernel,
                const InducingSet& z, double noise_std) {
    const FitcTerms terms = fitc_assemble(data, kernel, z, noise_std);
    const Vector y = flatten_targets(data);
    const Vector lam_inv_y = y.cwiseQuotient(terms.lambda);
    const Vector r = terms.kzx * lam_inv_y;

    const double quad = y.dot(lam_inv_y) - r.dot(solve_psd(terms.sigma_inv_factor, r));
    const double logdet = terms.sigma_inv_factor.log_det - terms.kzz_factor.log_det +
                          terms.lambda.array().log().sum();
    return quad + logdet;
}

SparseFieldModel fitc_train_weights(const DerivativeDataset& data, const MatrixKernel& kernel,
                                    const InducingSet& z, double noise_std) {
    FitcTerms terms = fitc_assemble(data, kernel, z, noise_std);
    const Vector y = flatten_targets(data);
    const Vector r = terms.kzx * y.cwiseQuotient(terms.lambda);

    SparseFieldModel model;
    model.kernel = kernel;
    model.inducing = z;
    model.noise_std = noise_std;
    model.weights = solve_psd(terms.sigma_inv_factor, r);
    model.sigma_inv_factor = std::move(terms.sigma_inv_factor);
    model.kzz_factor = std::move(terms.kzz_factor);
    model.meta.n_train = data.size();
    model.meta.state_dim = kernel.output_dim();
    if (data.size() > 0) {
        model.meta.data_lo = data.inputs.colwise().minCoeff();
        model.meta.data_hi = data.inputs.colwise().maxCoeff();
    }
    return model;
}

Vector fitc_predict_mean(const SparseFieldModel& model, const Vector& x) {
    const Matrix kzx = kzx_block(model.kernel, model.inducing, x);
    return kzx.transpose() * model.weights;
}

std::pair<Vector, Matrix> fitc_predict(const SparseFieldModel& model, const Vector& x) {
    const Matrix kzx = kzx_block(model.kernel, model.inducing, x); // (DM) x D
    Vector mean = kzx.transpose() * model.weights;

    Matrix cov = model.kernel.eval(x, x);
    cov.noalias() -= kzx.transpose() * solve_psd(model.kzz_factor, kzx);
    cov.noalias() += kzx.transpose() * solve_psd(model.sigma_inv_factor, kzx);
    cov = 0.5 * (cov + cov.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Vector clamped = eig.eigenvalues().cwiseMax(0.0);
    cov = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
    return {std::move(mean), Matrix(0.5 * (cov + cov.transpose()))};
}

Matrix fitc_cross_cov(const SparseFieldModel& model, const Vector& a, const Vector& b) {
    const Matrix kza = kzx_block(model.kernel, model.inducing, a);
    const Matrix kzb = kzx_block(model.kernel, model.inducing, b);
    Matrix cov = model.kernel.eval(a, b);
    cov.noalias() -= kza.transpose() * solve_psd(model.kzz_factor, kzb);
    cov.noalias() += kza.transpose() * solve_psd(model.sigma_inv_factor, kzb);
    return cov;
}

namespace {

struct KronTerms {
    Vector lambda_scalar; // per data point
    Matrix czx;           // M x N
    PsdFactorization s_factor;   // of C_ZZ + C_ZX Lambda^{-1} C_XZ
    PsdFactorization czz_factor; // of C_ZZ
};

KronTerms kron_assemble(const DerivativeDataset& data, const ScalarKernel& c,
                        const InducingSet& z, double noise_std) {
    if (data.size() == 0) {
        throw EmptyDataset("fitc: empty training dataset");
    }
    data.validate();
    z.validate();
    if (!(noise_std > 0.0)) {
        throw Error("fitc: noise_std must be positive");
    }
    const Index n = data.size();
    const Index m = z.size();

    KronTerms terms;
    Matrix czz(m, m);
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j <= i; ++j) {
            czz(i, j) = c(z.points.row(i), z.points.row(j));
            czz(j, i) = czz(i, j);
        }
    }
    terms.czz_factor = factorize_psd(czz, 0.0);

    terms.czx.resize(m, n);
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < n; ++j) {
            terms.czx(i, j) = c(z.points.row(i), data.inputs.row(j));
        }
    }

    const Matrix v = solve_psd(terms.czz_factor, terms.czx);
    terms.lambda_scalar.resize(n);
    for (Index j = 0; j < n; ++j) {
        const double k_diag = c(data.inputs.row(j), data.inputs.row(j));
        const double deficit = std::max(k_diag - terms.czx.col(j).dot(v.col(j)), 0.0);
        terms.lambda_scalar[j] = deficit + noise_std * noise_std;
    }

    Matrix s = czz;
    s.noalias() += terms.czx * terms.lambda_scalar.cwiseInverse().asDiagonal() * terms.czx.transpose();
    terms.s_factor = factorize_psd(s, 0.0);
    return terms;
}

} // namespace

double fitc_nll_kron(const DerivativeDataset& data, const ScalarKernel& c, int output_dim,
                     const InducingSet& z, double noise_std) {
    if (data.output_dim() != output_dim) {
        throw DimensionMismatch("fitc_nll_kron: target dimension mismatch");
    }
    const KronTerms terms = kron_assemble(data, c, z, noise_std);
    const Matrix y = data.targets; // N x D
    const Matrix lam_inv_y = terms.lambda_scalar.cwiseInverse().asDiagonal() * y;
    const Matrix r = terms.czx * lam_inv_y; // M x D

    double quad = 0.0;
    const Matrix sr = solve_psd(terms.s_factor, r);
    for (Index a = 0; a < y.cols(); ++a) {
        quad += y.col(a).dot(lam_inv_y.col(a)) - r.col(a).dot(sr.col(a));
    }
    const double logdet_scalar = terms.s_factor.log_det - terms.czz_factor.log_det +
                                 terms.lambda_scalar.array().log().sum();
    return quad + static_cast<double>(output_dim) * logdet_scalar;
}

SparseFieldModel fitc_train_weights_kron(const DerivativeDataset& data, const MatrixKernel& kernel,
                                         const ScalarKernel& c, const InducingSet& z,
                                         double noise_std) {
    if (data.output_dim() != kernel.output_dim()) {
        throw DimensionMismatch("fitc_train_weights_kron: target dimension mismatch");
    }
    const int d = kernel.output_dim();
    const KronTerms terms = kron_assemble(data, c, z, noise_std);
    const Matrix lam_inv_y = terms.lambda_scalar.cwiseInverse().asDiagonal() * data.targets;
    const Matrix r = terms.czx * lam_inv_y;      // M x D
    const Matrix w_mat = solve_psd(terms.s_factor, r);

    SparseFieldModel model;
    model.kernel = kernel;
    model.inducing = z;
    model.noise_std = noise_std;
    model.weights.resize(z.size() * d);
    for (Index i = 0; i < z.size(); ++i) {
        model.weights.segment(i * d, d) = w_mat.row(i);
    }

    const Matrix eye = Matrix::Identity(d, d);
    model.sigma_inv_factor.lower = kron(terms.s_factor.lower, eye);
    model.sigma_inv_factor.jitter_used = terms.s_factor.jitter_used;
    model.sigma_inv_factor.log_det = d * terms.s_factor.log_det;
    model.kzz_factor.lower = kron(terms.czz_factor.lower, eye);
    model.kzz_factor.jitter_used = terms.czz_factor.jitter_used;
    model.kzz_factor.log_det = d * terms.czz_factor.log_det;

    model.meta.n_train = data.size();
    model.meta.state_dim = d;
    model.meta.data_lo = data.inputs.colwise().minCoeff();
    model.meta.data_hi = data.inputs.colwise().maxCoeff();
    return model;
}

} // namespace gpode
