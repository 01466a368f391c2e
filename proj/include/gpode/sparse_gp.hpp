#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "gpode/kernels.hpp"
#include "gpode/trajectory.hpp"

namespace gpode {

/// Regular equidistant grid descriptor: per-axis bounds and counts. A count
/// of 1 places the point at the axis midpoint.
struct GridSpec {
    Vector lo;
    Vector hi;
    std::vector<int> counts;

    int dim() const { return static_cast<int>(counts.size()); }
    void validate() const;
    Index total() const;
};

/// Inducing input locations. Points are stored at the kernel's input
/// dimension; grids built on a quotient section carry the grid descriptor.
struct InducingSet {
    Matrix points; // M x d
    std::optional<GridSpec> grid;

    Index size() const { return points.rows(); }
    Index dim() const { return points.cols(); }
    void validate() const;
};

/// Summary of a trained model; filled by the pipeline and serialized with
/// the model.
struct ModelMeta {
    std::optional<GroupAction> action;
    bool second_order = false;
    int state_dim = 0; // full state dimension seen by predict/rollout
    Index n_train = 0;
    Vector data_lo, data_hi; // bounding box of the training inputs
    std::vector<double> fitted_params;
    double final_nll = 0.0;
    std::uint64_t seed = 0;
    double lambda_noise_ratio = 0.0;
    std::string config_hash;
};

/// Trained FITC model: inducing inputs, hyperparameters, prediction weights
/// and cached covariance factors. Immutable after training and safe to share
/// across threads.
struct SparseFieldModel {
    MatrixKernel kernel;
    InducingSet inducing;
    double noise_std = 0.0;
    Vector weights;                     // (D*M), point-major layout
    PsdFactorization sigma_inv_factor;  // of K_ZZ + K_ZX Lambda^{-1} K_XZ
    PsdFactorization kzz_factor;        // of K_ZZ
    ModelMeta meta;
};

/// Intermediate quantities of the FITC assembly.
struct FitcTerms {
    Vector lambda;                      // (N*D) scalar diagonal of the FITC noise
    Matrix kzx;                         // (D*M) x (N*D)
    PsdFactorization sigma_inv_factor;
    PsdFactorization kzz_factor;
};

/// Assembles Lambda = diag(K_XX - Q_XX) + noise^2 I (negative deficits
/// clamped to zero), K_ZX, and the factorizations of K_ZZ and
/// Sigma^{-1} = K_ZZ + K_ZX Lambda^{-1} K_XZ. Only the D x D diagonal blocks
/// of K_XX are ever formed.
FitcTerms fitc_assemble(const DerivativeDataset& data, const MatrixKernel& kernel,
                        const InducingSet& z, double noise_std);

/// FITC negative log marginal likelihood
///   Ydot^T (Q_XX + Lambda)^{-1} Ydot + log det(Q_XX + Lambda),
/// evaluated through Sigma so the (N*D)^2 matrix is never materialized.
double fitc_nll(const DerivativeDataset& data, const MatrixKernel& kernel,
                const InducingSet& z, double noise_std);

/// Computes and stores the prediction weights Sigma K_ZX Lambda^{-1} Ydot.
SparseFieldModel fitc_train_weights(const DerivativeDataset& data, const MatrixKernel& kernel,
                                    const InducingSet& z, double noise_std);

/// Predictive mean and covariance at a single state. The covariance is
/// symmetrized and negative eigenvalues are clamped to zero.
std::pair<Vector, Matrix> fitc_predict(const SparseFieldModel& model, const Vector& x);
/// Mean-only fast path for rollouts.
Vector fitc_predict_mean(const SparseFieldModel& model, const Vector& x);
/// FITC posterior cross-covariance between two states.
Matrix fitc_cross_cov(const SparseFieldModel& model, const Vector& a, const Vector& b);

/// K_{Z,x}: the (D*M) x D stack of kernel blocks against the inducing set.
Matrix kzx_block(const MatrixKernel& kernel, const InducingSet& z, const Vector& x);

/// Scalar kernel c(x,x') standing in for a matrix kernel whose blocks are
/// c * I_D on the point sets involved.
using ScalarKernel = std::function<double(const Vector&, const Vector&)>;

/// FITC likelihood through the Kronecker identity K = C (x) I_D; numerically
/// equivalent to fitc_nll when the block structure holds, at O(M^3) cost.
double fitc_nll_kron(const DerivativeDataset& data, const ScalarKernel& c, int output_dim,
                     const InducingSet& z, double noise_std);

/// Kronecker-route training; produces the same model as fitc_train_weights
/// (factors expanded as L (x) I_D) for kernels with c * I_D blocks.
SparseFieldModel fitc_train_weights_kron(const DerivativeDataset& data, const MatrixKernel& kernel,
                                         const ScalarKernel& c, const InducingSet& z,
                                         double noise_std);

} // namespace gpode
