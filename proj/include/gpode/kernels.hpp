#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gpode/numerics.hpp"

namespace gpode {

/// Hyperparameters of the squared-exponential kernel
///   k(x,x') = signal_std^2 * exp(-1/2 sum_j (x_j - x'_j)^2 / l_j^2).
struct SEHyperparams {
    double signal_std = 1.0;
    Vector lengthscales; // one per input dimension, all > 0

    int input_dim() const { return static_cast<int>(lengthscales.size()); }
    void validate() const;
};

/// Squared-exponential covariance between two points.
double se_eval(const Vector& x, const Vector& xp, const SEHyperparams& phi);

/// Mixed time derivative d^a/dt^a d^b/dt'^b k(t,t') of the 1-D SE kernel,
/// closed form, orders 0..2 in each argument.
double se_time_deriv(double t, double tp, const SEHyperparams& phi, int order_a, int order_b);

/// One-parameter linear Lie-group action built from planar rotation blocks:
/// the representation of angle rho rotates each listed pair of consecutive
/// coordinates by R_rho and leaves all others untouched.
class GroupAction {
public:
    /// SO(2) acting on R^2: one rotation block at offset 0.
    static GroupAction planar_rotation();
    /// Block-diagonal SO(2) action on R^4 = (q, qdot): R_rho on both pairs.
    static GroupAction paired_rotation4();

    int dim() const { return dim_; }
    int quotient_dim() const { return dim_ - 1; }
    int quadrature_nodes() const { return quadrature_nodes_; }
    void set_quadrature_nodes(int q);
    const std::vector<int>& block_offsets() const { return blocks_; }
    const std::string& name() const { return name_; }

    /// Dense matrix of the representation at angle rho.
    Matrix matrix(double rho) const;
    /// Applies the representation at angle rho without forming the matrix.
    Vector apply(double rho, const Vector& x) const;

    /// Lookup by serialized name ("so2_planar" / "so2_block").
    static GroupAction from_name(const std::string& name);

private:
    GroupAction(int dim, std::vector<int> blocks, std::string name)
        : dim_(dim), blocks_(std::move(blocks)), name_(std::move(name)) {}

    int dim_;
    std::vector<int> blocks_;
    int quadrature_nodes_ = 30;
    std::string name_;
};

/// gamma_rho * x. Throws DimensionMismatch on size mismatch.
Vector apply_action(const GroupAction& g, double rho, const Vector& x);

/// Ties the lengthscales within each rotation block to their geometric mean,
/// which makes the SE kernel invariant under the action.
SEHyperparams isotropize(const SEHyperparams& phi, const GroupAction& g);

/// Group-integration matrix kernel value: the Haar integral
///   int_G k(x, gamma x') gamma dgamma
/// over the unit-volume group, approximated by the trapezoid rule on
/// [0, 2pi) with g.quadrature_nodes() equal nodes.
Matrix gim_eval(const SEHyperparams& base, const GroupAction& g, const Vector& x, const Vector& xp);

/// Cosine-weighted scalar part of the same quadrature:
///   (1/Q) sum_j k(x, gamma_j x') cos(rho_j).
/// When the sine part vanishes (points on the quotient section of a planar
/// action) the full GIM block equals this scalar times the identity.
double gim_scalar_cos(const SEHyperparams& base, const GroupAction& g, const Vector& x, const Vector& xp);

/// Matrix-valued covariance function over R^D outputs.
class MatrixKernel {
public:
    enum class Variant { DiagonalIndependent, SharedIsotropic, Usm, Gim };

    /// Empty placeholder; build real kernels through the factories below.
    MatrixKernel() = default;

    /// D independent scalar kernels, one per output component.
    static MatrixKernel diagonal_independent(std::vector<SEHyperparams> per_output);
    /// k(x,x') * I_D with a single shared scalar kernel.
    static MatrixKernel shared_isotropic(SEHyperparams phi, int output_dim);
    /// Uncoupled separable kernel: sum_i k_i(x,x') Q_i with fixed PSD Q_i.
    static MatrixKernel usm(std::vector<std::pair<SEHyperparams, Matrix>> terms);
    /// Group-integration kernel from an invariant scalar kernel. Invariance is
    /// checked on sampled points; throws NonInvariantKernel if violated.
    static MatrixKernel gim(SEHyperparams base, GroupAction action);

    Variant variant() const { return variant_; }
    int input_dim() const { return input_dim_; }
    int output_dim() const { return output_dim_; }

    /// D x D covariance block between x and x'.
    Matrix eval(const Vector& x, const Vector& xp) const;

    const std::vector<std::pair<SEHyperparams, Matrix>>& terms() const { return terms_; }
    const GroupAction& action() const;
    bool has_action() const { return static_cast<bool>(action_); }

    /// Flattened positive hyperparameters subject to optimization. GIM kernels
    /// expose one lengthscale per rotation block (tying is preserved).
    std::vector<double> free_params() const;
    /// Rebuilds the kernel with new values for free_params(), same structure.
    MatrixKernel with_free_params(const std::vector<double>& params) const;

private:
    Variant variant_ = Variant::SharedIsotropic;
    int input_dim_ = 0;
    int output_dim_ = 0;
    // DiagonalIndependent / SharedIsotropic / Usm store (scalar kernel, Q_i)
    // pairs; GIM stores the base kernel in terms_[0] with an unused Q.
    std::vector<std::pair<SEHyperparams, Matrix>> terms_;
    std::shared_ptr<const GroupAction> action_;
};

/// Convenience dispatch matching the kernel's variant.
inline Matrix matrix_eval(const MatrixKernel& k, const Vector& x, const Vector& xp) {
    return k.eval(x, xp);
}

} // namespace gpode
