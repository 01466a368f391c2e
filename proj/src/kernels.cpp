#include "gpode/kernels.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

namespace gpode {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

void SEHyperparams::validate() const {
    if (!(signal_std > 0.0) || !std::isfinite(signal_std)) {
        throw Error("SEHyperparams: signal_std must be positive and finite");
    }
    if (lengthscales.size() == 0) {
        throw Error("SEHyperparams: at least one lengthscale required");
    }
    for (Index i = 0; i < lengthscales.size(); ++i) {
        if (!(lengthscales[i] > 0.0) || !std::isfinite(lengthscales[i])) {
            throw Error("SEHyperparams: lengthscales must be positive and finite");
        }
    }
}

double se_eval(const Vector& x, const Vector& xp, const SEHyperparams& phi) {
    if (x.size() != xp.size() || x.size() != phi.lengthscales.size()) {
        throw DimensionMismatch("se_eval: input dimension does not match lengthscale count");
    }
    double q = 0.0;
    for (Index j = 0; j < x.size(); ++j) {
        const double d = (x[j] - xp[j]) / phi.lengthscales[j];
        q += d * d;
    }
    return phi.signal_std * phi.signal_std * std::exp(-0.5 * q);
}

double se_time_deriv(double t, double tp, const SEHyperparams& phi, int order_a, int order_b) {
    if (phi.lengthscales.size() != 1) {
        throw DimensionMismatch("se_time_deriv: kernel must be one-dimensional");
    }
    if (order_a < 0 || order_a > 2 || order_b < 0 || order_b > 2) {
        throw UnsupportedOrder("se_time_deriv: derivative orders must be in 0..2");
    }
    const double l2 = phi.lengthscales[0] * phi.lengthscales[0];
    const double r = t - tp;
    const double k = phi.signal_std * phi.signal_std * std::exp(-0.5 * r * r / l2);

    // k(t,t') = g(r) with r = t - t'; d^a/dt^a d^b/dt'^b k = (-1)^b g^(a+b)(r).
    const int p = order_a + order_b;
    double gp = 0.0;
    switch (p) {
    case 0: gp = k; break;
    case 1: gp = -(r / l2) * k; break;
    case 2: gp = (r * r / (l2 * l2) - 1.0 / l2) * k; break;
    case 3: gp = (3.0 * r / (l2 * l2) - r * r * r / (l2 * l2 * l2)) * k; break;
    case 4: {
        const double r2 = r * r;
        gp = (3.0 / (l2 * l2) - 6.0 * r2 / (l2 * l2 * l2) + r2 * r2 / (l2 * l2 * l2 * l2)) * k;
        break;
    }
    default: break;
    }
    return (order_b % 2 == 0) ? gp : -gp;
}

GroupAction GroupAction::planar_rotation() {
    return GroupAction(2, {0}, "so2_planar");
}

GroupAction GroupAction::paired_rotation4() {
    return GroupAction(4, {0, 2}, "so2_block");
}

GroupAction GroupAction::from_name(const std::string& name) {
    if (name == "so2_planar") return planar_rotation();
    if (name == "so2_block") return paired_rotation4();
    throw ConfigError("unknown group action: " + name);
}

void GroupAction::set_quadrature_nodes(int q) {
    if (q < 4) {
        throw InvalidBounds("GroupAction: quadrature_nodes must be >= 4");
    }
    quadrature_nodes_ = q;
}

Matrix GroupAction::matrix(double rho) const {
    Matrix m = Matrix::Identity(dim_, dim_);
    const double c = std::cos(rho);
    const double s = std::sin(rho);
    for (int b : blocks_) {
        m(b, b) = c;
        m(b, b + 1) = -s;
        m(b + 1, b) = s;
        m(b + 1, b + 1) = c;
    }
    return m;
}

Vector GroupAction::apply(double rho, const Vector& x) const {
    if (x.size() != dim_) {
        throw DimensionMismatch("GroupAction::apply: state dimension mismatch");
    }
    Vector out = x;
    const double c = std::cos(rho);
    const double s = std::sin(rho);
    for (int b : blocks_) {
        out[b] = c * x[b] - s * x[b + 1];
        out[b + 1] = s * x[b] + c * x[b + 1];
    }
    return out;
}

Vector apply_action(const GroupAction& g, double rho, const Vector& x) {
    return g.apply(rho, x);
}

SEHyperparams isotropize(const SEHyperparams& phi, const GroupAction& g) {
    if (phi.lengthscales.size() != g.dim()) {
        throw DimensionMismatch("isotropize: lengthscale count does not match action dimension");
    }
    SEHyperparams out = phi;
    for (int b : g.block_offsets()) {
        const double tied = std::sqrt(phi.lengthscales[b] * phi.lengthscales[b + 1]);
        out.lengthscales[b] = tied;
        out.lengthscales[b + 1] = tied;
    }
    return out;
}

Matrix gim_eval(const SEHyperparams& base, const GroupAction& g, const Vector& x, const Vector& xp) {
    if (x.size() != g.dim() || xp.size() != g.dim()) {
        throw DimensionMismatch("gim_eval: input dimension does not match action");
    }
    const int q = g.quadrature_nodes();
    double sum_c = 0.0, sum_s = 0.0;
    for (int j = 0; j < q; ++j) {
        const double rho = kTwoPi * j / q;
        const double kv = se_eval(x, g.apply(rho, xp), base);
        sum_c += kv * std::cos(rho);
        sum_s += kv * std::sin(rho);
    }
    sum_c /= q;
    sum_s /= q;

    // (1/Q) sum_j k gamma_j assembled from the block pattern of gamma.
    Matrix out = Matrix::Zero(g.dim(), g.dim());
    std::vector<bool> in_block(g.dim(), false);
    for (int b : g.block_offsets()) {
        out(b, b) = sum_c;
        out(b, b + 1) = -sum_s;
        out(b + 1, b) = sum_s;
        out(b + 1, b + 1) = sum_c;
        in_block[b] = in_block[b + 1] = true;
    }
    if (g.dim() > 2 * static_cast<int>(g.block_offsets().size())) {
        double sum_k = 0.0;
        for (int j = 0; j < q; ++j) {
            sum_k += se_eval(x, g.apply(kTwoPi * j / q, xp), base);
        }
        sum_k /= q;
        for (int i = 0; i < g.dim(); ++i) {
            if (!in_block[i]) out(i, i) = sum_k;
        }
    }
    return out;
}

double gim_scalar_cos(const SEHyperparams& base, const GroupAction& g, const Vector& x, const Vector& xp) {
    if (x.size() != g.dim() || xp.size() != g.dim()) {
        throw DimensionMismatch("gim_scalar_cos: input dimension does not match action");
    }
    const int q = g.quadrature_nodes();
    double sum_c = 0.0;
    for (int j = 0; j < q; ++j) {
        const double rho = kTwoPi * j / q;
        sum_c += se_eval(x, g.apply(rho, xp), base) * std::cos(rho);
    }
    return sum_c / q;
}

MatrixKernel MatrixKernel::diagonal_independent(std::vector<SEHyperparams> per_output) {
    if (per_output.empty()) {
        throw Error("MatrixKernel: at least one output kernel required");
    }
    MatrixKernel k;
    k.variant_ = Variant::DiagonalIndependent;
    k.output_dim_ = static_cast<int>(per_output.size());
    k.input_dim_ = per_output.front().input_dim();
    for (size_t i = 0; i < per_output.size(); ++i) {
        per_output[i].validate();
        if (per_output[i].input_dim() != k.input_dim_) {
            throw DimensionMismatch("MatrixKernel: inconsistent input dimensions across outputs");
        }
        Matrix q = Matrix::Zero(k.output_dim_, k.output_dim_);
        q(static_cast<Index>(i), static_cast<Index>(i)) = 1.0;
        k.terms_.emplace_back(std::move(per_output[i]), std::move(q));
    }
    return k;
}

MatrixKernel MatrixKernel::shared_isotropic(SEHyperparams phi, int output_dim) {
    phi.validate();
    if (output_dim < 1) {
        throw Error("MatrixKernel: output_dim must be >= 1");
    }
    MatrixKernel k;
    k.variant_ = Variant::SharedIsotropic;
    k.output_dim_ = output_dim;
    k.input_dim_ = phi.input_dim();
    k.terms_.emplace_back(std::move(phi), Matrix::Identity(output_dim, output_dim));
    return k;
}

MatrixKernel MatrixKernel::usm(std::vector<std::pair<SEHyperparams, Matrix>> terms) {
    if (terms.empty()) {
        throw Error("MatrixKernel: USM kernel needs at least one term");
    }
    MatrixKernel k;
    k.variant_ = Variant::Usm;
    k.output_dim_ = static_cast<int>(terms.front().second.rows());
    k.input_dim_ = terms.front().first.input_dim();
    for (auto& [phi, q] : terms) {
        phi.validate();
        if (phi.input_dim() != k.input_dim_) {
            throw DimensionMismatch("MatrixKernel: inconsistent input dimensions across USM terms");
        }
        if (q.rows() != k.output_dim_ || q.cols() != k.output_dim_) {
            throw DimensionMismatch("MatrixKernel: USM coefficient matrix has wrong shape");
        }
    }
    k.terms_ = std::move(terms);
    return k;
}

MatrixKernel MatrixKernel::gim(SEHyperparams base, GroupAction action) {
    base.validate();
    if (base.input_dim() != action.dim()) {
        throw DimensionMismatch("MatrixKernel: GIM base kernel dimension does not match action");
    }

    // Probabilistic invariance check: k(gamma x, gamma x') must equal k(x, x').
    std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    std::normal_distribution<double> point(0.0, 1.5);
    const double tol = 1e-8 * std::max(1.0, base.signal_std * base.signal_std);
    for (int trial = 0; trial < 8; ++trial) {
        Vector x(action.dim()), xp(action.dim());
        for (Index i = 0; i < x.size(); ++i) {
            x[i] = point(rng);
            xp[i] = point(rng);
        }
        const double rho = angle(rng);
        const double diff = std::abs(se_eval(action.apply(rho, x), action.apply(rho, xp), base) -
                                     se_eval(x, xp, base));
        if (diff > tol) {
            throw NonInvariantKernel("MatrixKernel: scalar kernel is not invariant under the action "
                                     "(tie the block lengthscales via isotropize)");
        }
    }

    MatrixKernel k;
    k.variant_ = Variant::Gim;
    k.output_dim_ = action.dim();
    k.input_dim_ = action.dim();
    k.terms_.emplace_back(std::move(base), Matrix());
    k.action_ = std::make_shared<GroupAction>(std::move(action));
    return k;
}

const GroupAction& MatrixKernel::action() const {
    if (!action_) {
        throw Error("MatrixKernel: kernel has no group action");
    }
    return *action_;
}

Matrix MatrixKernel::eval(const Vector& x, const Vector& xp) const {
    if (x.size() != input_dim_ || xp.size() != input_dim_) {
        throw DimensionMismatch("MatrixKernel::eval: input dimension mismatch");
    }
    switch (variant_) {
    case Variant::Gim:
        return gim_eval(terms_[0].first, *action_, x, xp);
    case Variant::SharedIsotropic:
        return se_eval(x, xp, terms_[0].first) * Matrix::Identity(output_dim_, output_dim_);
    case Variant::DiagonalIndependent: {
        Matrix out = Matrix::Zero(output_dim_, output_dim_);
        for (Index i = 0; i < static_cast<Index>(terms_.size()); ++i) {
            out(i, i) = se_eval(x, xp, terms_[static_cast<size_t>(i)].first);
        }
        return out;
    }
    case Variant::Usm: {
        Matrix out = Matrix::Zero(output_dim_, output_dim_);
        for (const auto& [phi, q] : terms_) {
            out += se_eval(x, xp, phi) * q;
        }
        return out;
    }
    }
    throw Error("MatrixKernel::eval: unreachable");
}

std::vector<double> MatrixKernel::free_params() const {
    std::vector<double> out;
    if (variant_ == Variant::Gim) {
        const auto& phi = terms_[0].first;
        out.push_back(phi.signal_std);
        const auto& blocks = action_->block_offsets();
        for (int d = 0; d < input_dim_; ++d) {
            bool is_block_start = false, is_block_second = false;
            for (int b : blocks) {
                if (d == b) is_block_start = true;
                if (d == b + 1) is_block_second = true;
            }
            if (is_block_second) continue; // tied to the block start
            (void)is_block_start;
            out.push_back(phi.lengthscales[d]);
        }
        return out;
    }
    for (const auto& [phi, q] : terms_) {
        out.push_back(phi.signal_std);
        for (Index j = 0; j < phi.lengthscales.size(); ++j) {
            out.push_back(phi.lengthscales[j]);
        }
    }
    return out;
}

MatrixKernel MatrixKernel::with_free_params(const std::vector<double>& params) const {
    const std::vector<double> current = free_params();
    if (params.size() != current.size()) {
        throw DimensionMismatch("MatrixKernel::with_free_params: expected " +
                                std::to_string(current.size()) + " parameters, got " +
                                std::to_string(params.size()));
    }
    if (variant_ == Variant::Gim) {
        SEHyperparams phi = terms_[0].first;
        phi.signal_std = params[0];
        size_t idx = 1;
        const auto& blocks = action_->block_offsets();
        for (int d = 0; d < input_dim_; ++d) {
            bool is_block_second = false;
            for (int b : blocks) {
                if (d == b + 1) is_block_second = true;
            }
            if (is_block_second) continue;
            phi.lengthscales[d] = params[idx++];
        }
        for (int b : blocks) {
            phi.lengthscales[b + 1] = phi.lengthscales[b];
        }
        return gim(std::move(phi), *action_);
    }

    std::vector<std::pair<SEHyperparams, Matrix>> terms = terms_;
    size_t idx = 0;
    for (auto& [phi, q] : terms) {
        phi.signal_std = params[idx++];
        for (Index j = 0; j < phi.lengthscales.size(); ++j) {
            phi.lengthscales[j] = params[idx++];
        }
    }
    switch (variant_) {
    case Variant::SharedIsotropic:
        return shared_isotropic(terms[0].first, output_dim_);
    case Variant::DiagonalIndependent: {
        std::vector<SEHyperparams> per_output;
        per_output.reserve(terms.size());
        for (auto& [phi, q] : terms) per_output.push_back(std::move(phi));
        return diagonal_independent(std::move(per_output));
    }
    case Variant::Usm:
        return usm(std::move(terms));
    default:
        throw Error("MatrixKernel::with_free_params: unreachable");
    }
}

} // namespace gpode
