#include "gpode/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

namespace gpode {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double pooled_std(const Matrix& values) {
    const double mean = values.mean();
    const double var = (values.array() - mean).square().mean();
    return std::sqrt(std::max(var, 0.0));
}

} // namespace

KernelVariant kernel_variant_from_name(const std::string& name) {
    if (name == "shared_isotropic") return KernelVariant::SharedIsotropic;
    if (name == "diagonal_independent") return KernelVariant::DiagonalIndependent;
    if (name == "usm") return KernelVariant::Usm;
    if (name == "gim") return KernelVariant::Gim;
    throw ConfigError("unknown kernel variant: " + name);
}

std::string kernel_variant_name(KernelVariant v) {
    switch (v) {
    case KernelVariant::SharedIsotropic: return "shared_isotropic";
    case KernelVariant::DiagonalIndependent: return "diagonal_independent";
    case KernelVariant::Usm: return "usm";
    case KernelVariant::Gim: return "gim";
    }
    return "shared_isotropic";
}

DerivativeExtraction extract_derivative_data(const Trajectory& traj, int order,
                                             bool want_second_order, const TimeFitConfig& cfg) {
    traj.validate();
    if (traj.size() < 4) {
        throw Error("extract_derivative_data: at least four samples required");
    }
    if (order != 1 && order != 2) {
        throw UnsupportedOrder("extract_derivative_data: order must be 1 or 2");
    }
    const Index n = traj.size();
    const Index d = traj.dim();

    // Shared (signal_std, lengthscale, noise_std) across output dimensions,
    // objective summed over the per-dimension likelihoods.
    const double y_std = std::max(pooled_std(traj.states), 1e-12);
    const double t_range = traj.times[n - 1] - traj.times[0];
    std::vector<double> init =
        cfg.init.value_or(std::vector<double>{y_std, 0.5 * t_range, 1e-2 * y_std});
    if (init.size() != 3) {
        throw ConfigError("extract_derivative_data: time-GP init must be (signal, lengthscale, noise)");
    }

    const auto objective = [&](const std::vector<double>& p) -> double {
        SEHyperparams phi;
        phi.signal_std = p[0];
        phi.lengthscales = Vector::Constant(1, p[1]);
        double total = 0.0;
        try {
            for (Index k = 0; k < d; ++k) {
                total += time_nll(traj.times, Vector(traj.states.col(k)), phi, p[2]);
            }
        } catch (const NotPositiveDefinite&) {
            return kInf;
        }
        return total;
    };

    std::vector<double> fitted = init;
    double fitted_nll = objective(init);
    if (cfg.optimize) {
        ParamTransform transform;
        transform.log_lo = Vector::Constant(3, -kInf);
        transform.log_lo[2] = std::log(1e-8 * y_std); // keep the noise factorizable
        FitParamsResult res = fit_hyperparams(objective, init, cfg.optimizer, transform);
        fitted = res.params;
        fitted_nll = res.objective;
    }

    SEHyperparams phi;
    phi.signal_std = fitted[0];
    phi.lengthscales = Vector::Constant(1, fitted[1]);
    const double noise_std = fitted[2];

    Matrix m(n, d), m1(n, d), m2(n, d);
    for (Index k = 0; k < d; ++k) {
        const TimeGP gp = fit_time_gp(traj.times, Vector(traj.states.col(k)), phi, noise_std);
        for (Index i = 0; i < n; ++i) {
            m(i, k) = posterior_mean(gp, traj.times[i]);
        }
        m1.col(k) = derivative_posterior(gp, 1, traj.times).mean;
        if (order == 2) {
            m2.col(k) = derivative_posterior(gp, 2, traj.times).mean;
        }
    }

    DerivativeExtraction out;
    out.time_params = fitted;
    out.time_nll_value = fitted_nll;
    out.data.provenance.assign(static_cast<size_t>(n), PointProvenance::Trajectory);
    if (order == 1) {
        out.data.inputs = m;
        out.data.targets = m1;
    } else {
        out.data.inputs.resize(n, 2 * d);
        out.data.targets.resize(n, 2 * d);
        out.data.inputs << m, m1;
        out.data.targets << m1, m2;
        if (want_second_order) {
            DerivativeDataset pure;
            pure.inputs = m;
            pure.targets = m2;
            pure.provenance.assign(static_cast<size_t>(n), PointProvenance::Trajectory);
            out.second_order = std::move(pure);
        }
    }
    out.data.validate();
    return out;
}

DerivativeDataset augment_fixed_points(const DerivativeDataset& data,
                                       const std::vector<Vector>& points) {
    data.validate();
    DerivativeDataset out = data;
    for (const Vector& p : points) {
        if (p.size() != out.input_dim()) {
            throw DimensionMismatch("augment_fixed_points: point dimension mismatch");
        }
        for (Index i = 0; i < out.size(); ++i) {
            if ((out.inputs.row(i).transpose() - p).norm() <= 1e-9) {
                throw DuplicatePoint("augment_fixed_points: point duplicates an existing input");
            }
        }
        const Index n = out.size();
        out.inputs.conservativeResize(n + 1, Eigen::NoChange);
        out.targets.conservativeResize(n + 1, Eigen::NoChange);
        out.inputs.row(n) = p;
        out.targets.row(n).setZero();
        out.provenance.push_back(PointProvenance::FixedPoint);
    }
    return out;
}

DerivativeDataset project_to_quotient(const DerivativeDataset& data, const GroupAction& g) {
    data.validate();
    if (data.input_dim() != g.dim() || data.output_dim() != g.dim()) {
        throw DimensionMismatch("project_to_quotient: data dimension does not match action");
    }
    DerivativeDataset out = data;
    for (Index i = 0; i < data.size(); ++i) {
        const double q1 = data.inputs(i, 0);
        const double q2 = data.inputs(i, 1);
        const double r = std::hypot(q1, q2);
        if (r <= 1e-9) {
            throw DegenerateOrbit("project_to_quotient: input too close to the orbit singularity");
        }
        const double rho = std::atan2(q2, q1);
        Vector in = g.apply(-rho, data.inputs.row(i));
        in[1] = 0.0; // section coordinate, exact
        out.inputs.row(i) = in;
        out.targets.row(i) = g.apply(-rho, data.targets.row(i));
    }
    return out;
}

InducingSet build_inducing_grid(const GridSpec& spec, const std::optional<GroupAction>& quotient) {
    spec.validate();
    const int gdim = spec.dim();
    int edim = gdim;
    if (quotient) {
        if (gdim != quotient->quotient_dim()) {
            throw DimensionMismatch("build_inducing_grid: grid must have quotient dimension " +
                                    std::to_string(quotient->quotient_dim()));
        }
        edim = quotient->dim();
    }

    std::vector<Vector> axes(static_cast<size_t>(gdim));
    for (int a = 0; a < gdim; ++a) {
        const int c = spec.counts[static_cast<size_t>(a)];
        Vector vals(c);
        if (c == 1) {
            vals[0] = 0.5 * (spec.lo[a] + spec.hi[a]);
        } else {
            for (int i = 0; i < c; ++i) {
                vals[i] = spec.lo[a] + (spec.hi[a] - spec.lo[a]) * static_cast<double>(i) / (c - 1);
            }
        }
        axes[static_cast<size_t>(a)] = vals;
    }

    InducingSet z;
    z.points = Matrix::Zero(spec.total(), edim);
    std::vector<int> idx(static_cast<size_t>(gdim), 0);
    for (Index row = 0; row < z.points.rows(); ++row) {
        for (int a = 0; a < gdim; ++a) {
            // On the quotient section the collapsed coordinate (index 1) is 0.
            const int target_axis = quotient ? (a == 0 ? 0 : a + 1) : a;
            z.points(row, target_axis) = axes[static_cast<size_t>(a)][idx[static_cast<size_t>(a)]];
        }
        for (int a = gdim - 1; a >= 0; --a) {
            if (++idx[static_cast<size_t>(a)] < spec.counts[static_cast<size_t>(a)]) break;
            idx[static_cast<size_t>(a)] = 0;
        }
    }
    z.grid = spec;
    z.validate();
    return z;
}

namespace {

// Half-range of each input axis, with degenerate axes replaced by the
// largest finite half-range (a quotient section axis is identically zero).
Vector input_half_ranges(const DerivativeDataset& data) {
    const Vector lo = data.inputs.colwise().minCoeff();
    const Vector hi = data.inputs.colwise().maxCoeff();
    Vector half = 0.5 * (hi - lo);
    double largest = half.maxCoeff();
    if (largest <= 0.0) largest = 1.0;
    for (Index i = 0; i < half.size(); ++i) {
        if (half[i] <= 1e-12 * largest) half[i] = largest;
    }
    return half;
}

MatrixKernel kernel_prototype(const DerivativeDataset& data, const LearnConfig& cfg) {
    const int d_in = static_cast<int>(data.input_dim());
    const int d_out = static_cast<int>(data.output_dim());
    const double y_std = std::max(pooled_std(data.targets), 1e-12);
    const Vector half = input_half_ranges(data);

    switch (cfg.kernel) {
    case KernelVariant::SharedIsotropic: {
        SEHyperparams phi;
        phi.signal_std = y_std;
        phi.lengthscales = half;
        return MatrixKernel::shared_isotropic(phi, d_out);
    }
    case KernelVariant::DiagonalIndependent: {
        std::vector<SEHyperparams> per(static_cast<size_t>(d_out));
        for (int k = 0; k < d_out; ++k) {
            per[static_cast<size_t>(k)].signal_std = y_std;
            per[static_cast<size_t>(k)].lengthscales = half;
        }
        return MatrixKernel::diagonal_independent(std::move(per));
    }
    case KernelVariant::Usm: {
        SEHyperparams phi;
        phi.signal_std = y_std;
        phi.lengthscales = half;
        std::vector<std::pair<SEHyperparams, Matrix>> terms;
        terms.emplace_back(std::move(phi), Matrix::Identity(d_out, d_out));
        return MatrixKernel::usm(std::move(terms));
    }
    case KernelVariant::Gim: {
        if (!cfg.action) {
            throw ConfigError("train_field: GIM kernel requires a group action");
        }
        if (cfg.action->dim() != d_in) {
            throw DimensionMismatch("train_field: action dimension does not match data");
        }
        SEHyperparams phi;
        phi.signal_std = y_std;
        phi.lengthscales = half;
        // Tie each rotation block to the larger of its two half-ranges; the
        // section axis range is degenerate by construction.
        for (int b : cfg.action->block_offsets()) {
            const double tied = std::max(phi.lengthscales[b], phi.lengthscales[b + 1]);
            phi.lengthscales[b] = tied;
            phi.lengthscales[b + 1] = tied;
        }
        return MatrixKernel::gim(isotropize(phi, *cfg.action), *cfg.action);
    }
    }
    throw ConfigError("train_field: unknown kernel variant");
}

InducingSet build_inducing(const DerivativeDataset& data, const LearnConfig& cfg) {
    if (cfg.explicit_z) {
        InducingSet z;
        z.points = *cfg.explicit_z;
        z.validate();
        if (z.dim() != data.input_dim()) {
            throw DimensionMismatch("train_field: explicit inducing points have wrong dimension");
        }
        return z;
    }
    if (!cfg.grid) {
        throw ConfigError("train_field: either a grid spec or explicit inducing points required");
    }
    GridSpec spec = *cfg.grid;
    if (spec.lo.size() == 0) {
        // Auto bounds: data bounding box per grid axis, range expanded by 10%.
        const int gdim = static_cast<int>(spec.counts.size());
        spec.lo.resize(gdim);
        spec.hi.resize(gdim);
        for (int a = 0; a < gdim; ++a) {
            const int axis = cfg.action ? (a == 0 ? 0 : a + 1) : a;
            const double lo = data.inputs.col(axis).minCoeff();
            const double hi = data.inputs.col(axis).maxCoeff();
            double pad = 0.05 * (hi - lo);
            if (pad <= 0.0) pad = 0.5;
            spec.lo[a] = lo - pad;
            spec.hi[a] = hi + pad;
        }
    }
    return build_inducing_grid(spec, cfg.action);
}

bool on_section(const Matrix& points) {
    const double scale = std::max(points.cwiseAbs().maxCoeff(), 1.0);
    return points.col(1).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

// Kronecker route applies when the kernel blocks reduce to c * I_D: a planar
// GIM kernel with every involved point on the quotient section.
bool kron_eligible(const DerivativeDataset& data, const LearnConfig& cfg, const InducingSet& z) {
    if (!cfg.use_kronecker || cfg.kernel != KernelVariant::Gim || !cfg.action) return false;
    if (cfg.action->dim() != 2) return false;
    return on_section(data.inputs) && on_section(z.points);
}

ScalarKernel gim_cos_kernel(const MatrixKernel& kernel) {
    const SEHyperparams base = kernel.terms()[0].first;
    const GroupAction action = kernel.action();
    return [base, action](const Vector& a, const Vector& b) {
        return gim_scalar_cos(base, action, a, b);
    };
}

} // namespace

SparseFieldModel train_field(const DerivativeDataset& data, const LearnConfig& cfg) {
    if (data.size() == 0) {
        throw EmptyDataset("train_field: empty dataset");
    }
    data.validate();
    cfg.optimizer.validate();
    if (cfg.kernel == KernelVariant::Gim && cfg.optimize_noise) {
        throw ConfigError("train_field: noise optimization is unsupported for GIM kernels "
                          "(the signal-to-noise box constraint fixes the noise)");
    }

    const InducingSet z = build_inducing(data, cfg);
    const double y_std = std::max(pooled_std(data.targets), 1e-12);
    double noise_std = cfg.noise_std > 0.0 ? cfg.noise_std : std::max(cfg.nugget_rel * y_std, 1e-12);

    MatrixKernel prototype = kernel_prototype(data, cfg);
    std::vector<double> init = cfg.kernel_init.value_or(prototype.free_params());
    prototype = prototype.with_free_params(init);
    const bool use_kron = kron_eligible(data, cfg, z);
    const size_t n_kernel_params = init.size();
    if (cfg.optimize_noise) {
        init.push_back(noise_std);
    }

    const auto objective = [&](const std::vector<double>& p) -> double {
        try {
            const std::vector<double> kp(p.begin(), p.begin() + static_cast<long>(n_kernel_params));
            const MatrixKernel k = prototype.with_free_params(kp);
            const double sn = cfg.optimize_noise ? p.back() : noise_std;
            if (use_kron) {
                return fitc_nll_kron(data, gim_cos_kernel(k), k.output_dim(), z, sn);
            }
            return fitc_nll(data, k, z, sn);
        } catch (const NotPositiveDefinite&) {
            return kInf;
        }
    };

    ParamTransform transform;
    transform.log_lo = Vector::Constant(static_cast<Index>(init.size()), -kInf);
    if (cfg.kernel == KernelVariant::Gim) {
        transform.log_lo[0] = std::log(cfg.lambda_noise_ratio_min * noise_std);
        for (size_t i = 0; i < init.size(); ++i) {
            init[i] = std::max(init[i], std::exp(transform.log_lo[static_cast<Index>(i)]));
        }
    }

    FitParamsResult fit = fit_hyperparams(objective, init, cfg.optimizer, transform);
    const std::vector<double> kernel_params(fit.params.begin(),
                                            fit.params.begin() + static_cast<long>(n_kernel_params));
    const MatrixKernel fitted = prototype.with_free_params(kernel_params);
    if (cfg.optimize_noise) {
        noise_std = fit.params.back();
    }

    SparseFieldModel model = use_kron
        ? fitc_train_weights_kron(data, fitted, gim_cos_kernel(fitted), z, noise_std)
        : fitc_train_weights(data, fitted, z, noise_std);
    model.meta.action = cfg.action;
    model.meta.second_order = cfg.second_order;
    model.meta.state_dim = cfg.second_order ? 2 * static_cast<int>(data.input_dim())
                                            : static_cast<int>(data.input_dim());
    model.meta.fitted_params = fit.params;
    model.meta.final_nll = fit.objective;
    model.meta.seed = cfg.optimizer.seed;
    model.meta.lambda_noise_ratio = kernel_params[0] / noise_std;
    return model;
}

LearnOutcome learn_field_from_trajectory(const Trajectory& traj, const LearnConfig& cfg) {
    if (cfg.second_order && cfg.derivative_order != 2) {
        throw ConfigError("learn_field_from_trajectory: second-order learning needs derivative_order 2");
    }
    DerivativeExtraction extraction =
        extract_derivative_data(traj, cfg.derivative_order, cfg.second_order, cfg.time_fit);
    DerivativeDataset data = cfg.second_order ? *extraction.second_order : extraction.data;
    if (!cfg.fixed_points.empty()) {
        data = augment_fixed_points(data, cfg.fixed_points);
    }
    if (cfg.action) {
        data = project_to_quotient(data, *cfg.action);
    }
    LearnOutcome out{train_field(data, cfg), std::move(extraction)};
    return out;
}

namespace {

struct SectionFrame {
    double rho = 0.0;
};

SectionFrame section_angle(const Vector& x) {
    const double r = std::hypot(x[0], x[1]);
    if (r <= 1e-9) {
        throw DegenerateOrbit("predict_field: state on the collapsed orbit of the action");
    }
    return {std::atan2(x[1], x[0])};
}

} // namespace

std::pair<Vector, Matrix> predict_field(const SparseFieldModel& model, const Vector& x) {
    const auto& meta = model.meta;
    if (meta.second_order) {
        const int dq = model.kernel.input_dim();
        if (x.size() != 2 * dq) {
            throw DimensionMismatch("predict_field: expected a (q, qdot) state");
        }
        const Vector q = x.head(dq);
        Vector acc;
        Matrix acc_cov;
        if (meta.action) {
            const SectionFrame frame = section_angle(q);
            const Vector qs = meta.action->apply(-frame.rho, q);
            auto [ms, cs] = fitc_predict(model, qs);
            acc = meta.action->apply(frame.rho, ms);
            const Matrix rot = meta.action->matrix(frame.rho);
            acc_cov = rot * cs * rot.transpose();
        } else {
            std::tie(acc, acc_cov) = fitc_predict(model, q);
        }
        Vector mean(2 * dq);
        mean.head(dq) = x.tail(dq);
        mean.tail(dq) = acc;
        Matrix cov = Matrix::Zero(2 * dq, 2 * dq);
        cov.bottomRightCorner(dq, dq) = acc_cov;
        return {std::move(mean), std::move(cov)};
    }
    if (meta.action) {
        const SectionFrame frame = section_angle(x);
        const Vector xs = meta.action->apply(-frame.rho, x);
        auto [ms, cs] = fitc_predict(model, xs);
        const Matrix rot = meta.action->matrix(frame.rho);
        return {meta.action->apply(frame.rho, ms), Matrix(rot * cs * rot.transpose())};
    }
    return fitc_predict(model, x);
}

Vector predict_field_mean(const SparseFieldModel& model, const Vector& x) {
    const auto& meta = model.meta;
    if (meta.second_order) {
        const int dq = model.kernel.input_dim();
        if (x.size() != 2 * dq) {
            throw DimensionMismatch("predict_field: expected a (q, qdot) state");
        }
        const Vector q = x.head(dq);
        Vector acc;
        if (meta.action) {
            const SectionFrame frame = section_angle(q);
            acc = meta.action->apply(frame.rho,
                                     fitc_predict_mean(model, meta.action->apply(-frame.rho, q)));
        } else {
            acc = fitc_predict_mean(model, q);
        }
        Vector mean(2 * dq);
        mean.head(dq) = x.tail(dq);
        mean.tail(dq) = acc;
        return mean;
    }
    if (meta.action) {
        const SectionFrame frame = section_angle(x);
        return meta.action->apply(frame.rho,
                                  fitc_predict_mean(model, meta.action->apply(-frame.rho, x)));
    }
    return fitc_predict_mean(model, x);
}

Trajectory rollout(const SparseFieldModel& model, const Vector& x0, double t0, double t1,
                   const IntegratorConfig& cfg) {
    VectorField field;
    field.dim = model.meta.state_dim;
    field.rhs = [&model](const Vector& x) { return predict_field_mean(model, x); };
    return integrate(field, x0, t0, t1, cfg);
}

namespace {

// Per-path sliding memory of (state, sampled field) pairs with the cached
// quantities needed for FITC posterior conditioning.
struct PathMemory {
    int cap = 0;
    int d = 0;
    std::deque<Vector> states;
    Matrix gram;     // joint posterior covariance of the remembered draws
    Matrix residual; // f_j - m(x_j), one column block per point, d x count
    std::deque<Matrix> cross_cache; // (DM) x d helper per point

    Index count() const { return static_cast<Index>(states.size()); }
};

} // namespace

UncertainRollout sample_uncertain_rollout(const SparseFieldModel& model, const Vector& x0,
                                          double t0, double t1, int n_samples,
                                          std::uint64_t seed, int memory_cap, double dt) {
    if (n_samples < 2) {
        throw Error("sample_uncertain_rollout: at least two sample paths required");
    }
    if (model.meta.action || model.meta.second_order) {
        throw Error("sample_uncertain_rollout: unsupported for symmetric or second-order models");
    }
    if (memory_cap < 0) {
        throw Error("sample_uncertain_rollout: memory_cap must be >= 0");
    }
    if (x0.size() != model.meta.state_dim) {
        throw DimensionMismatch("sample_uncertain_rollout: initial state dimension mismatch");
    }
    if (!(t1 > t0) || !(dt > 0.0)) {
        throw Error("sample_uncertain_rollout: invalid time span or step");
    }

    const int d = model.kernel.output_dim();
    const double span = t1 - t0;
    const Index n_full = static_cast<Index>(std::floor(span / dt + 1e-9));
    const double remainder = span - static_cast<double>(n_full) * dt;
    const bool partial = remainder > 1e-12 * span;
    const Index n_steps = n_full + (partial ? 1 : 0);

    Vector times(n_steps + 1);
    times[0] = t0;
    for (Index k = 1; k <= n_steps; ++k) {
        times[k] = (k == n_steps) ? t1 : t0 + static_cast<double>(k) * dt;
    }

    const double nugget = model.noise_std * model.noise_std;
    // (Sigma - K_ZZ^{-1}) u for a block of kernel columns u = K_{Z,x}.
    const auto cross_helper = [&](const Matrix& u) {
        return Matrix(solve_psd(model.sigma_inv_factor, u) - solve_psd(model.kzz_factor, u));
    };

    UncertainRollout out;
    out.memory_cap = memory_cap;
    out.samples.reserve(static_cast<size_t>(n_samples));

    for (int p = 0; p < n_samples; ++p) {
        std::mt19937_64 rng(splitmix64(seed + static_cast<std::uint64_t>(p) + 1));
        std::normal_distribution<double> unit(0.0, 1.0);

        PathMemory mem;
        mem.cap = memory_cap;
        mem.d = d;
        mem.gram.resize(0, 0);
        mem.residual.resize(d, 0);

        Trajectory path;
        path.times = times;
        path.states.resize(n_steps + 1, d);
        Vector x = x0;
        path.states.row(0) = x;

        for (Index k = 0; k < n_steps; ++k) {
            const double step = (k < n_full) ? dt : remainder;

            const Matrix u_x = kzx_block(model.kernel, model.inducing, x); // (DM) x D
            const Matrix h_x = cross_helper(u_x);
            Vector mean = u_x.transpose() * model.weights;
            Matrix cov = model.kernel.eval(x, x) + u_x.transpose() * h_x;

            if (mem.count() > 0) {
                const Index nm = mem.count();
                Matrix cross(d, nm * d); // C(x, X_mem)
                for (Index j = 0; j < nm; ++j) {
                    cross.middleCols(j * d, d) =
                        model.kernel.eval(x, mem.states[static_cast<size_t>(j)]) +
                        u_x.transpose() * mem.cross_cache[static_cast<size_t>(j)];
                }
                Matrix gram = mem.gram;
                gram.diagonal().array() += nugget;
                const PsdFactorization factor = factorize_psd(gram, 0.0);
                Vector resid(nm * d);
                for (Index j = 0; j < nm; ++j) {
                    resid.segment(j * d, d) = mem.residual.col(j);
                }
                const Matrix solved = solve_psd(factor, Matrix(cross.transpose())); // (nm d) x d
                mean += solved.transpose() * resid;
                cov -= cross * solved;
            }

            // Draw from N(mean, cov) with eigenvalue clamping.
            cov = 0.5 * (cov + cov.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
            Vector zdraw(d);
            for (int a = 0; a < d; ++a) zdraw[a] = unit(rng);
            const Vector scale = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
            const Vector f = mean + eig.eigenvectors() * scale.asDiagonal() * zdraw;

            if (memory_cap > 0) {
                // Append (x, f); grow the joint covariance by one block.
                const Index nm = mem.count();
                Matrix grown(nm * d + d, nm * d + d);
                grown.topLeftCorner(nm * d, nm * d) = mem.gram;
                for (Index j = 0; j < nm; ++j) {
                    const Matrix c =
                        model.kernel.eval(mem.states[static_cast<size_t>(j)], x) +
                        mem.cross_cache[static_cast<size_t>(j)].transpose() * u_x;
                    grown.block(j * d, nm * d, d, d) = c;
                    grown.block(nm * d, j * d, d, d) = c.transpose();
                }
                grown.bottomRightCorner(d, d) = model.kernel.eval(x, x) + u_x.transpose() * h_x;
                mem.gram = std::move(grown);
                mem.states.push_back(x);
                mem.cross_cache.push_back(h_x);
                // Residuals are taken against the unconditioned model mean:
                // the memory gram uses the model posterior as its prior.
                mem.residual.conservativeResize(Eigen::NoChange, mem.residual.cols() + 1);
                mem.residual.col(mem.residual.cols() - 1) =
                    f - (u_x.transpose() * model.weights);

                if (mem.count() > memory_cap) {
                    mem.states.pop_front();
                    mem.cross_cache.pop_front();
                    const Index sz = mem.gram.rows();
                    mem.gram = Matrix(mem.gram.bottomRightCorner(sz - d, sz - d));
                    mem.residual = Matrix(mem.residual.rightCols(mem.residual.cols() - 1));
                }
            }

            x += step * f;
            path.states.row(k + 1) = x;
        }
        out.samples.push_back(std::move(path));
    }

    // Per-time sample std across paths.
    out.std.resize(n_steps + 1, d);
    for (Index k = 0; k <= n_steps; ++k) {
        for (int a = 0; a < d; ++a) {
            double mean = 0.0;
            for (const auto& s : out.samples) mean += s.states(k, a);
            mean /= n_samples;
            double var = 0.0;
            for (const auto& s : out.samples) {
                const double dv = s.states(k, a) - mean;
                var += dv * dv;
            }
            out.std(k, a) = std::sqrt(var / (n_samples - 1));
        }
    }

    // Deterministic mean-field rollout on the same grid.
    VectorField field;
    field.dim = model.meta.state_dim;
    field.rhs = [&model](const Vector& s) { return predict_field_mean(model, s); };
    IntegratorConfig euler_cfg;
    euler_cfg.method = IntegratorMethod::Euler;
    euler_cfg.dt = dt;
    out.mean = integrate(field, x0, t0, t1, euler_cfg);
    return out;
}

Trajectory resample(const Trajectory& traj, const Vector& times) {
    traj.validate();
    Trajectory out;
    out.times = times;
    out.states.resize(times.size(), traj.dim());
    for (Index i = 0; i < times.size(); ++i) {
        const double t = times[i];
        if (t < traj.times[0] - 1e-9 || t > traj.times[traj.size() - 1] + 1e-9) {
            throw Error("resample: query time outside the trajectory span");
        }
        // Index of the last sample time <= t.
        Index j = static_cast<Index>(
            std::upper_bound(traj.times.data(), traj.times.data() + traj.size(), t) -
            traj.times.data()) - 1;
        j = std::clamp(j, Index(0), traj.size() - 2);
        const double t0 = traj.times[j];
        const double t1 = traj.times[j + 1];
        const double w = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
        out.states.row(i) = (1.0 - w) * traj.states.row(j) + w * traj.states.row(j + 1);
    }
    return out;
}

ErrorReport evaluate_errors(const Trajectory& roll, const Trajectory& reference,
                            double split_time, int n_eval) {
    roll.validate();
    reference.validate();
    if (roll.dim() != reference.dim()) {
        throw DimensionMismatch("evaluate_errors: trajectory dimensions differ");
    }
    if (n_eval < 2) {
        throw Error("evaluate_errors: need at least two evaluation points");
    }
    const double t0 = std::max(roll.times[0], reference.times[0]);
    const double t1 = std::min(roll.times[roll.size() - 1], reference.times[reference.size() - 1]);
    if (!(t1 > t0)) {
        throw DimensionMismatch("evaluate_errors: trajectories do not overlap in time");
    }

    Vector times(n_eval);
    for (int i = 0; i < n_eval; ++i) {
        times[i] = t0 + (t1 - t0) * static_cast<double>(i) / (n_eval - 1);
    }
    const Trajectory a = resample(roll, times);
    const Trajectory b = resample(reference, times);

    double train_sum = 0.0, test_sum = 0.0, total_sum = 0.0;
    int train_n = 0, test_n = 0;
    for (int i = 0; i < n_eval; ++i) {
        const double dist = (a.states.row(i) - b.states.row(i)).norm();
        total_sum += dist;
        if (times[i] <= split_time) {
            train_sum += dist;
            ++train_n;
        }
        if (times[i] >= split_time) {
            test_sum += dist;
            ++test_n;
        }
    }

    ErrorReport report;
    report.split_time = split_time;
    report.n_eval = n_eval;
    report.total_error = total_sum / n_eval;
    report.train_error = train_n > 0 ? train_sum / train_n : 0.0;
    report.test_error = test_n > 0 ? test_sum / test_n : 0.0;
    return report;
}

} // namespace gpode
