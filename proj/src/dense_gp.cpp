#include "gpode/dense_gp.hpp"

#include <cmath>

namespace gpode {

namespace {

Matrix time_gram(const Vector& times, const SEHyperparams& phi) {
    const Index n = times.size();
    Matrix k(n, n);
    Vector a(1), b(1);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j <= i; ++j) {
            a[0] = times[i];
            b[0] = times[j];
            k(i, j) = se_eval(a, b, phi);
            k(j, i) = k(i, j);
        }
    }
    return k;
}

void check_fit_inputs(const Vector& times, const Vector& targets, const SEHyperparams& phi,
                      double noise_std, Index min_n) {
    if (times.size() != targets.size()) {
        throw DimensionMismatch("fit_time_gp: times and targets disagree in length");
    }
    if (times.size() < min_n) {
        throw Error("fit_time_gp: at least " + std::to_string(min_n) + " samples required");
    }
    for (Index i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) {
            throw Error("fit_time_gp: times must be strictly increasing");
        }
    }
    if (phi.lengthscales.size() != 1) {
        throw DimensionMismatch("fit_time_gp: hyperparameters must be one-dimensional");
    }
    if (!(noise_std > 0.0)) {
        throw Error("fit_time_gp: noise_std must be positive");
    }
}

} // namespace

TimeGP fit_time_gp(const Vector& times, const Vector& targets, const SEHyperparams& phi, double noise_std) {
    check_fit_inputs(times, targets, phi, noise_std, 2);
    TimeGP gp;
    gp.times = times;
    gp.targets = targets;
    gp.hyper = phi;
    gp.noise_std = noise_std;
    Matrix k = time_gram(times, phi);
    k.diagonal().array() += noise_std * noise_std;
    gp.factor = factorize_psd(k, 0.0);
    gp.alpha = solve_psd(gp.factor, targets);
    return gp;
}

TimeGP fit_time_gp(const Trajectory& traj, int dim, const SEHyperparams& phi, double noise_std) {
    traj.validate();
    if (dim < 0 || dim >= traj.dim()) {
        throw DimensionMismatch("fit_time_gp: output dimension out of range");
    }
    return fit_time_gp(traj.times, Vector(traj.states.col(dim)), phi, noise_std);
}

double time_nll(const Vector& times, const Vector& targets, const SEHyperparams& phi, double noise_std) {
    check_fit_inputs(times, targets, phi, noise_std, 1);
    Matrix k = time_gram(times, phi);
    k.diagonal().array() += noise_std * noise_std;
    const PsdFactorization f = factorize_psd(k, 0.0);
    const Vector alpha = solve_psd(f, targets);
    return targets.dot(alpha) + f.log_det;
}

double time_nll(const Trajectory& traj, int dim, const SEHyperparams& phi, double noise_std) {
    traj.validate();
    if (dim < 0 || dim >= traj.dim()) {
        throw DimensionMismatch("time_nll: output dimension out of range");
    }
    return time_nll(traj.times, Vector(traj.states.col(dim)), phi, noise_std);
}

double posterior_mean(const TimeGP& gp, double t) {
    Vector a(1), b(1);
    a[0] = t;
    double m = 0.0;
    for (Index i = 0; i < gp.times.size(); ++i) {
        b[0] = gp.times[i];
        m += se_eval(a, b, gp.hyper) * gp.alpha[i];
    }
    return m;
}

double posterior_var(const TimeGP& gp, double t) {
    const Index n = gp.times.size();
    Vector kt(n);
    Vector a(1), b(1);
    a[0] = t;
    for (Index i = 0; i < n; ++i) {
        b[0] = gp.times[i];
        kt[i] = se_eval(a, b, gp.hyper);
    }
    const double prior = gp.hyper.signal_std * gp.hyper.signal_std;
    const double var = prior - kt.dot(solve_psd(gp.factor, kt));
    return var > 0.0 ? var : 0.0;
}

DerivativePosterior derivative_posterior(const TimeGP& gp, int order, const Vector& query_times) {
    if (order != 1 && order != 2) {
        throw UnsupportedOrder("derivative_posterior: order must be 1 or 2");
    }
    const Index n = gp.times.size();
    const Index m = query_times.size();

    // K^(o)_{t*,T}: derivative of the kernel in the first argument.
    Matrix k_star(m, n);
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < n; ++j) {
            k_star(i, j) = se_time_deriv(query_times[i], gp.times[j], gp.hyper, order, 0);
        }
    }
    // K^(o,o)_{t*,t*}: derivative in both arguments.
    Matrix k_qq(m, m);
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < m; ++j) {
            k_qq(i, j) = se_time_deriv(query_times[i], query_times[j], gp.hyper, order, order);
        }
    }

    DerivativePosterior out;
    out.mean = k_star * gp.alpha;
    Matrix solved = solve_psd(gp.factor, Matrix(k_star.transpose()));
    out.cov = k_qq - k_star * solved;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
}

} // namespace gpode
