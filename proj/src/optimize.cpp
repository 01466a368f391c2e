#include "gpode/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace gpode {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double guarded(const Objective& objective, const Vector& x) {
    const double f = objective(x);
    return std::isfinite(f) ? f : kInf;
}

struct SimplexRun {
    Vector x;
    double f = kInf;
    int iterations = 0;
    bool converged = false;
};

SimplexRun run_simplex(const Objective& objective, const Vector& x0, const OptimizerConfig& cfg) {
    const Index n = x0.size();
    std::vector<Vector> verts(static_cast<size_t>(n) + 1, x0);
    std::vector<double> fv(static_cast<size_t>(n) + 1);
    for (Index i = 0; i < n; ++i) {
        verts[static_cast<size_t>(i) + 1][i] += cfg.initial_step;
    }
    for (size_t i = 0; i < verts.size(); ++i) {
        fv[i] = guarded(objective, verts[i]);
    }

    std::vector<size_t> order(verts.size());
    SimplexRun run;
    for (run.iterations = 0; run.iterations < cfg.max_iters; ++run.iterations) {
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return fv[a] < fv[b]; });
        const size_t best = order.front();
        const size_t worst = order.back();
        const size_t second_worst = order[order.size() - 2];

        // Termination: simplex diameter or relative f-spread.
        double diameter = 0.0;
        for (size_t i = 0; i < verts.size(); ++i) {
            diameter = std::max(diameter, (verts[i] - verts[best]).lpNorm<Eigen::Infinity>());
        }
        const double spread = fv[worst] - fv[best];
        const double f_scale = 0.5 * (std::abs(fv[worst]) + std::abs(fv[best]));
        const bool f_done = std::isfinite(spread) && spread <= cfg.f_tol * f_scale + 1e-300;
        if (diameter < cfg.x_tol || f_done) {
            run.converged = true;
            break;
        }

        Vector centroid = Vector::Zero(n);
        for (size_t i = 0; i < verts.size(); ++i) {
            if (i != worst) centroid += verts[i];
        }
        centroid /= static_cast<double>(n);

        const Vector reflected = centroid + (centroid - verts[worst]);
        const double f_r = guarded(objective, reflected);
        if (f_r < fv[best]) {
            const Vector expanded = centroid + 2.0 * (centroid - verts[worst]);
            const double f_e = guarded(objective, expanded);
            if (f_e < f_r) {
                verts[worst] = expanded;
                fv[worst] = f_e;
            } else {
                verts[worst] = reflected;
                fv[worst] = f_r;
            }
            continue;
        }
        if (f_r < fv[second_worst]) {
            verts[worst] = reflected;
            fv[worst] = f_r;
            continue;
        }
        // Contraction, outside or inside of the worst vertex.
        Vector contracted;
        if (f_r < fv[worst]) {
            contracted = centroid + 0.5 * (reflected - centroid);
        } else {
            contracted = centroid + 0.5 * (verts[worst] - centroid);
        }
        const double f_c = guarded(objective, contracted);
        if (f_c < std::min(f_r, fv[worst])) {
            verts[worst] = contracted;
            fv[worst] = f_c;
            continue;
        }
        // Shrink toward the best vertex.
        for (size_t i = 0; i < verts.size(); ++i) {
            if (i == best) continue;
            verts[i] = verts[best] + 0.5 * (verts[i] - verts[best]);
            fv[i] = guarded(objective, verts[i]);
        }
    }

    size_t best = 0;
    for (size_t i = 1; i < verts.size(); ++i) {
        if (fv[i] < fv[best]) best = i;
    }
    run.x = verts[best];
    run.f = fv[best];
    return run;
}

} // namespace

OptResult nelder_mead(const Objective& objective, const Vector& x0, const OptimizerConfig& cfg) {
    cfg.validate();
    if (x0.size() == 0) {
        throw Error("nelder_mead: empty start point");
    }
    if (!std::isfinite(objective(x0))) {
        throw NonFiniteInitial("nelder_mead: objective non-finite at the start point");
    }

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> jitter(-cfg.initial_step, cfg.initial_step);

    OptResult result;
    result.f = kInf;
    for (int r = 0; r <= cfg.restarts; ++r) {
        Vector start = x0;
        if (r > 0) {
            for (Index i = 0; i < start.size(); ++i) {
                start[i] += jitter(rng);
            }
        }
        SimplexRun run = run_simplex(objective, start, cfg);
        result.iterations += run.iterations;
        if (run.f < result.f) { // ties keep the earlier restart
            result.x = run.x;
            result.f = run.f;
            result.converged = run.converged;
        }
    }
    return result;
}

Vector ParamTransform::clamp(Vector u) const {
    if (log_lo.size() > 0) {
        if (log_lo.size() != u.size()) {
            throw DimensionMismatch("ParamTransform: lower bound size mismatch");
        }
        u = u.cwiseMax(log_lo);
    }
    if (log_hi.size() > 0) {
        if (log_hi.size() != u.size()) {
            throw DimensionMismatch("ParamTransform: upper bound size mismatch");
        }
        u = u.cwiseMin(log_hi);
    }
    return u;
}

Vector ParamTransform::to_unconstrained(const std::vector<double>& positive) const {
    Vector u(static_cast<Index>(positive.size()));
    for (size_t i = 0; i < positive.size(); ++i) {
        if (!(positive[i] > 0.0)) {
            throw Error("ParamTransform: parameters must be strictly positive");
        }
        u[static_cast<Index>(i)] = std::log(positive[i]);
    }
    return clamp(u);
}

std::vector<double> ParamTransform::to_positive(const Vector& u) const {
    const Vector c = clamp(u);
    std::vector<double> out(static_cast<size_t>(c.size()));
    for (Index i = 0; i < c.size(); ++i) {
        out[static_cast<size_t>(i)] = std::exp(c[i]);
    }
    return out;
}

FitParamsResult fit_hyperparams(const std::function<double(const std::vector<double>&)>& objective,
                                const std::vector<double>& init,
                                const OptimizerConfig& cfg,
                                const ParamTransform& transform) {
    if (init.empty()) {
        throw Error("fit_hyperparams: empty initial parameters");
    }
    const Vector u0 = transform.to_unconstrained(init);
    const Objective wrapped = [&](const Vector& u) { return objective(transform.to_positive(u)); };
    OptResult res = nelder_mead(wrapped, u0, cfg);
    FitParamsResult out;
    out.params = transform.to_positive(res.x);
    out.objective = res.f;
    out.iterations = res.iterations;
    out.converged = res.converged;
    return out;
}

} // namespace gpode
