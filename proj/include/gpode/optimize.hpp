#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gpode/numerics.hpp"

namespace gpode {

struct OptimizerConfig {
    int max_iters = 2000;
    double x_tol = 1e-6;       // simplex diameter, in the search space
    double f_tol = 1e-9;       // relative spread of simplex values
    double initial_step = 0.25;
    int restarts = 3;          // jittered restarts in addition to the seed point
    std::uint64_t seed = 0;    // drives the restart jitter

    void validate() const {
        if (max_iters < 1) throw Error("OptimizerConfig: max_iters must be >= 1");
        if (!(x_tol > 0.0) || !(f_tol > 0.0) || !(initial_step > 0.0)) {
            throw Error("OptimizerConfig: tolerances and initial_step must be positive");
        }
        if (restarts < 0) throw Error("OptimizerConfig: restarts must be >= 0");
    }
};

struct OptResult {
    Vector x;
    double f = 0.0;
    int iterations = 0; // total across restarts
    bool converged = false;
};

using Objective = std::function<double(const Vector&)>;

/// Derivative-free Nelder-Mead simplex minimization with textbook
/// coefficients (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
/// Non-finite objective values are treated as +inf during the run; a
/// non-finite value at x0 itself raises NonFiniteInitial. Deterministic for a
/// fixed seed/config/objective.
OptResult nelder_mead(const Objective& objective, const Vector& x0, const OptimizerConfig& cfg);

/// Mapping between positive hyperparameters and the unconstrained log-space
/// vector the optimizer works in, with optional box constraints (applied by
/// clamping in log space).
struct ParamTransform {
    Vector log_lo; // empty, or per-coordinate lower bounds in log space
    Vector log_hi; // empty, or per-coordinate upper bounds in log space

    static ParamTransform unbounded() { return {}; }

    Vector clamp(Vector u) const;
    Vector to_unconstrained(const std::vector<double>& positive) const;
    std::vector<double> to_positive(const Vector& u) const;
};

struct FitParamsResult {
    std::vector<double> params; // positive hyperparameters
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Minimizes an objective over positive parameters by composing the log
/// transform with nelder_mead. Box constraints are honored both during the
/// search and in the returned parameters.
FitParamsResult fit_hyperparams(const std::function<double(const std::vector<double>&)>& objective,
                                const std::vector<double>& init,
                                const OptimizerConfig& cfg,
                                const ParamTransform& transform = ParamTransform::unbounded());

} // namespace gpode
