#pragma once

#include "gpode/kernels.hpp"
#include "gpode/trajectory.hpp"

namespace gpode {

/// Exact scalar GP over time for one output component of a trajectory.
/// Immutable after fitting; all predictions are pure.
struct TimeGP {
    Vector times;       // N, strictly increasing
    Vector targets;     // N
    SEHyperparams hyper; // 1-D kernel
    double noise_std = 0.0;
    PsdFactorization factor; // of K_{T,T} + noise_std^2 I
    Vector alpha;            // (K + noise_std^2 I)^{-1} targets
};

/// Fits the exact GP for one output dimension of the trajectory.
TimeGP fit_time_gp(const Trajectory& traj, int dim, const SEHyperparams& phi, double noise_std);
TimeGP fit_time_gp(const Vector& times, const Vector& targets, const SEHyperparams& phi, double noise_std);

/// Proportional negative log marginal likelihood
///   Y^T (K + s^2 I)^{-1} Y + log det(K + s^2 I)
/// (constant terms dropped); the training objective for the time GPs.
double time_nll(const Vector& times, const Vector& targets, const SEHyperparams& phi, double noise_std);
double time_nll(const Trajectory& traj, int dim, const SEHyperparams& phi, double noise_std);

double posterior_mean(const TimeGP& gp, double t);
/// Posterior variance, clamped to be non-negative.
double posterior_var(const TimeGP& gp, double t);

struct DerivativePosterior {
    Vector mean; // derivative posterior mean at the query times
    Matrix cov;  // joint posterior covariance of the derivatives
};

/// Posterior of the order-th time derivative (order 1 or 2) at query_times.
DerivativePosterior derivative_posterior(const TimeGP& gp, int order, const Vector& query_times);

} // namespace gpode
