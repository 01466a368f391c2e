#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpode/dense_gp.hpp"
#include "gpode/dynamics.hpp"
#include "gpode/optimize.hpp"
#include "gpode/sparse_gp.hpp"

namespace gpode {

enum class KernelVariant { SharedIsotropic, DiagonalIndependent, Usm, Gim };

KernelVariant kernel_variant_from_name(const std::string& name);
std::string kernel_variant_name(KernelVariant v);

/// Settings for the trajectory-GP fit that produces derivative data.
struct TimeFitConfig {
    std::optional<std::vector<double>> init; // (signal_std, lengthscale, noise_std)
    OptimizerConfig optimizer;
    bool optimize = true; // fit hyperparameters; otherwise use init as-is
};

/// Output of the derivative extraction step: the supervised dataset plus the
/// fitted time-GP hyperparameters for reporting.
struct DerivativeExtraction {
    DerivativeDataset data; // order 1: (m, mdot); order 2: ((m, mdot), (mdot, mddot))
    std::optional<DerivativeDataset> second_order; // pure (m, mddot) pairs
    std::vector<double> time_params;               // fitted (signal_std, lengthscale, noise_std)
    double time_nll_value = 0.0;
};

/// Fits one scalar GP per trajectory component (shared hyperparameters,
/// objective summed across components) and evaluates posterior means and
/// derivatives at the original sample times.
DerivativeExtraction extract_derivative_data(const Trajectory& traj, int order,
                                             bool want_second_order, const TimeFitConfig& cfg);

/// Appends (x_hat, 0) pairs flagged as fixed points. Throws DuplicatePoint if
/// a point lies within 1e-9 of an existing input.
DerivativeDataset augment_fixed_points(const DerivativeDataset& data,
                                       const std::vector<Vector>& points);

/// Rotates every (input, target) pair onto the section q_2 = 0, q_1 > 0 by
/// the group element that cancels the angle of the first rotation block.
DerivativeDataset project_to_quotient(const DerivativeDataset& data, const GroupAction& g);

/// Cartesian grid of inducing points. With a quotient action the grid spec
/// lives in quotient coordinates and the points are embedded on the section
/// (a zero is inserted for the collapsed coordinate).
InducingSet build_inducing_grid(const GridSpec& spec, const std::optional<GroupAction>& quotient);

/// Learning configuration for the sparse field model (step 2 plus the
/// structural mechanisms).
struct LearnConfig {
    KernelVariant kernel = KernelVariant::SharedIsotropic;
    std::optional<std::vector<double>> kernel_init; // free params; data heuristics otherwise
    std::optional<GridSpec> grid;  // bounds may be left empty for auto-derivation
    std::optional<Matrix> explicit_z;
    double noise_std = 0.0;        // 0: derivative nugget = nugget_rel * std of targets
    double nugget_rel = 1e-3;
    bool optimize_noise = false;
    OptimizerConfig optimizer;
    std::optional<GroupAction> action;
    int derivative_order = 1;      // trajectory differentiation order for extraction
    bool second_order = false;     // learn qddot = f(q) instead of the embedding
    std::vector<Vector> fixed_points;
    double lambda_noise_ratio_min = 1e3; // box constraint for GIM kernels
    bool use_kronecker = true;
    TimeFitConfig time_fit;
};

/// Optimizes the kernel hyperparameters over the FITC likelihood and stores
/// the prediction weights. The dataset must already be augmented/projected.
SparseFieldModel train_field(const DerivativeDataset& data, const LearnConfig& cfg);

struct LearnOutcome {
    SparseFieldModel model;
    DerivativeExtraction extraction;
};

/// Full learning procedure from a raw trajectory: derivative extraction,
/// fixed-point augmentation, quotient projection, grid construction and
/// sparse training.
LearnOutcome learn_field_from_trajectory(const Trajectory& traj, const LearnConfig& cfg);

/// Predictive field at a full-space state: symmetric models predict on the
/// section and rotate back; second-order models assemble (qdot, f(q)).
std::pair<Vector, Matrix> predict_field(const SparseFieldModel& model, const Vector& x);
Vector predict_field_mean(const SparseFieldModel& model, const Vector& x);

/// Integrates the predictive mean field.
Trajectory rollout(const SparseFieldModel& model, const Vector& x0, double t0, double t1,
                   const IntegratorConfig& cfg);

struct UncertainRollout {
    Trajectory mean;                  // mean-field rollout on the sample grid
    Matrix std;                       // per-time, per-dimension std across sample paths
    std::vector<Trajectory> samples;
    int memory_cap = 100;
};

/// Draws sample rollouts from the model: each Euler step samples the field
/// from the predictive distribution conditioned on the model and on the
/// path's memory of up to memory_cap recent (state, sampled field) pairs.
UncertainRollout sample_uncertain_rollout(const SparseFieldModel& model, const Vector& x0,
                                          double t0, double t1, int n_samples,
                                          std::uint64_t seed, int memory_cap = 100,
                                          double dt = 1e-3);

struct ErrorReport {
    double train_error = 0.0;
    double test_error = 0.0;
    double total_error = 0.0;
    double split_time = 0.0;
    int n_eval = 0;
};

/// Time-mean Euclidean state distance on a common equidistant grid, split at
/// split_time into train/test windows.
ErrorReport evaluate_errors(const Trajectory& rollout, const Trajectory& reference,
                            double split_time, int n_eval = 300);

/// Linear-interpolation resampling of a trajectory onto given times.
Trajectory resample(const Trajectory& traj, const Vector& times);

} // namespace gpode
