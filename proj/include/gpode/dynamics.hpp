#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "gpode/kernels.hpp"
#include "gpode/trajectory.hpp"

namespace gpode {

/// Right-hand side of an ODE plus the structural metadata the learning
/// pipeline can exploit.
struct VectorField {
    int dim = 0;
    std::function<Vector(const Vector&)> rhs;
    std::vector<Vector> fixed_points;
    std::optional<GroupAction> symmetry;
    bool second_order = false; // state = (q, qdot), rhs assembled from f(q)
};

/// Cubic spiral system: xdot = A (x1^3, x2^3)^T with a stable fixed point at
/// the origin.
Vector spiral_rhs(const Vector& x);
VectorField spiral_field();

/// Kepler two-body acceleration qddot = -nu q / |q|^3 (2-D positions).
Vector kepler_accel(const Vector& q, double nu);
/// First-order form over the state (q, qdot).
Vector kepler_rhs(const Vector& state, double nu);
VectorField kepler_field(double nu);

/// First integrals of the Kepler system.
double hamiltonian(const Vector& q, const Vector& qdot, double nu);
double angular_momentum(const Vector& q, const Vector& qdot);

/// Orbital period of the bounded Kepler orbit through the given state
/// (vis-viva). Throws SingularState for unbound or degenerate states.
double kepler_period(const Vector& state, double nu);

enum class IntegratorMethod { Rk4, Euler, ImplicitMidpoint };

struct IntegratorConfig {
    IntegratorMethod method = IntegratorMethod::Rk4;
    double dt = 1e-2;
    double fp_tol = 1e-12;  // implicit solve: fixed-point increment tolerance
    int fp_max_iters = 100;

    void validate() const {
        if (!(dt > 0.0)) throw Error("IntegratorConfig: dt must be positive");
    }
};

IntegratorMethod integrator_from_name(const std::string& name);
std::string integrator_name(IntegratorMethod m);

/// Fixed-step integration from t0 to t1; the final partial step is taken
/// exactly. The returned trajectory includes the initial state.
Trajectory integrate(const VectorField& f, const Vector& x0, double t0, double t1,
                     const IntegratorConfig& cfg);

/// Endpoint convention for equidistant trajectory sampling: OpenLeft takes
/// t_i = t0 + i*span/N for i = 1..N; Closed includes both endpoints.
enum class SampleSpacing { OpenLeft, Closed };

/// Integrates at reference quality (RK4, dt = span/(1000 N)), samples N
/// equidistant times and adds seeded Gaussian observation noise.
Trajectory sample_trajectory_to_data(const VectorField& f, const Vector& x0, double t0, double t1,
                                     int n, double noise_std, std::uint64_t seed,
                                     SampleSpacing spacing = SampleSpacing::OpenLeft);

} // namespace gpode
