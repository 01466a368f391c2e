#include "gpode/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace gpode {

Vector spiral_rhs(const Vector& x) {
    if (x.size() != 2) {
        throw DimensionMismatch("spiral_rhs: state must be two-dimensional");
    }
    const double c1 = x[0] * x[0] * x[0];
    const double c2 = x[1] * x[1] * x[1];
    Vector out(2);
    out[0] = -0.1 * c1 + 2.0 * c2;
    out[1] = -2.0 * c1 - 0.1 * c2;
    return out;
}

VectorField spiral_field() {
    VectorField f;
    f.dim = 2;
    f.rhs = [](const Vector& x) { return spiral_rhs(x); };
    f.fixed_points = {Vector::Zero(2)};
    return f;
}

Vector kepler_accel(const Vector& q, double nu) {
    if (q.size() != 2) {
        throw DimensionMismatch("kepler_accel: position must be two-dimensional");
    }
    const double r = q.norm();
    if (r < 1e-12) {
        throw SingularState("kepler_accel: state at the gravitational singularity");
    }
    return Vector(-nu / (r * r * r) * q);
}

Vector kepler_rhs(const Vector& state, double nu) {
    if (state.size() != 4) {
        throw DimensionMismatch("kepler_rhs: state must be four-dimensional (q, qdot)");
    }
    Vector out(4);
    out.head(2) = state.tail(2);
    out.tail(2) = kepler_accel(state.head(2), nu);
    return out;
}

VectorField kepler_field(double nu) {
    VectorField f;
    f.dim = 4;
    f.rhs = [nu](const Vector& x) { return kepler_rhs(x, nu); };
    f.symmetry = GroupAction::paired_rotation4();
    f.second_order = true;
    return f;
}

double hamiltonian(const Vector& q, const Vector& qdot, double nu) {
    const double r = q.norm();
    if (r < 1e-12) {
        throw SingularState("hamiltonian: state at the gravitational singularity");
    }
    return 0.5 * qdot.squaredNorm() - nu / r;
}

double angular_momentum(const Vector& q, const Vector& qdot) {
    return q[0] * qdot[1] - qdot[0] * q[1];
}

double kepler_period(const Vector& state, double nu) {
    if (state.size() != 4) {
        throw DimensionMismatch("kepler_period: state must be four-dimensional");
    }
    const double r = state.head(2).norm();
    if (r < 1e-12) {
        throw SingularState("kepler_period: degenerate state");
    }
    const double inv_a = 2.0 / r - state.tail(2).squaredNorm() / nu; // vis-viva
    if (!(inv_a > 0.0)) {
        throw SingularState("kepler_period: orbit is not bounded");
    }
    const double a = 1.0 / inv_a;
    return 2.0 * std::numbers::pi * std::sqrt(a * a * a / nu);
}

IntegratorMethod integrator_from_name(const std::string& name) {
    if (name == "rk4") return IntegratorMethod::Rk4;
    if (name == "euler") return IntegratorMethod::Euler;
    if (name == "implicit_midpoint") return IntegratorMethod::ImplicitMidpoint;
    throw ConfigError("unknown integrator: " + name);
}

std::string integrator_name(IntegratorMethod m) {
    switch (m) {
    case IntegratorMethod::Rk4: return "rk4";
    case IntegratorMethod::Euler: return "euler";
    case IntegratorMethod::ImplicitMidpoint: return "implicit_midpoint";
    }
    return "rk4";
}

namespace {

Vector rk4_step(const VectorField& f, const Vector& x, double dt) {
    const Vector k1 = f.rhs(x);
    const Vector k2 = f.rhs(x + 0.5 * dt * k1);
    const Vector k3 = f.rhs(x + 0.5 * dt * k2);
    const Vector k4 = f.rhs(x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector euler_step(const VectorField& f, const Vector& x, double dt) {
    return x + dt * f.rhs(x);
}

// Solves x1 = x + dt f((x + x1)/2) by fixed-point iteration from the Euler
// predictor; returns nullopt when the iteration does not converge.
std::optional<Vector> midpoint_solve(const VectorField& f, const Vector& x, double dt,
                                     const IntegratorConfig& cfg) {
    Vector x1 = euler_step(f, x, dt);
    for (int it = 0; it < cfg.fp_max_iters; ++it) {
        const Vector next = x + dt * f.rhs(0.5 * (x + x1));
        const double delta = (next - x1).lpNorm<Eigen::Infinity>();
        x1 = next;
        if (delta <= cfg.fp_tol) {
            return x1;
        }
    }
    return std::nullopt;
}

Vector midpoint_step(const VectorField& f, const Vector& x, double dt, const IntegratorConfig& cfg) {
    if (auto x1 = midpoint_solve(f, x, dt, cfg)) {
        return *x1;
    }
    // One-time retry with two half steps before giving up.
    if (auto half = midpoint_solve(f, x, 0.5 * dt, cfg)) {
        if (auto full = midpoint_solve(f, *half, 0.5 * dt, cfg)) {
            return *full;
        }
    }
    throw NoConvergence("integrate: implicit midpoint fixed-point iteration did not converge");
}

} // namespace

Trajectory integrate(const VectorField& f, const Vector& x0, double t0, double t1,
                     const IntegratorConfig& cfg) {
    cfg.validate();
    if (x0.size() != f.dim) {
        throw DimensionMismatch("integrate: initial state dimension mismatch");
    }
    if (!(t1 > t0)) {
        throw Error("integrate: time span must be positive");
    }
    const double span = t1 - t0;
    const Index n_full = static_cast<Index>(std::floor(span / cfg.dt + 1e-9));
    const double remainder = span - static_cast<double>(n_full) * cfg.dt;
    const bool partial = remainder > 1e-12 * span;
    const Index n_steps = n_full + (partial ? 1 : 0);

    Trajectory traj;
    traj.times.resize(n_steps + 1);
    traj.states.resize(n_steps + 1, f.dim);
    traj.times[0] = t0;
    traj.states.row(0) = x0;

    Vector x = x0;
    for (Index k = 0; k < n_steps; ++k) {
        const double dt = (k < n_full) ? cfg.dt : remainder;
        const double t = t0 + static_cast<double>(k) * cfg.dt;
        try {
            switch (cfg.method) {
            case IntegratorMethod::Rk4: x = rk4_step(f, x, dt); break;
            case IntegratorMethod::Euler: x = euler_step(f, x, dt); break;
            case IntegratorMethod::ImplicitMidpoint: x = midpoint_step(f, x, dt, cfg); break;
            }
        } catch (const NoConvergence& e) {
            throw NoConvergence(std::string(e.what()) + " (at t = " + std::to_string(t) + ")");
        } catch (const SingularState& e) {
            throw SingularState(std::string(e.what()) + " (at t = " + std::to_string(t) + ")");
        } catch (const DegenerateOrbit& e) {
            throw DegenerateOrbit(std::string(e.what()) + " (at t = " + std::to_string(t) + ")");
        }
        traj.times[k + 1] = (k + 1 == n_steps) ? t1 : t0 + static_cast<double>(k + 1) * cfg.dt;
        traj.states.row(k + 1) = x;
    }
    return traj;
}

Trajectory sample_trajectory_to_data(const VectorField& f, const Vector& x0, double t0, double t1,
                                     int n, double noise_std, std::uint64_t seed,
                                     SampleSpacing spacing) {
    if (n < 2) {
        throw Error("sample_trajectory_to_data: at least two samples required");
    }
    if (!(t1 > t0)) {
        throw Error("sample_trajectory_to_data: time span must be positive");
    }
    const double span = t1 - t0;

    Vector sample_times(n);
    if (spacing == SampleSpacing::OpenLeft) {
        for (int i = 0; i < n; ++i) {
            sample_times[i] = t0 + span * static_cast<double>(i + 1) / n;
        }
    } else {
        for (int i = 0; i < n; ++i) {
            sample_times[i] = t0 + span * static_cast<double>(i) / (n - 1);
        }
    }

    IntegratorConfig ref;
    ref.method = IntegratorMethod::Rk4;
    ref.dt = span / (1000.0 * n);

    Trajectory traj;
    traj.times = sample_times;
    traj.states.resize(n, f.dim);

    // Integrate segment by segment so every sample time is landed on exactly.
    Vector x = x0;
    double t = t0;
    for (int i = 0; i < n; ++i) {
        if (sample_times[i] > t) {
            const Trajectory seg = integrate(f, x, t, sample_times[i], ref);
            x = seg.states.row(seg.size() - 1);
            t = sample_times[i];
        }
        traj.states.row(i) = x;
    }

    if (noise_std > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, noise_std);
        for (Index i = 0; i < traj.states.rows(); ++i) {
            for (Index j = 0; j < traj.states.cols(); ++j) {
                traj.states(i, j) += noise(rng);
            }
        }
    }
    return traj;
}

} // namespace gpode
