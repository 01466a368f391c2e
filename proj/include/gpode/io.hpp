#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "gpode/pipeline.hpp"

namespace gpode {

/// Parsed experiment configuration (see README for the schema).
struct DataConfig {
    Vector x0;
    std::optional<std::pair<double, double>> span;
    int n = 0;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
    SampleSpacing spacing = SampleSpacing::OpenLeft;
};

struct RolloutSection {
    IntegratorMethod method = IntegratorMethod::Rk4;
    double dt = 1e-3;
    std::optional<std::pair<double, double>> span;
    int samples = 0;
    int out_points = 300;
};

struct RunConfig {
    std::string experiment;
    std::string system; // "spiral" | "kepler" | "external-csv"
    double nu = 1.0;
    DataConfig data;
    LearnConfig learn;
    RolloutSection rollout;
    std::string output_dir;
    std::string config_hash; // over the semantically relevant fields
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config(const std::filesystem::path& path);

/// Resolves system-dependent defaults (initial state, spans, sample counts).
void apply_system_defaults(RunConfig& cfg);

/// CSV with header `t,x1,...,xD` and 17-significant-digit floats.
std::string trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(const std::string& text);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

/// Atomic file write (temp + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Model serialization; loading restores predictions bit-exactly.
std::string model_to_json(const SparseFieldModel& model);
SparseFieldModel model_from_json(const std::string& text);
void save_model(const std::filesystem::path& path, const SparseFieldModel& model);
SparseFieldModel load_model(const std::filesystem::path& path);

/// 64-bit FNV-1a, hex-encoded; used for the config hash.
std::string fnv1a_hex(const std::string& text);

/// Comma-separated doubles ("2,0" -> [2, 0]).
Vector parse_vector_arg(const std::string& text);

// ---- CLI commands. Each returns a process exit code:
//      0 success, 2 usage/config error, 3 runtime error.

struct SimulateOptions {
    std::string config_path;
    std::string out_path;
    std::optional<std::uint64_t> seed;
};
int cmd_simulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err);

struct TrainOptions {
    std::string config_path;
    std::string data_path;
    std::string out_path;
    std::optional<std::uint64_t> seed;
};
int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err);

struct RolloutOptions {
    std::string model_path;
    std::string out_path;
    std::optional<std::string> config_path; // defaults source for x0/span
    std::optional<std::string> x0;
    std::optional<std::string> span;
    std::optional<std::string> integrator;
    std::optional<double> dt;
    int samples = 0;
    std::uint64_t seed = 0;
    int out_points = 300;
};
int cmd_rollout(const RolloutOptions& opt, std::ostream& out, std::ostream& err);

struct EvaluateOptions {
    std::string rollout_path;
    std::string reference_path;
    double split_time = 0.0;
    std::optional<std::string> out_path;
    std::optional<std::string> integrals;     // e.g. "hamiltonian,angular_momentum"
    std::optional<std::string> integrals_out; // CSV destination for the series
    double nu = 1.0;
    int n_eval = 300;
};
int cmd_evaluate(const EvaluateOptions& opt, std::ostream& out, std::ostream& err);

} // namespace gpode
