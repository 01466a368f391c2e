#include "gpode/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace gpode {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kLibraryVersion = "0.1.0";

std::string read_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open file: " + path.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void check_keys(const json& j, const std::string& ctx, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        throw ConfigError(ctx + ": expected an object");
    }
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError(ctx + ": unknown key '" + item.key() + "'");
        }
    }
}

Vector vector_from_json(const json& j, const std::string& ctx) {
    if (!j.is_array()) {
        throw ConfigError(ctx + ": expected an array of numbers");
    }
    Vector v(static_cast<Index>(j.size()));
    Index i = 0;
    for (const auto& e : j) {
        if (!e.is_number()) {
            throw ConfigError(ctx + ": expected an array of numbers");
        }
        v[i++] = e.get<double>();
    }
    return v;
}

json vector_to_json(const Vector& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Matrix matrix_from_json(const json& j, const std::string& ctx) {
    if (!j.is_array() || j.empty()) {
        throw ConfigError(ctx + ": expected a non-empty array of rows");
    }
    const Index rows = static_cast<Index>(j.size());
    const Index cols = static_cast<Index>(j.front().size());
    Matrix m(rows, cols);
    Index i = 0;
    for (const auto& row : j) {
        if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
            throw ConfigError(ctx + ": ragged rows");
        }
        Index k = 0;
        for (const auto& e : row) m(i, k++) = e.get<double>();
        ++i;
    }
    return m;
}

json matrix_to_json(const Matrix& m) {
    json out = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        out.push_back(std::move(row));
    }
    return out;
}

std::pair<double, double> span_from_json(const json& j, const std::string& ctx) {
    const Vector v = vector_from_json(j, ctx);
    if (v.size() != 2 || !(v[1] > v[0])) {
        throw ConfigError(ctx + ": span must be [t0, t1] with t1 > t0");
    }
    return {v[0], v[1]};
}

OptimizerConfig optimizer_from_json(const json& j, const std::string& ctx) {
    check_keys(j, ctx, {"max_iters", "x_tol", "f_tol", "initial_step", "restarts", "seed"});
    OptimizerConfig cfg;
    if (j.contains("max_iters")) cfg.max_iters = j["max_iters"].get<int>();
    if (j.contains("x_tol")) cfg.x_tol = j["x_tol"].get<double>();
    if (j.contains("f_tol")) cfg.f_tol = j["f_tol"].get<double>();
    if (j.contains("initial_step")) cfg.initial_step = j["initial_step"].get<double>();
    if (j.contains("restarts")) cfg.restarts = j["restarts"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
    return cfg;
}

GridSpec grid_from_json(const json& j, const std::string& ctx) {
    check_keys(j, ctx, {"lo", "hi", "counts"});
    GridSpec spec;
    if (!j.contains("counts")) {
        throw ConfigError(ctx + ": grid requires 'counts'");
    }
    for (const auto& c : j["counts"]) spec.counts.push_back(c.get<int>());
    if (j.contains("lo") != j.contains("hi")) {
        throw ConfigError(ctx + ": grid bounds need both 'lo' and 'hi'");
    }
    if (j.contains("lo")) {
        spec.lo = vector_from_json(j["lo"], ctx + ".lo");
        spec.hi = vector_from_json(j["hi"], ctx + ".hi");
        try {
            spec.validate();
        } catch (const Error& e) {
            throw ConfigError(ctx + ": " + e.what());
        }
    }
    return spec;
}

DataConfig data_from_json(const json& j) {
    check_keys(j, "data", {"x0", "span", "n", "noise_std", "seed", "spacing"});
    DataConfig d;
    if (j.contains("x0")) d.x0 = vector_from_json(j["x0"], "data.x0");
    if (j.contains("span")) d.span = span_from_json(j["span"], "data.span");
    if (j.contains("n")) d.n = j["n"].get<int>();
    if (j.contains("noise_std")) d.noise_std = j["noise_std"].get<double>();
    if (j.contains("seed")) d.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("spacing")) {
        const std::string s = j["spacing"].get<std::string>();
        if (s == "open") {
            d.spacing = SampleSpacing::OpenLeft;
        } else if (s == "closed") {
            d.spacing = SampleSpacing::Closed;
        } else {
            throw ConfigError("data.spacing: must be 'open' or 'closed'");
        }
    }
    return d;
}

LearnConfig learn_from_json(const json& j) {
    check_keys(j, "learn",
               {"kernel", "symmetry", "second_order", "derivative_order", "quadrature_nodes",
                "grid", "explicit_z", "noise_std", "nugget_rel", "optimize_noise", "fixed_points",
                "lambda_noise_ratio_min", "use_kronecker", "optimizer", "kernel_init",
                "time_optimizer", "time_init"});
    LearnConfig cfg;
    if (j.contains("kernel")) cfg.kernel = kernel_variant_from_name(j["kernel"].get<std::string>());
    if (j.contains("symmetry")) {
        const std::string s = j["symmetry"].get<std::string>();
        if (s != "none") cfg.action = GroupAction::from_name(s);
    }
    if (j.contains("quadrature_nodes") && cfg.action) {
        cfg.action->set_quadrature_nodes(j["quadrature_nodes"].get<int>());
    }
    if (j.contains("second_order")) cfg.second_order = j["second_order"].get<bool>();
    if (j.contains("derivative_order")) cfg.derivative_order = j["derivative_order"].get<int>();
    if (cfg.second_order) cfg.derivative_order = 2;
    if (cfg.derivative_order != 1 && cfg.derivative_order != 2) {
        throw ConfigError("learn.derivative_order: must be 1 or 2");
    }
    if (j.contains("grid")) cfg.grid = grid_from_json(j["grid"], "learn.grid");
    if (j.contains("explicit_z")) cfg.explicit_z = matrix_from_json(j["explicit_z"], "learn.explicit_z");
    if (j.contains("noise_std")) cfg.noise_std = j["noise_std"].get<double>();
    if (j.contains("nugget_rel")) cfg.nugget_rel = j["nugget_rel"].get<double>();
    if (j.contains("optimize_noise")) cfg.optimize_noise = j["optimize_noise"].get<bool>();
    if (j.contains("fixed_points")) {
        for (const auto& p : j["fixed_points"]) {
            cfg.fixed_points.push_back(vector_from_json(p, "learn.fixed_points"));
        }
    }
    if (j.contains("lambda_noise_ratio_min")) {
        cfg.lambda_noise_ratio_min = j["lambda_noise_ratio_min"].get<double>();
    }
    if (j.contains("use_kronecker")) cfg.use_kronecker = j["use_kronecker"].get<bool>();
    if (j.contains("optimizer")) cfg.optimizer = optimizer_from_json(j["optimizer"], "learn.optimizer");
    if (j.contains("kernel_init")) {
        cfg.kernel_init = j["kernel_init"].get<std::vector<double>>();
    }
    if (j.contains("time_optimizer")) {
        cfg.time_fit.optimizer = optimizer_from_json(j["time_optimizer"], "learn.time_optimizer");
    }
    if (j.contains("time_init")) {
        cfg.time_fit.init = j["time_init"].get<std::vector<double>>();
    }
    if (cfg.kernel == KernelVariant::Gim && !cfg.action) {
        throw ConfigError("learn.kernel: 'gim' requires learn.symmetry");
    }
    return cfg;
}

RolloutSection rollout_from_json(const json& j) {
    check_keys(j, "rollout", {"integrator", "dt", "span", "samples", "out_points"});
    RolloutSection r;
    if (j.contains("integrator")) r.method = integrator_from_name(j["integrator"].get<std::string>());
    if (j.contains("dt")) r.dt = j["dt"].get<double>();
    if (j.contains("span")) r.span = span_from_json(j["span"], "rollout.span");
    if (j.contains("samples")) r.samples = j["samples"].get<int>();
    if (j.contains("out_points")) r.out_points = j["out_points"].get<int>();
    if (!(r.dt > 0.0)) throw ConfigError("rollout.dt: must be positive");
    return r;
}

} // namespace

RunConfig parse_run_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, "config", {"experiment", "system", "nu", "data", "learn", "rollout", "output"});
    RunConfig cfg;
    if (j.contains("experiment")) cfg.experiment = j["experiment"].get<std::string>();
    if (!j.contains("system")) {
        throw ConfigError("config: 'system' is required");
    }
    cfg.system = j["system"].get<std::string>();
    if (cfg.system != "spiral" && cfg.system != "kepler" && cfg.system != "external-csv") {
        throw ConfigError("config.system: must be 'spiral', 'kepler' or 'external-csv'");
    }
    if (j.contains("nu")) cfg.nu = j["nu"].get<double>();
    if (!(cfg.nu > 0.0)) throw ConfigError("config.nu: must be positive");
    try {
        if (j.contains("data")) cfg.data = data_from_json(j["data"]);
        if (j.contains("learn")) cfg.learn = learn_from_json(j["learn"]);
        if (j.contains("rollout")) cfg.rollout = rollout_from_json(j["rollout"]);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (j.contains("output")) {
        check_keys(j["output"], "output", {"dir"});
        if (j["output"].contains("dir")) cfg.output_dir = j["output"]["dir"].get<std::string>();
    }

    // The hash covers everything that affects the model; labels and output
    // locations are excluded.
    json semantic = json::object();
    for (const char* key : {"system", "nu", "data", "learn"}) {
        if (j.contains(key)) semantic[key] = j[key];
    }
    cfg.config_hash = fnv1a_hex(semantic.dump());
    apply_system_defaults(cfg);
    return cfg;
}

RunConfig parse_run_config(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_run_config_text(ss.str());
}

void apply_system_defaults(RunConfig& cfg) {
    if (cfg.system == "spiral") {
        if (cfg.data.x0.size() == 0) {
            cfg.data.x0 = Vector(2);
            cfg.data.x0 << 2.0, 0.0;
        }
        if (!cfg.data.span) cfg.data.span = {0.0, 1.5};
        if (cfg.data.n == 0) cfg.data.n = 20;
        if (!cfg.rollout.span) cfg.rollout.span = {0.0, 3.0};
    } else if (cfg.system == "kepler") {
        if (cfg.data.x0.size() == 0) {
            cfg.data.x0 = Vector(4);
            cfg.data.x0 << 1.0, 0.0, 0.0, 1.1;
        }
        if (!cfg.data.span) {
            const double period = kepler_period(cfg.data.x0, cfg.nu);
            cfg.data.span = {0.0, 2.0 * period};
        }
        if (cfg.data.n == 0) cfg.data.n = 60;
        if (!cfg.rollout.span) {
            const double period = kepler_period(cfg.data.x0, cfg.nu);
            cfg.rollout.span = {0.0, 5.0 * period};
        }
    }
    if (cfg.data.n != 0 && cfg.data.n < 2) {
        throw ConfigError("data.n: at least two samples required");
    }
}

std::string trajectory_to_csv(const Trajectory& traj) {
    traj.validate();
    std::string out = "t";
    for (Index k = 0; k < traj.dim(); ++k) {
        out += ",x" + std::to_string(k + 1);
    }
    out += "\n";
    for (Index i = 0; i < traj.size(); ++i) {
        out += format_double(traj.times[i]);
        for (Index k = 0; k < traj.dim(); ++k) {
            out += ",";
            out += format_double(traj.states(i, k));
        }
        out += "\n";
    }
    return out;
}

Trajectory trajectory_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) {
        throw IoError("trajectory csv: empty file");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("t,", 0) != 0) {
        throw IoError("trajectory csv: header must start with 't,'");
    }
    Index dim = 0;
    {
        std::istringstream hs(line);
        std::string field;
        std::getline(hs, field, ','); // "t"
        while (std::getline(hs, field, ',')) {
            ++dim;
            if (field != "x" + std::to_string(dim)) {
                throw IoError("trajectory csv: expected header column x" + std::to_string(dim));
            }
        }
    }
    if (dim == 0) {
        throw IoError("trajectory csv: no state columns");
    }

    std::vector<double> times;
    std::vector<double> values;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        Index col = 0;
        while (std::getline(ls, field, ',')) {
            size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(field, &pos);
            } catch (const std::exception&) {
                throw IoError("trajectory csv: bad number '" + field + "'");
            }
            if (col == 0) {
                times.push_back(v);
            } else {
                values.push_back(v);
            }
            ++col;
        }
        if (col != dim + 1) {
            throw IoError("trajectory csv: row has wrong number of fields");
        }
    }
    if (times.empty()) {
        throw IoError("trajectory csv: no data rows");
    }

    Trajectory traj;
    traj.times = Eigen::Map<Vector>(times.data(), static_cast<Index>(times.size()));
    traj.states = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), static_cast<Index>(times.size()), dim);
    traj.validate();
    return traj;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.empty()) {
        throw ConfigError("output path is empty");
    }
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw IoError("cannot write file: " + tmp.string());
        }
        os << content;
        if (!os) {
            throw IoError("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot rename " + tmp.string() + " to " + path.string());
    }
}

void write_trajectory_csv(const fs::path& path, const Trajectory& traj) {
    write_file_atomic(path, trajectory_to_csv(traj));
}

Trajectory read_trajectory_csv(const fs::path& path) {
    return trajectory_from_csv(read_file(path));
}

namespace {

json kernel_to_json(const MatrixKernel& kernel) {
    json out;
    switch (kernel.variant()) {
    case MatrixKernel::Variant::SharedIsotropic: out["variant"] = "shared_isotropic"; break;
    case MatrixKernel::Variant::DiagonalIndependent: out["variant"] = "diagonal_independent"; break;
    case MatrixKernel::Variant::Usm: out["variant"] = "usm"; break;
    case MatrixKernel::Variant::Gim: out["variant"] = "gim"; break;
    }
    out["output_dim"] = kernel.output_dim();
    json terms = json::array();
    for (const auto& [phi, q] : kernel.terms()) {
        json t;
        t["signal_std"] = phi.signal_std;
        t["lengthscales"] = vector_to_json(phi.lengthscales);
        if (kernel.variant() == MatrixKernel::Variant::Usm) {
            t["q"] = matrix_to_json(q);
        }
        terms.push_back(std::move(t));
    }
    out["terms"] = std::move(terms);
    if (kernel.variant() == MatrixKernel::Variant::Gim) {
        out["action"] = {{"name", kernel.action().name()},
                         {"quadrature_nodes", kernel.action().quadrature_nodes()}};
    }
    return out;
}

MatrixKernel kernel_from_json(const json& j) {
    const std::string variant = j.at("variant").get<std::string>();
    std::vector<SEHyperparams> phis;
    std::vector<Matrix> qs;
    for (const auto& t : j.at("terms")) {
        SEHyperparams phi;
        phi.signal_std = t.at("signal_std").get<double>();
        phi.lengthscales = vector_from_json(t.at("lengthscales"), "model.kernel.lengthscales");
        phis.push_back(std::move(phi));
        if (t.contains("q")) {
            qs.push_back(matrix_from_json(t.at("q"), "model.kernel.q"));
        }
    }
    if (variant == "shared_isotropic") {
        return MatrixKernel::shared_isotropic(phis.at(0), j.at("output_dim").get<int>());
    }
    if (variant == "diagonal_independent") {
        return MatrixKernel::diagonal_independent(std::move(phis));
    }
    if (variant == "usm") {
        std::vector<std::pair<SEHyperparams, Matrix>> terms;
        for (size_t i = 0; i < phis.size(); ++i) {
            terms.emplace_back(std::move(phis[i]), std::move(qs.at(i)));
        }
        return MatrixKernel::usm(std::move(terms));
    }
    if (variant == "gim") {
        GroupAction action = GroupAction::from_name(j.at("action").at("name").get<std::string>());
        action.set_quadrature_nodes(j.at("action").at("quadrature_nodes").get<int>());
        return MatrixKernel::gim(phis.at(0), std::move(action));
    }
    throw IoError("model: unknown kernel variant '" + variant + "'");
}

json factor_to_json(const PsdFactorization& f) {
    return {{"lower", matrix_to_json(f.lower)},
            {"jitter", f.jitter_used},
            {"log_det", f.log_det}};
}

PsdFactorization factor_from_json(const json& j) {
    PsdFactorization f;
    f.lower = matrix_from_json(j.at("lower"), "model.factor");
    f.jitter_used = j.at("jitter").get<double>();
    f.log_det = j.at("log_det").get<double>();
    return f;
}

} // namespace

std::string model_to_json(const SparseFieldModel& model) {
    json j;
    j["format_version"] = 1;
    j["kernel"] = kernel_to_json(model.kernel);
    j["noise_std"] = model.noise_std;
    j["inducing"] = {{"points", matrix_to_json(model.inducing.points)}};
    if (model.inducing.grid) {
        j["inducing"]["grid"] = {{"lo", vector_to_json(model.inducing.grid->lo)},
                                 {"hi", vector_to_json(model.inducing.grid->hi)},
                                 {"counts", model.inducing.grid->counts}};
    }
    j["weights"] = vector_to_json(model.weights);
    j["factors"] = {{"sigma_inv", factor_to_json(model.sigma_inv_factor)},
                    {"kzz", factor_to_json(model.kzz_factor)}};

    const auto& meta = model.meta;
    json m;
    m["second_order"] = meta.second_order;
    m["state_dim"] = meta.state_dim;
    m["n_train"] = meta.n_train;
    m["action"] = meta.action ? json(meta.action->name()) : json(nullptr);
    if (meta.action) m["action_quadrature_nodes"] = meta.action->quadrature_nodes();
    m["data_lo"] = vector_to_json(meta.data_lo);
    m["data_hi"] = vector_to_json(meta.data_hi);
    m["fitted_params"] = meta.fitted_params;
    m["final_nll"] = meta.final_nll;
    m["seed"] = meta.seed;
    m["lambda_noise_ratio"] = meta.lambda_noise_ratio;
    m["config_hash"] = meta.config_hash;
    m["library_version"] = kLibraryVersion;
    j["meta"] = std::move(m);
    return j.dump(2) + "\n";
}

SparseFieldModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("model: invalid JSON: ") + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != 1) {
            throw IoError("model: unsupported format version");
        }
        SparseFieldModel model;
        model.kernel = kernel_from_json(j.at("kernel"));
        model.noise_std = j.at("noise_std").get<double>();
        model.inducing.points = matrix_from_json(j.at("inducing").at("points"), "model.inducing");
        if (j.at("inducing").contains("grid")) {
            GridSpec spec;
            spec.lo = vector_from_json(j["inducing"]["grid"]["lo"], "model.grid.lo");
            spec.hi = vector_from_json(j["inducing"]["grid"]["hi"], "model.grid.hi");
            spec.counts = j["inducing"]["grid"]["counts"].get<std::vector<int>>();
            model.inducing.grid = std::move(spec);
        }
        model.weights = vector_from_json(j.at("weights"), "model.weights");
        model.sigma_inv_factor = factor_from_json(j.at("factors").at("sigma_inv"));
        model.kzz_factor = factor_from_json(j.at("factors").at("kzz"));

        const json& m = j.at("meta");
        model.meta.second_order = m.at("second_order").get<bool>();
        model.meta.state_dim = m.at("state_dim").get<int>();
        model.meta.n_train = m.at("n_train").get<Index>();
        if (!m.at("action").is_null()) {
            GroupAction action = GroupAction::from_name(m["action"].get<std::string>());
            if (m.contains("action_quadrature_nodes")) {
                action.set_quadrature_nodes(m["action_quadrature_nodes"].get<int>());
            }
            model.meta.action = std::move(action);
        }
        model.meta.data_lo = vector_from_json(m.at("data_lo"), "model.meta.data_lo");
        model.meta.data_hi = vector_from_json(m.at("data_hi"), "model.meta.data_hi");
        model.meta.fitted_params = m.at("fitted_params").get<std::vector<double>>();
        model.meta.final_nll = m.at("final_nll").get<double>();
        model.meta.seed = m.at("seed").get<std::uint64_t>();
        model.meta.lambda_noise_ratio = m.at("lambda_noise_ratio").get<double>();
        model.meta.config_hash = m.at("config_hash").get<std::string>();
        return model;
    } catch (const json::exception& e) {
        throw IoError(std::string("model: malformed file: ") + e.what());
    }
}

void save_model(const fs::path& path, const SparseFieldModel& model) {
    write_file_atomic(path, model_to_json(model));
}

SparseFieldModel load_model(const fs::path& path) {
    return model_from_json(read_file(path));
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

Vector parse_vector_arg(const std::string& text) {
    std::vector<double> vals;
    std::istringstream is(text);
    std::string field;
    while (std::getline(is, field, ',')) {
        try {
            size_t pos = 0;
            vals.push_back(std::stod(field, &pos));
        } catch (const std::exception&) {
            throw ConfigError("cannot parse number list: '" + text + "'");
        }
    }
    if (vals.empty()) {
        throw ConfigError("empty number list");
    }
    return Eigen::Map<Vector>(vals.data(), static_cast<Index>(vals.size()));
}

namespace {

VectorField system_field(const RunConfig& cfg) {
    if (cfg.system == "spiral") return spiral_field();
    if (cfg.system == "kepler") return kepler_field(cfg.nu);
    throw ConfigError("system '" + cfg.system + "' cannot be simulated");
}

int run_guarded(std::ostream& err, const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

} // namespace

int cmd_simulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err) {
    (void)out;
    return run_guarded(err, [&] {
        if (opt.out_path.empty()) {
            throw ConfigError("simulate: --out is required");
        }
        RunConfig cfg = parse_run_config(opt.config_path);
        const VectorField field = system_field(cfg);
        if (cfg.data.x0.size() != field.dim) {
            throw ConfigError("data.x0: expected dimension " + std::to_string(field.dim));
        }
        const auto [t0, t1] = *cfg.data.span;
        const std::uint64_t seed = opt.seed.value_or(cfg.data.seed);
        const Trajectory traj = sample_trajectory_to_data(field, cfg.data.x0, t0, t1, cfg.data.n,
                                                          cfg.data.noise_std, seed, cfg.data.spacing);
        write_trajectory_csv(opt.out_path, traj);
    });
}

int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
    return run_guarded(err, [&] {
        if (opt.out_path.empty()) {
            throw ConfigError("train: --out is required");
        }
        RunConfig cfg = parse_run_config(opt.config_path);
        Trajectory traj = read_trajectory_csv(opt.data_path);
        if (opt.seed) {
            cfg.learn.optimizer.seed = *opt.seed;
            cfg.learn.time_fit.optimizer.seed = *opt.seed;
        }
        // Second-order extraction differentiates the position components; a
        // full-state file of an order-2 system carries them in the first half.
        if (cfg.learn.derivative_order == 2 && cfg.system == "kepler") {
            if (traj.dim() % 2 != 0) {
                throw ConfigError("train: full state dimension must be even for order-2 systems");
            }
            Trajectory positions;
            positions.times = traj.times;
            positions.states = traj.states.leftCols(traj.dim() / 2);
            traj = std::move(positions);
        }
        LearnOutcome outcome = learn_field_from_trajectory(traj, cfg.learn);
        outcome.model.meta.config_hash = cfg.config_hash;
        save_model(opt.out_path, outcome.model);

        json line;
        line["final_nll"] = outcome.model.meta.final_nll;
        line["hyperparameters"] = outcome.model.meta.fitted_params;
        line["noise_std"] = outcome.model.noise_std;
        line["time_gp"] = {{"params", outcome.extraction.time_params},
                           {"nll", outcome.extraction.time_nll_value}};
        line["n_train"] = outcome.model.meta.n_train;
        out << line.dump() << "\n";
    });
}

int cmd_rollout(const RolloutOptions& opt, std::ostream& out, std::ostream& err) {
    (void)out;
    return run_guarded(err, [&] {
        if (opt.out_path.empty()) {
            throw ConfigError("rollout: --out is required");
        }
        if (opt.samples == 1) {
            throw ConfigError("rollout: --samples needs at least 2 paths");
        }
        std::optional<RunConfig> cfg;
        if (opt.config_path) {
            cfg = parse_run_config(*opt.config_path);
        }
        const SparseFieldModel model = load_model(opt.model_path);

        Vector x0;
        if (opt.x0) {
            x0 = parse_vector_arg(*opt.x0);
        } else if (cfg && cfg->data.x0.size() > 0) {
            x0 = cfg->data.x0;
        } else {
            throw ConfigError("rollout: --x0 (or --config with data.x0) is required");
        }
        if (x0.size() != model.meta.state_dim) {
            throw ConfigError("rollout: x0 has dimension " + std::to_string(x0.size()) +
                              ", model expects " + std::to_string(model.meta.state_dim));
        }

        double t0 = 0.0, t1 = 3.0;
        if (opt.span) {
            const Vector s = parse_vector_arg(*opt.span);
            if (s.size() != 2 || !(s[1] > s[0])) {
                throw ConfigError("rollout: --span must be 't0,t1' with t1 > t0");
            }
            t0 = s[0];
            t1 = s[1];
        } else if (cfg && cfg->rollout.span) {
            std::tie(t0, t1) = *cfg->rollout.span;
        }

        IntegratorConfig integ;
        if (cfg) integ.method = cfg->rollout.method;
        if (cfg) integ.dt = cfg->rollout.dt;
        if (opt.integrator) integ.method = integrator_from_name(*opt.integrator);
        if (opt.dt) integ.dt = *opt.dt;
        if (!(integ.dt > 0.0)) {
            throw ConfigError("rollout: dt must be positive");
        }
        int out_points = opt.out_points;
        if (cfg && opt.out_points == 300) out_points = cfg->rollout.out_points;
        if (out_points < 2) {
            throw ConfigError("rollout: out_points must be >= 2");
        }

        const Trajectory roll = rollout(model, x0, t0, t1, integ);
        Vector grid(out_points);
        for (int i = 0; i < out_points; ++i) {
            grid[i] = t0 + (t1 - t0) * static_cast<double>(i) / (out_points - 1);
        }
        write_trajectory_csv(opt.out_path, resample(roll, grid));

        if (opt.samples >= 2) {
            const UncertainRollout unc =
                sample_uncertain_rollout(model, x0, t0, t1, opt.samples, opt.seed);
            Trajectory std_traj;
            std_traj.times = unc.samples.front().times;
            std_traj.states = unc.std;
            Trajectory std_grid = resample(std_traj, grid);
            std::string std_csv = "t";
            for (Index k = 0; k < std_grid.dim(); ++k) {
                std_csv += ",std_x" + std::to_string(k + 1);
            }
            std_csv += "\n";
            for (Index i = 0; i < std_grid.size(); ++i) {
                std_csv += format_double(std_grid.times[i]);
                for (Index k = 0; k < std_grid.dim(); ++k) {
                    std_csv += "," + format_double(std_grid.states(i, k));
                }
                std_csv += "\n";
            }
            fs::path base(opt.out_path);
            fs::path std_path = base.parent_path() / (base.stem().string() + "_std.csv");
            write_file_atomic(std_path, std_csv);
            for (size_t s = 0; s < unc.samples.size(); ++s) {
                fs::path sample_path =
                    base.parent_path() / (base.stem().string() + "_sample" + std::to_string(s) + ".csv");
                write_trajectory_csv(sample_path, resample(unc.samples[s], grid));
            }
        }
    });
}

int cmd_evaluate(const EvaluateOptions& opt, std::ostream& out, std::ostream& err) {
    return run_guarded(err, [&] {
        const Trajectory roll = read_trajectory_csv(opt.rollout_path);
        const Trajectory reference = read_trajectory_csv(opt.reference_path);
        const ErrorReport report = evaluate_errors(roll, reference, opt.split_time, opt.n_eval);

        json j;
        j["train_error"] = report.train_error;
        j["test_error"] = report.test_error;
        j["total_error"] = report.total_error;
        j["split_time"] = report.split_time;
        j["n_eval"] = report.n_eval;
        out << j.dump() << "\n";
        if (opt.out_path) {
            write_file_atomic(*opt.out_path, j.dump(2) + "\n");
        }

        if (opt.integrals) {
            bool want_h = false, want_j = false;
            std::istringstream is(*opt.integrals);
            std::string name;
            while (std::getline(is, name, ',')) {
                if (name == "hamiltonian") {
                    want_h = true;
                } else if (name == "angular_momentum") {
                    want_j = true;
                } else {
                    throw ConfigError("evaluate: unknown integral '" + name + "'");
                }
            }
            if (roll.dim() != 4) {
                throw ConfigError("evaluate: first integrals need a (q, qdot) trajectory");
            }
            std::string csv = "t";
            if (want_h) csv += ",H";
            if (want_j) csv += ",J";
            csv += "\n";
            for (Index i = 0; i < roll.size(); ++i) {
                const Vector q = roll.states.row(i).head(2);
                const Vector qd = roll.states.row(i).tail(2);
                csv += format_double(roll.times[i]);
                if (want_h) csv += "," + format_double(hamiltonian(q, qd, opt.nu));
                if (want_j) csv += "," + format_double(angular_momentum(q, qd));
                csv += "\n";
            }
            fs::path dest;
            if (opt.integrals_out) {
                dest = *opt.integrals_out;
            } else {
                fs::path base(opt.rollout_path);
                dest = base.parent_path() / (base.stem().string() + "_integrals.csv");
            }
            write_file_atomic(dest, csv);
        }
    });
}

} // namespace gpode
