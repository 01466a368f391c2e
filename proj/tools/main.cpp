#include <iostream>

#include <CLI11.hpp>

#include "gpode/io.hpp"

int main(int argc, char** argv) {
    CLI::App app{"gpode: learn ODE vector fields from trajectories with sparse GPs"};
    app.require_subcommand(1);

    gpode::SimulateOptions sim;
    std::int64_t sim_seed = -1;
    auto* simulate = app.add_subcommand("simulate", "Integrate a reference system and sample noisy data");
    simulate->add_option("--config", sim.config_path, "Experiment configuration (JSON)")->required();
    simulate->add_option("--out", sim.out_path, "Output trajectory CSV")->required();
    simulate->add_option("--seed", sim_seed, "Override the data noise seed");

    gpode::TrainOptions train;
    std::int64_t train_seed = -1;
    auto* train_cmd = app.add_subcommand("train", "Learn a sparse GP vector field from a trajectory");
    train_cmd->add_option("--config", train.config_path, "Experiment configuration (JSON)")->required();
    train_cmd->add_option("--data", train.data_path, "Trajectory CSV")->required();
    train_cmd->add_option("--out", train.out_path, "Output model file (JSON)")->required();
    train_cmd->add_option("--seed", train_seed, "Override the optimizer seed");

    gpode::RolloutOptions roll;
    std::string roll_config, roll_x0, roll_span, roll_integ;
    double roll_dt = -1.0;
    auto* roll_cmd = app.add_subcommand("rollout", "Integrate the learned mean field");
    roll_cmd->add_option("--model", roll.model_path, "Trained model file")->required();
    roll_cmd->add_option("--out", roll.out_path, "Output trajectory CSV")->required();
    roll_cmd->add_option("--config", roll_config, "Optional config supplying x0/span defaults");
    roll_cmd->add_option("--x0", roll_x0, "Initial state, comma separated");
    roll_cmd->add_option("--span", roll_span, "Time span 't0,t1'");
    roll_cmd->add_option("--integrator", roll_integ, "rk4 | euler | implicit_midpoint");
    roll_cmd->add_option("--dt", roll_dt, "Integrator step size");
    roll_cmd->add_option("--samples", roll.samples, "Number of uncertainty sample paths (>= 2)");
    roll_cmd->add_option("--seed", roll.seed, "Sampling seed");
    roll_cmd->add_option("--out-points", roll.out_points, "Output grid size (default 300)");

    gpode::EvaluateOptions eval;
    std::string eval_out, eval_integrals, eval_integrals_out;
    auto* eval_cmd = app.add_subcommand("evaluate", "Compare a rollout against a reference trajectory");
    eval_cmd->add_option("--rollout", eval.rollout_path, "Model rollout CSV")->required();
    eval_cmd->add_option("--reference", eval.reference_path, "Reference trajectory CSV")->required();
    eval_cmd->add_option("--split", eval.split_time, "Train/test split time")->required();
    eval_cmd->add_option("--out", eval_out, "Write the JSON report here as well");
    eval_cmd->add_option("--integrals", eval_integrals,
                         "Comma list of first integrals (hamiltonian, angular_momentum)");
    eval_cmd->add_option("--integrals-out", eval_integrals_out, "CSV destination for the integral series");
    eval_cmd->add_option("--nu", eval.nu, "Gravitational parameter for the Hamiltonian");
    eval_cmd->add_option("--n-eval", eval.n_eval, "Evaluation grid size (default 300)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (simulate->parsed()) {
        if (sim_seed >= 0) sim.seed = static_cast<std::uint64_t>(sim_seed);
        return gpode::cmd_simulate(sim, std::cout, std::cerr);
    }
    if (train_cmd->parsed()) {
        if (train_seed >= 0) train.seed = static_cast<std::uint64_t>(train_seed);
        return gpode::cmd_train(train, std::cout, std::cerr);
    }
    if (roll_cmd->parsed()) {
        if (!roll_config.empty()) roll.config_path = roll_config;
        if (!roll_x0.empty()) roll.x0 = roll_x0;
        if (!roll_span.empty()) roll.span = roll_span;
        if (!roll_integ.empty()) roll.integrator = roll_integ;
        if (roll_dt > 0.0) roll.dt = roll_dt;
        return gpode::cmd_rollout(roll, std::cout, std::cerr);
    }
    if (eval_cmd->parsed()) {
        if (!eval_out.empty()) eval.out_path = eval_out;
        if (!eval_integrals.empty()) eval.integrals = eval_integrals;
        if (!eval_integrals_out.empty()) eval.integrals_out = eval_integrals_out;
        return gpode::cmd_evaluate(eval, std::cout, std::cerr);
    }
    return 2;
}
