// master init|start|stop|status|report <dir>

#include <iostream>

#include <CLI11.hpp>

#include "scavenger/master.hpp"

int main(int argc, char** argv) {
    using namespace scavenger;

    CLI::App app{"Prepare, start, stop and report on a shared-directory optimization job"};
    app.require_subcommand(1);

    std::string dir;
    master::InitOptions init;
    std::int64_t n = 8;
    int levels = 2;
    std::int64_t target_order = 1;
    std::int64_t max_evals = 0;
    double stop_target = 0;
    std::int64_t stagnation = 0;
    bool local_optimum = false;

    auto* init_cmd = app.add_subcommand("init", "write manifest.dat and the version-0 best.dat");
    init_cmd->add_option("dir", dir, "job directory")->required();
    init_cmd->add_option("--n", n, "mask length")->check(CLI::PositiveNumber);
    init_cmd->add_option("--levels", levels, "phase levels (>= 2)")->check(CLI::Range(2, 1 << 20));
    init_cmd->add_option("--target-order", target_order, "diffraction order to maximize, in [0, n)")
        ->check(CLI::NonNegativeNumber);
    init_cmd->add_option("--init-config", init.init_config, "zero | random")
        ->check(CLI::IsMember({"zero", "random"}));
    init_cmd->add_option("--seed", init.seed, "seed for --init-config random");
    init_cmd->add_option("--eval-cost", init.objective.eval_cost, "artificial seconds per evaluation")
        ->check(CLI::NonNegativeNumber);
    auto* max_evals_opt = init_cmd->add_option("--stop-max-evals", max_evals, "fleet-wide evaluation budget")
                              ->check(CLI::PositiveNumber);
    auto* target_opt = init_cmd->add_option("--stop-target", stop_target, "stop once performance reaches this");
    auto* stagnation_opt = init_cmd->add_option("--stop-stagnation", stagnation, "stop after K proposals without a commit")
                               ->check(CLI::PositiveNumber);
    init_cmd->add_flag("--stop-local-optimum", local_optimum, "stop once every neighbour has been rejected");
    init_cmd->add_option("--job-id", init.job_id, "defaults to the directory name");
    init_cmd->add_flag("--force", init.force, "reinitialize an existing job");

    auto* start_cmd = app.add_subcommand("start", "create go.dat");
    start_cmd->add_option("dir", dir, "job directory")->required();
    auto* stop_cmd = app.add_subcommand("stop", "delete go.dat");
    stop_cmd->add_option("dir", dir, "job directory")->required();
    auto* status_cmd = app.add_subcommand("status", "print the signal and the current best record");
    status_cmd->add_option("dir", dir, "job directory")->required();
    auto* report_cmd = app.add_subcommand("report", "re-evaluate the final record of a stopped job");
    report_cmd->add_option("dir", dir, "job directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return master::kInvalidArguments;
    }

    if (init_cmd->parsed()) {
        init.objective.n = static_cast<std::size_t>(n);
        init.objective.levels = levels;
        init.objective.target_order = static_cast<std::size_t>(target_order);
        if (*max_evals_opt) init.stop.max_total_evaluations = max_evals;
        if (*target_opt) init.stop.target_performance = stop_target;
        if (*stagnation_opt) init.stop.stagnation_proposals = stagnation;
        init.stop.local_optimum = local_optimum;
        return master::cmd_init(dir, init, std::cout, std::cerr);
    }
    if (start_cmd->parsed()) return master::cmd_start(dir, std::cout, std::cerr);
    if (stop_cmd->parsed()) return master::cmd_stop(dir, std::cout, std::cerr);
    if (status_cmd->parsed()) return master::cmd_status(dir, std::cout, std::cerr);
    return master::cmd_report(dir, std::cout, std::cerr);
}
