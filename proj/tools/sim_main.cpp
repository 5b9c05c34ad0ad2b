// sim run --scenario <file> | sim sweep --max-p <int> ...

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "scavenger/errors.hpp"
#include "scavenger/keyvalue.hpp"
#include "scavenger/simharness.hpp"

int main(int argc, char** argv) {
    using namespace scavenger;

    CLI::App app{"Discrete-event simulation of a worker fleet sharing one job directory"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string csv_path;
    auto* run_cmd = app.add_subcommand("run", "simulate one scenario file");
    run_cmd->add_option("--scenario", scenario_path, "scenario file")->required();

    int max_p = 10;
    sim::SimConfig cfg;
    sim::JobSetup setup;
    std::int64_t max_evals = 1000;
    std::string mode = "change_merge";
    auto* sweep_cmd = app.add_subcommand("sweep", "homogeneous fleets of 1..max-p workers");
    sweep_cmd->add_option("--max-p", max_p, "largest fleet")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--t-eval", cfg.t_eval, "virtual seconds per evaluation")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--t-io", cfg.t_io, "virtual seconds per coordination operation")->check(CLI::NonNegativeNumber);
    sweep_cmd->add_option("--max-evals", max_evals, "fleet-wide evaluation budget")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--seed", cfg.seed, "simulation seed");
    sweep_cmd->add_option("--n", setup.objective.n, "mask length");
    sweep_cmd->add_option("--levels", setup.objective.levels, "phase levels");
    sweep_cmd->add_option("--target-order", setup.objective.target_order, "target diffraction order");
    sweep_cmd->add_option("--mode", mode, "replace_if_better | change_merge")
        ->check(CLI::IsMember({"replace_if_better", "change_merge"}));
    sweep_cmd->add_option("--csv", csv_path, "also write (p, speedup, efficiency, wasted_duplicate, wasted_outdated)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run_cmd->parsed()) {
            std::ifstream in(scenario_path);
            if (!in) throw IoError(fmt::format("cannot read {}", scenario_path));
            std::stringstream ss;
            ss << in.rdbuf();
            auto sc = sim::parse_scenario(ss.str(), scenario_path);
            auto report = sim::run_sim(sc.fleet, sc.setup, sc.sim, sc.kills);
            std::cout << sim::format_report(report);
            return 0;
        }
        cfg.stop.max_total_evaluations = max_evals;
        cfg.mode = parse_mode(mode);
        auto rows = sim::sweep_fleet_size(max_p, cfg, setup);
        for (const auto& r : rows) {
            fmt::print("p={} makespan={} speedup={} efficiency={} wasted_duplicate={} wasted_outdated={}\n", r.p,
                       format_double(r.makespan), format_double(r.speedup), format_double(r.efficiency),
                       r.wasted_duplicate, r.wasted_outdated);
        }
        if (!csv_path.empty()) {
            std::ofstream out(csv_path);
            out << sim::sweep_csv(rows);
            if (!out) throw IoError(fmt::format("cannot write {}", csv_path));
        }
        return 0;
    } catch (const FormatError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const ContractError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
}
