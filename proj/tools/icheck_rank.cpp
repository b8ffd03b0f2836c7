// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include <CLI11.hpp>

#include "icheck/core/log.hpp"
#include "icheck/harness/rank_logic.hpp"

int main(int argc, char **argv) {
    CLI::App app{"icheck synthetic application rank"};
    std::string scenario_path, type = "initial";
    icheck::harness::RankArgs args;
    app.add_option("--scenario", scenario_path)->required();
    app.add_option("--rank", args.rank)->required();
    app.add_option("--type", type)->check(CLI::IsMember({"initial", "joining"}));
    app.add_option("--attempt", args.attempt);
    app.add_option("--world", args.current_world)->required();
    app.add_option("--controller", args.controller_endpoint)->required();
    app.add_option("--control", args.control_endpoint)->required();
    app.add_option("--out", args.out_dir);
    CLI11_PARSE(app, argc, argv);

    icheck::harness::ScenarioErrors errors;
    const auto scenario = icheck::harness::load_scenario_file(scenario_path, errors);
    if (!errors.ok()) {
        for (const auto &e : errors.errors)
            std::cerr << e << "\n";
        return 1;
    }
    args.app = scenario.app;
    args.type = type == "joining" ? icheck::ProcessType::Joining
                                  : icheck::ProcessType::Initial;
    args.throttle_bytes_per_sec = scenario.throttle_bytes_per_sec;

    icheck::log::set_context("comp=rank rank=" + std::to_string(args.rank) +
                             " attempt=" + std::to_string(args.attempt));
    return icheck::harness::run_rank(args);
}
