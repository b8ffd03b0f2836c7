// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include <CLI11.hpp>

#include "icheck/harness/runner.hpp"

int main(int argc, char **argv) {
    CLI::App app{"icheck scenario runner"};
    app.require_subcommand(1);

    auto *run = app.add_subcommand("run", "run a scenario end to end");
    std::string scenario_path, out_dir = "icheck-out";
    run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("--out", out_dir, "output directory");

    auto *validate = app.add_subcommand("validate", "check a scenario file");
    std::string validate_path;
    validate->add_option("file", validate_path)->required();

    auto *summarize = app.add_subcommand("summarize",
                                         "aggregate commit overhead from run dirs");
    std::vector<std::string> dirs;
    summarize->add_option("dirs", dirs, "one run dir, or async dir + sync dir")
        ->expected(1, 2);

    CLI11_PARSE(app, argc, argv);

    using namespace icheck::harness;
    if (*validate) {
        ScenarioErrors errors;
        load_scenario_file(validate_path, errors);
        if (!errors.ok()) {
            for (const auto &e : errors.errors)
                std::cerr << "error: " << e << "\n";
            return 1;
        }
        std::cout << "scenario ok\n";
        return 0;
    }
    if (*run) {
        ScenarioErrors errors;
        const auto scenario = load_scenario_file(scenario_path, errors);
        if (!errors.ok()) {
            for (const auto &e : errors.errors)
                std::cerr << "error: " << e << "\n";
            return 1;
        }
        const auto result = run_scenario(scenario, out_dir);
        for (const auto &r : result.reports)
            std::cout << "rank " << r.rank << " attempt " << r.attempt << ": "
                      << r.kind << " @" << r.iter
                      << (r.detail.empty() ? "" : " " + r.detail) << "\n";
        for (const auto &f : result.failures)
            std::cout << "failure: " << f << "\n";
        std::cout << (result.pass ? "PASS" : "FAIL") << " (" << out_dir << ")\n";
        return result.pass ? 0 : 1;
    }
    if (*summarize) {
        if (dirs.size() == 1) {
            std::cout << render_summary(summarize_dir(dirs[0])) << "\n";
        } else {
            std::cout << render_comparison(summarize_dir(dirs[0]),
                                           summarize_dir(dirs[1]));
        }
        return 0;
    }
    return 0;
}
