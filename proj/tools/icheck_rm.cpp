// SPDX-License-Identifier: Apache-2.0
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "icheck/core/log.hpp"
#include "icheck/rm/rm.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

std::vector<std::string> split_csv(const std::string &s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string field;
    while (std::getline(ss, field, ','))
        if (!field.empty())
            out.push_back(field);
    return out;
}
} // namespace

int main(int argc, char **argv) {
    CLI::App app{"icheck resource-manager stub"};
    std::string script_path, controller, nodes_csv, grant_csv, harness;
    app.add_option("--script", script_path, "JSON event script")->required();
    app.add_option("--controller", controller, "controller endpoint")->required();
    app.add_option("--nodes", nodes_csv, "full node inventory (csv)")->required();
    app.add_option("--grant", grant_csv, "nodes granted to icheck at start (csv)");
    app.add_option("--harness", harness, "harness control endpoint");
    CLI11_PARSE(app, argc, argv);

    icheck::rm::RmConfig cfg;
    cfg.controller_endpoint = controller;
    cfg.harness_endpoint = harness;
    cfg.nodes = split_csv(nodes_csv);
    cfg.initial_grant = split_csv(grant_csv);

    std::ifstream in(script_path);
    if (!in) {
        std::cerr << "cannot open script " << script_path << "\n";
        return 1;
    }
    try {
        const auto j = nlohmann::json::parse(in);
        for (const auto &e : j) {
            icheck::harness::RmEventSpec ev;
            ev.at_s = e.value("at", 0.0);
            ev.action = e.value("action", "");
            if (e.contains("nodes"))
                ev.nodes = e["nodes"].get<std::vector<std::string>>();
            ev.deadline_s = e.value("deadline_s", 0.0);
            ev.node_from = e.value("from", "");
            ev.node_to = e.value("to", "");
            ev.app = e.value("app", "");
            ev.new_world_size = e.value("new_world_size", 0u);
            ev.agent_id = e.value("agent_id", 0ull);
            ev.throttle_bps = e.value("throttle_bytes_per_sec", 0ull);
            cfg.script.push_back(std::move(ev));
        }
    } catch (const std::exception &e) {
        std::cerr << "script error: " << e.what() << "\n";
        return 1;
    }

    icheck::log::set_context("comp=rm");
    try {
        icheck::rm::RmStub stub(cfg);
        stub.start();
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop)
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        stub.stop();
    } catch (const std::exception &e) {
        std::cerr << "rm stub failed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
