// SPDX-License-Identifier: Apache-2.0
#include <csignal>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "icheck/agent/agent.hpp"
#include "icheck/core/log.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }
} // namespace

int main(int argc, char **argv) {
    CLI::App app{"icheck checkpoint agent"};
    icheck::agent::AgentConfig cfg;
    std::string ranks_csv;
    app.add_option("--agent-id", cfg.agent_id)->required();
    app.add_option("--app-id", cfg.app_id)->required();
    app.add_option("--app-name", cfg.app_name);
    app.add_option("--node-id", cfg.node_id);
    app.add_option("--listen", cfg.listen);
    app.add_option("--controller", cfg.controller_endpoint);
    app.add_option("--manager", cfg.manager_endpoint);
    app.add_option("--capacity", cfg.capacity_bytes);
    app.add_option("--pfs-root", cfg.pfs_root);
    app.add_option("--ranks", ranks_csv, "comma-separated rank list");
    CLI11_PARSE(app, argc, argv);

    std::stringstream ss(ranks_csv);
    std::string field;
    while (std::getline(ss, field, ','))
        if (!field.empty())
            cfg.ranks.push_back(static_cast<icheck::Rank>(std::stoul(field)));

    icheck::log::set_context("comp=agent agent=" + std::to_string(cfg.agent_id));
    try {
        icheck::agent::AgentService agent(cfg);
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop)
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        agent.stop();
    } catch (const std::exception &e) {
        std::cerr << "agent failed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
