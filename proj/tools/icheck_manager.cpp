// SPDX-License-Identifier: Apache-2.0
#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "icheck/core/log.hpp"
#include "icheck/manager/manager.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }
} // namespace

int main(int argc, char **argv) {
    CLI::App app{"icheck per-node manager"};
    icheck::mgr::ManagerConfig cfg;
    app.add_option("--node-id", cfg.node_id, "node identifier")->required();
    app.add_option("--controller", cfg.controller_endpoint, "controller endpoint")
        ->required();
    app.add_option("--mem-capacity", cfg.mem_capacity, "staging budget in bytes");
    app.add_option("--report-period-ms", cfg.report_period_ms,
                   "stats report cadence");
    app.add_option("--ewma-alpha", cfg.ewma_alpha, "prediction smoothing factor");
    app.add_option("--agent-bin", cfg.agent_binary, "agent executable path");
    app.add_flag("--single-process", cfg.single_process,
                 "run agents as in-process tasks");
    CLI11_PARSE(app, argc, argv);

    icheck::log::set_context("comp=manager node=" + cfg.node_id);
    try {
        icheck::mgr::ManagerService manager(cfg);
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop)
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        manager.stop();
    } catch (const std::exception &e) {
        std::cerr << "manager failed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
