// SPDX-License-Identifier: Apache-2.0
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "icheck/controller/controller.hpp"
#include "icheck/core/log.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }
} // namespace

int main(int argc, char **argv) {
    CLI::App app{"icheck controller"};
    std::string listen = "127.0.0.1:0";
    std::string config_path;
    std::string endpoint_file;
    std::string pfs_root;
    app.add_option("--listen", listen, "listen endpoint (host:port, 0 = ephemeral)");
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--pfs-root", pfs_root, "PFS tier root directory");
    app.add_option("--endpoint-file", endpoint_file,
                   "write the bound endpoint to this file");
    CLI11_PARSE(app, argc, argv);

    icheck::ctrl::ControllerConfig cfg;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "cannot open config " << config_path << "\n";
            return 1;
        }
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = icheck::ctrl::ControllerConfig::from_json_text(ss.str());
    }
    if (app.count("--listen"))
        cfg.listen = listen;
    if (!pfs_root.empty())
        cfg.pfs_root = pfs_root;

    icheck::log::set_context("comp=controller");
    try {
        icheck::ctrl::Controller controller(cfg);
        if (!endpoint_file.empty())
            std::ofstream(endpoint_file) << controller.endpoint() << "\n";
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop)
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        controller.stop();
    } catch (const std::exception &e) {
        std::cerr << "controller failed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
