// SPDX-License-Identifier: Apache-2.0
#pragma once

// A lone agent with a scratch PFS directory, driven over raw protocol.

#include <filesystem>

#include "icheck/agent/agent.hpp"
#include "support/cluster.hpp"

namespace icheck::testing {

struct StandaloneFixture {
    AppId app = 7;
    agent::AgentConfig cfg;
    std::unique_ptr<agent::AgentService> svc;
    std::string pfs;

    explicit StandaloneFixture(std::uint64_t capacity = 512ull << 20) {
        pfs = fresh_tmp_dir("agentpfs");
        cfg.agent_id = 1;
        cfg.app_id = app;
        cfg.app_name = "standalone";
        cfg.node_id = "n1";
        cfg.capacity_bytes = capacity;
        cfg.pfs_root = pfs;
        cfg.redist_wait_ms = 1500;
        svc = std::make_unique<agent::AgentService>(cfg);
    }
    ~StandaloneFixture() {
        svc->stop();
        std::error_code ec;
        std::filesystem::remove_all(pfs, ec);
    }
    net::MsgConnPtr dial() {
        return net::MsgConn::dial(svc->endpoint(), std::chrono::seconds(5));
    }
};

} // namespace icheck::testing
