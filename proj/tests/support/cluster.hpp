// SPDX-License-Identifier: Apache-2.0
#pragma once

// In-process cluster fixture: controller + single-process managers on
// loopback, with the test acting as the resource manager.

#include <filesystem>
#include <memory>

#include "icheck/controller/controller.hpp"
#include "icheck/manager/manager.hpp"

namespace icheck::testing {

inline std::string fresh_tmp_dir(const std::string &tag) {
    auto base = std::filesystem::temp_directory_path() /
                ("icheck_" + tag + "_XXXXXX");
    std::string templ = base.string();
    if (!mkdtemp(templ.data()))
        throw std::runtime_error("mkdtemp failed");
    return templ;
}

struct TestCluster {
    std::unique_ptr<ctrl::Controller> controller;
    std::vector<std::unique_ptr<mgr::ManagerService>> managers;
    net::MsgConnPtr rm;
    std::string pfs_root;

    explicit TestCluster(int nodes, ctrl::PolicyConfig policy = {},
                         std::uint64_t node_capacity = 1ull << 30,
                         int tick_ms = 50) {
        pfs_root = fresh_tmp_dir("pfs");
        ctrl::ControllerConfig cfg;
        cfg.pfs_root = pfs_root;
        cfg.policy = policy;
        cfg.tick_ms = tick_ms;
        controller = std::make_unique<ctrl::Controller>(cfg);
        for (int i = 0; i < nodes; ++i)
            add_manager("n" + std::to_string(i + 1), node_capacity);
        rm = net::MsgConn::dial(controller->endpoint(), std::chrono::seconds(5));
        grant_all();
    }

    void add_manager(const std::string &node_id, std::uint64_t capacity,
                     int report_period_ms = 100) {
        mgr::ManagerConfig mc;
        mc.node_id = node_id;
        mc.controller_endpoint = controller->endpoint();
        mc.mem_capacity = capacity;
        mc.single_process = true;
        mc.report_period_ms = report_period_ms;
        managers.push_back(std::make_unique<mgr::ManagerService>(mc));
    }

    void grant_all() {
        proto::NodeGrant grant;
        for (const auto &m : managers)
            grant.node_ids.push_back(m->node_id());
        rm->send(grant);
        // Ownership is applied by the controller's connection thread.
        const auto deadline =
            std::chrono::steady_clock::now() + std::chrono::seconds(5);
        while (std::chrono::steady_clock::now() < deadline) {
            if (controller->owned_nodes().size() >= managers.size())
                return;
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        throw std::runtime_error("grant did not take effect");
    }

    void grant(const std::vector<std::string> &ids) {
        rm->send(proto::NodeGrant{ids, 0, 0});
    }

    void reclaim(const std::vector<std::string> &ids,
                 std::uint64_t deadline_ms = 0) {
        rm->send(proto::NodeReclaim{ids, deadline_ms, 0});
    }

    std::shared_ptr<agent::AgentService> first_agent() const {
        for (const auto &m : managers) {
            auto agents = m->local_agents();
            if (!agents.empty())
                return agents.front();
        }
        return nullptr;
    }

    std::vector<std::shared_ptr<agent::AgentService>> all_agents() const {
        std::vector<std::shared_ptr<agent::AgentService>> out;
        for (const auto &m : managers)
            for (auto &a : m->local_agents())
                out.push_back(a);
        return out;
    }

    ~TestCluster() {
        for (auto &m : managers)
            m->stop();
        if (controller)
            controller->stop();
        std::error_code ec;
        std::filesystem::remove_all(pfs_root, ec);
    }
};

template <class Pred>
bool wait_until(Pred pred, int timeout_ms = 5000, int poll_ms = 10) {
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(timeout_ms);
    while (std::chrono::steady_clock::now() < deadline) {
        if (pred())
            return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms));
    }
    return pred();
}

} // namespace icheck::testing
