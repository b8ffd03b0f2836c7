// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <deque>
#include <map>
#include <memory>
#include <thread>

#include "icheck/agent/agent.hpp"
#include "icheck/core/proc.hpp"
#include "icheck/core/types.hpp"
#include "icheck/net/server.hpp"

namespace icheck::mgr {

// EWMA with first-sample initialization: pred' = alpha*sample + (1-alpha)*pred.
double ewma(std::optional<double> prev, double sample, double alpha);

struct ManagerConfig {
    std::string node_id;
    std::string controller_endpoint;
    std::uint64_t mem_capacity = 1ull << 30;
    double ewma_alpha = 0.5;
    int report_period_ms = 1000;
    bool single_process = false; // agents as in-process tasks
    std::string agent_binary;    // process mode; defaults to sibling binary
    std::string listen = "127.0.0.1:0";
    int launch_hello_timeout_ms = 8000; // process-mode readiness watchdog
};

// Per-node daemon: launches agents on controller order, samples and predicts
// node usage, and relays flush/migrate orders to its agents.
class ManagerService {
  public:
    explicit ManagerService(ManagerConfig cfg);
    ~ManagerService();

    void stop();
    const std::string &endpoint() const { return server_->endpoint(); }
    const std::string &node_id() const { return cfg_.node_id; }

    NodeStats current_stats() const;
    // In-process agents (single-process mode only).
    std::vector<std::shared_ptr<agent::AgentService>> local_agents() const;
    // Launched agent processes (process mode only).
    std::vector<std::pair<AgentId, int>> agent_pids() const;

  private:
    struct AgentSlot {
        AgentId id = 0;
        AppId app = 0;
        std::string endpoint;
        std::uint64_t staged_bytes = 0;
        bool ready = false;
        bool dead = false;
        bool expected_exit = false;
        net::MsgConnPtr conn;
        std::shared_ptr<agent::AgentService> task; // single-process mode
        ChildProc proc;                            // process mode
    };

    void serve_agent_conn(const net::MsgConnPtr &conn);
    void controller_loop();
    void sample_loop();
    void handle_launch(const proto::LaunchAgents &msg);
    void handle_shutdown(const proto::Shutdown &msg);
    void relay_to_agent(AgentId agent, const proto::Message &msg);
    NodeStats sample_stats_locked(std::uint64_t moved_delta);

    ManagerConfig cfg_;
    std::unique_ptr<net::MsgServer> server_;
    net::MsgConnPtr controller_conn_;
    std::thread controller_thread_;
    std::thread sample_thread_;

    mutable std::mutex mu_;
    std::map<AgentId, AgentSlot> agents_;
    std::uint64_t moved_accum_ = 0;
    std::optional<double> mem_pred_;
    std::optional<double> bw_pred_;
    NodeStats last_stats_;
    std::vector<AgentId> pending_dead_;

    std::atomic<bool> stopping_{false};
    std::condition_variable cv_;
};

} // namespace icheck::mgr
