// SPDX-License-Identifier: Apache-2.0
#include "icheck/manager/manager.hpp"

#include <algorithm>
#include <csignal>

#include "icheck/core/log.hpp"

namespace icheck::mgr {

using namespace proto;

double ewma(std::optional<double> prev, double sample, double alpha) {
    if (!prev)
        return sample;
    return alpha * sample + (1.0 - alpha) * *prev;
}

ManagerService::ManagerService(ManagerConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.agent_binary.empty())
        cfg_.agent_binary = self_exe_dir() + "/icheck-agent";
    server_ = std::make_unique<net::MsgServer>(
        cfg_.listen, [this](const net::MsgConnPtr &c) { serve_agent_conn(c); });
    controller_conn_ =
        net::MsgConn::dial(cfg_.controller_endpoint, std::chrono::seconds(10));
    {
        std::lock_guard lk(mu_);
        controller_conn_->send(StatsReport{
            {cfg_.node_id, cfg_.mem_capacity, 0, 0, 0, 0, now_ms()}, {}});
    }
    controller_thread_ = std::thread([this] { controller_loop(); });
    sample_thread_ = std::thread([this] { sample_loop(); });
    log::event("manager_up", {{"node", cfg_.node_id},
                              {"endpoint", server_->endpoint()},
                              {"capacity", log::str(cfg_.mem_capacity)}});
}

ManagerService::~ManagerService() { stop(); }

void ManagerService::stop() {
    bool expected = false;
    if (!stopping_.compare_exchange_strong(expected, true))
        return;
    cv_.notify_all();
    std::vector<std::shared_ptr<agent::AgentService>> tasks;
    {
        std::lock_guard lk(mu_);
        for (auto &[id, slot] : agents_) {
            slot.expected_exit = true;
            if (slot.task)
                tasks.push_back(slot.task);
            if (slot.proc.valid() && slot.proc.alive())
                slot.proc.kill(SIGTERM);
        }
    }
    for (auto &t : tasks)
        t->stop();
    {
        std::lock_guard lk(mu_);
        for (auto &[id, slot] : agents_)
            if (slot.proc.valid())
                slot.proc.wait();
    }
    controller_conn_->shutdown();
    server_->stop();
    if (controller_thread_.joinable())
        controller_thread_.join();
    if (sample_thread_.joinable())
        sample_thread_.join();
}

void ManagerService::controller_loop() try {
    while (auto msg = controller_conn_->recv()) {
        if (auto *launch = std::get_if<LaunchAgents>(&*msg)) {
            handle_launch(*launch);
        } else if (auto *flush = std::get_if<FlushOrder>(&*msg)) {
            relay_to_agent(flush->agent_id, *msg);
        } else if (auto *mig = std::get_if<MigrateOrder>(&*msg)) {
            relay_to_agent(mig->agent_id, *msg);
        } else if (auto *sd = std::get_if<Shutdown>(&*msg)) {
            handle_shutdown(*sd);
            if (sd->agent_id == 0)
                return;
        }
    }
} catch (const std::exception &e) {
    log::event("manager_control_error", {{"node", cfg_.node_id},
                                         {"what", e.what()}});
}

void ManagerService::handle_launch(const LaunchAgents &msg) {
    for (const auto &spec : msg.agents) {
        AgentReady ready{msg.app_id, spec.agent_id, cfg_.node_id, "", 0, ""};
        {
            std::lock_guard lk(mu_);
            if (agents_.count(spec.agent_id)) {
                ready.reason = "duplicate agent id";
                controller_conn_->send(ready);
                continue;
            }
            AgentSlot slot;
            slot.id = spec.agent_id;
            slot.app = msg.app_id;
            agents_.emplace(spec.agent_id, std::move(slot));
        }

        if (cfg_.single_process) {
            agent::AgentConfig acfg;
            acfg.agent_id = spec.agent_id;
            acfg.app_id = msg.app_id;
            acfg.app_name = msg.app_name;
            acfg.node_id = cfg_.node_id;
            acfg.controller_endpoint = cfg_.controller_endpoint;
            acfg.manager_endpoint = server_->endpoint();
            acfg.capacity_bytes = spec.capacity;
            acfg.pfs_root = msg.pfs_root;
            acfg.ranks.assign(spec.ranks.begin(), spec.ranks.end());
            try {
                auto task = std::make_shared<agent::AgentService>(acfg);
                std::lock_guard lk(mu_);
                auto &slot = agents_.at(spec.agent_id);
                slot.task = task;
                slot.endpoint = task->endpoint();
                slot.ready = true;
                ready.endpoint = task->endpoint();
                ready.ok = 1;
            } catch (const std::exception &e) {
                ready.reason = e.what();
            }
            controller_conn_->send(ready);
            continue;
        }

        // Process mode: the agent reports its endpoint on connect; READY is
        // relayed once the hello arrives.
        std::vector<std::string> argv = {
            cfg_.agent_binary,
            "--agent-id", std::to_string(spec.agent_id),
            "--app-id", std::to_string(msg.app_id),
            "--app-name", msg.app_name,
            "--node-id", cfg_.node_id,
            "--controller", cfg_.controller_endpoint,
            "--manager", server_->endpoint(),
            "--capacity", std::to_string(spec.capacity),
            "--pfs-root", msg.pfs_root,
        };
        std::string ranks_csv;
        for (auto r : spec.ranks)
            ranks_csv += (ranks_csv.empty() ? "" : ",") + std::to_string(r);
        argv.push_back("--ranks");
        argv.push_back(ranks_csv);
        try {
            auto proc = ChildProc::spawn(argv);
            std::lock_guard lk(mu_);
            agents_.at(spec.agent_id).proc = std::move(proc);
        } catch (const std::exception &e) {
            ready.reason = e.what();
            controller_conn_->send(ready);
            std::lock_guard lk(mu_);
            agents_.erase(spec.agent_id);
            continue;
        }
        // Hello-or-death watchdog.
        std::thread([this, app = msg.app_id, id = spec.agent_id] {
            const auto deadline =
                std::chrono::steady_clock::now() +
                std::chrono::milliseconds(cfg_.launch_hello_timeout_ms);
            std::unique_lock lk(mu_);
            cv_.wait_until(lk, deadline, [&] {
                auto it = agents_.find(id);
                return stopping_.load() || it == agents_.end() ||
                       it->second.ready || it->second.dead;
            });
            auto it = agents_.find(id);
            if (it == agents_.end())
                return;
            AgentReady ready{app, id, cfg_.node_id, it->second.endpoint,
                             static_cast<std::uint8_t>(it->second.ready ? 1 : 0),
                             it->second.ready ? "" : "agent did not report in"};
            try {
                controller_conn_->send(ready);
            } catch (const std::exception &) {
            }
        }).detach();
    }
}

void ManagerService::handle_shutdown(const Shutdown &msg) {
    std::vector<std::shared_ptr<agent::AgentService>> to_stop;
    {
        std::lock_guard lk(mu_);
        for (auto &[id, slot] : agents_) {
            if (msg.agent_id != 0 && id != msg.agent_id)
                continue;
            slot.expected_exit = true;
            if (slot.task)
                to_stop.push_back(slot.task);
            if (slot.conn)
                slot.conn->send(Shutdown{id, msg.reason});
        }
    }
    for (auto &t : to_stop)
        t->stop();
}

void ManagerService::relay_to_agent(AgentId agent, const Message &msg) {
    net::MsgConnPtr conn;
    {
        std::lock_guard lk(mu_);
        auto it = agents_.find(agent);
        if (it != agents_.end())
            conn = it->second.conn;
    }
    if (!conn) {
        log::event("relay_failed", {{"agent", log::str(agent)},
                                    {"node", cfg_.node_id},
                                    {"msg", message_name(msg)}});
        return;
    }
    try {
        conn->send(msg);
    } catch (const std::exception &e) {
        log::event("relay_failed", {{"agent", log::str(agent)}, {"what", e.what()}});
    }
}

void ManagerService::serve_agent_conn(const net::MsgConnPtr &conn) {
    AgentId who = 0;
    try {
        while (auto msg = conn->recv()) {
        if (auto *stats = std::get_if<AgentStats>(&*msg)) {
            std::lock_guard lk(mu_);
            auto it = agents_.find(stats->agent_id);
            if (it == agents_.end())
                continue; // unknown agent (e.g. from a previous run)
            who = stats->agent_id;
            auto &slot = it->second;
            slot.conn = conn;
            slot.endpoint = stats->endpoint;
            slot.staged_bytes = stats->staged_bytes;
            slot.ready = true;
            moved_accum_ += stats->moved_bytes_delta;
            cv_.notify_all();
        }
        }
    } catch (const std::exception &) {
        // fall through to the liveness bookkeeping below
    }
    if (who != 0) {
        std::lock_guard lk(mu_);
        auto it = agents_.find(who);
        if (it != agents_.end() && !it->second.expected_exit && !it->second.dead) {
            it->second.dead = true;
            pending_dead_.push_back(who);
            log::event("agent_lost", {{"agent", log::str(who)},
                                      {"node", cfg_.node_id}});
        }
    }
}

NodeStats ManagerService::sample_stats_locked(std::uint64_t moved_delta) {
    NodeStats s;
    s.node_id = cfg_.node_id;
    s.mem_capacity = cfg_.mem_capacity;
    for (const auto &[id, slot] : agents_)
        if (!slot.dead && !slot.expected_exit)
            s.mem_used += slot.staged_bytes;
    const double period_s = cfg_.report_period_ms / 1000.0;
    s.bw_used = static_cast<double>(moved_delta) / period_s;
    mem_pred_ = ewma(mem_pred_, static_cast<double>(s.mem_used), cfg_.ewma_alpha);
    bw_pred_ = ewma(bw_pred_, s.bw_used, cfg_.ewma_alpha);
    s.mem_predicted = *mem_pred_;
    s.bw_predicted = *bw_pred_;
    s.sample_time_ms = now_ms();
    last_stats_ = s;
    return s;
}

void ManagerService::sample_loop() {
    while (!stopping_.load()) {
        {
            std::unique_lock lk(mu_);
            cv_.wait_for(lk, std::chrono::milliseconds(cfg_.report_period_ms),
                         [this] { return stopping_.load(); });
        }
        if (stopping_.load())
            return;
        StatsReport report;
        {
            std::lock_guard lk(mu_);
            // Reap exited agent processes.
            for (auto &[id, slot] : agents_) {
                if (slot.proc.valid() && !slot.proc.alive() && !slot.dead &&
                    !slot.expected_exit) {
                    slot.dead = true;
                    pending_dead_.push_back(id);
                    log::event("agent_lost", {{"agent", log::str(id)},
                                              {"node", cfg_.node_id}});
                }
            }
            report.stats.node_id = cfg_.node_id;
            const auto s = sample_stats_locked(moved_accum_);
            moved_accum_ = 0;
            report.stats.node_id = s.node_id;
            report.stats.mem_capacity = s.mem_capacity;
            report.stats.mem_used = s.mem_used;
            report.stats.bw_used = s.bw_used;
            report.stats.mem_predicted = s.mem_predicted;
            report.stats.bw_predicted = s.bw_predicted;
            report.stats.sample_time_ms = s.sample_time_ms;
            report.dead_agents = pending_dead_;
            pending_dead_.clear();
        }
        try {
            controller_conn_->send(report);
        } catch (const std::exception &) {
            return; // controller gone
        }
    }
}

NodeStats ManagerService::current_stats() const {
    std::lock_guard lk(mu_);
    return last_stats_;
}

std::vector<std::pair<AgentId, int>> ManagerService::agent_pids() const {
    std::lock_guard lk(mu_);
    std::vector<std::pair<AgentId, int>> out;
    for (const auto &[id, slot] : agents_)
        if (slot.proc.valid())
            out.emplace_back(id, slot.proc.pid());
    return out;
}

std::vector<std::shared_ptr<agent::AgentService>>
ManagerService::local_agents() const {
    std::lock_guard lk(mu_);
    std::vector<std::shared_ptr<agent::AgentService>> out;
    for (const auto &[id, slot] : agents_)
        if (slot.task)
            out.push_back(slot.task);
    return out;
}

} // namespace icheck::mgr
