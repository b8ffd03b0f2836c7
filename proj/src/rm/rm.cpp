// SPDX-License-Identifier: Apache-2.0
#include "icheck/rm/rm.hpp"

#include <algorithm>
#include <set>

#include "icheck/core/errors.hpp"
#include "icheck/core/log.hpp"

namespace icheck::rm {

using namespace proto;

RmStub::RmStub(RmConfig cfg) : cfg_(std::move(cfg)) {
    // Upfront validation: every referenced node must exist.
    std::set<std::string> inventory(cfg_.nodes.begin(), cfg_.nodes.end());
    if (inventory.size() != cfg_.nodes.size())
        throw ConfigError("duplicate node in inventory");
    auto check_node = [&](const std::string &n, const std::string &where) {
        if (!inventory.count(n))
            throw ConfigError(where + ": unknown node '" + n + "'");
    };
    for (const auto &n : cfg_.initial_grant)
        check_node(n, "initial_grant");
    double last_at = 0;
    for (const auto &ev : cfg_.script) {
        if (ev.at_s < last_at)
            throw ConfigError("script times must be non-decreasing");
        last_at = ev.at_s;
        for (const auto &n : ev.nodes)
            check_node(n, "script " + ev.action);
        if (ev.action == "migrate_hint") {
            check_node(ev.node_from, "script migrate_hint");
            check_node(ev.node_to, "script migrate_hint");
        }
        if (ev.action == "adapt" && ev.app.empty())
            throw ConfigError("adapt event requires an app");
    }
    for (const auto &n : cfg_.nodes)
        owners_[n] = NodeOwner::Spare;

    controller_ = net::MsgConn::dial(cfg_.controller_endpoint,
                                     std::chrono::seconds(10));
    if (!cfg_.harness_endpoint.empty())
        harness_ = std::make_unique<harness::LineConn>(harness::LineConn::connect(
            cfg_.harness_endpoint, std::chrono::seconds(10)));
}

RmStub::~RmStub() { stop(); }

void RmStub::start() {
    start_time_ = std::chrono::steady_clock::now();
    started_ = true;
    // The controller learns of us (and gets its first nodes) immediately.
    {
        std::lock_guard lk(mu_);
        NodeGrant grant;
        grant.node_ids = cfg_.initial_grant;
        for (const auto &n : cfg_.initial_grant)
            owners_[n] = NodeOwner::Icheck;
        controller_->send(grant);
        log_.push_back({0, "grant " + std::to_string(grant.node_ids.size()) +
                               " initial nodes"});
    }
    replies_ = std::thread([this] { reply_loop(); });
    timeline_ = std::thread([this] { timeline_loop(); });
}

void RmStub::stop() {
    bool expected = false;
    if (!stopping_.compare_exchange_strong(expected, true))
        return;
    cv_.notify_all();
    if (controller_)
        controller_->shutdown();
    if (harness_)
        harness_->shutdown();
    if (timeline_.joinable())
        timeline_.join();
    if (replies_.joinable())
        replies_.join();
}

void RmStub::wait_done() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [this] { return done_ || stopping_.load(); });
}

void RmStub::log_entry(const std::string &what) {
    const double t =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      start_time_)
            .count();
    log_.push_back({t, what});
    log::event("rm", {{"t", log::str(t)}, {"what", what}});
}

void RmStub::timeline_loop() {
    for (const auto &ev : cfg_.script) {
        const auto due = start_time_ + std::chrono::duration_cast<
                                           std::chrono::steady_clock::duration>(
                                           std::chrono::duration<double>(ev.at_s));
        {
            std::unique_lock lk(mu_);
            cv_.wait_until(lk, due, [this] { return stopping_.load(); });
        }
        if (stopping_.load())
            return;
        emit(ev);
    }
    std::lock_guard lk(mu_);
    done_ = true;
    cv_.notify_all();
}

void RmStub::emit(const harness::RmEventSpec &ev) {
    std::lock_guard lk(mu_);
    try {
        if (ev.action == "grant") {
            NodeGrant grant;
            for (const auto &n : ev.nodes) {
                if (owners_[n] != NodeOwner::Spare)
                    continue;
                owners_[n] = NodeOwner::Icheck;
                grant.node_ids.push_back(n);
            }
            controller_->send(grant);
            log_entry("grant " + std::to_string(grant.node_ids.size()) + " nodes");
        } else if (ev.action == "reclaim") {
            NodeReclaim rec;
            rec.node_ids = ev.nodes;
            rec.deadline_ms = static_cast<std::uint64_t>(ev.deadline_s * 1000);
            controller_->send(rec);
            log_entry("reclaim " + std::to_string(ev.nodes.size()) + " nodes");
        } else if (ev.action == "migrate_hint") {
            controller_->send(MigrateHint{ev.node_from, ev.node_to});
            log_entry("migrate_hint " + ev.node_from + " -> " + ev.node_to);
        } else if (ev.action == "adapt") {
            // The controller hears first so agents can prepare ahead of the
            // application's own adapt signal.
            AppAdaptNotice notice;
            notice.app_name = ev.app;
            notice.new_world_size = ev.new_world_size;
            controller_->send(notice);
            if (harness_)
                harness_->send({{"type", "rm_event"},
                                {"action", "adapt"},
                                {"app", ev.app},
                                {"new_world_size", ev.new_world_size}});
            log_entry("adapt " + ev.app + " -> " +
                      std::to_string(ev.new_world_size));
        } else if (ev.action == "kill_app") {
            if (harness_)
                harness_->send({{"type", "rm_event"},
                                {"action", "kill_app"},
                                {"app", ev.app}});
            log_entry("kill_app " + ev.app);
        } else if (ev.action == "kill_agent") {
            if (harness_)
                harness_->send({{"type", "rm_event"},
                                {"action", "kill_agent"},
                                {"agent_id", ev.agent_id}});
            log_entry("kill_agent " + std::to_string(ev.agent_id));
        } else if (ev.action == "throttle") {
            if (harness_)
                harness_->send({{"type", "rm_event"},
                                {"action", "throttle"},
                                {"throttle_bytes_per_sec", ev.throttle_bps}});
            log_entry("throttle " + std::to_string(ev.throttle_bps));
        }
    } catch (const std::exception &e) {
        log_entry(std::string("emit failed: ") + e.what());
    }
}

void RmStub::reply_loop() try {
    while (auto msg = controller_->recv()) {
        if (auto *req = std::get_if<NodeRequest>(&*msg)) {
            std::lock_guard lk(mu_);
            NodeGrant grant;
            grant.requested = req->count;
            for (const auto &[node, owner] : owners_) {
                if (grant.node_ids.size() >= req->count)
                    break;
                if (owner == NodeOwner::Spare)
                    grant.node_ids.push_back(node);
            }
            for (const auto &n : grant.node_ids)
                owners_[n] = NodeOwner::Icheck;
            grant.partial =
                grant.node_ids.size() < req->count && !grant.node_ids.empty() ? 1 : 0;
            controller_->send(grant);
            log_entry("request " + std::to_string(req->count) + " (" + req->reason +
                      ") -> granted " + std::to_string(grant.node_ids.size()));
        } else if (auto *rec = std::get_if<NodeReclaim>(&*msg)) {
            if (rec->release) {
                std::lock_guard lk(mu_);
                for (const auto &n : rec->node_ids)
                    owners_[n] = NodeOwner::Spare;
                log_entry("released " + std::to_string(rec->node_ids.size()) +
                          " nodes");
            }
        } else if (auto *err = std::get_if<ErrorMsg>(&*msg)) {
            log_entry("controller error: " + err->code + " " + err->detail);
        }
    }
} catch (const std::exception &e) {
    log::event("rm_reply_error", {{"what", e.what()}});
}

std::vector<RmLogEntry> RmStub::event_log() const {
    std::lock_guard lk(mu_);
    return log_;
}

std::optional<NodeOwner> RmStub::owner(const std::string &node) const {
    std::lock_guard lk(mu_);
    auto it = owners_.find(node);
    if (it == owners_.end())
        return std::nullopt;
    return it->second;
}

std::size_t RmStub::spares() const {
    std::lock_guard lk(mu_);
    std::size_t n = 0;
    for (const auto &[node, owner] : owners_)
        if (owner == NodeOwner::Spare)
            ++n;
    return n;
}

} // namespace icheck::rm
