// SPDX-License-Identifier: Apache-2.0
#include "icheck/controller/controller.hpp"

#include <algorithm>

#include <json.hpp>

#include "icheck/agent/pfs.hpp"
#include "icheck/core/log.hpp"
#include "icheck/layout/layout.hpp"

namespace icheck::ctrl {

using namespace proto;

namespace {
constexpr std::size_t kKeepCompleteVersions = 2; // per (app, epoch)

std::uint8_t status_u8(Status s) { return static_cast<std::uint8_t>(s); }
} // namespace

ControllerConfig ControllerConfig::from_json_text(const std::string &text) {
    ControllerConfig cfg;
    const auto j = nlohmann::json::parse(text);
    if (j.contains("listen"))
        cfg.listen = j["listen"].get<std::string>();
    if (j.contains("pfs_root"))
        cfg.pfs_root = j["pfs_root"].get<std::string>();
    if (j.contains("tick_ms"))
        cfg.tick_ms = j["tick_ms"].get<int>();
    if (j.contains("launch_timeout_ms"))
        cfg.launch_timeout_ms = j["launch_timeout_ms"].get<int>();
    if (j.contains("register_wait_ms"))
        cfg.register_wait_ms = j["register_wait_ms"].get<int>();
    if (j.contains("migrate_timeout_ms"))
        cfg.migrate_timeout_ms = j["migrate_timeout_ms"].get<int>();
    if (j.contains("policy"))
        cfg.policy = PolicyConfig::from_json_text(j["policy"].dump());
    return cfg;
}

Controller::Controller(ControllerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.policy.validate();
    server_ = std::make_unique<net::MsgServer>(
        cfg_.listen, [this](const net::MsgConnPtr &conn) { serve_conn(conn); });
    tick_thread_ = std::thread([this] { tick_loop(); });
    log::event("controller_up", {{"endpoint", server_->endpoint()}});
}

Controller::~Controller() { stop(); }

void Controller::stop() {
    bool expected = false;
    if (!stopping_.compare_exchange_strong(expected, true))
        return;
    cv_.notify_all();
    server_->stop();
    if (tick_thread_.joinable())
        tick_thread_.join();
}

void Controller::tick_loop() {
    while (!stopping_.load()) {
        {
            std::unique_lock lk(mu_);
            cv_.wait_for(lk, std::chrono::milliseconds(cfg_.tick_ms),
                         [this] { return stopping_.load(); });
            if (stopping_.load())
                return;
            advance_flushes(lk);
        }
    }
}

void Controller::serve_conn(const net::MsgConnPtr &conn_ptr) {
    net::MsgConn &conn = *conn_ptr;
    while (auto msg = conn.recv()) {
        if (auto *m = std::get_if<Register>(&*msg)) {
            on_register(conn, *m);
        } else if (auto *m = std::get_if<ProbeAgents>(&*msg)) {
            on_probe(conn, *m);
        } else if (auto *m = std::get_if<RestartQuery>(&*msg)) {
            on_restart_query(conn, *m);
        } else if (auto *m = std::get_if<Deregister>(&*msg)) {
            on_deregister(conn, *m);
        } else if (auto *m = std::get_if<StatsReport>(&*msg)) {
            on_stats(conn_ptr, *m);
        } else if (auto *m = std::get_if<AgentReady>(&*msg)) {
            on_agent_ready(conn_ptr, *m, m->reason == "hello");
        } else if (auto *m = std::get_if<CommitReport>(&*msg)) {
            on_commit_report(*m);
        } else if (auto *m = std::get_if<RegionDecl>(&*msg)) {
            on_region_decl(*m);
        } else if (auto *m = std::get_if<FlushAck>(&*msg)) {
            on_flush_ack(*m);
        } else if (auto *m = std::get_if<MigrateAck>(&*msg)) {
            on_migrate_ack(*m);
        } else if (auto *m = std::get_if<NodeGrant>(&*msg)) {
            on_node_grant(conn_ptr, *m);
        } else if (auto *m = std::get_if<NodeReclaim>(&*msg)) {
            on_node_reclaim(conn_ptr, *m);
        } else if (auto *m = std::get_if<MigrateHint>(&*msg)) {
            on_migrate_hint(conn_ptr, *m);
        } else if (auto *m = std::get_if<AppAdaptNotice>(&*msg)) {
            on_adapt_notice(conn_ptr, *m);
        } else if (auto *m = std::get_if<NodeRequest>(&*msg)) {
            // An RM never sends this; seeing one here is a wiring error.
            conn.send(ErrorMsg{"unexpected", "NODE_REQUEST at controller"});
        } else if (auto *m = std::get_if<ErrorMsg>(&*msg)) {
            on_agent_error(*m);
        } else {
            conn.send(ErrorMsg{"unexpected", message_name(*msg)});
        }
    }
}

// ---- lookup helpers ----

Controller::AppState *Controller::find_app(AppId id) {
    auto it = apps_.find(id);
    return it == apps_.end() ? nullptr : &it->second;
}

Controller::AppState *Controller::find_app_by_name(const std::string &name) {
    AppState *fallback = nullptr;
    for (auto &[id, app] : apps_) {
        if (app.name != name)
            continue;
        if (!app.deregistered)
            return &app;
        fallback = &app;
    }
    return fallback;
}

std::vector<NodeView>
Controller::placement_candidates(std::unique_lock<std::mutex> &) {
    std::vector<NodeView> out;
    for (const auto &[id, n] : nodes_) {
        if (!n.owned || n.releasing || !n.manager_connected)
            continue;
        out.push_back({id, n.stats.mem_capacity, n.stats.mem_used,
                       n.stats.mem_predicted});
    }
    return out;
}

std::optional<std::string>
Controller::place_or_request(std::unique_lock<std::mutex> &lk,
                             std::uint64_t share) {
    auto candidates = placement_candidates(lk);
    if (auto node = choose_node(candidates, share, cfg_.policy.mem_headroom))
        return node;
    // Interaction 1: ask the RM for another node, then re-evaluate.
    request_nodes(1, "memory");
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(cfg_.register_wait_ms);
    while (!stopping_.load()) {
        candidates = placement_candidates(lk);
        if (auto node = choose_node(candidates, share, cfg_.policy.mem_headroom))
            return node;
        if (!outstanding_requests_.count("memory"))
            return std::nullopt; // denied
        if (cv_.wait_until(lk, deadline) == std::cv_status::timeout)
            return std::nullopt;
    }
    return std::nullopt;
}

void Controller::request_nodes(std::uint32_t count, const std::string &reason) {
    if (outstanding_requests_.count(reason))
        return; // at most one outstanding request per reason
    if (!rm_conn_)
        return;
    outstanding_requests_.insert(reason);
    try {
        rm_conn_->send(NodeRequest{count, reason});
        log::event("node_request", {{"count", log::str(count)}, {"reason", reason}});
    } catch (const std::exception &e) {
        outstanding_requests_.erase(reason);
        log::event("node_request_failed", {{"what", e.what()}});
    }
}

// ---- agents & assignments ----

bool Controller::launch_agents(std::unique_lock<std::mutex> &lk, AppState &app,
                               std::uint32_t count, std::uint32_t world,
                               std::vector<AgentId> &out, std::string &error) {
    count = std::min(count, world);
    const auto groups = block_partition(world, count);
    const std::uint64_t total = total_region_bytes(app, app.epoch);
    const std::uint64_t share = total / std::max<std::uint64_t>(count, 1);

    struct Planned {
        AgentId id;
        std::string node;
        std::vector<Rank> ranks;
    };
    std::vector<Planned> planned;
    auto candidates = placement_candidates(lk);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::vector<Rank> ranks;
        for (std::uint64_t k = 0; k < groups[i].length; ++k)
            ranks.push_back(static_cast<Rank>(groups[i].offset + k));
        auto chosen = choose_node(candidates, share, cfg_.policy.mem_headroom);
        if (!chosen) {
            chosen = place_or_request(lk, share);
            candidates = placement_candidates(lk);
        }
        if (!chosen) {
            error = "insufficient checkpoint capacity";
            return false;
        }
        for (auto &c : candidates)
            if (c.node_id == *chosen)
                c.mem_used += share; // greedy reservation within this call
        planned.push_back({ids_.next(), *chosen, std::move(ranks)});
    }

    std::map<std::string, LaunchAgents> per_node;
    for (const auto &p : planned) {
        AgentInfo info;
        info.id = p.id;
        info.app = app.app_id;
        info.node_id = p.node;
        info.ranks = p.ranks;
        agents_[p.id] = info;
        auto &launch = per_node[p.node];
        launch.app_id = app.app_id;
        launch.app_name = app.name;
        launch.pfs_root = cfg_.pfs_root;
        std::vector<std::uint32_t> ranks32(p.ranks.begin(), p.ranks.end());
        launch.agents.push_back({p.id, cfg_.policy.per_agent_capacity, ranks32});
    }
    for (auto &[node_id, launch] : per_node) {
        auto conn = nodes_[node_id].manager_conn;
        if (!conn) {
            error = "manager for node " + node_id + " not connected";
            return false;
        }
        conn->send(launch);
        log::event("launch_agents", {{"app", log::str(app.app_id)},
                                     {"node", node_id},
                                     {"count", log::str(launch.agents.size())}});
    }

    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(cfg_.launch_timeout_ms);
    auto all_settled = [&] {
        for (const auto &p : planned) {
            const auto &a = agents_.at(p.id);
            if (!a.ready && !a.launch_failed)
                return false;
        }
        return true;
    };
    cv_.wait_until(lk, deadline, [&] { return stopping_.load() || all_settled(); });

    // One re-placement pass for agents whose spawn failed.
    for (const auto &p : planned) {
        auto &a = agents_.at(p.id);
        if (a.ready || !a.launch_failed)
            continue;
        auto candidates2 = placement_candidates(lk);
        std::erase_if(candidates2,
                      [&](const NodeView &n) { return n.node_id == a.node_id; });
        const auto retry_node = choose_node(candidates2, share, cfg_.policy.mem_headroom);
        if (!retry_node)
            continue;
        log::event("agent_replace", {{"agent", log::str(a.id)},
                                     {"from", a.node_id},
                                     {"to", *retry_node}});
        a.launch_failed = false;
        a.node_id = *retry_node;
        LaunchAgents launch;
        launch.app_id = app.app_id;
        launch.app_name = app.name;
        launch.pfs_root = cfg_.pfs_root;
        std::vector<std::uint32_t> ranks32(a.ranks.begin(), a.ranks.end());
        launch.agents.push_back({a.id, cfg_.policy.per_agent_capacity, ranks32});
        nodes_[*retry_node].manager_conn->send(launch);
        cv_.wait_until(lk, deadline, [&] {
            return stopping_.load() || agents_.at(p.id).ready ||
                   agents_.at(p.id).launch_failed;
        });
    }

    for (const auto &p : planned) {
        if (!agents_.at(p.id).ready) {
            error = "agent launch timed out or failed";
            return false;
        }
        out.push_back(p.id);
    }
    return true;
}

void Controller::set_assignments(AppState &app, const std::vector<AgentId> &agents,
                                 std::uint32_t world) {
    const auto groups = block_partition(world, static_cast<std::uint32_t>(agents.size()));
    for (std::size_t i = 0; i < agents.size(); ++i) {
        auto &info = agents_.at(agents[i]);
        info.ranks.clear();
        for (std::uint64_t k = 0; k < groups[i].length; ++k)
            info.ranks.push_back(static_cast<Rank>(groups[i].offset + k));
    }
    app.agents = agents;
    ++app.assignment_revision;
}

std::vector<WireAssignment> Controller::wire_assignments(const AppState &app) const {
    std::vector<WireAssignment> out;
    for (AgentId id : app.agents) {
        const auto &a = agents_.at(id);
        if (a.ranks.empty())
            continue;
        WireAssignment w;
        w.agent_id = a.id;
        w.node_id = a.node_id;
        w.endpoint = a.endpoint;
        w.ranks.assign(a.ranks.begin(), a.ranks.end());
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<RegionDescriptor> Controller::descriptors_for(const AppState &app,
                                                          Epoch epoch) {
    std::vector<RegionDescriptor> out;
    auto it = app.regions.find(epoch);
    if (it != app.regions.end()) {
        for (const auto &[id, agg] : it->second) {
            if (agg.invalid ||
                !std::all_of(agg.present.begin(), agg.present.end(),
                             [](bool b) { return b; }))
                continue;
            RegionDescriptor d;
            d.region_id = id;
            d.elem_size = agg.decl.elem_size;
            d.scheme = static_cast<DistributionScheme>(agg.decl.scheme);
            d.count_per_rank = agg.counts;
            out.push_back(std::move(d));
        }
        if (!out.empty())
            return out;
    }
    // Fall back to the newest fully-declared epoch, re-sliced to this
    // epoch's world size (the global element count is conserved).
    for (auto rit = app.regions.rbegin(); rit != app.regions.rend(); ++rit) {
        if (rit->first == epoch)
            continue;
        std::vector<RegionDescriptor> base;
        for (const auto &[id, agg] : rit->second) {
            if (agg.invalid ||
                !std::all_of(agg.present.begin(), agg.present.end(),
                             [](bool b) { return b; }))
                continue;
            RegionDescriptor d;
            d.region_id = id;
            d.elem_size = agg.decl.elem_size;
            d.scheme = static_cast<DistributionScheme>(agg.decl.scheme);
            d.count_per_rank = agg.counts;
            base.push_back(std::move(d));
        }
        if (base.empty())
            continue;
        auto wit = app.world_by_epoch.find(epoch);
        const std::uint32_t world =
            wit != app.world_by_epoch.end() ? wit->second : app.world_size;
        for (auto &d : base) {
            const Layout l{d.total_elems(), world, d.scheme};
            d.count_per_rank.clear();
            for (Rank r = 0; r < world; ++r)
                d.count_per_rank.push_back(owned_count(l, r));
        }
        return base;
    }
    return {};
}

std::vector<WireRegion> Controller::wire_regions(const AppState &app, Epoch epoch) {
    std::vector<WireRegion> out;
    for (const auto &d : descriptors_for(const_cast<AppState &>(app), epoch)) {
        WireRegion w;
        w.id = d.region_id;
        w.elem_size = d.elem_size;
        w.scheme = static_cast<std::uint8_t>(d.scheme);
        w.counts = d.count_per_rank;
        out.push_back(std::move(w));
    }
    return out;
}

std::uint64_t Controller::total_region_bytes(const AppState &app, Epoch epoch) {
    std::uint64_t total = 0;
    for (const auto &d : descriptors_for(const_cast<AppState &>(app), epoch))
        total += d.total_bytes();
    return total;
}

std::optional<Version> Controller::latest_complete(const AppState &app) const {
    if (app.complete_order.empty())
        return std::nullopt;
    return app.complete_order.back();
}

double Controller::observed_rate(const AppState &app) const {
    for (auto it = app.complete_order.rbegin(); it != app.complete_order.rend();
         ++it) {
        auto t = app.tracks.find(*it);
        if (t == app.tracks.end() || t->second.total_bytes == 0)
            continue;
        const double secs =
            std::max<std::uint64_t>(t->second.max_transfer_us, 1) / 1e6;
        return static_cast<double>(t->second.total_bytes) / secs;
    }
    return -1; // nothing measured yet
}

// ---- registration ----

void Controller::on_register(net::MsgConn &conn, const Register &msg) {
    std::unique_lock lk(mu_);
    RegisterAck ack;
    ack.pfs_root = cfg_.pfs_root;

    auto reply_error = [&](const std::string &why) {
        ack.status = status_u8(Status::Rejected);
        ack.reason = why;
        lk.unlock();
        conn.send(ack);
    };

    AppState *app = find_app_by_name(msg.name);
    if (app && app->deregistered)
        app = nullptr;

    if (msg.process_type == static_cast<std::uint8_t>(ProcessType::Joining)) {
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::milliseconds(cfg_.register_wait_ms);
        cv_.wait_until(lk, deadline, [&] {
            if (stopping_.load())
                return true;
            AppState *a = find_app_by_name(msg.name);
            return a && !a->launching && a->world_size == msg.world_size;
        });
        app = find_app_by_name(msg.name);
        if (stopping_.load() || !app || app->world_size != msg.world_size) {
            reply_error("no pending adaptation for joining process");
            return;
        }
    } else if (!app) {
        // First INITIAL rank creates the record; peers attach to it.
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::milliseconds(cfg_.register_wait_ms);
        cv_.wait_until(lk, deadline, [&] {
            return stopping_.load() || find_app_by_name(msg.name) != nullptr ||
                   !placement_candidates(lk).empty();
        });
        app = find_app_by_name(msg.name);
        if (!app) {
            if (placement_candidates(lk).empty() && !rm_conn_) {
                reply_error("no icheck nodes available");
                return;
            }
            AppState fresh;
            fresh.app_id = ids_.next();
            fresh.name = msg.name;
            fresh.world_size = msg.world_size;
            fresh.epoch = 0;
            fresh.world_by_epoch[0] = msg.world_size;
            fresh.launching = true;
            auto [it, inserted] = apps_.emplace(fresh.app_id, std::move(fresh));
            app = &it->second;
            // Region sizes may be declared here; most clients declare later
            // through MEM_REGISTER once buffers are added.
            for (const auto &r : msg.regions) {
                RegionAgg agg;
                agg.decl.id = r.id;
                agg.decl.elem_size = r.elem_size;
                agg.decl.scheme = r.scheme;
                agg.counts = r.counts;
                agg.present.assign(msg.world_size, true);
                app->regions[0][r.id] = std::move(agg);
            }
            const std::uint32_t count = agent_count_for(
                total_region_bytes(*app, 0), msg.world_size, cfg_.policy);
            std::vector<AgentId> launched;
            std::string error;
            const bool ok =
                launch_agents(lk, *app, count, msg.world_size, launched, error);
            if (!ok) {
                app->launching = false;
                apps_.erase(app->app_id);
                cv_.notify_all();
                reply_error(error);
                return;
            }
            set_assignments(*app, launched, msg.world_size);
            app->launching = false;
            log::event("app_registered", {{"app", log::str(app->app_id)},
                                          {"name", app->name},
                                          {"world", log::str(app->world_size)},
                                          {"agents", log::str(launched.size())}});
            cv_.notify_all();
        }
    }

    if (app->launching) {
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::milliseconds(cfg_.launch_timeout_ms);
        cv_.wait_until(lk, deadline,
                       [&] { return stopping_.load() || !app->launching; });
        if (app->launching) {
            reply_error("registration still launching agents");
            return;
        }
    }
    if (msg.process_type == static_cast<std::uint8_t>(ProcessType::Initial) &&
        app->world_size != msg.world_size) {
        reply_error("world size mismatch with registered application");
        return;
    }

    ack.status = status_u8(Status::Ok);
    ack.app_id = app->app_id;
    ack.epoch = app->epoch;
    ack.next_version = app->max_seen_version + 1;
    ack.world_size = app->world_size;
    if (app->pending_adapt && app->pending_adapt->epoch == app->epoch)
        ack.prev_world = app->pending_adapt->old_world;
    ack.assignment_revision = app->assignment_revision;
    ack.assignments = wire_assignments(*app);
    ack.regions = wire_regions(*app, app->epoch);
    lk.unlock();
    conn.send(ack);
}

// ---- probe / rescale ----

void Controller::on_probe(net::MsgConn &conn, const ProbeAgents &msg) {
    std::unique_lock lk(mu_);
    AppState *app = find_app(msg.app_id);
    if (!app) {
        lk.unlock();
        conn.send(ErrorMsg{"unknown_app", std::to_string(msg.app_id)});
        return;
    }

    const bool rescale_allowed =
        msg.evaluate != 0 && !app->launching && app->retiring.empty();
    if (msg.assignment_revision == app->assignment_revision && rescale_allowed) {
        const double rate = observed_rate(*app);
        const std::uint32_t max_allowed =
            std::min(cfg_.policy.max_agents_per_app, app->world_size);
        const auto decision =
            rate < 0 ? ProbeDecision::NoChange
                     : probe_decision(rate, cfg_.policy.target_rate,
                                      static_cast<std::uint32_t>(app->agents.size()),
                                      max_allowed);
        log::event("probe_eval", {{"app", log::str(app->app_id)},
                                  {"rate", log::str(rate)},
                                  {"target", log::str(cfg_.policy.target_rate)},
                                  {"agents", log::str(app->agents.size())},
                                  {"decision", to_string(decision)}});
        if (decision != ProbeDecision::NoChange) {
            const auto want =
                static_cast<std::uint32_t>(app->agents.size()) +
                (decision == ProbeDecision::Grow ? 1 : -1);
            log::event("probe_rescale", {{"app", log::str(app->app_id)},
                                         {"rate", log::str(rate)},
                                         {"decision", to_string(decision)},
                                         {"agents", log::str(want)}});
            app->launching = true;
            std::vector<AgentId> fresh;
            std::string error;
            const bool ok =
                launch_agents(lk, *app, want, app->world_size, fresh, error);
            app->launching = false;
            if (ok) {
                // Old agents keep their versions until the first COMPLETE
                // version lands on the new set.
                app->retiring = app->agents;
                set_assignments(*app, fresh, app->world_size);
            } else {
                log::event("probe_rescale_failed", {{"app", log::str(app->app_id)},
                                                    {"why", error}});
            }
            cv_.notify_all();
        }
    }

    ProbeAgentsAck ack;
    ack.change = msg.assignment_revision == app->assignment_revision
                     ? static_cast<std::uint8_t>(AssignmentChange::NoChange)
                     : static_cast<std::uint8_t>(AssignmentChange::NewAssignments);
    ack.epoch = app->epoch;
    ack.world_size = app->world_size;
    if (app->pending_adapt && app->pending_adapt->epoch == app->epoch)
        ack.prev_world = app->pending_adapt->old_world;
    ack.next_version = app->max_seen_version + 1;
    ack.assignment_revision = app->assignment_revision;
    if (ack.change != 0) {
        ack.assignments = wire_assignments(*app);
        ack.regions = wire_regions(*app, app->epoch);
    }
    lk.unlock();
    conn.send(ack);
}

// ---- restart ----

void Controller::on_restart_query(net::MsgConn &conn, const RestartQuery &msg) {
    std::unique_lock lk(mu_);
    AppState *app = msg.app_id != 0 ? find_app(msg.app_id)
                                    : find_app_by_name(msg.name);
    RestartInfo info;
    info.pfs_root = cfg_.pfs_root;
    if (app) {
        if (const auto v = latest_complete(*app)) {
            const auto &track = app->tracks.at(*v);
            info.found = 1;
            info.app_id = app->app_id;
            info.version = *v;
            info.epoch = track.epoch;
            info.world_size = track.world;
            info.assignment_revision = app->assignment_revision;
            info.assignments = wire_assignments(*app);
            info.regions = wire_regions(*app, track.epoch);
        }
    }
    lk.unlock();
    conn.send(info);
}

void Controller::on_deregister(net::MsgConn &conn, const Deregister &msg) {
    std::unique_lock lk(mu_);
    AppState *app = find_app(msg.app_id);
    if (app) {
        app->deregistered = true;
        log::event("app_deregistered", {{"app", log::str(msg.app_id)}});
    }
    lk.unlock();
    conn.send(Ack{status_u8(app ? Status::Ok : Status::UnknownApp), "", msg.app_id});
}

// ---- manager / agent plumbing ----

void Controller::on_stats(const net::MsgConnPtr &conn, const StatsReport &msg) {
    std::lock_guard lk(mu_);
    auto &node = nodes_[msg.stats.node_id];
    node.stats.node_id = msg.stats.node_id;
    node.stats.mem_capacity = msg.stats.mem_capacity;
    node.stats.mem_used = msg.stats.mem_used;
    node.stats.bw_used = msg.stats.bw_used;
    node.stats.mem_predicted = msg.stats.mem_predicted;
    node.stats.bw_predicted = msg.stats.bw_predicted;
    node.stats.sample_time_ms = msg.stats.sample_time_ms;
    if (!node.manager_connected) {
        node.manager_connected = true;
        log::event("manager_connected", {{"node", msg.stats.node_id}});
    }
    node.manager_conn = conn;
    for (AgentId dead : msg.dead_agents) {
        auto it = agents_.find(dead);
        if (it != agents_.end() && !it->second.retired) {
            log::event("agent_dead", {{"agent", log::str(dead)},
                                      {"node", msg.stats.node_id}});
            it->second.retired = true;
        }
    }
    cv_.notify_all();
}

void Controller::on_agent_ready(const net::MsgConnPtr &conn, const AgentReady &msg,
                                bool from_agent) {
    std::lock_guard lk(mu_);
    auto it = agents_.find(msg.agent_id);
    if (it == agents_.end())
        return;
    auto &agent = it->second;
    if (msg.ok) {
        agent.ready = true;
        agent.endpoint = msg.endpoint;
        if (!msg.node_id.empty())
            agent.node_id = msg.node_id;
        if (from_agent)
            agent.conn = conn;
        log::event("agent_ready", {{"agent", log::str(msg.agent_id)},
                                   {"node", agent.node_id},
                                   {"endpoint", msg.endpoint}});
    } else {
        agent.launch_failed = true;
        agent.launch_error = msg.reason;
        log::event("agent_launch_failed", {{"agent", log::str(msg.agent_id)},
                                           {"why", msg.reason}});
    }
    cv_.notify_all();
}

void Controller::on_region_decl(const RegionDecl &msg) {
    std::lock_guard lk(mu_);
    AppState *app = find_app(msg.app_id);
    if (!app)
        return;
    const auto world_it = app->world_by_epoch.find(msg.epoch);
    const std::uint32_t world =
        world_it != app->world_by_epoch.end() ? world_it->second : app->world_size;
    auto &agg = app->regions[msg.epoch][msg.region.id];
    if (agg.counts.empty()) {
        agg.decl = msg.region;
        agg.counts.assign(world, 0);
        agg.present.assign(world, false);
    }
    if (msg.rank >= world)
        return;
    if (agg.decl.elem_size != msg.region.elem_size ||
        agg.decl.scheme != msg.region.scheme) {
        agg.invalid = true;
        agg.error = "inconsistent element size or scheme across ranks";
    }
    agg.counts[msg.rank] = msg.region.count;
    agg.present[msg.rank] = true;
    if (std::all_of(agg.present.begin(), agg.present.end(),
                    [](bool b) { return b; })) {
        const auto err = validate_counts(
            agg.counts, static_cast<DistributionScheme>(agg.decl.scheme));
        if (err) {
            agg.invalid = true;
            agg.error = *err;
            log::event("region_invalid", {{"app", log::str(msg.app_id)},
                                          {"region", msg.region.id},
                                          {"why", *err}});
        } else {
            log::event("region_ready", {{"app", log::str(msg.app_id)},
                                        {"region", msg.region.id},
                                        {"epoch", log::str(msg.epoch)}});
        }
    }
    cv_.notify_all();
}

void Controller::on_commit_report(const CommitReport &msg) {
    std::unique_lock lk(mu_);
    AppState *app = find_app(msg.app_id);
    if (!app)
        return;
    if (msg.kind == static_cast<std::uint8_t>(PayloadKind::Snapshot))
        return; // snapshots are adapt plumbing, not versions
    auto it = agents_.find(msg.agent_id);
    if (it != agents_.end())
        it->second.staged_estimate += msg.bytes;

    app->max_seen_version = std::max(app->max_seen_version, msg.version);
    auto &track = app->tracks[msg.version];
    if (track.version == 0) {
        track.version = msg.version;
        track.epoch = msg.epoch;
        const auto wit = app->world_by_epoch.find(msg.epoch);
        track.world = wit != app->world_by_epoch.end() ? wit->second
                                                       : app->world_size;
    }
    if (track.committed.count(msg.rank)) {
        cv_.notify_all();
        return; // duplicate commit: idempotent no-op
    }
    track.committed.insert(msg.rank);
    track.total_bytes += msg.bytes;
    track.max_transfer_us = std::max(track.max_transfer_us, msg.transfer_us);
    track.rank_agent[msg.rank] = msg.agent_id;
    for (const auto &r : msg.regions)
        track.payloads[{msg.rank, r.id}] = {r.total_len, r.crc};

    if (!track.complete && track.committed.size() == track.world)
        on_version_complete(lk, *app, track);
    cv_.notify_all();
}

void Controller::on_version_complete(std::unique_lock<std::mutex> &lk,
                                     AppState &app, VersionTrack &track) {
    track.complete = true;
    track.complete_ms = now_ms();
    app.complete_order.push_back(track.version);
    log::event("version_complete", {{"app", log::str(app.app_id)},
                                    {"version", log::str(track.version)},
                                    {"epoch", log::str(track.epoch)},
                                    {"bytes", log::str(track.total_bytes)}});

    maybe_retire_old_agents(app, track);

    // Keep the last K complete versions per (app, epoch).
    std::vector<Version> same_epoch;
    for (Version v : app.complete_order)
        if (app.tracks.count(v) && app.tracks.at(v).epoch == track.epoch)
            same_epoch.push_back(v);
    Version min_keep = 0;
    if (same_epoch.size() > kKeepCompleteVersions)
        min_keep = same_epoch[same_epoch.size() - kKeepCompleteVersions];
    if (min_keep > 0) {
        for (auto it = app.tracks.begin(); it != app.tracks.end();) {
            if (it->second.epoch == track.epoch && it->first < min_keep) {
                for (auto &[rank, agent] : it->second.rank_agent) {
                    auto ag = agents_.find(agent);
                    if (ag != agents_.end()) {
                        const std::uint64_t est = it->second.total_bytes /
                                                  std::max<std::size_t>(
                                                      it->second.rank_agent.size(), 1);
                        ag->second.staged_estimate -=
                            std::min(ag->second.staged_estimate, est);
                    }
                }
                it = app.tracks.erase(it);
            } else {
                ++it;
            }
        }
        std::erase_if(app.complete_order, [&](Version v) {
            return !app.tracks.count(v);
        });
    }
    send_gc(app, track.epoch, min_keep, track.version);
}

void Controller::maybe_retire_old_agents(AppState &app, const VersionTrack &track) {
    if (app.retiring.empty())
        return;
    for (const auto &[rank, agent] : track.rank_agent) {
        if (std::find(app.agents.begin(), app.agents.end(), agent) ==
            app.agents.end())
            return; // not yet fully landed on the new set
    }
    for (AgentId old_id : app.retiring) {
        auto it = agents_.find(old_id);
        if (it == agents_.end() || it->second.retired)
            continue;
        it->second.retired = true;
        if (it->second.conn) {
            try {
                it->second.conn->send(Shutdown{old_id, "retired"});
            } catch (const std::exception &) {
            }
        }
        log::event("agent_retired", {{"agent", log::str(old_id)},
                                     {"app", log::str(app.app_id)}});
    }
    app.retiring.clear();
}

void Controller::send_gc(AppState &app, Epoch epoch, Version min_keep,
                         Version watermark) {
    GcOrder gc{app.app_id, epoch, min_keep, 0, 0, watermark};
    auto send_one = [&](AgentId id) {
        auto it = agents_.find(id);
        if (it == agents_.end() || !it->second.conn)
            return;
        try {
            it->second.conn->send(gc);
        } catch (const std::exception &) {
        }
    };
    for (AgentId id : app.agents)
        send_one(id);
    for (AgentId id : app.retiring)
        send_one(id);
}

void Controller::on_agent_error(const ErrorMsg &msg) {
    std::lock_guard lk(mu_);
    log::event("agent_reported_error", {{"code", msg.code}, {"detail", msg.detail}});
    if (msg.code == "capacity")
        request_nodes(1, "memory");
}

// ---- flush orchestration ----

proto::Blob Controller::manifest_for(AppState &app, VersionTrack &track) {
    pfs::Manifest m;
    m.app_name = app.name;
    m.app_id = app.app_id;
    m.epoch = track.epoch;
    m.version = track.version;
    m.world_size = track.world;
    m.regions = descriptors_for(app, track.epoch);
    for (const auto &[key, val] : track.payloads)
        m.entries.push_back({key.first, key.second, val.first, val.second});
    return pfs::render_manifest(m);
}

void Controller::build_flush_steps(AppState &app, VersionTrack &track) {
    if (!track.steps.empty())
        return;
    std::map<AgentId, std::vector<Rank>> by_agent;
    for (const auto &[rank, agent] : track.rank_agent)
        by_agent[agent].push_back(rank);
    for (auto &[agent, ranks] : by_agent)
        track.steps.push_back({agent, ranks, false, false});
}

bool Controller::advance_one_flush(AppState &app, VersionTrack &track) {
    if (track.flush == VersionTrack::Flush::Done)
        return false;
    build_flush_steps(app, track);
    std::size_t remaining = 0;
    FlushStep *next = nullptr;
    for (auto &s : track.steps) {
        if (s.done)
            continue;
        ++remaining;
        if (!next && !s.ordered)
            next = &s;
        if (s.ordered)
            return false; // one order in flight per version
    }
    if (remaining == 0) {
        track.flush = VersionTrack::Flush::Done;
        return false;
    }
    if (!next)
        return false;
    auto agent_it = agents_.find(next->agent);
    if (agent_it == agents_.end())
        return false;
    auto &agent = agent_it->second;
    auto &node = nodes_[agent.node_id];
    if (node.flush_in_flight)
        return false; // interference control: one flush per node
    FlushOrder order;
    order.app_id = app.app_id;
    order.epoch = track.epoch;
    order.version = track.version;
    order.agent_id = next->agent;
    order.ranks.assign(next->ranks.begin(), next->ranks.end());
    order.write_manifest = remaining == 1 ? 1 : 0;
    if (order.write_manifest)
        order.manifest_json = manifest_for(app, track);
    net::MsgConnPtr via = node.manager_conn;
    if (!via)
        via = agent.conn;
    if (!via)
        return false;
    try {
        via->send(order);
    } catch (const std::exception &e) {
        log::event("flush_order_failed", {{"agent", log::str(next->agent)},
                                          {"what", e.what()}});
        return false;
    }
    next->ordered = true;
    node.flush_in_flight = true;
    track.flush = VersionTrack::Flush::InFlight;
    log::event("flush_order", {{"app", log::str(app.app_id)},
                               {"version", log::str(track.version)},
                               {"agent", log::str(next->agent)},
                               {"manifest", log::str(int(order.write_manifest))}});
    return true;
}

void Controller::advance_flushes(std::unique_lock<std::mutex> &lk) {
    const std::uint64_t now = now_ms();
    for (auto &[id, app] : apps_) {
        for (Version v : app.complete_order) {
            auto tit = app.tracks.find(v);
            if (tit == app.tracks.end())
                continue;
            auto &track = tit->second;
            if (track.flush == VersionTrack::Flush::Done)
                continue;
            if (track.flush == VersionTrack::Flush::None) {
                const bool aged =
                    now - track.complete_ms >
                    static_cast<std::uint64_t>(cfg_.policy.flush_age_s * 1000);
                bool pressured = false;
                for (const auto &[rank, agent_id] : track.rank_agent) {
                    auto ait = agents_.find(agent_id);
                    if (ait == agents_.end())
                        continue;
                    const auto nit = nodes_.find(ait->second.node_id);
                    if (nit == nodes_.end())
                        continue;
                    const auto &st = nit->second.stats;
                    if (st.mem_capacity > 0 &&
                        static_cast<double>(st.mem_used) >
                            cfg_.policy.flush_pressure *
                                static_cast<double>(st.mem_capacity)) {
                        pressured = true;
                        break;
                    }
                }
                if (!aged && !pressured)
                    continue;
            }
            advance_one_flush(app, track);
        }
    }
}

void Controller::on_flush_ack(const FlushAck &msg) {
    std::unique_lock lk(mu_);
    AppState *app = find_app(msg.app_id);
    if (!app)
        return;
    auto ait = agents_.find(msg.agent_id);
    if (ait != agents_.end())
        nodes_[ait->second.node_id].flush_in_flight = false;
    auto tit = app->tracks.find(msg.version);
    if (tit == app->tracks.end()) {
        cv_.notify_all();
        return;
    }
    auto &track = tit->second;
    for (auto &s : track.steps) {
        if (s.agent != msg.agent_id || s.done)
            continue;
        if (msg.ok) {
            s.done = true;
            for (Rank r : s.ranks)
                track.pfs_ranks.push_back(r);
        } else {
            s.ordered = false; // retried on a later tick
            log::event("flush_failed", {{"app", log::str(msg.app_id)},
                                        {"version", log::str(msg.version)},
                                        {"agent", log::str(msg.agent_id)},
                                        {"why", msg.reason}});
        }
    }
    if (msg.manifest_written)
        track.manifest_written = true;
    if (msg.ok && std::all_of(track.steps.begin(), track.steps.end(),
                              [](const FlushStep &s) { return s.done; })) {
        track.flush = VersionTrack::Flush::Done;
        log::event("version_on_pfs", {{"app", log::str(msg.app_id)},
                                      {"version", log::str(msg.version)}});
        // Under memory pressure the staged copy is dropped once safe on PFS.
        if (ait != agents_.end()) {
            const auto &node = nodes_[ait->second.node_id];
            if (node.stats.mem_capacity > 0 &&
                static_cast<double>(node.stats.mem_used) >
                    cfg_.policy.flush_pressure *
                        static_cast<double>(node.stats.mem_capacity)) {
                GcOrder purge{app->app_id, track.epoch, 0, 1, 0,
                              app->complete_order.empty()
                                  ? 0
                                  : app->complete_order.back()};
                for (const auto &[rank, agent_id] : track.rank_agent) {
                    auto it2 = agents_.find(agent_id);
                    if (it2 != agents_.end() && it2->second.conn)
                        it2->second.conn->send(purge);
                }
            }
        }
    } else if (msg.ok) {
        advance_one_flush(*app, track); // order the next agent in line
    }
    cv_.notify_all();
}

bool Controller::flush_version_sync(std::unique_lock<std::mutex> &lk,
                                    AppState &app, Version version,
                                    int timeout_ms) {
    auto tit = app.tracks.find(version);
    if (tit == app.tracks.end())
        return false;
    auto &track = tit->second;
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(timeout_ms);
    while (track.flush != VersionTrack::Flush::Done) {
        advance_one_flush(app, track);
        if (cv_.wait_until(lk, deadline) == std::cv_status::timeout)
            return track.flush == VersionTrack::Flush::Done;
        if (stopping_.load())
            return false;
    }
    return true;
}

// ---- RM interactions ----

void Controller::on_node_grant(const net::MsgConnPtr &conn, const NodeGrant &msg) {
    std::lock_guard lk(mu_);
    rm_conn_ = conn;
    for (const auto &id : msg.node_ids) {
        auto &node = nodes_[id];
        if (node.owned)
            continue; // duplicate grant: idempotent
        node.owned = true;
        node.releasing = false;
        node.stats.node_id = id;
        log::event("node_granted", {{"node", id}});
    }
    if (msg.node_ids.empty())
        log::event("node_request_denied", {{"requested", log::str(msg.requested)}});
    outstanding_requests_.clear();
    cv_.notify_all();
}

void Controller::on_node_reclaim(const net::MsgConnPtr &conn, const NodeReclaim &msg) {
    std::unique_lock lk(mu_);
    rm_conn_ = conn;
    for (const auto &id : msg.node_ids) {
        auto it = nodes_.find(id);
        if (it == nodes_.end() || !it->second.owned) {
            lk.unlock();
            conn->send(ErrorMsg{"not_owned", id});
            return;
        }
    }
    for (const auto &id : msg.node_ids) {
        log::event("node_reclaim", {{"node", id},
                                    {"deadline_ms", log::str(msg.deadline_ms)}});
        std::string error;
        migrate_agents_off(lk, id, false, msg.deadline_ms, error);
    }
}

void Controller::on_migrate_hint(const net::MsgConnPtr &conn, const MigrateHint &msg) {
    std::unique_lock lk(mu_);
    rm_conn_ = conn;
    auto from = nodes_.find(msg.node_from);
    auto to = nodes_.find(msg.node_to);
    if (from == nodes_.end() || to == nodes_.end() || !to->second.owned) {
        lk.unlock();
        conn->send(ErrorMsg{"not_owned", msg.node_to});
        return;
    }
    bool has_agents = false;
    std::uint64_t total_staged = 0;
    for (const auto &[id, a] : agents_)
        if (a.node_id == msg.node_from && !a.retired && a.ready) {
            has_agents = true;
            total_staged += a.staged_estimate;
        }
    if (!has_agents) {
        log::event("migrate_hint_noop", {{"from", msg.node_from}});
        return; // nothing to move
    }
    const NodeView view{msg.node_to, to->second.stats.mem_capacity,
                        to->second.stats.mem_used, to->second.stats.mem_predicted};
    const std::vector<NodeView> only{view};
    if (!choose_node(only, total_staged, cfg_.policy.mem_headroom)) {
        lk.unlock();
        conn->send(ErrorMsg{"no_headroom", msg.node_to});
        return;
    }
    std::string error;
    migrate_agents_off(lk, msg.node_from, true, 0, error);
}

bool Controller::migrate_agents_off(std::unique_lock<std::mutex> &lk,
                                    const std::string &node_id, bool keep_owned,
                                    std::uint64_t deadline_ms, std::string &error) {
    auto &node = nodes_[node_id];
    node.releasing = true;
    const auto deadline =
        std::chrono::steady_clock::now() +
        std::chrono::milliseconds(deadline_ms ? deadline_ms
                                              : cfg_.migrate_timeout_ms);

    std::vector<AgentId> to_move;
    for (const auto &[id, a] : agents_)
        if (a.node_id == node_id && a.ready && !a.retired)
            to_move.push_back(id);

    bool degraded = false;
    for (AgentId source_id : to_move) {
        auto &source = agents_.at(source_id);
        AppState *app = find_app(source.app);
        if (!app)
            continue;

        auto fall_back_to_pfs = [&] {
            // No target (or migration failed): data survives on the PFS tier.
            for (Version v : app->complete_order)
                flush_version_sync(lk, *app, v,
                                   std::max<int>(1000, cfg_.migrate_timeout_ms));
            degraded = true;
            source.retired = true;
            if (source.conn) {
                try {
                    source.conn->send(Shutdown{source_id, "node reclaimed"});
                } catch (const std::exception &) {
                }
            }
            std::erase(app->agents, source_id);
            ++app->assignment_revision;
            log::event("degraded_to_pfs", {{"app", log::str(app->app_id)},
                                           {"agent", log::str(source_id)},
                                           {"node", node_id}});
        };

        auto candidates = placement_candidates(lk);
        std::erase_if(candidates, [&](const NodeView &n) {
            return n.node_id == node_id;
        });
        const auto target_node =
            choose_node(candidates, source.staged_estimate, cfg_.policy.mem_headroom);
        if (!target_node) {
            fall_back_to_pfs();
            continue;
        }

        // Launch the replacement agent on the target node first.
        const AgentId target_id = ids_.next();
        AgentInfo target;
        target.id = target_id;
        target.app = source.app;
        target.node_id = *target_node;
        target.ranks = source.ranks;
        agents_[target_id] = target;
        LaunchAgents launch;
        launch.app_id = app->app_id;
        launch.app_name = app->name;
        launch.pfs_root = cfg_.pfs_root;
        std::vector<std::uint32_t> ranks32(source.ranks.begin(), source.ranks.end());
        launch.agents.push_back({target_id, cfg_.policy.per_agent_capacity, ranks32});
        auto mgr = nodes_[*target_node].manager_conn;
        if (!mgr) {
            fall_back_to_pfs();
            continue;
        }
        mgr->send(launch);
        cv_.wait_until(lk, deadline, [&] {
            return stopping_.load() || agents_.at(target_id).ready ||
                   agents_.at(target_id).launch_failed;
        });
        if (!agents_.at(target_id).ready) {
            fall_back_to_pfs();
            continue;
        }

        MigrateOrder order;
        order.app_id = app->app_id;
        order.agent_id = source_id;
        order.target_endpoint = agents_.at(target_id).endpoint;
        order.target_agent_id = target_id;
        order.ranks.assign(source.ranks.begin(), source.ranks.end());
        net::MsgConnPtr via = node.manager_conn;
        if (!via)
            via = source.conn;
        if (!via) {
            fall_back_to_pfs();
            continue;
        }
        migrate_results_.erase(source_id);
        via->send(order);
        log::event("migrate_order", {{"app", log::str(app->app_id)},
                                     {"from", log::str(source_id)},
                                     {"to", log::str(target_id)},
                                     {"node", *target_node}});
        cv_.wait_until(lk, deadline, [&] {
            return stopping_.load() || migrate_results_.count(source_id) > 0;
        });
        auto rit = migrate_results_.find(source_id);
        const bool ok = rit != migrate_results_.end() && rit->second;
        if (!ok) {
            log::event("migrate_failed_fallback", {{"agent", log::str(source_id)}});
            fall_back_to_pfs();
            continue;
        }

        // Swap the assignment: the target agent now serves the ranks.
        auto &blessed = agents_.at(target_id);
        blessed.staged_estimate = source.staged_estimate;
        for (auto &[vid, track] : app->tracks)
            for (auto &[rank, agent_id] : track.rank_agent)
                if (agent_id == source_id)
                    agent_id = target_id;
        std::replace(app->agents.begin(), app->agents.end(), source_id, target_id);
        ++app->assignment_revision;
        source.retired = true;
        if (source.conn) {
            try {
                source.conn->send(Shutdown{source_id, "migrated"});
            } catch (const std::exception &) {
            }
        }
        log::event("migrate_complete", {{"app", log::str(app->app_id)},
                                        {"from", log::str(source_id)},
                                        {"to", log::str(target_id)}});
    }

    if (!keep_owned) {
        node.owned = false;
        if (rm_conn_) {
            try {
                rm_conn_->send(NodeReclaim{{node_id}, 0, 1});
            } catch (const std::exception &) {
            }
        }
        log::event("node_released", {{"node", node_id},
                                     {"degraded", log::str(int(degraded))}});
    } else {
        node.releasing = false;
    }
    cv_.notify_all();
    return !degraded;
}

void Controller::on_migrate_ack(const MigrateAck &msg) {
    std::lock_guard lk(mu_);
    migrate_results_[msg.agent_id] = msg.ok != 0;
    if (!msg.ok)
        log::event("migrate_nack", {{"agent", log::str(msg.agent_id)},
                                    {"why", msg.reason}});
    cv_.notify_all();
}

// ---- adaptation ----

void Controller::on_adapt_notice(const net::MsgConnPtr &conn, const AppAdaptNotice &msg) {
    std::unique_lock lk(mu_);
    rm_conn_ = conn;
    AppState *app = msg.app_id != 0 ? find_app(msg.app_id)
                                    : find_app_by_name(msg.app_name);
    if (!app) {
        lk.unlock();
        conn->send(ErrorMsg{"unknown_app", msg.app_name});
        return;
    }
    if (msg.new_world_size == app->world_size) {
        log::event("adapt_noop", {{"app", log::str(app->app_id)}});
        return;
    }
    const Epoch new_epoch = msg.epoch > app->epoch ? msg.epoch : app->epoch + 1;
    const std::uint32_t old_world = app->world_size;
    const std::uint32_t new_world = msg.new_world_size;
    log::event("adapt_notice", {{"app", log::str(app->app_id)},
                                {"old_world", log::str(old_world)},
                                {"new_world", log::str(new_world)},
                                {"epoch", log::str(new_epoch)}});

    PendingAdapt pending;
    pending.epoch = new_epoch;
    pending.old_world = old_world;
    pending.new_world = new_world;
    pending.old_assignments = wire_assignments(*app);

    // Region descriptors for the new world: N is conserved, counts re-sliced.
    std::vector<WireRegion> new_regions;
    for (const auto &d : descriptors_for(*app, app->epoch)) {
        WireRegion w;
        w.id = d.region_id;
        w.elem_size = d.elem_size;
        w.scheme = static_cast<std::uint8_t>(d.scheme);
        const Layout l{d.total_elems(), new_world, d.scheme};
        for (Rank r = 0; r < new_world; ++r)
            w.counts.push_back(owned_count(l, r));
        new_regions.push_back(std::move(w));
    }

    // Reuse the current agents when the capacity math allows it; launch
    // extras when the new world needs more.
    std::uint64_t total = 0;
    for (const auto &r : new_regions) {
        std::uint64_t n = 0;
        for (auto c : r.counts)
            n += c;
        total += n * r.elem_size;
    }
    const std::uint32_t want = agent_count_for(total, new_world, cfg_.policy);
    std::vector<AgentId> next_agents = app->agents;
    if (want > next_agents.size()) {
        app->launching = true;
        std::vector<AgentId> extra;
        std::string error;
        const bool ok = launch_agents(
            lk, *app, static_cast<std::uint32_t>(want - next_agents.size()),
            new_world, extra, error);
        app->launching = false;
        if (ok)
            next_agents.insert(next_agents.end(), extra.begin(), extra.end());
        else
            log::event("adapt_launch_failed", {{"app", log::str(app->app_id)},
                                               {"why", error}});
    } else if (want < next_agents.size()) {
        app->retiring.insert(app->retiring.end(), next_agents.begin() + want,
                             next_agents.end());
        next_agents.resize(want);
    }

    app->epoch = new_epoch;
    app->world_size = new_world;
    app->world_by_epoch[new_epoch] = new_world;
    app->pending_adapt = pending;
    set_assignments(*app, next_agents, new_world);

    AdaptPrep prep;
    prep.app_id = app->app_id;
    prep.app_name = app->name;
    prep.epoch = new_epoch;
    prep.old_world = old_world;
    prep.new_world = new_world;
    prep.regions = new_regions;
    prep.old_assignments = pending.old_assignments;
    prep.new_assignments = wire_assignments(*app);
    std::set<AgentId> targets(next_agents.begin(), next_agents.end());
    for (const auto &a : pending.old_assignments)
        targets.insert(a.agent_id);
    for (AgentId id : targets) {
        auto it = agents_.find(id);
        if (it != agents_.end() && it->second.conn) {
            try {
                it->second.conn->send(prep);
            } catch (const std::exception &) {
            }
        }
    }
    log::event("adapt_prepared", {{"app", log::str(app->app_id)},
                                  {"epoch", log::str(new_epoch)},
                                  {"agents", log::str(next_agents.size())}});
    cv_.notify_all();
}

// ---- snapshots for tests/tools ----

std::optional<Controller::AppSnapshot> Controller::app_snapshot(AppId id) const {
    std::lock_guard lk(mu_);
    auto it = apps_.find(id);
    if (it == apps_.end())
        return std::nullopt;
    const auto &app = it->second;
    AppSnapshot s;
    s.app_id = app.app_id;
    s.name = app.name;
    s.world_size = app.world_size;
    s.epoch = app.epoch;
    s.assignment_revision = app.assignment_revision;
    for (AgentId aid : app.agents) {
        const auto &a = agents_.at(aid);
        AgentAssignment as;
        as.agent_id = a.id;
        as.node_id = a.node_id;
        as.endpoint = a.endpoint;
        as.ranks = a.ranks;
        s.assignments.push_back(std::move(as));
        if (!a.retired)
            ++s.live_agents;
    }
    s.retiring_agents = app.retiring.size();
    if (!app.complete_order.empty())
        s.latest_complete = app.complete_order.back();
    s.tracked_versions = app.tracks.size();
    return s;
}

std::optional<Controller::AppSnapshot>
Controller::app_snapshot_by_name(const std::string &name) const {
    std::lock_guard lk(mu_);
    for (const auto &[id, app] : apps_)
        if (app.name == name) {
            std::optional<AppSnapshot> out;
            // Reuse the by-id path without re-locking.
            const auto &a = app;
            AppSnapshot s;
            s.app_id = a.app_id;
            s.name = a.name;
            s.world_size = a.world_size;
            s.epoch = a.epoch;
            s.assignment_revision = a.assignment_revision;
            for (AgentId aid : a.agents) {
                const auto &info = agents_.at(aid);
                AgentAssignment as;
                as.agent_id = info.id;
                as.node_id = info.node_id;
                as.endpoint = info.endpoint;
                as.ranks = info.ranks;
                s.assignments.push_back(std::move(as));
                if (!info.retired)
                    ++s.live_agents;
            }
            s.retiring_agents = a.retiring.size();
            if (!a.complete_order.empty())
                s.latest_complete = a.complete_order.back();
            s.tracked_versions = a.tracks.size();
            out = std::move(s);
            return out;
        }
    return std::nullopt;
}

std::vector<std::string> Controller::owned_nodes() const {
    std::lock_guard lk(mu_);
    std::vector<std::string> out;
    for (const auto &[id, n] : nodes_)
        if (n.owned)
            out.push_back(id);
    return out;
}

bool Controller::node_owned(const std::string &node_id) const {
    std::lock_guard lk(mu_);
    auto it = nodes_.find(node_id);
    return it != nodes_.end() && it->second.owned;
}

std::size_t Controller::outstanding_node_requests() const {
    std::lock_guard lk(mu_);
    return outstanding_requests_.size();
}

} // namespace icheck::ctrl
