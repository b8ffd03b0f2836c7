// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <thread>

#include "icheck/controller/policy.hpp"
#include "icheck/core/ids.hpp"
#include "icheck/core/types.hpp"
#include "icheck/net/server.hpp"
#include "icheck/protocol/messages.hpp"

namespace icheck::ctrl {

struct ControllerConfig {
    std::string listen = "127.0.0.1:0";
    std::string pfs_root;
    PolicyConfig policy;
    int tick_ms = 200;          // flush scheduler cadence
    int launch_timeout_ms = 10000;
    int register_wait_ms = 10000; // waiting for owned nodes / joining attach
    int migrate_timeout_ms = 15000;

    static ControllerConfig from_json_text(const std::string &text);
};

// Global view: application registry, placement, commit tracking, PFS flush
// orchestration, and the resource-manager interactions.
class Controller {
  public:
    explicit Controller(ControllerConfig cfg);
    ~Controller();

    void stop();
    const std::string &endpoint() const { return server_->endpoint(); }

    // Introspection for tests and tools.
    struct AppSnapshot {
        AppId app_id = 0;
        std::string name;
        std::uint32_t world_size = 0;
        Epoch epoch = 0;
        std::uint64_t assignment_revision = 0;
        std::vector<AgentAssignment> assignments;
        std::optional<Version> latest_complete;
        std::size_t tracked_versions = 0;
        std::size_t live_agents = 0;
        std::size_t retiring_agents = 0;
    };
    std::optional<AppSnapshot> app_snapshot(AppId app) const;
    std::optional<AppSnapshot> app_snapshot_by_name(const std::string &name) const;
    std::vector<std::string> owned_nodes() const;
    bool node_owned(const std::string &node_id) const;
    std::size_t outstanding_node_requests() const;

  private:
    struct AgentInfo {
        AgentId id = 0;
        AppId app = 0;
        std::string node_id;
        std::string endpoint;
        std::vector<Rank> ranks;
        bool ready = false;
        bool launch_failed = false;
        std::string launch_error;
        bool retired = false;
        net::MsgConnPtr conn; // agent -> controller connection
        std::uint64_t staged_estimate = 0;
    };

    struct NodeState {
        NodeStats stats;
        bool owned = false;
        bool releasing = false;
        bool manager_connected = false;
        net::MsgConnPtr manager_conn;
        bool flush_in_flight = false;
    };

    struct FlushStep {
        AgentId agent = 0;
        std::vector<Rank> ranks;
        bool ordered = false;
        bool done = false;
    };

    struct VersionTrack {
        Version version = 0;
        Epoch epoch = 0;
        std::uint32_t world = 0;
        std::set<Rank> committed;
        bool complete = false;
        std::uint64_t complete_ms = 0;
        std::uint64_t total_bytes = 0;
        std::uint64_t max_transfer_us = 0;
        std::map<std::pair<Rank, std::string>, std::pair<std::uint64_t, std::uint32_t>>
            payloads;
        std::map<Rank, AgentId> rank_agent;
        std::vector<Rank> pfs_ranks;
        enum class Flush { None, InFlight, Done } flush = Flush::None;
        std::vector<FlushStep> steps; // built lazily when flushing starts
        bool manifest_written = false;
    };

    struct RegionAgg {
        proto::WireRegionDecl decl; // elem_size/scheme template
        std::vector<std::uint64_t> counts;
        std::vector<bool> present;
        bool invalid = false;
        std::string error;
    };

    struct PendingAdapt {
        Epoch epoch = 0;
        std::uint32_t old_world = 0;
        std::uint32_t new_world = 0;
        std::vector<proto::WireAssignment> old_assignments;
    };

    struct AppState {
        AppId app_id = 0;
        std::string name;
        std::uint32_t world_size = 1;
        Epoch epoch = 0;
        std::uint64_t assignment_revision = 0;
        std::vector<AgentId> agents;   // current serving set
        std::vector<AgentId> retiring; // previous set, kept until new COMPLETE
        bool launching = false;
        bool deregistered = false;
        Version max_seen_version = 0;
        std::map<Version, VersionTrack> tracks;
        std::vector<Version> complete_order;
        std::map<Epoch, std::uint32_t> world_by_epoch;
        std::map<Epoch, std::map<std::string, RegionAgg>> regions;
        std::optional<PendingAdapt> pending_adapt;
    };

    // --- connection dispatch ---
    void serve_conn(const net::MsgConnPtr &conn);
    void on_register(net::MsgConn &conn, const proto::Register &msg);
    void on_probe(net::MsgConn &conn, const proto::ProbeAgents &msg);
    void on_restart_query(net::MsgConn &conn, const proto::RestartQuery &msg);
    void on_deregister(net::MsgConn &conn, const proto::Deregister &msg);
    void on_stats(const net::MsgConnPtr &conn, const proto::StatsReport &msg);
    void on_agent_ready(const net::MsgConnPtr &conn, const proto::AgentReady &msg,
                        bool from_agent);
    void on_commit_report(const proto::CommitReport &msg);
    void on_region_decl(const proto::RegionDecl &msg);
    void on_flush_ack(const proto::FlushAck &msg);
    void on_migrate_ack(const proto::MigrateAck &msg);
    void on_node_grant(const net::MsgConnPtr &conn, const proto::NodeGrant &msg);
    void on_node_reclaim(const net::MsgConnPtr &conn, const proto::NodeReclaim &msg);
    void on_migrate_hint(const net::MsgConnPtr &conn, const proto::MigrateHint &msg);
    void on_adapt_notice(const net::MsgConnPtr &conn, const proto::AppAdaptNotice &msg);
    void on_agent_error(const proto::ErrorMsg &msg);

    // --- internals (mu_ held unless noted) ---
    AppState *find_app(AppId id);
    AppState *find_app_by_name(const std::string &name);
    std::vector<NodeView> placement_candidates(std::unique_lock<std::mutex> &lk);
    std::optional<std::string>
    place_or_request(std::unique_lock<std::mutex> &lk, std::uint64_t share);
    bool launch_agents(std::unique_lock<std::mutex> &lk, AppState &app,
                       std::uint32_t count, std::uint32_t world,
                       std::vector<AgentId> &out, std::string &error);
    void set_assignments(AppState &app, const std::vector<AgentId> &agents,
                         std::uint32_t world);
    std::vector<proto::WireAssignment> wire_assignments(const AppState &app) const;
    std::vector<proto::WireRegion> wire_regions(const AppState &app, Epoch epoch);
    std::vector<RegionDescriptor> descriptors_for(const AppState &app, Epoch epoch);
    std::uint64_t total_region_bytes(const AppState &app, Epoch epoch);
    std::optional<Version> latest_complete(const AppState &app) const;
    double observed_rate(const AppState &app) const;
    void on_version_complete(std::unique_lock<std::mutex> &lk, AppState &app,
                             VersionTrack &track);
    void maybe_retire_old_agents(AppState &app, const VersionTrack &track);
    void send_gc(AppState &app, Epoch epoch, Version min_keep, Version watermark);
    void advance_flushes(std::unique_lock<std::mutex> &lk);
    void build_flush_steps(AppState &app, VersionTrack &track);
    bool advance_one_flush(AppState &app, VersionTrack &track);
    bool flush_version_sync(std::unique_lock<std::mutex> &lk, AppState &app,
                            Version version, int timeout_ms);
    bool migrate_agents_off(std::unique_lock<std::mutex> &lk,
                            const std::string &node_id, bool keep_owned,
                            std::uint64_t deadline_ms, std::string &error);
    void request_nodes(std::uint32_t count, const std::string &reason);
    void tick_loop();

    proto::Blob manifest_for(AppState &app, VersionTrack &track);

    ControllerConfig cfg_;
    IdGenerator ids_;
    std::unique_ptr<net::MsgServer> server_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<AppId, AppState> apps_;
    std::map<AgentId, AgentInfo> agents_;
    std::map<std::string, NodeState> nodes_;
    net::MsgConnPtr rm_conn_;
    std::set<std::string> outstanding_requests_;
    std::map<AgentId, bool> migrate_results_;
    std::atomic<bool> stopping_{false};
    std::thread tick_thread_;
};

} // namespace icheck::ctrl
