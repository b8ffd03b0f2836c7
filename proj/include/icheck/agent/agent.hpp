// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <thread>

#include "icheck/agent/pfs.hpp"
#include "icheck/agent/staging.hpp"
#include "icheck/layout/layout.hpp"
#include "icheck/net/server.hpp"
#include "icheck/protocol/messages.hpp"

namespace icheck::agent {

struct AgentConfig {
    AgentId agent_id = 0;
    AppId app_id = 0;
    std::string app_name;
    std::string node_id;
    std::string listen = "127.0.0.1:0";
    std::string controller_endpoint; // optional
    std::string manager_endpoint;    // optional
    std::uint64_t capacity_bytes = 256ull << 20;
    std::string pfs_root;
    std::vector<Rank> ranks;
    int stats_period_ms = 200;
    int redist_wait_ms = 10000;
};

// Checkpoint data plane: ingests commits and adapt snapshots into the
// staging store, serves restores and redistribution, flushes to the PFS
// tier, and migrates entries to peer agents.
class AgentService {
  public:
    explicit AgentService(AgentConfig cfg);
    ~AgentService();

    void stop();
    const std::string &endpoint() const { return server_->endpoint(); }
    const AgentConfig &config() const { return cfg_; }

    std::uint64_t staged_bytes() const { return store_.bytes_staged(); }
    const StagingStore &store() const { return store_; }

    // Fault injection for crash-consistency tests.
    void set_pfs_crash_point(pfs::CrashPoint p) { crash_point_ = p; }

    std::uint64_t plans_computed_local() const { return plans_local_.load(); }
    std::uint64_t plans_prepushed() const { return plans_prepushed_.load(); }

    // Newest version the controller reported COMPLETE; direct restore
    // requests above it are refused.
    void set_complete_watermark(Version v) { complete_watermark_.store(v); }

    // Exposed for direct-drive tests; normally reached via orders.
    proto::FlushAck do_flush(const proto::FlushOrder &order);
    proto::MigrateAck do_migrate(const proto::MigrateOrder &order);
    void apply_gc(const proto::GcOrder &gc) { handle_gc(gc); }
    void apply_adapt_prep(const proto::AdaptPrep &prep) { handle_adapt_prep(prep); }

  private:
    struct Ingest {
        proto::PayloadKind kind = proto::PayloadKind::Checkpoint;
        Epoch epoch = 0;
        Version version = 0;
        Rank rank = 0;
        std::vector<proto::WireRegionPayload> regions;
        std::map<std::string, proto::Blob> buffers;
        std::chrono::steady_clock::time_point t0;
        proto::Status fail = proto::Status::Ok;
        std::string fail_reason;
    };

    struct AdaptInfo {
        std::uint32_t old_world = 1;
        std::uint32_t new_world = 1;
        std::vector<proto::WireRegion> regions; // counts for the new world
        std::vector<proto::WireAssignment> old_assignments;
        std::vector<proto::WireAssignment> new_assignments;
    };

    void serve_conn(const net::MsgConnPtr &conn);
    void control_loop(net::MsgConn &conn); // controller or manager orders

    void begin_ingest(Ingest &ing, proto::PayloadKind kind, Epoch epoch,
                      Version version, Rank rank,
                      std::vector<proto::WireRegionPayload> regions,
                      bool validate_registered);
    void ingest_data(Ingest &ing, const proto::CommitData &data);
    proto::CommitAck finish_ingest(Ingest &ing);

    void handle_mem_register(net::MsgConn &conn, const proto::MemRegister &msg);
    void serve_restore(net::MsgConn &conn, const proto::RestoreReq &req);
    void serve_redistribution(net::MsgConn &conn, const proto::RedistReq &req);
    void serve_peer_fetch(net::MsgConn &conn, const proto::PeerFetch &req);

    void handle_adapt_prep(const proto::AdaptPrep &prep);
    void handle_gc(const proto::GcOrder &gc);

    std::optional<RedistributionPlan> plan_for(Epoch epoch, const std::string &region,
                                               const Layout &oldl, const Layout &newl);
    std::optional<proto::Blob> snapshot_span(Epoch epoch, Rank src_rank,
                                             const std::string &region,
                                             std::uint64_t offset, std::uint64_t len,
                                             const std::optional<AdaptInfo> &info);

    void send_to_controller(const proto::Message &msg);
    void stats_loop();

    AgentConfig cfg_;
    StagingStore store_;
    std::unique_ptr<net::MsgServer> server_;

    std::mutex mu_;
    std::map<std::pair<Rank, std::string>, proto::WireRegionDecl> registered_;
    std::map<Epoch, AdaptInfo> adapt_info_;
    std::map<std::pair<Epoch, std::string>, RedistributionPlan> plans_;

    std::shared_ptr<net::MsgConn> controller_conn_;
    std::shared_ptr<net::MsgConn> manager_conn_;
    std::thread controller_reader_;
    std::thread manager_reader_;
    std::thread stats_thread_;

    std::atomic<bool> stopping_{false};
    std::atomic<Version> complete_watermark_{0};
    std::atomic<std::uint64_t> moved_bytes_{0};
    std::atomic<std::uint64_t> plans_local_{0};
    std::atomic<std::uint64_t> plans_prepushed_{0};
    std::atomic<pfs::CrashPoint> crash_point_{pfs::CrashPoint::None};
    std::condition_variable stop_cv_;
    std::mutex stop_mu_;
};

} // namespace icheck::agent
