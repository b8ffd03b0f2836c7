// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <thread>

#include "icheck/core/types.hpp"
#include "icheck/net/conn.hpp"
#include "icheck/protocol/messages.hpp"

namespace icheck::client {

class IcheckError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Send-side rate limiter standing in for a slower interconnect.
class Pacer {
  public:
    void set_rate(std::uint64_t bytes_per_sec) { bps_.store(bytes_per_sec); }
    std::uint64_t rate() const { return bps_.load(); }
    void pace(std::size_t bytes);

  private:
    std::atomic<std::uint64_t> bps_{0};
    std::mutex mu_;
    std::chrono::steady_clock::time_point next_{};
};

struct CommitStats {
    Version version = 0;
    std::uint64_t t_copy_us = 0;
    std::uint64_t t_blocked_us = 0;
    std::uint64_t t_transfer_us = 0;
    bool sync_mode = false;
};

// Test hook: terminate the process mid-transfer of one version.
struct FaultSpec {
    Version version = 0;
    double after_fraction = 0.5; // of the version's payload bytes
};

struct SessionConfig {
    std::string controller_endpoint;
    std::string name;
    Rank rank = 0;
    std::uint32_t world_size = 1;
    ProcessType process_type = ProcessType::Initial;
    bool sync_mode = false;
    std::uint64_t throttle_bytes_per_sec = 0;
    int integrity_retries = 1;
    int connect_timeout_ms = 10000;
    int drain_timeout_ms = 60000;
    std::optional<FaultSpec> fault;
};

// One application rank's connection to the checkpoint service. Commits are
// asynchronous: each region is copied into a staging buffer and shipped by a
// background worker while the caller keeps computing.
class Session {
  public:
    ~Session();
    Session(const Session &) = delete;
    Session &operator=(const Session &) = delete;

    static std::unique_ptr<Session> init(const SessionConfig &cfg);

    void add_adapt(const std::string &region_id, void *buffer,
                   std::uint64_t count, std::uint32_t elem_size,
                   DistributionScheme scheme);

    // Returns the version number assigned to this commit.
    Version commit();

    // True when a checkpoint from the current epoch was restored into the
    // registered buffers.
    bool restart();

    void redistribute(const std::string &region_id, void *buffer,
                      std::uint64_t new_count, DistributionScheme scheme);

    // True when the agent set changed (connections already moved over).
    bool probe_agents();

    std::vector<CommitStats> finalize();

    // --- introspection & knobs ---
    AppId app_id() const { return app_id_; }
    Epoch epoch() const { return epoch_; }
    std::uint32_t world_size() const { return world_; }
    Rank rank() const { return cfg_.rank; }
    std::vector<CommitStats> stats() const;
    void set_throttle(std::uint64_t bytes_per_sec) { pacer_.set_rate(bytes_per_sec); }
    void set_fault(const FaultSpec &f);
    static void write_stats_csv(std::ostream &out,
                                const std::vector<CommitStats> &stats);

  private:
    Session(SessionConfig cfg);

    struct Region {
        std::string id;
        void *user = nullptr;
        std::uint64_t count = 0; // local elements
        std::uint32_t elem_size = 0;
        DistributionScheme scheme = DistributionScheme::Block;
        std::uint64_t total_n = 0; // global, learned from the controller
        proto::Blob staging;
    };

    struct Job {
        Version version = 0;
        std::uint64_t t_copy_us = 0;
        std::chrono::steady_clock::time_point enqueue_time;
    };

    struct AdaptContext {
        Epoch new_epoch = 0;
        std::uint32_t old_world = 0;
        std::uint32_t new_world = 0;
        std::uint64_t revision = 0;
        std::vector<proto::WireAssignment> assignments;
        std::vector<proto::WireRegion> regions;
        std::set<std::string> done_regions;
    };

    void worker_loop();
    bool send_version(const Job &job, std::string &error); // one attempt
    void drain(const char *where);
    void throw_deferred();
    void connect_agent(const std::vector<proto::WireAssignment> &assignments,
                       Epoch epoch);
    void register_regions(Epoch epoch);
    proto::Blob fetch_restore(net::MsgConn &conn, Version version, Epoch epoch,
                              const std::string &region_id,
                              std::uint64_t expected_len);
    std::optional<proto::Blob> pfs_restore(const std::string &pfs_root,
                                           Version version, Epoch epoch,
                                           const std::string &region_id);
    void push_snapshot(Region &region, Epoch new_epoch);
    proto::ProbeAgentsAck probe_controller(bool evaluate = false);
    void apply_fault_maybe(Version version, std::size_t &sent,
                           std::size_t total, std::span<const std::byte> chunk,
                           net::MsgConn &conn, const proto::CommitData &msg);

    SessionConfig cfg_;
    AppId app_id_ = 0;
    Epoch epoch_ = 0;
    std::uint32_t world_ = 1;
    std::uint32_t prev_world_ = 0; // for joining processes
    std::uint64_t revision_ = 0;
    Version next_version_ = 1;
    std::string pfs_root_;
    bool joining_pending_ = false;

    std::shared_ptr<net::MsgConn> controller_;
    std::shared_ptr<net::MsgConn> agent_;
    std::map<std::string, Region> regions_;
    std::map<std::string, proto::WireRegion> region_meta_; // controller's view
    std::optional<AdaptContext> adapt_;

    Pacer pacer_;
    std::thread worker_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::optional<Job> pending_;
    bool inflight_ = false;
    bool stopping_ = false;
    std::optional<std::string> deferred_error_;
    std::vector<CommitStats> stats_;
    std::mutex fault_mu_;
    std::optional<FaultSpec> fault_;
    bool finalized_ = false;
};

} // namespace icheck::client
