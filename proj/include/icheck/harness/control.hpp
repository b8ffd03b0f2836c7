// SPDX-License-Identifier: Apache-2.0
#pragma once

// Harness-internal control channel (newline-delimited JSON over TCP):
// synthetic ranks poll it every iteration, the RM stub feeds application
// events into it, and the runner reads back per-rank reports.

#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include <json.hpp>

#include "icheck/core/types.hpp"
#include "icheck/net/socket.hpp"

namespace icheck::harness {

// One logical user at a time; movable.
class LineConn {
  public:
    explicit LineConn(net::TcpStream stream) : stream_(std::move(stream)) {}
    LineConn(LineConn &&) = default;
    LineConn &operator=(LineConn &&) = default;

    static LineConn connect(const std::string &endpoint,
                            std::chrono::milliseconds timeout);

    void send(const nlohmann::json &j);
    std::optional<nlohmann::json> recv();
    void shutdown() { stream_.shutdown(); }

  private:
    net::TcpStream stream_;
    std::string buf_;
};

struct RankReport {
    Rank rank = 0;
    std::uint32_t attempt = 0;
    std::string kind; // restored | adapted | left | done | fail
    std::uint64_t iter = 0;
    std::string detail;
};

// Runner-side state machine behind the poll protocol.
class ControlServer {
  public:
    ControlServer();
    ~ControlServer();
    void stop();

    const std::string &endpoint() const { return endpoint_; }

    // --- runner-side knobs and observations ---
    void set_adapt(std::uint32_t new_world);
    void set_throttle(std::uint64_t bps);
    void arm_fault(Rank rank, Version version, double fraction);
    bool kill_requested();
    void clear_kill();
    std::vector<RankReport> reports() const;
    std::uint32_t adapt_target() const;
    // Count of ranks that acknowledged the current adapt.
    std::size_t adapt_acks() const;
    bool wait_for_report(const std::string &kind, std::size_t count,
                         int timeout_ms);

    // --- rm-stub side entry ---
    void rm_event(const nlohmann::json &ev);

  private:
    void serve(net::TcpStream stream);

    net::TcpListener listener_;
    std::string endpoint_;
    std::thread accept_thread_;
    std::vector<std::thread> conn_threads_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    bool stopping_ = false;

    std::uint32_t adapt_world_ = 0;      // 0 = none pending
    std::uint64_t adapt_generation_ = 0; // bumps per adapt event
    std::map<Rank, std::uint64_t> adapt_acked_;
    std::optional<std::uint64_t> throttle_;
    std::map<Rank, std::uint64_t> throttle_acked_;
    std::uint64_t throttle_generation_ = 0;
    struct FaultDirective {
        Version version;
        double fraction;
        bool delivered = false;
    };
    std::map<Rank, FaultDirective> faults_;
    bool kill_requested_ = false;
    std::vector<RankReport> reports_;
};

// Rank-side client.
class ControlClient {
  public:
    ControlClient(const std::string &endpoint, Rank rank, std::uint32_t attempt);

    struct Directives {
        std::optional<std::uint32_t> adapt_world;
        std::optional<std::uint64_t> throttle;
        std::optional<std::pair<Version, double>> fault;
    };
    Directives poll(std::uint64_t iter);
    void report(const std::string &kind, std::uint64_t iter,
                const std::string &detail = "");

  private:
    LineConn conn_;
    Rank rank_;
    std::uint32_t attempt_;
};

} // namespace icheck::harness
