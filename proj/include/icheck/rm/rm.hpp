// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "icheck/harness/control.hpp"
#include "icheck/harness/scenario.hpp"
#include "icheck/net/conn.hpp"

namespace icheck::rm {

// Who holds a node right now, per the stub's bookkeeping.
enum class NodeOwner { Spare, Icheck };

struct RmLogEntry {
    double at_s = 0;
    std::string what;
};

struct RmConfig {
    std::string controller_endpoint;
    std::string harness_endpoint; // optional control channel
    std::vector<std::string> nodes;
    std::vector<std::string> initial_grant;
    std::vector<harness::RmEventSpec> script;
};

// Scriptable stand-in for the malleable resource manager: drives grants,
// reclaims, migration hints and adapt notices on a timeline, answers node
// requests from spares, and forwards application-side events to the harness.
class RmStub {
  public:
    explicit RmStub(RmConfig cfg); // validates upfront, throws ConfigError
    ~RmStub();

    void start(); // launches the timeline thread
    void stop();
    // Blocks until every scripted event was emitted.
    void wait_done();

    std::vector<RmLogEntry> event_log() const;
    std::optional<NodeOwner> owner(const std::string &node) const;
    std::size_t spares() const;

  private:
    void timeline_loop();
    void reply_loop(); // NODE_REQUEST handling + release confirmations
    void emit(const harness::RmEventSpec &ev);
    void log_entry(const std::string &what);

    RmConfig cfg_;
    net::MsgConnPtr controller_;
    std::unique_ptr<harness::LineConn> harness_;
    std::thread timeline_;
    std::thread replies_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::string, NodeOwner> owners_;
    std::vector<RmLogEntry> log_;
    std::chrono::steady_clock::time_point start_time_;
    std::atomic<bool> stopping_{false};
    bool done_ = false;
    bool started_ = false;
};

} // namespace icheck::rm
