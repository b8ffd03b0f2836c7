// SPDX-License-Identifier: Apache-2.0
#pragma once

// Message-capturing server: stands in for a controller (or any peer) so a
// single service can be driven and observed in isolation.

#include <deque>

#include "icheck/net/server.hpp"

namespace icheck::testing {

class RawServer {
  public:
    RawServer()
        : server_("127.0.0.1:0", [this](const net::MsgConnPtr &conn) {
              {
                  std::lock_guard lk(mu_);
                  conns_.push_back(conn);
              }
              cv_.notify_all();
              while (auto msg = conn->recv()) {
                  std::lock_guard lk(mu_);
                  inbox_.push_back(std::move(*msg));
                  cv_.notify_all();
              }
          }) {}

    ~RawServer() { server_.stop(); }

    const std::string &endpoint() const { return server_.endpoint(); }

    std::optional<proto::Message> next(int timeout_ms = 5000) {
        std::unique_lock lk(mu_);
        cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms),
                     [this] { return !inbox_.empty(); });
        if (inbox_.empty())
            return std::nullopt;
        auto m = std::move(inbox_.front());
        inbox_.pop_front();
        return m;
    }

    template <class T> std::optional<T> next_of(int timeout_ms = 5000) {
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::milliseconds(timeout_ms);
        while (std::chrono::steady_clock::now() < deadline) {
            auto m = next(200);
            if (!m)
                continue;
            if (auto *t = std::get_if<T>(&*m))
                return *t;
        }
        return std::nullopt;
    }

    // Last connection that reached the server (e.g. the service under test).
    net::MsgConnPtr conn(int timeout_ms = 5000) {
        std::unique_lock lk(mu_);
        cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms),
                     [this] { return !conns_.empty(); });
        return conns_.empty() ? nullptr : conns_.back();
    }

  private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<proto::Message> inbox_;
    std::vector<net::MsgConnPtr> conns_;
    net::MsgServer server_;
};

} // namespace icheck::testing
