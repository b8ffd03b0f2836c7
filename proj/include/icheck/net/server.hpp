// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <list>
#include <memory>
#include <thread>

#include "icheck/net/conn.hpp"

namespace icheck::net {

// Accept loop with one thread per connection. `stop()` unblocks everything
// and joins; safe to call more than once.
class MsgServer {
  public:
    // Runs for the lifetime of one connection; return to close it. Handlers
    // may retain the pointer (e.g. to push orders later); the object stays
    // valid after the socket closes.
    using ConnHandler = std::function<void(MsgConnPtr)>;

    MsgServer(const std::string &listen_endpoint, ConnHandler handler);
    ~MsgServer();

    const std::string &endpoint() const { return endpoint_; }
    void stop();

  private:
    struct ConnSlot {
        std::shared_ptr<MsgConn> conn;
        std::thread thread;
        std::atomic<bool> done{false};
    };

    void accept_loop();
    void reap_finished();

    TcpListener listener_;
    std::string endpoint_;
    ConnHandler handler_;
    std::thread accept_thread_;
    std::mutex mu_;
    std::list<std::unique_ptr<ConnSlot>> conns_;
    bool stopped_ = false;
};

} // namespace icheck::net
