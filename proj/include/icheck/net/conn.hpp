// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>

#include "icheck/net/socket.hpp"
#include "icheck/protocol/codec.hpp"

namespace icheck::net {

// Message-oriented connection: framed sends are atomic, receives decode a
// stream. One logical reader at a time; senders may be concurrent.
class MsgConn {
  public:
    explicit MsgConn(TcpStream stream) : stream_(std::move(stream)) {}

    // Retries connect until the endpoint accepts or the deadline passes.
    static std::shared_ptr<MsgConn> dial(const std::string &endpoint,
                                         std::chrono::milliseconds timeout);

    void send(const proto::Message &msg);

    // Blocks until one message is available; nullopt on orderly close.
    std::optional<proto::Message> recv();

    // send + recv under one lock; for strict request/reply exchanges.
    proto::Message request(const proto::Message &msg);

    void set_recv_timeout_ms(int ms) { stream_.set_recv_timeout_ms(ms); }
    void shutdown() noexcept { stream_.shutdown(); }

    // Serializes multi-message exchanges (e.g. a commit stream) against
    // other users of this connection.
    std::unique_lock<std::mutex> exclusive() {
        return std::unique_lock(io_mu_);
    }

    void send_unlocked(const proto::Message &msg);

  private:
    TcpStream stream_;
    proto::Decoder decoder_;
    std::mutex io_mu_;
    std::mutex recv_mu_;
};

using MsgConnPtr = std::shared_ptr<MsgConn>;

} // namespace icheck::net
