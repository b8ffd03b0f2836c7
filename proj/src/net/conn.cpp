// SPDX-License-Identifier: Apache-2.0
#include "icheck/net/conn.hpp"

#include <thread>

namespace icheck::net {

std::shared_ptr<MsgConn> MsgConn::dial(const std::string &endpoint,
                                       std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        try {
            return std::make_shared<MsgConn>(TcpStream::connect(endpoint));
        } catch (const NetError &) {
            if (std::chrono::steady_clock::now() >= deadline)
                throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    }
}

void MsgConn::send(const proto::Message &msg) {
    std::lock_guard lk(io_mu_);
    send_unlocked(msg);
}

void MsgConn::send_unlocked(const proto::Message &msg) {
    stream_.send_all(proto::encode(msg));
}

std::optional<proto::Message> MsgConn::recv() {
    std::lock_guard lk(recv_mu_);
    while (true) {
        if (auto m = decoder_.poll())
            return m;
        std::byte buf[256 * 1024];
        const std::size_t n = stream_.recv_some(buf);
        if (n == 0)
            return std::nullopt;
        decoder_.feed(std::span<const std::byte>(buf, n));
    }
}

proto::Message MsgConn::request(const proto::Message &msg) {
    std::unique_lock lk(io_mu_);
    send_unlocked(msg);
    auto reply = recv();
    if (!reply)
        throw NetError("connection closed while awaiting reply");
    return *reply;
}

} // namespace icheck::net
