// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "icheck/core/errors.hpp"

namespace icheck::net {

// Endpoints are "host:port" strings; bind with port 0 for an ephemeral port.
struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    static Endpoint parse(const std::string &s);
    std::string str() const;
};

class TcpStream {
  public:
    TcpStream() = default;
    explicit TcpStream(int fd) : fd_(fd) {}
    ~TcpStream();
    TcpStream(TcpStream &&other) noexcept;
    TcpStream &operator=(TcpStream &&other) noexcept;
    TcpStream(const TcpStream &) = delete;
    TcpStream &operator=(const TcpStream &) = delete;

    static TcpStream connect(const std::string &endpoint);

    void send_all(std::span<const std::byte> data);
    // Returns 0 on orderly EOF.
    std::size_t recv_some(std::span<std::byte> buf);

    void set_recv_timeout_ms(int ms);
    void shutdown() noexcept; // unblocks any reader/writer
    bool valid() const { return fd_ >= 0; }

  private:
    int fd_ = -1;
};

class TcpListener {
  public:
    TcpListener() = default;
    ~TcpListener();
    TcpListener(TcpListener &&other) noexcept;
    TcpListener &operator=(TcpListener &&other) noexcept;
    TcpListener(const TcpListener &) = delete;
    TcpListener &operator=(const TcpListener &) = delete;

    static TcpListener bind(const std::string &endpoint);

    std::string endpoint() const { return endpoint_; }
    // nullopt once the listener has been closed.
    std::optional<TcpStream> accept();
    void close() noexcept;
    bool valid() const { return fd_ >= 0; }

  private:
    int fd_ = -1;
    std::string endpoint_;
};

} // namespace icheck::net
