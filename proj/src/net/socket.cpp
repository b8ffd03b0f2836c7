// SPDX-License-Identifier: Apache-2.0
#include "icheck/net/socket.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

namespace icheck::net {

namespace {

sockaddr_in to_sockaddr(const Endpoint &ep) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    if (inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1)
        throw NetError("invalid address: " + ep.host);
    return addr;
}

[[noreturn]] void raise_errno(const std::string &what) {
    throw NetError(what + ": " + std::strerror(errno));
}

} // namespace

Endpoint Endpoint::parse(const std::string &s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos)
        throw NetError("endpoint must be host:port, got '" + s + "'");
    Endpoint ep;
    ep.host = s.substr(0, colon);
    const auto port = std::stoul(s.substr(colon + 1));
    if (port > 0xFFFF)
        throw NetError("port out of range in '" + s + "'");
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

std::string Endpoint::str() const { return host + ":" + std::to_string(port); }

TcpStream::~TcpStream() {
    if (fd_ >= 0)
        ::close(fd_);
}

TcpStream::TcpStream(TcpStream &&other) noexcept : fd_(other.fd_) {
    other.fd_ = -1;
}

TcpStream &TcpStream::operator=(TcpStream &&other) noexcept {
    if (this != &other) {
        if (fd_ >= 0)
            ::close(fd_);
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

TcpStream TcpStream::connect(const std::string &endpoint) {
    const auto addr = to_sockaddr(Endpoint::parse(endpoint));
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0)
        raise_errno("socket");
    if (::connect(fd, reinterpret_cast<const sockaddr *>(&addr), sizeof addr) != 0) {
        const int err = errno;
        ::close(fd);
        throw NetError("connect " + endpoint + ": " + std::strerror(err));
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return TcpStream(fd);
}

void TcpStream::send_all(std::span<const std::byte> data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent,
                                 MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            raise_errno("send");
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::size_t TcpStream::recv_some(std::span<std::byte> buf) {
    while (true) {
        const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
        if (n >= 0)
            return static_cast<std::size_t>(n);
        if (errno == EINTR)
            continue;
        if (errno == ECONNRESET)
            return 0; // peer died; treat like an orderly close
        raise_errno("recv");
    }
}

void TcpStream::set_recv_timeout_ms(int ms) {
    timeval tv{};
    tv.tv_sec = ms / 1000;
    tv.tv_usec = (ms % 1000) * 1000;
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

void TcpStream::shutdown() noexcept {
    if (fd_ >= 0)
        ::shutdown(fd_, SHUT_RDWR);
}

TcpListener::~TcpListener() { close(); }

TcpListener::TcpListener(TcpListener &&other) noexcept
    : fd_(other.fd_), endpoint_(std::move(other.endpoint_)) {
    other.fd_ = -1;
}

TcpListener &TcpListener::operator=(TcpListener &&other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        endpoint_ = std::move(other.endpoint_);
        other.fd_ = -1;
    }
    return *this;
}

TcpListener TcpListener::bind(const std::string &endpoint) {
    auto addr = to_sockaddr(Endpoint::parse(endpoint));
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0)
        raise_errno("socket");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, reinterpret_cast<const sockaddr *>(&addr), sizeof addr) != 0) {
        const int err = errno;
        ::close(fd);
        throw NetError("bind " + endpoint + ": " + std::strerror(err));
    }
    if (::listen(fd, 64) != 0) {
        const int err = errno;
        ::close(fd);
        throw NetError("listen: " + std::string(std::strerror(err)));
    }
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd, reinterpret_cast<sockaddr *>(&bound), &len);
    TcpListener l;
    l.fd_ = fd;
    char host[INET_ADDRSTRLEN] = {};
    inet_ntop(AF_INET, &bound.sin_addr, host, sizeof host);
    l.endpoint_ = std::string(host) + ":" + std::to_string(ntohs(bound.sin_port));
    return l;
}

std::optional<TcpStream> TcpListener::accept() {
    while (true) {
        const int fd = ::accept(fd_, nullptr, nullptr);
        if (fd >= 0) {
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return TcpStream(fd);
        }
        if (errno == EINTR)
            continue;
        return std::nullopt; // closed or fatal; callers treat both as stop
    }
}

void TcpListener::close() noexcept {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

} // namespace icheck::net
