// SPDX-License-Identifier: Apache-2.0
#include "icheck/harness/control.hpp"

#include <thread>

#include "icheck/core/log.hpp"

namespace icheck::harness {

using nlohmann::json;

LineConn LineConn::connect(const std::string &endpoint,
                           std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        try {
            return LineConn(net::TcpStream::connect(endpoint));
        } catch (const NetError &) {
            if (std::chrono::steady_clock::now() >= deadline)
                throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    }
}

void LineConn::send(const json &j) {
    std::string line = j.dump();
    line += '\n';
    stream_.send_all(std::span<const std::byte>(
        reinterpret_cast<const std::byte *>(line.data()), line.size()));
}

std::optional<json> LineConn::recv() {
    while (true) {
        const auto nl = buf_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buf_.substr(0, nl);
            buf_.erase(0, nl + 1);
            if (line.empty())
                continue;
            return json::parse(line);
        }
        std::byte chunk[4096];
        const auto n = stream_.recv_some(chunk);
        if (n == 0)
            return std::nullopt;
        buf_.append(reinterpret_cast<const char *>(chunk), n);
    }
}

ControlServer::ControlServer()
    : listener_(net::TcpListener::bind("127.0.0.1:0")),
      endpoint_(listener_.endpoint()) {
    accept_thread_ = std::thread([this] {
        while (auto stream = listener_.accept()) {
            std::lock_guard lk(mu_);
            if (stopping_)
                return;
            conn_threads_.emplace_back(
                [this, s = std::move(*stream)]() mutable { serve(std::move(s)); });
        }
    });
}

ControlServer::~ControlServer() { stop(); }

void ControlServer::stop() {
    {
        std::lock_guard lk(mu_);
        if (stopping_)
            return;
        stopping_ = true;
    }
    listener_.close();
    cv_.notify_all();
    if (accept_thread_.joinable())
        accept_thread_.join();
    std::vector<std::thread> threads;
    {
        std::lock_guard lk(mu_);
        threads.swap(conn_threads_);
    }
    for (auto &t : threads)
        if (t.joinable())
            t.join();
}

void ControlServer::serve(net::TcpStream stream) try {
    LineConn conn(std::move(stream));
    Rank rank = 0;
    while (auto msg = conn.recv()) {
        const std::string type = msg->value("type", "");
        if (type == "hello") {
            rank = msg->value("rank", 0u);
        } else if (type == "poll") {
            rank = msg->value("rank", rank);
            json reply;
            reply["type"] = "ctl";
            std::lock_guard lk(mu_);
            if (adapt_world_ != 0 && adapt_acked_[rank] < adapt_generation_) {
                reply["adapt"] = adapt_world_;
                adapt_acked_[rank] = adapt_generation_;
            }
            if (throttle_ && throttle_acked_[rank] < throttle_generation_) {
                reply["throttle"] = *throttle_;
                throttle_acked_[rank] = throttle_generation_;
            }
            auto fit = faults_.find(rank);
            if (fit != faults_.end() && !fit->second.delivered) {
                reply["fault"] = {{"version", fit->second.version},
                                  {"fraction", fit->second.fraction}};
                fit->second.delivered = true;
            }
            conn.send(reply);
        } else if (type == "report") {
            RankReport r;
            r.rank = msg->value("rank", 0u);
            r.attempt = msg->value("attempt", 0u);
            r.kind = msg->value("kind", "");
            r.iter = msg->value("iter", 0ull);
            r.detail = msg->value("detail", "");
            std::lock_guard lk(mu_);
            reports_.push_back(std::move(r));
            cv_.notify_all();
        } else if (type == "rm_event") {
            rm_event(*msg);
        }
    }
} catch (const std::exception &e) {
    log::event("control_conn_error", {{"what", e.what()}});
}

void ControlServer::rm_event(const json &ev) {
    const std::string action = ev.value("action", "");
    std::lock_guard lk(mu_);
    if (action == "adapt") {
        adapt_world_ = ev.value("new_world_size", 0u);
        ++adapt_generation_;
    } else if (action == "throttle") {
        throttle_ = ev.value("throttle_bytes_per_sec", 0ull);
        ++throttle_generation_;
    } else if (action == "kill_app") {
        kill_requested_ = true;
    }
    cv_.notify_all();
    log::event("harness_rm_event", {{"action", action}});
}

void ControlServer::set_adapt(std::uint32_t new_world) {
    std::lock_guard lk(mu_);
    adapt_world_ = new_world;
    ++adapt_generation_;
}

void ControlServer::set_throttle(std::uint64_t bps) {
    std::lock_guard lk(mu_);
    throttle_ = bps;
    ++throttle_generation_;
}

void ControlServer::arm_fault(Rank rank, Version version, double fraction) {
    std::lock_guard lk(mu_);
    faults_[rank] = {version, fraction, false};
}

bool ControlServer::kill_requested() {
    std::lock_guard lk(mu_);
    return kill_requested_;
}

void ControlServer::clear_kill() {
    std::lock_guard lk(mu_);
    kill_requested_ = false;
}

std::vector<RankReport> ControlServer::reports() const {
    std::lock_guard lk(mu_);
    return reports_;
}

std::uint32_t ControlServer::adapt_target() const {
    std::lock_guard lk(mu_);
    return adapt_world_;
}

std::size_t ControlServer::adapt_acks() const {
    std::lock_guard lk(mu_);
    std::size_t n = 0;
    for (const auto &[rank, gen] : adapt_acked_)
        if (gen == adapt_generation_)
            ++n;
    return n;
}

bool ControlServer::wait_for_report(const std::string &kind, std::size_t count,
                                    int timeout_ms) {
    std::unique_lock lk(mu_);
    return cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms), [&] {
        std::size_t n = 0;
        for (const auto &r : reports_)
            if (r.kind == kind)
                ++n;
        return n >= count || stopping_;
    });
}

ControlClient::ControlClient(const std::string &endpoint, Rank rank,
                             std::uint32_t attempt)
    : conn_(LineConn::connect(endpoint, std::chrono::seconds(10))), rank_(rank),
      attempt_(attempt) {
    conn_.send({{"type", "hello"}, {"rank", rank}, {"attempt", attempt}});
}

ControlClient::Directives ControlClient::poll(std::uint64_t iter) {
    conn_.send({{"type", "poll"}, {"rank", rank_}, {"iter", iter}});
    Directives out;
    const auto reply = conn_.recv();
    if (!reply)
        return out;
    if (reply->contains("adapt"))
        out.adapt_world = (*reply)["adapt"].get<std::uint32_t>();
    if (reply->contains("throttle"))
        out.throttle = (*reply)["throttle"].get<std::uint64_t>();
    if (reply->contains("fault"))
        out.fault = {(*reply)["fault"]["version"].get<Version>(),
                     (*reply)["fault"]["fraction"].get<double>()};
    return out;
}

void ControlClient::report(const std::string &kind, std::uint64_t iter,
                           const std::string &detail) {
    conn_.send({{"type", "report"},
                {"rank", rank_},
                {"attempt", attempt_},
                {"kind", kind},
                {"iter", iter},
                {"detail", detail}});
}

} // namespace icheck::harness
