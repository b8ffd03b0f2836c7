// SPDX-License-Identifier: Apache-2.0
#include "icheck/net/server.hpp"

#include "icheck/core/log.hpp"

namespace icheck::net {

MsgServer::MsgServer(const std::string &listen_endpoint, ConnHandler handler)
    : listener_(TcpListener::bind(listen_endpoint)),
      endpoint_(listener_.endpoint()), handler_(std::move(handler)) {
    accept_thread_ = std::thread([this] { accept_loop(); });
}

MsgServer::~MsgServer() { stop(); }

void MsgServer::accept_loop() {
    while (true) {
        auto stream = listener_.accept();
        if (!stream)
            return;
        auto slot = std::make_unique<ConnSlot>();
        slot->conn = std::make_shared<MsgConn>(std::move(*stream));
        ConnSlot *raw = slot.get();
        {
            std::lock_guard lk(mu_);
            if (stopped_)
                return;
            conns_.push_back(std::move(slot));
        }
        raw->thread = std::thread([this, raw] {
            try {
                handler_(raw->conn);
            } catch (const std::exception &e) {
                log::event("conn_error", {{"what", e.what()}});
            }
            raw->conn->shutdown();
            raw->done.store(true);
        });
        reap_finished();
    }
}

void MsgServer::reap_finished() {
    std::lock_guard lk(mu_);
    for (auto it = conns_.begin(); it != conns_.end();) {
        if ((*it)->done.load()) {
            (*it)->thread.join();
            it = conns_.erase(it);
        } else {
            ++it;
        }
    }
}

void MsgServer::stop() {
    {
        std::lock_guard lk(mu_);
        if (stopped_)
            return;
        stopped_ = true;
    }
    listener_.close();
    if (accept_thread_.joinable())
        accept_thread_.join();
    std::list<std::unique_ptr<ConnSlot>> conns;
    {
        std::lock_guard lk(mu_);
        conns.swap(conns_);
    }
    for (auto &slot : conns) {
        slot->conn->shutdown();
        if (slot->thread.joinable())
            slot->thread.join();
    }
}

} // namespace icheck::net
