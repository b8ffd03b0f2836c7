// SPDX-License-Identifier: Apache-2.0
#include "icheck/agent/agent.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>

#include "icheck/core/crc32.hpp"
#include "icheck/core/log.hpp"

namespace icheck::agent {

using namespace proto;

namespace {

Layout from_wire(const WireLayout &w) {
    return Layout{w.total_n, w.p, static_cast<DistributionScheme>(w.scheme)};
}

std::optional<std::string> endpoint_serving(const std::vector<WireAssignment> &as,
                                            Rank r) {
    for (const auto &a : as)
        if (std::find(a.ranks.begin(), a.ranks.end(), r) != a.ranks.end())
            return a.endpoint;
    return std::nullopt;
}

} // namespace

AgentService::AgentService(AgentConfig cfg) : cfg_(std::move(cfg)) {
    if (const char *fault = std::getenv("ICHECK_AGENT_FAULT"))
        if (std::string(fault) == "before_manifest")
            crash_point_ = pfs::CrashPoint::BeforeManifest;

    server_ = std::make_unique<net::MsgServer>(
        cfg_.listen, [this](const net::MsgConnPtr &conn) { serve_conn(conn); });

    if (!cfg_.controller_endpoint.empty()) {
        controller_conn_ =
            net::MsgConn::dial(cfg_.controller_endpoint, std::chrono::seconds(10));
        AgentReady hello{cfg_.app_id, cfg_.agent_id, cfg_.node_id,
                         server_->endpoint(), 1, "hello"};
        controller_conn_->send(hello);
        controller_reader_ = std::thread([this] { control_loop(*controller_conn_); });
    }
    if (!cfg_.manager_endpoint.empty()) {
        manager_conn_ = net::MsgConn::dial(cfg_.manager_endpoint,
                                           std::chrono::seconds(10));
        manager_conn_->send(AgentStats{cfg_.agent_id, cfg_.app_id,
                                       server_->endpoint(), 0, 0});
        manager_reader_ = std::thread([this] { control_loop(*manager_conn_); });
        stats_thread_ = std::thread([this] { stats_loop(); });
    }
    log::event("agent_up", {{"agent", log::str(cfg_.agent_id)},
                            {"app", log::str(cfg_.app_id)},
                            {"node", cfg_.node_id},
                            {"endpoint", server_->endpoint()}});
}

AgentService::~AgentService() { stop(); }

void AgentService::stop() {
    bool expected = false;
    if (!stopping_.compare_exchange_strong(expected, true))
        return;
    stop_cv_.notify_all();
    if (controller_conn_)
        controller_conn_->shutdown();
    if (manager_conn_)
        manager_conn_->shutdown();
    server_->stop();
    if (controller_reader_.joinable())
        controller_reader_.join();
    if (manager_reader_.joinable())
        manager_reader_.join();
    if (stats_thread_.joinable())
        stats_thread_.join();
}

void AgentService::send_to_controller(const Message &msg) {
    if (!controller_conn_)
        return;
    try {
        controller_conn_->send(msg);
    } catch (const std::exception &e) {
        log::event("controller_send_failed", {{"what", e.what()}});
    }
}

void AgentService::stats_loop() {
    while (!stopping_.load()) {
        {
            std::unique_lock lk(stop_mu_);
            stop_cv_.wait_for(lk, std::chrono::milliseconds(cfg_.stats_period_ms),
                              [this] { return stopping_.load(); });
        }
        if (stopping_.load())
            return;
        try {
            manager_conn_->send(AgentStats{cfg_.agent_id, cfg_.app_id,
                                           server_->endpoint(), store_.bytes_staged(),
                                           moved_bytes_.exchange(0)});
        } catch (const std::exception &) {
            return; // manager gone
        }
    }
}

void AgentService::control_loop(net::MsgConn &conn) try {
    while (auto msg = conn.recv()) {
        if (auto *flush = std::get_if<FlushOrder>(&*msg)) {
            const auto ack = do_flush(*flush);
            if (ack.reason != "crash")
                send_to_controller(ack);
        } else if (auto *mig = std::get_if<MigrateOrder>(&*msg)) {
            send_to_controller(do_migrate(*mig));
        } else if (auto *prep = std::get_if<AdaptPrep>(&*msg)) {
            handle_adapt_prep(*prep);
        } else if (auto *gc = std::get_if<GcOrder>(&*msg)) {
            handle_gc(*gc);
        } else if (std::get_if<Shutdown>(&*msg)) {
            store_.erase_all(cfg_.app_id);
            log::event("agent_shutdown", {{"agent", log::str(cfg_.agent_id)}});
            break;
        }
    }
} catch (const std::exception &e) {
    log::event("agent_control_error", {{"agent", log::str(cfg_.agent_id)},
                                       {"what", e.what()}});
}

void AgentService::serve_conn(const net::MsgConnPtr &conn_ptr) {
    net::MsgConn &conn = *conn_ptr;
    std::optional<Ingest> ingest;
    while (auto msg = conn.recv()) {
        if (auto *c = std::get_if<Connect>(&*msg)) {
            const auto status =
                c->app_id == cfg_.app_id ? Status::Ok : Status::UnknownApp;
            conn.send(Ack{static_cast<std::uint8_t>(status), "", cfg_.agent_id});
        } else if (auto *mr = std::get_if<MemRegister>(&*msg)) {
            handle_mem_register(conn, *mr);
        } else if (auto *begin = std::get_if<CommitBegin>(&*msg)) {
            ingest.emplace();
            begin_ingest(*ingest, PayloadKind::Checkpoint, begin->epoch,
                         begin->version, begin->rank, begin->regions, true);
        } else if (auto *snap = std::get_if<SnapshotPush>(&*msg)) {
            ingest.emplace();
            begin_ingest(*ingest, PayloadKind::Snapshot, snap->epoch,
                         snap->epoch, snap->rank, snap->regions, false);
        } else if (auto *mig = std::get_if<MigrateStream>(&*msg)) {
            ingest.emplace();
            begin_ingest(*ingest, static_cast<PayloadKind>(mig->kind),
                         mig->epoch, mig->version, mig->rank, mig->regions,
                         false);
        } else if (auto *data = std::get_if<CommitData>(&*msg)) {
            if (ingest)
                ingest_data(*ingest, *data);
        } else if (auto *end = std::get_if<CommitEnd>(&*msg)) {
            if (!ingest) {
                conn.send(CommitAck{end->app_id, end->version, end->rank,
                                    static_cast<std::uint8_t>(Status::Rejected),
                                    "no transfer in progress"});
                continue;
            }
            conn.send(finish_ingest(*ingest));
            ingest.reset();
        } else if (auto *rr = std::get_if<RestoreReq>(&*msg)) {
            serve_restore(conn, *rr);
        } else if (auto *rd = std::get_if<RedistReq>(&*msg)) {
            serve_redistribution(conn, *rd);
        } else if (auto *pf = std::get_if<PeerFetch>(&*msg)) {
            serve_peer_fetch(conn, *pf);
        } else {
            conn.send(ErrorMsg{"unexpected", message_name(*msg)});
        }
    }
}

void AgentService::handle_mem_register(net::MsgConn &conn, const MemRegister &msg) {
    if (msg.app_id != cfg_.app_id) {
        conn.send(Ack{static_cast<std::uint8_t>(Status::UnknownApp), "", 0});
        return;
    }
    {
        std::lock_guard lk(mu_);
        registered_[{msg.rank, msg.region.id}] = msg.region;
    }
    send_to_controller(RegionDecl{msg.app_id, msg.epoch, msg.rank, cfg_.agent_id,
                                  msg.region});
    conn.send(Ack{static_cast<std::uint8_t>(Status::Ok), "", cfg_.agent_id});
}

void AgentService::begin_ingest(Ingest &ing, PayloadKind kind, Epoch epoch,
                                Version version, Rank rank,
                                std::vector<WireRegionPayload> regions,
                                bool validate_registered) {
    ing.kind = kind;
    ing.epoch = epoch;
    ing.version = version;
    ing.rank = rank;
    ing.regions = std::move(regions);
    ing.t0 = std::chrono::steady_clock::now();

    std::uint64_t incoming = 0;
    for (const auto &r : ing.regions)
        incoming += r.total_len;

    if (validate_registered) {
        std::lock_guard lk(mu_);
        for (const auto &r : ing.regions) {
            auto it = registered_.find({ing.rank, r.id});
            if (it == registered_.end()) {
                ing.fail = Status::Unregistered;
                ing.fail_reason = "region '" + r.id + "' not registered";
                return;
            }
            const std::uint64_t want =
                it->second.count * it->second.elem_size;
            if (want != r.total_len) {
                ing.fail = Status::Layout;
                ing.fail_reason = "region '" + r.id + "' declares " +
                                  std::to_string(r.total_len) + " bytes, registered " +
                                  std::to_string(want);
                return;
            }
        }
    }
    if (store_.bytes_staged() + incoming > cfg_.capacity_bytes) {
        ing.fail = Status::Capacity;
        ing.fail_reason = "staging capacity exceeded";
        send_to_controller(ErrorMsg{"capacity", "agent " + std::to_string(cfg_.agent_id) +
                                                    " over budget"});
        return;
    }
    for (const auto &r : ing.regions) {
        Blob buf(r.total_len);
        ing.buffers.emplace(r.id, std::move(buf));
    }
}

void AgentService::ingest_data(Ingest &ing, const CommitData &data) {
    if (ing.fail != Status::Ok)
        return;
    auto it = ing.buffers.find(data.region_id);
    if (it == ing.buffers.end()) {
        ing.fail = Status::Rejected;
        ing.fail_reason = "data for undeclared region '" + data.region_id + "'";
        return;
    }
    if (data.offset + data.blob.size() > it->second.size()) {
        ing.fail = Status::Rejected;
        ing.fail_reason = "chunk out of bounds";
        return;
    }
    std::copy(data.blob.begin(), data.blob.end(), it->second.begin() + data.offset);
}

CommitAck AgentService::finish_ingest(Ingest &ing) {
    CommitAck ack{cfg_.app_id, ing.version, ing.rank,
                  static_cast<std::uint8_t>(Status::Ok), ""};
    if (ing.fail != Status::Ok) {
        ack.status = static_cast<std::uint8_t>(ing.fail);
        ack.reason = ing.fail_reason;
        return ack;
    }
    // Verify declared checksums before anything is stored.
    for (const auto &r : ing.regions) {
        const auto &buf = ing.buffers.at(r.id);
        if (crc32(buf.data(), buf.size()) != r.crc) {
            ack.status = static_cast<std::uint8_t>(Status::Integrity);
            ack.reason = "checksum mismatch for region '" + r.id + "'";
            return ack;
        }
    }
    std::uint64_t bytes = 0;
    for (const auto &r : ing.regions) {
        auto &buf = ing.buffers.at(r.id);
        bytes += buf.size();
        if (ing.kind == PayloadKind::Snapshot) {
            store_.put_snapshot({cfg_.app_id, ing.epoch, ing.rank, r.id},
                                std::move(buf), r.crc);
        } else {
            store_.put({cfg_.app_id, ing.version, ing.rank, r.id}, std::move(buf),
                       r.crc, ing.epoch);
        }
    }
    moved_bytes_.fetch_add(bytes);
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(
                        std::chrono::steady_clock::now() - ing.t0)
                        .count();
    log::event("ingest", {{"agent", log::str(cfg_.agent_id)},
                          {"kind", log::str(static_cast<int>(ing.kind))},
                          {"version", log::str(ing.version)},
                          {"rank", log::str(ing.rank)},
                          {"bytes", log::str(bytes)}});
    if (ing.kind != PayloadKind::Migrated) {
        CommitReport report{cfg_.app_id, ing.epoch, ing.version, ing.rank,
                            cfg_.agent_id, cfg_.node_id, bytes,
                            static_cast<std::uint64_t>(us),
                            static_cast<std::uint8_t>(ing.kind), ing.regions};
        send_to_controller(report);
    }
    return ack;
}

void AgentService::serve_restore(net::MsgConn &conn, const RestoreReq &req) {
    RestoreData head;
    head.app_id = req.app_id;
    head.version = req.version;
    head.rank = req.rank;
    head.region_id = req.region_id;

    auto nack = [&](Status s, const std::string &why) {
        head.status = static_cast<std::uint8_t>(s);
        head.reason = why;
        head.last = 1;
        conn.send(head);
    };
    if (req.app_id != cfg_.app_id) {
        nack(Status::UnknownApp, "agent serves a different app");
        return;
    }

    // Serve from memory only up to the newest version known COMPLETE; a
    // version only present on PFS is complete by construction (manifest).
    const Version watermark = complete_watermark_.load();
    const bool memory_allowed = watermark == 0 || req.version <= watermark;

    Blob bytes;
    std::uint32_t crc = 0;
    const EntryKey key{req.app_id, req.version, req.rank, req.region_id};
    try {
        if (auto e = memory_allowed ? store_.get(key) : std::optional<Entry>{}) {
            bytes = std::move(e->bytes);
            crc = e->crc;
        } else if (auto m = memory_allowed ? store_.meta(key) : std::optional<Entry>{};
                   m && m->storage == StorageLevel::Pfs) {
            bytes = pfs::read_region_file(cfg_.pfs_root, req.app_id, m->epoch,
                                          req.version, req.rank, req.region_id);
            crc = m->crc;
            if (crc32(bytes.data(), bytes.size()) != crc) {
                nack(Status::Storage, "PFS copy failed checksum");
                return;
            }
        } else if (pfs::version_on_pfs(cfg_.pfs_root, req.app_id, req.epoch,
                                       req.version)) {
            const auto manifest = pfs::load_manifest(cfg_.pfs_root, req.app_id,
                                                     req.epoch, req.version);
            const auto entry = manifest ? manifest->find(req.rank, req.region_id)
                                        : std::nullopt;
            if (!entry) {
                nack(Status::Missing, "not in PFS manifest");
                return;
            }
            bytes = pfs::read_region_file(cfg_.pfs_root, req.app_id, req.epoch,
                                          req.version, req.rank, req.region_id);
            crc = entry->crc;
            if (bytes.size() != entry->bytes ||
                crc32(bytes.data(), bytes.size()) != crc) {
                nack(Status::Storage, "PFS copy failed checksum");
                return;
            }
        } else {
            nack(Status::Missing, "no such entry");
            return;
        }
    } catch (const CorruptStateError &e) {
        nack(Status::Storage, e.what());
        return;
    }

    head.total_len = bytes.size();
    head.crc = crc;
    std::size_t at = 0;
    do {
        const std::size_t n = std::min(kChunkBytes, bytes.size() - at);
        RestoreData piece = head;
        piece.offset = at;
        piece.blob.assign(bytes.begin() + at, bytes.begin() + at + n);
        at += n;
        piece.last = at == bytes.size() ? 1 : 0;
        conn.send(piece);
    } while (at < bytes.size());
    moved_bytes_.fetch_add(bytes.size());
}

void AgentService::handle_adapt_prep(const AdaptPrep &prep) {
    std::lock_guard lk(mu_);
    AdaptInfo info;
    info.old_world = prep.old_world;
    info.new_world = prep.new_world;
    info.regions = prep.regions;
    info.old_assignments = prep.old_assignments;
    info.new_assignments = prep.new_assignments;
    adapt_info_[prep.epoch] = info;
    for (const auto &r : prep.regions) {
        std::uint64_t total = 0;
        for (auto c : r.counts)
            total += c;
        const Layout oldl{total, prep.old_world,
                          static_cast<DistributionScheme>(r.scheme)};
        const Layout newl{total, prep.new_world,
                          static_cast<DistributionScheme>(r.scheme)};
        plans_[{prep.epoch, r.id}] = redistribution_plan(oldl, newl);
        plans_prepushed_.fetch_add(1);
        log::event("plan_compute", {{"agent", log::str(cfg_.agent_id)},
                                    {"app", log::str(prep.app_id)},
                                    {"region", r.id},
                                    {"epoch", log::str(prep.epoch)},
                                    {"trigger", "notice"}});
    }
}

void AgentService::handle_gc(const GcOrder &gc) {
    if (gc.app_id != cfg_.app_id)
        return;
    if (gc.complete_watermark > 0)
        complete_watermark_.store(gc.complete_watermark);
    if (gc.min_version_keep > 0)
        store_.erase_versions_below(gc.app_id, gc.epoch, gc.min_version_keep);
    if (gc.purge_flushed)
        store_.purge_flushed(gc.app_id);
    if (gc.drop_snapshots_epoch_below > 0)
        store_.drop_snapshots_below(gc.app_id, gc.drop_snapshots_epoch_below);
    log::event("gc", {{"agent", log::str(cfg_.agent_id)},
                      {"app", log::str(gc.app_id)},
                      {"min_keep", log::str(gc.min_version_keep)},
                      {"staged", log::str(store_.bytes_staged())}});
}

std::optional<RedistributionPlan>
AgentService::plan_for(Epoch epoch, const std::string &region, const Layout &oldl,
                       const Layout &newl) {
    {
        std::lock_guard lk(mu_);
        auto it = plans_.find({epoch, region});
        if (it != plans_.end()) {
            if (it->second.old_layout == oldl && it->second.new_layout == newl) {
                log::event("redist_plan", {{"agent", log::str(cfg_.agent_id)},
                                           {"region", region},
                                           {"source", "prepushed"}});
                return it->second;
            }
            return std::nullopt; // layouts disagree with the prepared plan
        }
    }
    auto plan = redistribution_plan(oldl, newl);
    plans_local_.fetch_add(1);
    log::event("plan_compute", {{"agent", log::str(cfg_.agent_id)},
                                {"region", region},
                                {"epoch", log::str(epoch)},
                                {"trigger", "request"}});
    log::event("redist_plan", {{"agent", log::str(cfg_.agent_id)},
                               {"region", region},
                               {"source", "local"}});
    return plan;
}

std::optional<Blob> AgentService::snapshot_span(Epoch epoch, Rank src_rank,
                                                const std::string &region,
                                                std::uint64_t offset,
                                                std::uint64_t len,
                                                const std::optional<AdaptInfo> &info) {
    const SnapshotKey key{cfg_.app_id, epoch, src_rank, region};
    std::optional<std::string> peer;
    if (info)
        peer = endpoint_serving(info->old_assignments, src_rank);

    const bool local = !peer || *peer == server_->endpoint();
    if (local) {
        auto snap = store_.await_snapshot(key, cfg_.redist_wait_ms);
        if (!snap)
            return std::nullopt;
        if (offset + len > snap->bytes.size())
            return std::nullopt;
        return Blob(snap->bytes.begin() + offset, snap->bytes.begin() + offset + len);
    }

    try {
        auto conn = net::MsgConn::dial(*peer, std::chrono::seconds(5));
        conn->send(PeerFetch{cfg_.app_id, epoch, src_rank, region, offset, len});
        Blob out(len);
        while (true) {
            auto msg = conn->recv();
            if (!msg)
                return std::nullopt;
            auto *pd = std::get_if<PeerData>(&*msg);
            if (!pd)
                return std::nullopt;
            if (pd->status != static_cast<std::uint8_t>(Status::Ok))
                return std::nullopt;
            if (pd->offset < offset || pd->offset - offset + pd->blob.size() > len)
                return std::nullopt;
            std::copy(pd->blob.begin(), pd->blob.end(),
                      out.begin() + (pd->offset - offset));
            if (pd->last)
                return out;
        }
    } catch (const std::exception &e) {
        log::event("peer_fetch_failed", {{"agent", log::str(cfg_.agent_id)},
                                         {"src_rank", log::str(src_rank)},
                                         {"what", e.what()}});
        return std::nullopt;
    }
}

void AgentService::serve_peer_fetch(net::MsgConn &conn, const PeerFetch &req) {
    const SnapshotKey key{req.app_id, req.epoch, req.src_rank, req.region_id};
    auto snap = req.app_id == cfg_.app_id
                    ? store_.await_snapshot(key, cfg_.redist_wait_ms)
                    : std::nullopt;
    if (!snap || req.offset + req.len > snap->bytes.size()) {
        conn.send(PeerData{static_cast<std::uint8_t>(Status::NoSource),
                           "snapshot unavailable", 0, {}, 1});
        return;
    }
    std::uint64_t at = 0;
    do {
        const std::uint64_t n = std::min<std::uint64_t>(kChunkBytes, req.len - at);
        PeerData piece;
        piece.status = static_cast<std::uint8_t>(Status::Ok);
        piece.offset = req.offset + at;
        piece.blob.assign(snap->bytes.begin() + req.offset + at,
                          snap->bytes.begin() + req.offset + at + n);
        at += n;
        piece.last = at == req.len ? 1 : 0;
        conn.send(piece);
    } while (at < req.len);
    moved_bytes_.fetch_add(req.len);
}

void AgentService::serve_redistribution(net::MsgConn &conn, const RedistReq &req) {
    RedistData head;
    head.app_id = req.app_id;
    head.epoch = req.epoch;
    head.region_id = req.region_id;
    auto nack = [&](Status s, const std::string &why) {
        head.status = static_cast<std::uint8_t>(s);
        head.reason = why;
        head.last = 1;
        conn.send(head);
    };
    if (req.app_id != cfg_.app_id) {
        nack(Status::UnknownApp, "agent serves a different app");
        return;
    }
    const Layout oldl = from_wire(req.old_layout);
    const Layout newl = from_wire(req.new_layout);
    if (oldl.total_n != newl.total_n || req.elem_size == 0 ||
        req.dst_rank >= newl.p) {
        nack(Status::Layout, "inconsistent layouts");
        return;
    }
    std::optional<AdaptInfo> info;
    {
        std::lock_guard lk(mu_);
        auto it = adapt_info_.find(req.epoch);
        if (it != adapt_info_.end())
            info = it->second;
    }
    const auto plan = plan_for(req.epoch, req.region_id, oldl, newl);
    if (!plan) {
        nack(Status::Layout, "layouts disagree with prepared plan");
        return;
    }

    // Byte spans needed per source rank, merged across runs.
    struct Span {
        std::uint64_t lo = UINT64_MAX, hi = 0;
    };
    std::map<Rank, Span> needed;
    for (const auto &t : plan->transfers) {
        if (t.dst_rank != req.dst_rank)
            continue;
        auto &s = needed[t.src_rank];
        s.lo = std::min(s.lo, t.src_offset * req.elem_size);
        s.hi = std::max(s.hi, (t.src_offset + t.run_len) * req.elem_size);
    }

    std::map<Rank, std::pair<std::uint64_t, Blob>> sources; // rank -> (base, bytes)
    for (const auto &[src_rank, span] : needed) {
        auto bytes = snapshot_span(req.epoch, src_rank, req.region_id, span.lo,
                                   span.hi - span.lo, info);
        if (!bytes) {
            nack(Status::NoSource,
                 "no adapt snapshot for source rank " + std::to_string(src_rank));
            return;
        }
        sources[src_rank] = {span.lo, std::move(*bytes)};
    }

    Blob out(owned_count(newl, req.dst_rank) * req.elem_size);
    for (const auto &t : plan->transfers) {
        if (t.dst_rank != req.dst_rank)
            continue;
        const auto &[base, bytes] = sources.at(t.src_rank);
        const std::uint64_t src_off = t.src_offset * req.elem_size - base;
        std::memcpy(out.data() + t.dst_offset * req.elem_size,
                    bytes.data() + src_off, t.run_len * req.elem_size);
    }

    head.total_len = out.size();
    head.crc = crc32(out.data(), out.size());
    std::uint64_t at = 0;
    do {
        const std::uint64_t n = std::min<std::uint64_t>(kChunkBytes, out.size() - at);
        RedistData piece = head;
        piece.offset = at;
        piece.blob.assign(out.begin() + at, out.begin() + at + n);
        at += n;
        piece.last = at == out.size() ? 1 : 0;
        conn.send(piece);
    } while (at < out.size());
    moved_bytes_.fetch_add(out.size());
    log::event("redist_served", {{"agent", log::str(cfg_.agent_id)},
                                 {"dst_rank", log::str(req.dst_rank)},
                                 {"bytes", log::str(out.size())}});
}

FlushAck AgentService::do_flush(const FlushOrder &order) {
    FlushAck ack{order.app_id, order.epoch, order.version, cfg_.agent_id, 1, "", 0};
    const auto keys = store_.keys_for(order.app_id, order.version, order.ranks);
    if (keys.empty()) {
        ack.ok = 0;
        ack.reason = "no staged entries for flush";
        return ack;
    }
    try {
        for (const auto &key : keys) {
            auto e = store_.get(key);
            if (!e) {
                auto m = store_.meta(key);
                if (m && m->storage == StorageLevel::Pfs)
                    continue; // already on PFS
                throw CorruptStateError("entry vanished during flush");
            }
            pfs::write_region_file(cfg_.pfs_root, key.app_id, e->epoch, key.version,
                                   key.rank, key.region_id, e->bytes);
        }
        if (crash_point_.load() == pfs::CrashPoint::BeforeManifest) {
            log::event("flush_crash_injected", {{"agent", log::str(cfg_.agent_id)},
                                                {"version", log::str(order.version)}});
            ack.ok = 0;
            ack.reason = "crash";
            return ack;
        }
        if (order.write_manifest) {
            pfs::write_manifest(cfg_.pfs_root, order.app_id, order.epoch,
                                order.version, order.manifest_json);
            ack.manifest_written = 1;
        }
        store_.mark_flushed(order.app_id, order.version, order.ranks);
        log::event("flush_done", {{"agent", log::str(cfg_.agent_id)},
                                  {"app", log::str(order.app_id)},
                                  {"version", log::str(order.version)},
                                  {"manifest", log::str(int(ack.manifest_written))}});
    } catch (const std::exception &e) {
        ack.ok = 0;
        ack.reason = e.what();
    }
    return ack;
}

MigrateAck AgentService::do_migrate(const MigrateOrder &order) {
    MigrateAck ack{order.app_id, cfg_.agent_id, 1, "", 0, order.ranks};
    auto in_ranks = [&](Rank r) {
        return std::find(order.ranks.begin(), order.ranks.end(), r) !=
               order.ranks.end();
    };
    try {
        auto conn = net::MsgConn::dial(order.target_endpoint, std::chrono::seconds(5));

        auto ship = [&](const Message &header, const Blob &bytes, Version version,
                        Rank rank, const std::string &region) {
            for (int attempt = 0; attempt < 2; ++attempt) {
                conn->send(header);
                std::uint64_t at = 0;
                do {
                    const std::uint64_t n =
                        std::min<std::uint64_t>(kChunkBytes, bytes.size() - at);
                    CommitData piece;
                    piece.app_id = order.app_id;
                    piece.version = version;
                    piece.rank = rank;
                    piece.region_id = region;
                    piece.offset = at;
                    piece.blob.assign(bytes.begin() + at, bytes.begin() + at + n);
                    at += n;
                    conn->send(piece);
                } while (at < bytes.size());
                conn->send(CommitEnd{order.app_id, version, rank});
                auto reply = conn->recv();
                if (!reply)
                    throw NetError("target closed during migration");
                const auto &a = std::get<CommitAck>(*reply);
                if (a.status == static_cast<std::uint8_t>(Status::Ok))
                    return;
                if (a.status != static_cast<std::uint8_t>(Status::Integrity))
                    throw NetError("target rejected migration: " + a.reason);
                log::event("migrate_retry", {{"agent", log::str(cfg_.agent_id)},
                                             {"version", log::str(version)},
                                             {"rank", log::str(rank)}});
            }
            throw NetError("migration checksum retries exhausted");
        };

        for (const auto &key : store_.all_keys(order.app_id)) {
            if (!in_ranks(key.rank))
                continue;
            auto e = store_.get(key);
            if (!e)
                continue; // PFS-only entries stay readable via the manifest
            MigrateStream header{order.app_id, e->epoch, key.version, key.rank,
                                 static_cast<std::uint8_t>(PayloadKind::Migrated),
                                 {{key.region_id, e->bytes.size(), e->crc}}};
            ship(header, e->bytes, key.version, key.rank, key.region_id);
            ack.moved_bytes += e->bytes.size();
        }
        for (const auto &key : store_.all_snapshot_keys(order.app_id)) {
            if (!in_ranks(key.rank))
                continue;
            auto e = store_.get_snapshot(key);
            if (!e)
                continue;
            MigrateStream header{order.app_id, key.epoch, 0, key.rank,
                                 static_cast<std::uint8_t>(PayloadKind::Snapshot),
                                 {{key.region_id, e->bytes.size(), e->crc}}};
            ship(header, e->bytes, 0, key.rank, key.region_id);
            ack.moved_bytes += e->bytes.size();
        }
        // Copy, then delete at retirement: the controller repoints readers
        // at the target before this agent's Shutdown arrives, so a reader
        // holding stale assignments still finds live data here.
        moved_bytes_.fetch_add(ack.moved_bytes);
        log::event("migrate_done", {{"agent", log::str(cfg_.agent_id)},
                                    {"app", log::str(order.app_id)},
                                    {"bytes", log::str(ack.moved_bytes)},
                                    {"target", order.target_endpoint}});
    } catch (const std::exception &e) {
        ack.ok = 0;
        ack.reason = e.what();
        ack.moved_bytes = 0;
    }
    return ack;
}

} // namespace icheck::agent
