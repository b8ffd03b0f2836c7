// SPDX-License-Identifier: Apache-2.0
#include "icheck/client/session.hpp"

#include <algorithm>
#include <cstring>
#include <ostream>
#include <set>
#include <unistd.h>

#include "icheck/agent/pfs.hpp"
#include "icheck/core/crc32.hpp"
#include "icheck/core/log.hpp"
#include "icheck/layout/layout.hpp"

namespace icheck::client {

using namespace proto;

namespace {

std::uint64_t elapsed_us(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::steady_clock::now() - t0)
        .count();
}

std::optional<WireAssignment>
assignment_for(const std::vector<WireAssignment> &as, Rank rank) {
    for (const auto &a : as)
        if (std::find(a.ranks.begin(), a.ranks.end(), rank) != a.ranks.end())
            return a;
    return std::nullopt;
}

// Session-level duplicate-init guard, keyed by (app name, rank).
std::mutex g_live_mu;
std::set<std::pair<std::string, Rank>> g_live_sessions;

} // namespace

void Pacer::pace(std::size_t bytes) {
    const std::uint64_t bps = bps_.load();
    if (bps == 0 || bytes == 0)
        return;
    std::unique_lock lk(mu_);
    const auto now = std::chrono::steady_clock::now();
    if (next_ < now)
        next_ = now;
    next_ += std::chrono::microseconds(bytes * 1'000'000 / bps);
    const auto wake = next_;
    lk.unlock();
    std::this_thread::sleep_until(wake);
}

Session::Session(SessionConfig cfg) : cfg_(std::move(cfg)) {
    pacer_.set_rate(cfg_.throttle_bytes_per_sec);
    fault_ = cfg_.fault;
}

std::unique_ptr<Session> Session::init(const SessionConfig &cfg) {
    {
        std::lock_guard lk(g_live_mu);
        if (!g_live_sessions.emplace(cfg.name, cfg.rank).second)
            throw IcheckError("session already initialized for rank " +
                              std::to_string(cfg.rank));
    }
    std::unique_ptr<Session> s(new Session(cfg));
    try {
        s->controller_ = net::MsgConn::dial(
            cfg.controller_endpoint, std::chrono::milliseconds(cfg.connect_timeout_ms));
        Register reg;
        reg.name = cfg.name;
        reg.rank = cfg.rank;
        reg.world_size = cfg.world_size;
        reg.process_type = static_cast<std::uint8_t>(cfg.process_type);
        const auto reply = s->controller_->request(reg);
        const auto &ack = std::get<RegisterAck>(reply);
        if (ack.status != static_cast<std::uint8_t>(Status::Ok))
            throw IcheckError("registration rejected: " + ack.reason);
        s->app_id_ = ack.app_id;
        s->epoch_ = ack.epoch;
        s->world_ = ack.world_size;
        s->next_version_ = ack.next_version;
        s->prev_world_ = ack.prev_world;
        s->revision_ = ack.assignment_revision;
        s->pfs_root_ = ack.pfs_root;
        s->joining_pending_ = cfg.process_type == ProcessType::Joining;
        for (const auto &wr : ack.regions)
            s->region_meta_[wr.id] = wr;
        s->connect_agent(ack.assignments, s->epoch_);
        s->worker_ = std::thread([raw = s.get()] { raw->worker_loop(); });
        log::event("session_init", {{"app", log::str(s->app_id_)},
                                    {"rank", log::str(cfg.rank)},
                                    {"world", log::str(s->world_)},
                                    {"epoch", log::str(s->epoch_)},
                                    {"type", cfg.process_type == ProcessType::Joining
                                                 ? "joining"
                                                 : "initial"}});
        return s;
    } catch (...) {
        std::lock_guard lk(g_live_mu);
        g_live_sessions.erase({cfg.name, cfg.rank});
        throw;
    }
}

Session::~Session() {
    {
        std::lock_guard lk(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
    if (agent_)
        agent_->shutdown();
    if (worker_.joinable())
        worker_.join();
    if (controller_)
        controller_->shutdown();
    std::lock_guard lk(g_live_mu);
    g_live_sessions.erase({cfg_.name, cfg_.rank});
}

void Session::connect_agent(const std::vector<WireAssignment> &assignments,
                            Epoch epoch) {
    const auto mine = assignment_for(assignments, cfg_.rank);
    if (!mine) {
        agent_.reset();
        return; // rank currently unserved; restores fall back to the PFS tier
    }
    auto conn = net::MsgConn::dial(mine->endpoint,
                                   std::chrono::milliseconds(cfg_.connect_timeout_ms));
    const auto reply = conn->request(Connect{app_id_, cfg_.rank, epoch});
    const auto &ack = std::get<Ack>(reply);
    if (ack.status != static_cast<std::uint8_t>(Status::Ok))
        throw IcheckError("agent refused connection: " + ack.reason);
    agent_ = conn;
}

void Session::register_regions(Epoch epoch) {
    if (!agent_)
        return;
    for (auto &[id, r] : regions_) {
        MemRegister msg;
        msg.app_id = app_id_;
        msg.rank = cfg_.rank;
        msg.epoch = epoch;
        msg.region = {id, r.elem_size, r.count,
                      static_cast<std::uint8_t>(r.scheme)};
        const auto reply = agent_->request(msg);
        const auto &ack = std::get<Ack>(reply);
        if (ack.status != static_cast<std::uint8_t>(Status::Ok))
            throw IcheckError("region registration failed: " + ack.reason);
    }
}

void Session::add_adapt(const std::string &region_id, void *buffer,
                        std::uint64_t count, std::uint32_t elem_size,
                        DistributionScheme scheme) {
    if (finalized_)
        throw IcheckError("add_adapt after finalize");
    if (elem_size == 0)
        throw IcheckError("elem_size must be >= 1");
    if (regions_.count(region_id))
        throw IcheckError("region '" + region_id + "' already added");
    drain("add_adapt");
    Region r;
    r.id = region_id;
    r.user = buffer;
    r.count = count;
    r.elem_size = elem_size;
    r.scheme = scheme;
    r.staging.resize(count * elem_size);
    regions_.emplace(region_id, std::move(r));
    if (!agent_)
        return;
    MemRegister msg;
    msg.app_id = app_id_;
    msg.rank = cfg_.rank;
    msg.epoch = epoch_;
    msg.region = {region_id, elem_size, count, static_cast<std::uint8_t>(scheme)};
    const auto reply = agent_->request(msg);
    const auto &ack = std::get<Ack>(reply);
    if (ack.status != static_cast<std::uint8_t>(Status::Ok)) {
        regions_.erase(region_id);
        throw IcheckError("region registration failed: " + ack.reason);
    }
}

void Session::throw_deferred() {
    std::optional<std::string> err;
    {
        std::lock_guard lk(mu_);
        err.swap(deferred_error_);
    }
    if (err)
        throw IcheckError("deferred transfer error: " + *err);
}

void Session::drain(const char *where) {
    std::unique_lock lk(mu_);
    const bool ok = cv_.wait_for(lk, std::chrono::milliseconds(cfg_.drain_timeout_ms),
                                 [this] { return !inflight_ && !pending_; });
    if (!ok)
        throw IcheckError(std::string("drain timed out in ") + where +
                          ", unacked version " +
                          std::to_string(next_version_ - 1));
}

Version Session::commit() {
    if (finalized_)
        throw IcheckError("commit after finalize");
    if (regions_.empty())
        throw IcheckError("no regions added");
    if (adapt_)
        throw IcheckError("commit during adaptation window");
    throw_deferred();

    const auto t0 = std::chrono::steady_clock::now();
    Version version;
    std::uint64_t copy_us = 0;
    {
        std::unique_lock lk(mu_);
        // Back-pressure: one inflight transfer per region set.
        const bool ok =
            cv_.wait_for(lk, std::chrono::milliseconds(cfg_.drain_timeout_ms),
                         [this] { return !inflight_ && !pending_; });
        if (!ok)
            throw IcheckError("commit blocked on a transfer that never drained");

        const auto tc = std::chrono::steady_clock::now();
        for (auto &[id, r] : regions_)
            std::memcpy(r.staging.data(), r.user, r.staging.size());
        copy_us = elapsed_us(tc);

        version = next_version_++;
        pending_ = Job{version, copy_us, std::chrono::steady_clock::now()};
        stats_.push_back({version, copy_us, 0, 0, cfg_.sync_mode});
    }
    cv_.notify_all();

    if (cfg_.sync_mode) {
        std::unique_lock lk(mu_);
        cv_.wait_for(lk, std::chrono::milliseconds(cfg_.drain_timeout_ms),
                     [this] { return !inflight_ && !pending_; });
    }
    const auto blocked = elapsed_us(t0);
    {
        std::lock_guard lk(mu_);
        for (auto &s : stats_)
            if (s.version == version)
                s.t_blocked_us = blocked;
    }
    return version;
}

void Session::apply_fault_maybe(Version version, std::size_t &sent,
                                std::size_t total,
                                std::span<const std::byte> chunk,
                                net::MsgConn &conn, const CommitData &msg) {
    std::optional<FaultSpec> fault;
    {
        std::lock_guard lk(fault_mu_);
        fault = fault_;
    }
    if (!fault || fault->version != version) {
        conn.send_unlocked(msg);
        sent += chunk.size();
        return;
    }
    const auto threshold =
        static_cast<std::size_t>(fault->after_fraction * static_cast<double>(total));
    if (sent + chunk.size() <= threshold) {
        conn.send_unlocked(msg);
        sent += chunk.size();
        return;
    }
    // Send the prefix that reaches the threshold, then die mid-commit.
    const std::size_t keep = threshold > sent ? threshold - sent : 0;
    CommitData partial = msg;
    partial.blob.assign(chunk.begin(), chunk.begin() + keep);
    conn.send_unlocked(partial);
    log::event("fault_exit", {{"rank", log::str(cfg_.rank)},
                              {"version", log::str(version)},
                              {"sent", log::str(sent + keep)}});
    ::_exit(137);
}

bool Session::send_version(const Job &job, std::string &error) {
    auto conn = agent_;
    if (!conn) {
        error = "no agent connection";
        return false;
    }
    try {
        auto io = conn->exclusive();
        CommitBegin begin;
        begin.app_id = app_id_;
        begin.epoch = epoch_;
        begin.version = job.version;
        begin.rank = cfg_.rank;
        std::size_t total = 0;
        for (auto &[id, r] : regions_) {
            begin.regions.push_back(
                {id, r.staging.size(), crc32(r.staging.data(), r.staging.size())});
            total += r.staging.size();
        }
        conn->send_unlocked(begin);
        std::size_t sent = 0;
        for (auto &[id, r] : regions_) {
            std::size_t at = 0;
            while (at < r.staging.size() || r.staging.empty()) {
                const std::size_t n =
                    std::min(kChunkBytes, r.staging.size() - at);
                CommitData piece;
                piece.app_id = app_id_;
                piece.version = job.version;
                piece.rank = cfg_.rank;
                piece.region_id = id;
                piece.offset = at;
                piece.blob.assign(r.staging.begin() + at,
                                  r.staging.begin() + at + n);
                pacer_.pace(n);
                apply_fault_maybe(job.version, sent, total,
                                  std::span<const std::byte>(r.staging.data() + at, n),
                                  *conn, piece);
                at += n;
                if (r.staging.empty())
                    break;
            }
        }
        conn->send_unlocked(CommitEnd{app_id_, job.version, cfg_.rank});
        const auto reply = conn->recv();
        if (!reply) {
            error = "agent closed connection";
            return false;
        }
        const auto &ack = std::get<CommitAck>(*reply);
        if (ack.status == static_cast<std::uint8_t>(Status::Integrity)) {
            error = "integrity";
            return false;
        }
        if (ack.status != static_cast<std::uint8_t>(Status::Ok)) {
            error = ack.reason.empty() ? to_string(static_cast<Status>(ack.status))
                                       : ack.reason;
            return false;
        }
        return true;
    } catch (const std::exception &e) {
        error = e.what();
        return false;
    }
}

void Session::worker_loop() {
    while (true) {
        Job job;
        {
            std::unique_lock lk(mu_);
            cv_.wait(lk, [this] { return stopping_ || pending_.has_value(); });
            if (stopping_)
                return;
            job = *pending_;
            pending_.reset();
            inflight_ = true;
        }

        const auto t1 = std::chrono::steady_clock::now();
        std::string error;
        bool ok = send_version(job, error);
        int integrity_left = cfg_.integrity_retries;
        while (!ok && error == "integrity" && integrity_left-- > 0) {
            log::event("commit_retry", {{"rank", log::str(cfg_.rank)},
                                        {"version", log::str(job.version)}});
            ok = send_version(job, error);
        }
        if (!ok && error != "integrity") {
            // The agent set may have changed (migration, rescale); re-probe
            // and retry on the fresh assignment.
            for (int attempt = 0; attempt < 3 && !ok && !stopping_; ++attempt) {
                std::this_thread::sleep_for(std::chrono::milliseconds(100));
                try {
                    const auto ack = probe_controller();
                    if (ack.change ==
                            static_cast<std::uint8_t>(AssignmentChange::NewAssignments) &&
                        ack.epoch == epoch_) {
                        connect_agent(ack.assignments, epoch_);
                        register_regions(epoch_);
                        revision_ = ack.assignment_revision;
                    }
                    ok = send_version(job, error);
                } catch (const std::exception &e) {
                    error = e.what();
                }
            }
        }
        const auto transfer = elapsed_us(t1);

        {
            std::lock_guard lk(mu_);
            for (auto &s : stats_)
                if (s.version == job.version)
                    s.t_transfer_us = transfer;
            if (!ok)
                deferred_error_ = "version " + std::to_string(job.version) + ": " +
                                  error;
            inflight_ = false;
        }
        cv_.notify_all();
    }
}

proto::ProbeAgentsAck Session::probe_controller(bool evaluate) {
    auto reply = controller_->request(ProbeAgents{
        app_id_, cfg_.rank, revision_, static_cast<std::uint8_t>(evaluate ? 1 : 0)});
    if (auto *err = std::get_if<ErrorMsg>(&reply))
        throw IcheckError("probe failed: " + err->code);
    auto ack = std::get<ProbeAgentsAck>(reply);
    for (const auto &wr : ack.regions)
        region_meta_[wr.id] = wr;
    return ack;
}

bool Session::probe_agents() {
    if (finalized_)
        throw IcheckError("probe after finalize");
    throw_deferred();
    drain("probe_agents");
    const auto ack = probe_controller(true);
    if (ack.change != static_cast<std::uint8_t>(AssignmentChange::NewAssignments))
        return false;
    if (ack.epoch != epoch_)
        return true; // an adaptation is pending; redistribute() completes it
    connect_agent(ack.assignments, epoch_);
    register_regions(epoch_);
    revision_ = ack.assignment_revision;
    for (const auto &wr : ack.regions) {
        auto it = regions_.find(wr.id);
        if (it != regions_.end()) {
            std::uint64_t n = 0;
            for (auto c : wr.counts)
                n += c;
            it->second.total_n = n;
        }
    }
    log::event("session_reconnected", {{"rank", log::str(cfg_.rank)},
                                       {"revision", log::str(revision_)}});
    return true;
}

proto::Blob Session::fetch_restore(net::MsgConn &conn, Version version,
                                   Epoch epoch, const std::string &region_id,
                                   std::uint64_t expected_len) {
    auto io = conn.exclusive();
    conn.send_unlocked(RestoreReq{app_id_, version, epoch, cfg_.rank, region_id});
    Blob out;
    std::uint32_t declared_crc = 0;
    bool first = true;
    while (true) {
        const auto msg = conn.recv();
        if (!msg)
            throw IcheckError("agent closed during restore");
        const auto &piece = std::get<RestoreData>(*msg);
        if (piece.status != static_cast<std::uint8_t>(Status::Ok))
            throw IcheckError("restore refused: " +
                              (piece.reason.empty()
                                   ? std::string(to_string(static_cast<Status>(piece.status)))
                                   : piece.reason));
        if (first) {
            out.resize(piece.total_len);
            declared_crc = piece.crc;
            first = false;
        }
        if (piece.offset + piece.blob.size() > out.size())
            throw IcheckError("restore chunk out of bounds");
        std::copy(piece.blob.begin(), piece.blob.end(), out.begin() + piece.offset);
        if (piece.last)
            break;
    }
    if (out.size() != expected_len)
        throw IcheckError("restored length mismatch for region '" + region_id + "'");
    if (crc32(out.data(), out.size()) != declared_crc)
        throw IcheckError("restored data failed checksum for region '" + region_id +
                          "'");
    return out;
}

std::optional<proto::Blob> Session::pfs_restore(const std::string &pfs_root,
                                                Version version, Epoch epoch,
                                                const std::string &region_id) {
    if (pfs_root.empty())
        return std::nullopt;
    const auto manifest = pfs::load_manifest(pfs_root, app_id_, epoch, version);
    if (!manifest)
        return std::nullopt;
    const auto entry = manifest->find(cfg_.rank, region_id);
    if (!entry)
        return std::nullopt;
    auto bytes =
        pfs::read_region_file(pfs_root, app_id_, epoch, version, cfg_.rank, region_id);
    if (bytes.size() != entry->bytes || crc32(bytes.data(), bytes.size()) != entry->crc)
        throw IcheckError("PFS copy failed checksum for region '" + region_id + "'");
    return bytes;
}

bool Session::restart() {
    if (regions_.empty())
        throw IcheckError("restart before any region was added");
    throw_deferred();
    drain("restart");

    // Migrations move agents underneath us; a failed fetch is retried with a
    // freshly queried assignment set before falling back to the PFS tier.
    std::string last_error;
    for (int attempt = 0; attempt < 3; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(60));
        const auto reply = controller_->request(RestartQuery{cfg_.name, app_id_});
        const auto &info = std::get<RestartInfo>(reply);
        if (!info.found)
            return false; // start new
        for (const auto &wr : info.regions)
            region_meta_[wr.id] = wr;
        if (info.epoch != epoch_)
            return false; // older epoch; the redistribution path applies

        // Fetch everything into scratch buffers first; user data is only
        // touched once every region verified.
        std::map<std::string, Blob> scratch;
        bool all_ok = true;
        for (auto &[id, r] : regions_) {
            const std::uint64_t expected = r.count * r.elem_size;
            Blob bytes;
            bool done = false;
            if (assignment_for(info.assignments, cfg_.rank)) {
                try {
                    if (!agent_ || info.assignment_revision != revision_) {
                        connect_agent(info.assignments, epoch_);
                        revision_ = info.assignment_revision;
                    }
                    bytes = fetch_restore(*agent_, info.version, info.epoch, id,
                                          expected);
                    done = true;
                } catch (const std::exception &e) {
                    last_error = e.what();
                    log::event("restore_agent_failed",
                               {{"rank", log::str(cfg_.rank)},
                                {"region", id},
                                {"what", e.what()}});
                    agent_.reset();
                }
            }
            if (!done) {
                try {
                    auto from_pfs = pfs_restore(info.pfs_root.empty()
                                                    ? pfs_root_
                                                    : info.pfs_root,
                                                info.version, info.epoch, id);
                    if (from_pfs && from_pfs->size() == expected) {
                        bytes = std::move(*from_pfs);
                        done = true;
                    }
                } catch (const std::exception &e) {
                    last_error = e.what();
                }
            }
            if (!done) {
                all_ok = false;
                break;
            }
            scratch.emplace(id, std::move(bytes));
        }
        if (!all_ok)
            continue;
        for (auto &[id, bytes] : scratch)
            std::memcpy(regions_.at(id).user, bytes.data(), bytes.size());
        if (info.version >= next_version_)
            next_version_ = info.version + 1;
        log::event("session_restored", {{"rank", log::str(cfg_.rank)},
                                        {"version", log::str(info.version)}});
        return true;
    }
    throw IcheckError("no restorable copy found: " + last_error);
}

void Session::push_snapshot(Region &region, Epoch new_epoch) {
    if (!agent_)
        throw IcheckError("no agent connection for snapshot push");
    auto io = agent_->exclusive();
    const std::uint64_t len = region.count * region.elem_size;
    const auto *bytes = static_cast<const std::byte *>(region.user);
    SnapshotPush head;
    head.app_id = app_id_;
    head.epoch = new_epoch;
    head.rank = cfg_.rank;
    head.regions.push_back({region.id, len, crc32(bytes, len)});
    agent_->send_unlocked(head);
    std::uint64_t at = 0;
    do {
        const std::uint64_t n = std::min<std::uint64_t>(kChunkBytes, len - at);
        CommitData piece;
        piece.app_id = app_id_;
        piece.version = new_epoch;
        piece.rank = cfg_.rank;
        piece.region_id = region.id;
        piece.offset = at;
        piece.blob.assign(bytes + at, bytes + at + n);
        pacer_.pace(n);
        agent_->send_unlocked(piece);
        at += n;
    } while (at < len);
    agent_->send_unlocked(CommitEnd{app_id_, new_epoch, cfg_.rank});
    const auto reply = agent_->recv();
    if (!reply)
        throw IcheckError("agent closed during snapshot push");
    const auto &ack = std::get<CommitAck>(*reply);
    if (ack.status != static_cast<std::uint8_t>(Status::Ok))
        throw IcheckError("snapshot push refused: " + ack.reason);
}

void Session::redistribute(const std::string &region_id, void *buffer,
                           std::uint64_t new_count, DistributionScheme scheme) {
    auto rit = regions_.find(region_id);
    if (rit == regions_.end())
        throw IcheckError("unknown region '" + region_id + "'");
    Region &region = rit->second;
    throw_deferred();
    drain("redistribute");

    if (!adapt_) {
        const auto ack = probe_controller();
        if (ack.epoch == epoch_ && !joining_pending_) {
            if (new_count == region.count)
                return; // no-change adaptation
            throw IcheckError("no adaptation in progress");
        }
        AdaptContext ctx;
        ctx.new_epoch = ack.epoch;
        ctx.new_world = ack.world_size;
        ctx.old_world = joining_pending_ ? prev_world_ : world_;
        ctx.revision = ack.assignment_revision;
        ctx.assignments = ack.assignments;
        ctx.regions = ack.regions;
        if (ctx.assignments.empty()) {
            // Probe may skip assignments when it saw no change; ask again
            // via the restart path which always carries them.
            const auto reply = controller_->request(RestartQuery{cfg_.name, app_id_});
            const auto &info = std::get<RestartInfo>(reply);
            ctx.assignments = info.assignments;
        }
        adapt_ = std::move(ctx);
    }
    AdaptContext &ctx = *adapt_;
    if (ctx.done_regions.count(region_id))
        throw IcheckError("region already redistributed this epoch");

    // Region metadata for the new epoch (authoritative N).
    auto sum_counts = [](const proto::WireRegion &wr) {
        std::uint64_t n = 0;
        for (auto c : wr.counts)
            n += c;
        return n;
    };
    std::uint64_t total_n = region.total_n;
    for (const auto &wr : ctx.regions)
        if (wr.id == region_id)
            total_n = sum_counts(wr);
    if (total_n == 0) {
        auto mit = region_meta_.find(region_id);
        if (mit != region_meta_.end())
            total_n = sum_counts(mit->second);
    }
    if (total_n == 0 && region.count > 0 && ctx.old_world == 1)
        total_n = region.count; // single old rank held the whole array
    const Layout old_layout{total_n, ctx.old_world, region.scheme};
    const Layout new_layout{total_n, ctx.new_world, scheme};
    const std::uint64_t expect =
        cfg_.rank < ctx.new_world ? owned_count(new_layout, cfg_.rank) : 0;
    if (new_count != expect)
        throw IcheckError("new_count " + std::to_string(new_count) +
                          " does not match owned_count " + std::to_string(expect));

    // Surviving ranks contribute their current bytes as the adapt snapshot.
    const bool had_data = !joining_pending_ && cfg_.rank < ctx.old_world;
    if (had_data)
        push_snapshot(region, ctx.new_epoch);

    if (cfg_.rank >= ctx.new_world) {
        // Departing rank: contributes and leaves.
        ctx.done_regions.insert(region_id);
        region.count = 0;
        region.staging.clear();
        if (ctx.done_regions.size() == regions_.size()) {
            epoch_ = ctx.new_epoch;
            world_ = ctx.new_world;
            revision_ = ctx.revision;
            adapt_.reset();
            joining_pending_ = false;
        }
        return;
    }

    // Move to the new-epoch agent before requesting data.
    connect_agent(ctx.assignments, ctx.new_epoch);
    if (!agent_)
        throw IcheckError("no agent assigned under the new epoch");
    {
        MemRegister msg;
        msg.app_id = app_id_;
        msg.rank = cfg_.rank;
        msg.epoch = ctx.new_epoch;
        msg.region = {region_id, region.elem_size, expect,
                      static_cast<std::uint8_t>(scheme)};
        const auto reply = agent_->request(msg);
        if (std::get<Ack>(reply).status != static_cast<std::uint8_t>(Status::Ok))
            throw IcheckError("re-registration failed after adapt");
    }

    RedistReq req;
    req.app_id = app_id_;
    req.epoch = ctx.new_epoch;
    req.region_id = region_id;
    req.old_layout = {old_layout.total_n, old_layout.p,
                      static_cast<std::uint8_t>(old_layout.scheme)};
    req.new_layout = {new_layout.total_n, new_layout.p,
                      static_cast<std::uint8_t>(new_layout.scheme)};
    req.elem_size = region.elem_size;
    req.dst_rank = cfg_.rank;

    Blob out;
    {
        auto io = agent_->exclusive();
        agent_->send_unlocked(req);
        std::uint32_t declared_crc = 0;
        bool first = true;
        while (true) {
            const auto msg = agent_->recv();
            if (!msg)
                throw IcheckError("agent closed during redistribution");
            const auto &piece = std::get<RedistData>(*msg);
            if (piece.status != static_cast<std::uint8_t>(Status::Ok))
                throw IcheckError("redistribution refused: " + piece.reason);
            if (first) {
                out.resize(piece.total_len);
                declared_crc = piece.crc;
                first = false;
            }
            std::copy(piece.blob.begin(), piece.blob.end(),
                      out.begin() + piece.offset);
            if (piece.last)
                break;
        }
        if (crc32(out.data(), out.size()) != declared_crc)
            throw IcheckError("redistributed data failed checksum");
    }
    if (out.size() != new_count * region.elem_size)
        throw IcheckError("redistributed size mismatch");
    std::memcpy(buffer, out.data(), out.size());

    region.user = buffer;
    region.count = new_count;
    region.scheme = scheme;
    region.total_n = total_n;
    region.staging.assign(out.size(), std::byte{0});
    ctx.done_regions.insert(region_id);
    if (ctx.done_regions.size() == regions_.size()) {
        epoch_ = ctx.new_epoch;
        world_ = ctx.new_world;
        revision_ = ctx.revision;
        next_version_ = std::max(next_version_, Version{1});
        adapt_.reset();
        joining_pending_ = false;
        log::event("session_adapted", {{"rank", log::str(cfg_.rank)},
                                       {"epoch", log::str(epoch_)},
                                       {"world", log::str(world_)}});
    }
}

std::vector<CommitStats> Session::finalize() {
    if (finalized_)
        throw IcheckError("finalize called twice");
    drain("finalize");
    finalized_ = true;
    {
        std::lock_guard lk(g_live_mu);
        g_live_sessions.erase({cfg_.name, cfg_.rank});
    }
    throw_deferred();
    if (cfg_.rank == 0 && controller_) {
        try {
            controller_->request(Deregister{app_id_, cfg_.rank});
        } catch (const std::exception &) {
            // controller may already be gone at teardown
        }
    }
    return stats();
}

std::vector<CommitStats> Session::stats() const {
    std::lock_guard lk(mu_);
    return stats_;
}

void Session::set_fault(const FaultSpec &f) {
    std::lock_guard lk(fault_mu_);
    fault_ = f;
}

void Session::write_stats_csv(std::ostream &out,
                              const std::vector<CommitStats> &stats) {
    out << "commit,version,t_copy_us,t_blocked_us,t_transfer_us,mode\n";
    std::size_t i = 0;
    for (const auto &s : stats) {
        out << i++ << ',' << s.version << ',' << s.t_copy_us << ','
            << s.t_blocked_us << ',' << s.t_transfer_us << ','
            << (s.sync_mode ? "SYNC" : "ASYNC") << '\n';
    }
}

} // namespace icheck::client
