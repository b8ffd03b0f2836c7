// SPDX-License-Identifier: Apache-2.0
#include "icheck/agent/staging.hpp"

#include <chrono>

#include "icheck/core/crc32.hpp"
#include "icheck/core/errors.hpp"

namespace icheck::agent {

void StagingStore::put(const EntryKey &key, proto::Blob bytes, std::uint32_t crc,
                       Epoch epoch) {
    std::lock_guard lk(mu_);
    auto it = entries_.find(key);
    if (it != entries_.end())
        bump(-static_cast<std::int64_t>(it->second.bytes.size()));
    Entry e;
    e.length = bytes.size();
    e.bytes = std::move(bytes);
    e.crc = crc;
    e.storage = StorageLevel::Memory;
    e.epoch = epoch;
    e.stored_ms = now_ms();
    bump(static_cast<std::int64_t>(e.bytes.size()));
    entries_[key] = std::move(e);
    check_accounting();
}

std::optional<Entry> StagingStore::get(const EntryKey &key) const {
    std::lock_guard lk(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end() || it->second.bytes.empty() != (it->second.length == 0))
        return std::nullopt;
    if (it->second.storage == StorageLevel::Pfs)
        return std::nullopt;
    if (crc32(it->second.bytes.data(), it->second.bytes.size()) != it->second.crc)
        throw CorruptStateError("staged entry failed checksum verification");
    return it->second;
}

std::optional<Entry> StagingStore::meta(const EntryKey &key) const {
    std::lock_guard lk(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end())
        return std::nullopt;
    Entry e = it->second;
    e.bytes.clear();
    return e;
}

void StagingStore::put_snapshot(const SnapshotKey &key, proto::Blob bytes,
                                std::uint32_t crc) {
    {
        std::lock_guard lk(mu_);
        auto it = snapshots_.find(key);
        if (it != snapshots_.end())
            bump(-static_cast<std::int64_t>(it->second.bytes.size()));
        Entry e;
        e.length = bytes.size();
        e.bytes = std::move(bytes);
        e.crc = crc;
        e.storage = StorageLevel::Memory;
        e.epoch = key.epoch;
        e.stored_ms = now_ms();
        bump(static_cast<std::int64_t>(e.bytes.size()));
        snapshots_[key] = std::move(e);
        check_accounting();
    }
    snap_cv_.notify_all();
}

std::optional<Entry> StagingStore::get_snapshot(const SnapshotKey &key) const {
    std::lock_guard lk(mu_);
    auto it = snapshots_.find(key);
    if (it == snapshots_.end())
        return std::nullopt;
    if (crc32(it->second.bytes.data(), it->second.bytes.size()) != it->second.crc)
        throw CorruptStateError("snapshot failed checksum verification");
    return it->second;
}

std::optional<Entry> StagingStore::await_snapshot(const SnapshotKey &key,
                                                  int timeout_ms) const {
    std::unique_lock lk(mu_);
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(timeout_ms);
    snap_cv_.wait_until(lk, deadline,
                        [&] { return snapshots_.count(key) > 0; });
    auto it = snapshots_.find(key);
    if (it == snapshots_.end())
        return std::nullopt;
    return it->second;
}

void StagingStore::mark_flushed(AppId app, Version version,
                                const std::vector<Rank> &ranks) {
    std::lock_guard lk(mu_);
    for (auto &[key, e] : entries_) {
        if (key.app_id != app || key.version != version)
            continue;
        for (Rank r : ranks)
            if (key.rank == r && e.storage == StorageLevel::Memory)
                e.storage = StorageLevel::Both;
    }
}

void StagingStore::purge_flushed(AppId app) {
    std::lock_guard lk(mu_);
    for (auto &[key, e] : entries_) {
        if (key.app_id != app || e.storage != StorageLevel::Both)
            continue;
        bump(-static_cast<std::int64_t>(e.bytes.size()));
        e.bytes = proto::Blob{};
        e.bytes.shrink_to_fit();
        e.storage = StorageLevel::Pfs;
    }
    check_accounting();
}

void StagingStore::erase_versions_below(AppId app, Epoch epoch, Version min_keep) {
    std::lock_guard lk(mu_);
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (it->first.app_id == app && it->second.epoch == epoch &&
            it->first.version < min_keep) {
            bump(-static_cast<std::int64_t>(it->second.bytes.size()));
            it = entries_.erase(it);
        } else {
            ++it;
        }
    }
    check_accounting();
}

void StagingStore::drop_snapshots_below(AppId app, Epoch epoch) {
    std::lock_guard lk(mu_);
    for (auto it = snapshots_.begin(); it != snapshots_.end();) {
        if (it->first.app_id == app && it->first.epoch < epoch) {
            bump(-static_cast<std::int64_t>(it->second.bytes.size()));
            it = snapshots_.erase(it);
        } else {
            ++it;
        }
    }
    check_accounting();
}

void StagingStore::erase_all(AppId app) {
    std::lock_guard lk(mu_);
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (it->first.app_id == app) {
            bump(-static_cast<std::int64_t>(it->second.bytes.size()));
            it = entries_.erase(it);
        } else {
            ++it;
        }
    }
    for (auto it = snapshots_.begin(); it != snapshots_.end();) {
        if (it->first.app_id == app) {
            bump(-static_cast<std::int64_t>(it->second.bytes.size()));
            it = snapshots_.erase(it);
        } else {
            ++it;
        }
    }
    check_accounting();
}

void StagingStore::erase(const EntryKey &key) {
    std::lock_guard lk(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end())
        return;
    bump(-static_cast<std::int64_t>(it->second.bytes.size()));
    entries_.erase(it);
    check_accounting();
}

void StagingStore::erase_snapshot(const SnapshotKey &key) {
    std::lock_guard lk(mu_);
    auto it = snapshots_.find(key);
    if (it == snapshots_.end())
        return;
    bump(-static_cast<std::int64_t>(it->second.bytes.size()));
    snapshots_.erase(it);
    check_accounting();
}

std::uint64_t StagingStore::bytes_staged() const {
    std::lock_guard lk(mu_);
    return bytes_staged_;
}

std::vector<EntryKey> StagingStore::keys_for(AppId app, Version version,
                                             const std::vector<Rank> &ranks) const {
    std::lock_guard lk(mu_);
    std::vector<EntryKey> out;
    for (const auto &[key, e] : entries_) {
        if (key.app_id != app || key.version != version)
            continue;
        for (Rank r : ranks)
            if (key.rank == r)
                out.push_back(key);
    }
    return out;
}

std::vector<EntryKey> StagingStore::all_keys(AppId app) const {
    std::lock_guard lk(mu_);
    std::vector<EntryKey> out;
    for (const auto &[key, e] : entries_)
        if (key.app_id == app)
            out.push_back(key);
    return out;
}

std::vector<SnapshotKey> StagingStore::all_snapshot_keys(AppId app) const {
    std::lock_guard lk(mu_);
    std::vector<SnapshotKey> out;
    for (const auto &[key, e] : snapshots_)
        if (key.app_id == app)
            out.push_back(key);
    return out;
}

void StagingStore::bump(std::int64_t delta) {
    bytes_staged_ = static_cast<std::uint64_t>(
        static_cast<std::int64_t>(bytes_staged_) + delta);
}

void StagingStore::check_accounting() const {
    std::uint64_t actual = 0;
    for (const auto &[key, e] : entries_)
        actual += e.bytes.size();
    for (const auto &[key, e] : snapshots_)
        actual += e.bytes.size();
    if (actual != bytes_staged_)
        throw CorruptStateError("bytes_staged accounting drifted");
}

} // namespace icheck::agent
