// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "icheck/core/types.hpp"
#include "icheck/protocol/wire.hpp"

namespace icheck::agent {

struct EntryKey {
    AppId app_id = 0;
    Version version = 0;
    Rank rank = 0;
    std::string region_id;

    auto operator<=>(const EntryKey &) const = default;
};

struct SnapshotKey {
    AppId app_id = 0;
    Epoch epoch = 0;
    Rank rank = 0;
    std::string region_id;

    auto operator<=>(const SnapshotKey &) const = default;
};

struct Entry {
    proto::Blob bytes;
    std::uint64_t length = 0; // stays valid after a memory purge
    std::uint32_t crc = 0;
    StorageLevel storage = StorageLevel::Memory;
    Epoch epoch = 0;
    std::uint64_t stored_ms = 0;
};

// In-memory staging tier. bytes_staged() tracks exactly the buffer bytes
// held in memory; the invariant is re-checked after every mutation.
class StagingStore {
  public:
    void put(const EntryKey &key, proto::Blob bytes, std::uint32_t crc, Epoch epoch);

    // Copies out an entry; verifies the stored checksum on read.
    // Returns nullopt when absent or purged to PFS-only.
    std::optional<Entry> get(const EntryKey &key) const;
    std::optional<Entry> meta(const EntryKey &key) const; // no bytes, no verify

    void put_snapshot(const SnapshotKey &key, proto::Blob bytes, std::uint32_t crc);
    std::optional<Entry> get_snapshot(const SnapshotKey &key) const;
    // Blocks until the snapshot arrives or timeout_ms elapses.
    std::optional<Entry> await_snapshot(const SnapshotKey &key, int timeout_ms) const;

    void mark_flushed(AppId app, Version version, const std::vector<Rank> &ranks);
    // Releases memory for flushed entries; metadata stays for PFS loads.
    void purge_flushed(AppId app);
    void erase_versions_below(AppId app, Epoch epoch, Version min_keep);
    void drop_snapshots_below(AppId app, Epoch epoch);
    void erase_all(AppId app);
    void erase(const EntryKey &key);
    void erase_snapshot(const SnapshotKey &key);

    std::uint64_t bytes_staged() const;

    // All keys for (app, version) restricted to the given ranks.
    std::vector<EntryKey> keys_for(AppId app, Version version,
                                   const std::vector<Rank> &ranks) const;
    std::vector<EntryKey> all_keys(AppId app) const;
    std::vector<SnapshotKey> all_snapshot_keys(AppId app) const;

  private:
    void bump(std::int64_t delta);
    void check_accounting() const; // throws CorruptStateError on drift

    mutable std::mutex mu_;
    mutable std::condition_variable snap_cv_;
    std::map<EntryKey, Entry> entries_;
    std::map<SnapshotKey, Entry> snapshots_;
    std::uint64_t bytes_staged_ = 0;
};

} // namespace icheck::agent
