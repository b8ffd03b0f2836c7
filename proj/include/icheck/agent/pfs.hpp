// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icheck/core/types.hpp"
#include "icheck/protocol/wire.hpp"

namespace icheck::pfs {

// File-backed tier layout:
//   <root>/<app_id>/epoch<E>/v<V>/rank<R>/<region_id>.bin
//   <root>/<app_id>/epoch<E>/v<V>/manifest.json   (commit point, via rename)

std::filesystem::path version_dir(const std::string &root, AppId app, Epoch epoch,
                                  Version version);
std::filesystem::path region_file(const std::string &root, AppId app, Epoch epoch,
                                  Version version, Rank rank,
                                  const std::string &region_id);
std::filesystem::path manifest_path(const std::string &root, AppId app,
                                    Epoch epoch, Version version);

// Test hook: abort the flush at a chosen point to exercise crash recovery.
enum class CrashPoint { None, BeforeManifest };

void write_region_file(const std::string &root, AppId app, Epoch epoch,
                       Version version, Rank rank, const std::string &region_id,
                       std::span<const std::byte> bytes);

// Writes manifest bytes to a temp file, fsyncs, then renames into place.
void write_manifest(const std::string &root, AppId app, Epoch epoch,
                    Version version, std::span<const std::byte> bytes);

bool version_on_pfs(const std::string &root, AppId app, Epoch epoch,
                    Version version);

proto::Blob read_region_file(const std::string &root, AppId app, Epoch epoch,
                             Version version, Rank rank,
                             const std::string &region_id);

struct ManifestEntry {
    Rank rank = 0;
    std::string region_id;
    std::uint64_t bytes = 0;
    std::uint32_t crc = 0;
};

struct Manifest {
    std::string app_name;
    AppId app_id = 0;
    Epoch epoch = 0;
    Version version = 0;
    std::uint32_t world_size = 0;
    std::vector<RegionDescriptor> regions;
    std::vector<ManifestEntry> entries;

    std::optional<ManifestEntry> find(Rank rank, const std::string &region) const;
};

proto::Blob render_manifest(const Manifest &m);
Manifest parse_manifest(std::span<const std::byte> bytes);
std::optional<Manifest> load_manifest(const std::string &root, AppId app,
                                      Epoch epoch, Version version);

} // namespace icheck::pfs
