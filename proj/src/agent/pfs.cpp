// SPDX-License-Identifier: Apache-2.0
#include "icheck/agent/pfs.hpp"

#include <cstdio>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <unistd.h>

#include <json.hpp>

#include "icheck/core/errors.hpp"

namespace icheck::pfs {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path version_dir(const std::string &root, AppId app, Epoch epoch,
                     Version version) {
    return fs::path(root) / std::to_string(app) /
           ("epoch" + std::to_string(epoch)) / ("v" + std::to_string(version));
}

fs::path region_file(const std::string &root, AppId app, Epoch epoch,
                     Version version, Rank rank, const std::string &region_id) {
    return version_dir(root, app, epoch, version) /
           ("rank" + std::to_string(rank)) / (region_id + ".bin");
}

fs::path manifest_path(const std::string &root, AppId app, Epoch epoch,
                       Version version) {
    return version_dir(root, app, epoch, version) / "manifest.json";
}

namespace {

void write_file_synced(const fs::path &path, std::span<const std::byte> bytes) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0)
        throw CorruptStateError("open " + path.string() + " failed");
    std::size_t at = 0;
    while (at < bytes.size()) {
        const ssize_t n = ::write(fd, bytes.data() + at, bytes.size() - at);
        if (n < 0) {
            ::close(fd);
            throw CorruptStateError("write " + path.string() + " failed");
        }
        at += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
}

void fsync_dir(const fs::path &dir) {
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

} // namespace

void write_region_file(const std::string &root, AppId app, Epoch epoch,
                       Version version, Rank rank, const std::string &region_id,
                       std::span<const std::byte> bytes) {
    const auto path = region_file(root, app, epoch, version, rank, region_id);
    fs::create_directories(path.parent_path());
    write_file_synced(path, bytes);
}

void write_manifest(const std::string &root, AppId app, Epoch epoch,
                    Version version, std::span<const std::byte> bytes) {
    const auto final_path = manifest_path(root, app, epoch, version);
    fs::create_directories(final_path.parent_path());
    const auto tmp = final_path.string() + ".tmp";
    write_file_synced(tmp, bytes);
    if (std::rename(tmp.c_str(), final_path.c_str()) != 0)
        throw CorruptStateError("rename manifest into place failed");
    fsync_dir(final_path.parent_path());
}

bool version_on_pfs(const std::string &root, AppId app, Epoch epoch,
                    Version version) {
    std::error_code ec;
    return fs::exists(manifest_path(root, app, epoch, version), ec);
}

proto::Blob read_region_file(const std::string &root, AppId app, Epoch epoch,
                             Version version, Rank rank,
                             const std::string &region_id) {
    const auto path = region_file(root, app, epoch, version, rank, region_id);
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CorruptStateError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto len = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    proto::Blob out(len);
    in.read(reinterpret_cast<char *>(out.data()), static_cast<std::streamsize>(len));
    if (!in)
        throw CorruptStateError("short read on " + path.string());
    return out;
}

std::optional<ManifestEntry> Manifest::find(Rank rank,
                                            const std::string &region) const {
    for (const auto &e : entries)
        if (e.rank == rank && e.region_id == region)
            return e;
    return std::nullopt;
}

proto::Blob render_manifest(const Manifest &m) {
    json j;
    j["app_name"] = m.app_name;
    j["app_id"] = m.app_id;
    j["epoch"] = m.epoch;
    j["version"] = m.version;
    j["world_size"] = m.world_size;
    j["regions"] = json::array();
    for (const auto &r : m.regions) {
        json jr;
        jr["id"] = r.region_id;
        jr["elem_size"] = r.elem_size;
        jr["scheme"] = to_string(r.scheme);
        jr["counts"] = r.count_per_rank;
        j["regions"].push_back(jr);
    }
    j["entries"] = json::array();
    for (const auto &e : m.entries) {
        char crc_hex[9];
        std::snprintf(crc_hex, sizeof crc_hex, "%08x", e.crc);
        json je;
        je["rank"] = e.rank;
        je["region"] = e.region_id;
        je["bytes"] = e.bytes;
        je["crc32"] = crc_hex;
        j["entries"].push_back(je);
    }
    const std::string s = j.dump(2);
    proto::Blob out(s.size());
    std::memcpy(out.data(), s.data(), s.size());
    return out;
}

Manifest parse_manifest(std::span<const std::byte> bytes) {
    const json j = json::parse(std::string_view(
        reinterpret_cast<const char *>(bytes.data()), bytes.size()));
    Manifest m;
    m.app_name = j.at("app_name").get<std::string>();
    m.app_id = j.at("app_id").get<AppId>();
    m.epoch = j.at("epoch").get<Epoch>();
    m.version = j.at("version").get<Version>();
    m.world_size = j.at("world_size").get<std::uint32_t>();
    for (const auto &jr : j.at("regions")) {
        RegionDescriptor r;
        r.region_id = jr.at("id").get<std::string>();
        r.elem_size = jr.at("elem_size").get<std::uint32_t>();
        r.scheme = jr.at("scheme").get<std::string>() == "cyclic"
                       ? DistributionScheme::Cyclic
                       : DistributionScheme::Block;
        r.count_per_rank = jr.at("counts").get<std::vector<std::uint64_t>>();
        m.regions.push_back(std::move(r));
    }
    for (const auto &je : j.at("entries")) {
        ManifestEntry e;
        e.rank = je.at("rank").get<Rank>();
        e.region_id = je.at("region").get<std::string>();
        e.bytes = je.at("bytes").get<std::uint64_t>();
        e.crc = static_cast<std::uint32_t>(
            std::stoul(je.at("crc32").get<std::string>(), nullptr, 16));
        m.entries.push_back(std::move(e));
    }
    return m;
}

std::optional<Manifest> load_manifest(const std::string &root, AppId app,
                                      Epoch epoch, Version version) {
    const auto path = manifest_path(root, app, epoch, version);
    std::ifstream in(path, std::ios::binary);
    if (!in)
        return std::nullopt;
    std::string s((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
    proto::Blob b(s.size());
    std::memcpy(b.data(), s.data(), s.size());
    return parse_manifest(b);
}

} // namespace icheck::pfs
