// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace icheck {

using AppId = std::uint64_t;
using AgentId = std::uint64_t;
using Rank = std::uint32_t;
using Version = std::uint64_t;
using Epoch = std::uint64_t;

enum class DistributionScheme : std::uint8_t { Block = 0, Cyclic = 1 };

enum class ProcessType : std::uint8_t { Initial = 0, Joining = 1 };

enum class StorageLevel : std::uint8_t { Memory = 0, Pfs = 1, Both = 2 };

enum class RankStatus : std::uint8_t { Pending = 0, Committed = 1 };

const char *to_string(DistributionScheme s);
const char *to_string(StorageLevel s);

// One checkpointable data region. count_per_rank is indexed by rank and must
// stay consistent with the scheme over the global element count.
struct RegionDescriptor {
    std::string region_id;
    std::uint32_t elem_size = 0;
    std::vector<std::uint64_t> count_per_rank;
    DistributionScheme scheme = DistributionScheme::Block;

    std::uint64_t total_elems() const;
    std::uint64_t total_bytes() const;

    bool operator==(const RegionDescriptor &) const = default;
};

struct AgentAssignment {
    AgentId agent_id = 0;
    std::string node_id;
    std::string endpoint;
    std::vector<Rank> ranks; // sorted, non-empty

    bool serves(Rank r) const;

    bool operator==(const AgentAssignment &) const = default;
};

// Coordinated checkpoint version. COMPLETE iff every rank committed.
struct CheckpointVersion {
    Version version = 0;
    Epoch adapt_epoch = 0;
    std::vector<RankStatus> rank_status;                           // indexed by rank
    std::vector<StorageLevel> storage_level;                       // indexed by rank
    std::map<std::pair<Rank, std::string>, std::uint32_t> checksums; // (rank, region) -> crc
    std::uint64_t timestamp_ms = 0;

    bool complete() const;
};

struct NodeStats {
    std::string node_id;
    std::uint64_t mem_capacity = 0;
    std::uint64_t mem_used = 0;
    double bw_used = 0.0;       // bytes/sec over the last sample window
    double mem_predicted = 0.0; // EWMA
    double bw_predicted = 0.0;  // EWMA
    std::uint64_t sample_time_ms = 0;

    bool operator==(const NodeStats &) const = default;
};

// Controller-side registry entry for one application.
struct ApplicationRecord {
    AppId app_id = 0;
    std::string name;
    std::uint32_t world_size = 0;
    std::vector<RegionDescriptor> regions;
    std::vector<AgentAssignment> assignments;
    std::vector<CheckpointVersion> versions; // ordered by version
    Epoch adapt_epoch = 0;
};

// Every rank in [0, world) appears in exactly one assignment.
bool assignments_cover_world(const std::vector<AgentAssignment> &assignments,
                             std::uint32_t world_size);

std::uint64_t now_ms();

} // namespace icheck
