// SPDX-License-Identifier: Apache-2.0
#include "icheck/core/types.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

namespace icheck {

const char *to_string(DistributionScheme s) {
    return s == DistributionScheme::Block ? "block" : "cyclic";
}

const char *to_string(StorageLevel s) {
    switch (s) {
    case StorageLevel::Memory: return "memory";
    case StorageLevel::Pfs: return "pfs";
    case StorageLevel::Both: return "both";
    }
    return "?";
}

std::uint64_t RegionDescriptor::total_elems() const {
    return std::accumulate(count_per_rank.begin(), count_per_rank.end(),
                           std::uint64_t{0});
}

std::uint64_t RegionDescriptor::total_bytes() const {
    return total_elems() * elem_size;
}

bool AgentAssignment::serves(Rank r) const {
    return std::binary_search(ranks.begin(), ranks.end(), r);
}

bool CheckpointVersion::complete() const {
    if (rank_status.empty())
        return false;
    return std::all_of(rank_status.begin(), rank_status.end(),
                       [](RankStatus s) { return s == RankStatus::Committed; });
}

bool assignments_cover_world(const std::vector<AgentAssignment> &assignments,
                             std::uint32_t world_size) {
    std::vector<int> seen(world_size, 0);
    for (const auto &a : assignments)
        for (Rank r : a.ranks) {
            if (r >= world_size)
                return false;
            ++seen[r];
        }
    return std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; });
}

std::uint64_t now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch())
        .count();
}

} // namespace icheck
