// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icheck/core/types.hpp"

namespace icheck {

// Ownership of a global array of total_n elements by p ranks.
struct Layout {
    std::uint64_t total_n = 0;
    std::uint32_t p = 1;
    DistributionScheme scheme = DistributionScheme::Block;

    bool operator==(const Layout &) const = default;
};

struct Extent {
    std::uint64_t offset = 0;
    std::uint64_t length = 0;

    bool operator==(const Extent &) const = default;
};

// Balanced block partition: with q = N/P and rem = N%P, rank r owns
// q+1 elements if r < rem else q, at offset r*q + min(r, rem).
std::vector<Extent> block_partition(std::uint64_t total_n, std::uint32_t p);

// Cyclic ownership of global index i: (i mod p, i div p).
std::pair<Rank, std::uint64_t> cyclic_owner(std::uint64_t i, std::uint32_t p);

std::uint64_t owned_count(const Layout &layout, Rank r);

// Inverses of the per-scheme ownership maps.
std::pair<Rank, std::uint64_t> owner_of(const Layout &layout, std::uint64_t global_index);
std::uint64_t global_index(const Layout &layout, Rank r, std::uint64_t local_index);

// Checks a per-rank count vector against the scheme's formula.
// Returns an error description, or nullopt when consistent.
std::optional<std::string> validate_counts(std::span<const std::uint64_t> counts,
                                           DistributionScheme scheme);

// One run of elements moving between rank-local coordinate spaces.
struct Transfer {
    Rank src_rank = 0;
    std::uint64_t src_offset = 0; // element units, source-local
    Rank dst_rank = 0;
    std::uint64_t dst_offset = 0; // element units, destination-local
    std::uint64_t run_len = 0;

    bool operator==(const Transfer &) const = default;
};

// Run-length-coalesced element moves converting `old_layout` into
// `new_layout`. Runs are sorted by (dst_rank, dst_offset) and cover every
// destination-local index exactly once.
struct RedistributionPlan {
    std::vector<Transfer> transfers;
    Layout old_layout;
    Layout new_layout;
};

RedistributionPlan redistribution_plan(const Layout &old_layout, const Layout &new_layout);

// Conservation and coverage check; returns an error description on violation.
std::optional<std::string> verify_plan(const RedistributionPlan &plan);

// Executes a plan over per-old-rank buffers; returns per-new-rank buffers.
// Source buffer r must hold owned_count(old, r) * elem_size bytes.
std::vector<std::vector<std::byte>>
apply_plan(const RedistributionPlan &plan,
           std::span<const std::span<const std::byte>> source_buffers,
           std::uint32_t elem_size);

std::vector<std::vector<std::byte>>
apply_plan(const RedistributionPlan &plan,
           const std::vector<std::vector<std::byte>> &source_buffers,
           std::uint32_t elem_size);

} // namespace icheck
