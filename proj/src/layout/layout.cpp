// SPDX-License-Identifier: Apache-2.0
#include "icheck/layout/layout.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

#include "icheck/core/errors.hpp"

namespace icheck {

namespace {

void require_p(std::uint32_t p) {
    if (p == 0)
        throw std::invalid_argument("process count must be >= 1");
}

std::uint64_t block_count(std::uint64_t n, std::uint32_t p, Rank r) {
    const std::uint64_t q = n / p;
    const std::uint64_t rem = n % p;
    return q + (r < rem ? 1 : 0);
}

std::uint64_t block_offset(std::uint64_t n, std::uint32_t p, Rank r) {
    const std::uint64_t q = n / p;
    const std::uint64_t rem = n % p;
    return r * q + std::min<std::uint64_t>(r, rem);
}

std::uint64_t cyclic_count(std::uint64_t n, std::uint32_t p, Rank r) {
    if (r >= n)
        return 0;
    return (n - r + p - 1) / p;
}

} // namespace

std::vector<Extent> block_partition(std::uint64_t total_n, std::uint32_t p) {
    require_p(p);
    std::vector<Extent> out(p);
    for (Rank r = 0; r < p; ++r)
        out[r] = {block_offset(total_n, p, r), block_count(total_n, p, r)};
    return out;
}

std::pair<Rank, std::uint64_t> cyclic_owner(std::uint64_t i, std::uint32_t p) {
    require_p(p);
    return {static_cast<Rank>(i % p), i / p};
}

std::uint64_t owned_count(const Layout &layout, Rank r) {
    require_p(layout.p);
    if (r >= layout.p)
        throw std::invalid_argument("rank out of range");
    if (layout.scheme == DistributionScheme::Block)
        return block_count(layout.total_n, layout.p, r);
    return cyclic_count(layout.total_n, layout.p, r);
}

std::pair<Rank, std::uint64_t> owner_of(const Layout &layout, std::uint64_t g) {
    require_p(layout.p);
    if (g >= layout.total_n)
        throw std::invalid_argument("global index out of range");
    if (layout.scheme == DistributionScheme::Cyclic)
        return cyclic_owner(g, layout.p);
    const std::uint64_t q = layout.total_n / layout.p;
    const std::uint64_t rem = layout.total_n % layout.p;
    const std::uint64_t boundary = rem * (q + 1);
    if (g < boundary) {
        const Rank r = static_cast<Rank>(g / (q + 1));
        return {r, g - static_cast<std::uint64_t>(r) * (q + 1)};
    }
    const std::uint64_t past = g - boundary;
    const Rank r = static_cast<Rank>(rem + past / q);
    return {r, past % q};
}

std::uint64_t global_index(const Layout &layout, Rank r, std::uint64_t local) {
    require_p(layout.p);
    if (r >= layout.p)
        throw std::invalid_argument("rank out of range");
    if (layout.scheme == DistributionScheme::Cyclic)
        return static_cast<std::uint64_t>(r) + local * layout.p;
    return block_offset(layout.total_n, layout.p, r) + local;
}

std::optional<std::string> validate_counts(std::span<const std::uint64_t> counts,
                                           DistributionScheme scheme) {
    if (counts.empty())
        return "no ranks";
    const auto p = static_cast<std::uint32_t>(counts.size());
    std::uint64_t n = 0;
    for (auto c : counts)
        n += c;
    for (Rank r = 0; r < p; ++r) {
        const std::uint64_t expect = scheme == DistributionScheme::Block
                                         ? block_count(n, p, r)
                                         : cyclic_count(n, p, r);
        if (counts[r] != expect)
            return "rank " + std::to_string(r) + " count " +
                   std::to_string(counts[r]) + " inconsistent with " +
                   std::string(to_string(scheme)) + " over N=" + std::to_string(n) +
                   " (expected " + std::to_string(expect) + ")";
    }
    return std::nullopt;
}

RedistributionPlan redistribution_plan(const Layout &old_layout,
                                       const Layout &new_layout) {
    require_p(old_layout.p);
    require_p(new_layout.p);
    if (old_layout.total_n != new_layout.total_n)
        throw std::invalid_argument("total element count differs between layouts");

    RedistributionPlan plan;
    plan.old_layout = old_layout;
    plan.new_layout = new_layout;
    const std::uint64_t n = old_layout.total_n;
    if (n == 0)
        return plan;

    const bool both_block = old_layout.scheme == DistributionScheme::Block &&
                            new_layout.scheme == DistributionScheme::Block;
    if (both_block) {
        // Interval intersection: walk each destination extent across the
        // source extents it overlaps.
        const auto old_parts = block_partition(n, old_layout.p);
        const auto new_parts = block_partition(n, new_layout.p);
        for (Rank s = 0; s < new_layout.p; ++s) {
            const auto &dst = new_parts[s];
            std::uint64_t covered = 0;
            while (covered < dst.length) {
                const std::uint64_t g = dst.offset + covered;
                const auto [src, src_local] = owner_of(old_layout, g);
                const std::uint64_t src_end =
                    old_parts[src].offset + old_parts[src].length;
                const std::uint64_t run =
                    std::min(dst.length - covered, src_end - g);
                plan.transfers.push_back({src, src_local, s, covered, run});
                covered += run;
            }
        }
        return plan;
    }

    // Generic per-element walk in destination order with run coalescing.
    for (Rank s = 0; s < new_layout.p; ++s) {
        const std::uint64_t count = owned_count(new_layout, s);
        for (std::uint64_t j = 0; j < count; ++j) {
            const std::uint64_t g = global_index(new_layout, s, j);
            const auto [src, src_local] = owner_of(old_layout, g);
            if (!plan.transfers.empty()) {
                auto &last = plan.transfers.back();
                if (last.dst_rank == s && last.src_rank == src &&
                    last.dst_offset + last.run_len == j &&
                    last.src_offset + last.run_len == src_local) {
                    ++last.run_len;
                    continue;
                }
            }
            plan.transfers.push_back({src, src_local, s, j, 1});
        }
    }
    return plan;
}

std::optional<std::string> verify_plan(const RedistributionPlan &plan) {
    std::uint64_t moved = 0;
    std::vector<std::vector<Extent>> per_dst(plan.new_layout.p);
    std::vector<std::vector<Extent>> per_src(plan.old_layout.p);
    for (const auto &t : plan.transfers) {
        if (t.src_rank >= plan.old_layout.p || t.dst_rank >= plan.new_layout.p)
            return "transfer references out-of-range rank";
        if (t.run_len == 0)
            return "zero-length run";
        moved += t.run_len;
        per_dst[t.dst_rank].push_back({t.dst_offset, t.run_len});
        per_src[t.src_rank].push_back({t.src_offset, t.run_len});
    }
    if (moved != plan.new_layout.total_n)
        return "plan moves " + std::to_string(moved) + " of " +
               std::to_string(plan.new_layout.total_n) + " elements";

    auto tiles = [](std::vector<Extent> &ext, std::uint64_t want) -> bool {
        std::sort(ext.begin(), ext.end(), [](const Extent &a, const Extent &b) {
            return a.offset < b.offset;
        });
        std::uint64_t at = 0;
        for (const auto &e : ext) {
            if (e.offset != at)
                return false;
            at += e.length;
        }
        return at == want;
    };
    for (Rank s = 0; s < plan.new_layout.p; ++s)
        if (!tiles(per_dst[s], owned_count(plan.new_layout, s)))
            return "destination rank " + std::to_string(s) +
                   " not covered exactly once";
    for (Rank r = 0; r < plan.old_layout.p; ++r)
        if (!tiles(per_src[r], owned_count(plan.old_layout, r)))
            return "source rank " + std::to_string(r) +
                   " not consumed exactly once";
    return std::nullopt;
}

std::vector<std::vector<std::byte>>
apply_plan(const RedistributionPlan &plan,
           std::span<const std::span<const std::byte>> source_buffers,
           std::uint32_t elem_size) {
    if (elem_size == 0)
        throw std::invalid_argument("elem_size must be >= 1");
    if (source_buffers.size() != plan.old_layout.p)
        throw CorruptStateError("source buffer count does not match old layout");
    for (Rank r = 0; r < plan.old_layout.p; ++r) {
        const std::uint64_t want = owned_count(plan.old_layout, r) * elem_size;
        if (source_buffers[r].size() != want)
            throw CorruptStateError("source buffer for rank " + std::to_string(r) +
                                    " has " + std::to_string(source_buffers[r].size()) +
                                    " bytes, expected " + std::to_string(want));
    }

    std::vector<std::vector<std::byte>> out(plan.new_layout.p);
    for (Rank s = 0; s < plan.new_layout.p; ++s)
        out[s].resize(owned_count(plan.new_layout, s) * elem_size);

    for (const auto &t : plan.transfers) {
        const auto *src = source_buffers[t.src_rank].data() + t.src_offset * elem_size;
        auto *dst = out[t.dst_rank].data() + t.dst_offset * elem_size;
        std::memcpy(dst, src, t.run_len * elem_size);
    }
    return out;
}

std::vector<std::vector<std::byte>>
apply_plan(const RedistributionPlan &plan,
           const std::vector<std::vector<std::byte>> &source_buffers,
           std::uint32_t elem_size) {
    std::vector<std::span<const std::byte>> views;
    views.reserve(source_buffers.size());
    for (const auto &b : source_buffers)
        views.emplace_back(b.data(), b.size());
    return apply_plan(plan, std::span<const std::span<const std::byte>>(views),
                      elem_size);
}

} // namespace icheck
