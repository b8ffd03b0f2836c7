// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "icheck/core/errors.hpp"
#include "icheck/layout/layout.hpp"
#include "support/oracles.hpp"

using namespace icheck;
using icheck::testing::enumerate_owned;
using icheck::testing::gather_scatter;
using icheck::testing::naive_block;
using icheck::testing::naive_cyclic;
using icheck::testing::random_rank_buffers;

namespace {
const DistributionScheme kSchemes[] = {DistributionScheme::Block,
                                       DistributionScheme::Cyclic};
}

TEST_CASE("block_partition splits 10 over 4 as 3,3,2,2") {
    const auto parts = block_partition(10, 4);
    const std::vector<Extent> want = {{0, 3}, {3, 3}, {6, 2}, {8, 2}};
    CHECK(parts == want);
}

TEST_CASE("block_partition single rank owns everything") {
    const auto parts = block_partition(7, 1);
    REQUIRE(parts.size() == 1);
    CHECK(parts[0] == Extent{0, 7});
}

TEST_CASE("block_partition of empty data") {
    const auto parts = block_partition(0, 3);
    CHECK(parts == std::vector<Extent>{{0, 0}, {0, 0}, {0, 0}});
}

TEST_CASE("block_partition rejects zero ranks") {
    CHECK_THROWS_AS(block_partition(5, 0), std::invalid_argument);
}

TEST_CASE("block_partition matches sequential-dealing oracle") {
    for (std::uint64_t n : {0, 1, 2, 5, 17, 64, 255, 256})
        for (std::uint32_t p = 1; p <= 16; ++p)
            CHECK(block_partition(n, p) == naive_block(n, p));
}

TEST_CASE("cyclic_owner examples") {
    CHECK(cyclic_owner(4, 2) == std::pair<Rank, std::uint64_t>{0, 2});
    CHECK(cyclic_owner(0, 9) == std::pair<Rank, std::uint64_t>{0, 0});
    CHECK(cyclic_owner(7, 1) == std::pair<Rank, std::uint64_t>{0, 7});
}

TEST_CASE("cyclic_owner matches round-robin dealing") {
    for (std::uint32_t p = 1; p <= 8; ++p) {
        const auto owned = naive_cyclic(40, p);
        for (Rank r = 0; r < p; ++r)
            for (std::size_t j = 0; j < owned[r].size(); ++j)
                CHECK(cyclic_owner(owned[r][j], p) ==
                      std::pair<Rank, std::uint64_t>{r, j});
    }
}

TEST_CASE("owned_count examples") {
    CHECK(owned_count({10, 4, DistributionScheme::Block}, 0) == 3);
    CHECK(owned_count({5, 2, DistributionScheme::Cyclic}, 0) == 3);
    CHECK(owned_count({5, 5, DistributionScheme::Block}, 2) == 1);
    CHECK(owned_count({5, 5, DistributionScheme::Cyclic}, 2) == 1);
    CHECK_THROWS_AS(owned_count({5, 2, DistributionScheme::Block}, 2),
                    std::invalid_argument);
}

TEST_CASE("ownership maps partition the index space for both schemes") {
    for (auto scheme : kSchemes)
        for (std::uint64_t n : {0, 1, 7, 40, 101})
            for (std::uint32_t p = 1; p <= 8; ++p) {
                const Layout l{n, p, scheme};
                const auto owned = enumerate_owned(l);
                std::uint64_t sum = 0;
                for (Rank r = 0; r < p; ++r) {
                    CHECK(owned_count(l, r) == owned[r].size());
                    sum += owned[r].size();
                    for (std::size_t j = 0; j < owned[r].size(); ++j) {
                        CHECK(global_index(l, r, j) == owned[r][j]);
                        CHECK(owner_of(l, owned[r][j]) ==
                              std::pair<Rank, std::uint64_t>{r, j});
                    }
                }
                CHECK(sum == n);
            }
}

TEST_CASE("block balance spread is at most one") {
    for (std::uint64_t n = 0; n <= 64; ++n)
        for (std::uint32_t p = 1; p <= 16; ++p) {
            std::uint64_t lo = UINT64_MAX, hi = 0;
            for (Rank r = 0; r < p; ++r) {
                const auto c = owned_count({n, p, DistributionScheme::Block}, r);
                lo = std::min(lo, c);
                hi = std::max(hi, c);
            }
            CHECK(hi - lo <= 1);
        }
}

TEST_CASE("validate_counts accepts formula counts and rejects others") {
    for (auto scheme : kSchemes) {
        const Layout l{10, 4, scheme};
        std::vector<std::uint64_t> counts;
        for (Rank r = 0; r < 4; ++r)
            counts.push_back(owned_count(l, r));
        CHECK(!validate_counts(counts, scheme).has_value());
        counts[1] += 1;
        CHECK(validate_counts(counts, scheme).has_value());
    }
}

TEST_CASE("redistribution plan for block 2 to 4 over 8 elements") {
    const auto plan = redistribution_plan({8, 2, DistributionScheme::Block},
                                          {8, 4, DistributionScheme::Block});
    const std::vector<Transfer> want = {
        {0, 0, 0, 0, 2}, {0, 2, 1, 0, 2}, {1, 0, 2, 0, 2}, {1, 2, 3, 0, 2}};
    CHECK(plan.transfers == want);
    CHECK(!verify_plan(plan).has_value());
}

TEST_CASE("identity redistribution is one run per rank") {
    for (auto scheme : kSchemes) {
        const Layout l{12, 3, scheme};
        const auto plan = redistribution_plan(l, l);
        REQUIRE(plan.transfers.size() == 3);
        for (Rank r = 0; r < 3; ++r)
            CHECK(plan.transfers[r] == Transfer{r, 0, r, 0, owned_count(l, r)});
    }
}

TEST_CASE("block to cyclic element-level mapping") {
    // Brute-force per-element map for all 4 elements.
    const Layout oldl{4, 2, DistributionScheme::Block};
    const Layout newl{4, 2, DistributionScheme::Cyclic};
    const auto plan = redistribution_plan(oldl, newl);
    CHECK(!verify_plan(plan).has_value());
    // global 1: old owner (0, local 1); cyclic owner (1, local 0).
    bool found = false;
    for (const auto &t : plan.transfers) {
        for (std::uint64_t k = 0; k < t.run_len; ++k) {
            const auto g = global_index(oldl, t.src_rank, t.src_offset + k);
            if (g == 1) {
                CHECK(t.src_rank == 0);
                CHECK(t.src_offset + k == 1);
                CHECK(t.dst_rank == 1);
                CHECK(t.dst_offset + k == 0);
                found = true;
            }
        }
    }
    CHECK(found);
}

TEST_CASE("redistribution plan rejects differing element totals") {
    CHECK_THROWS_AS(redistribution_plan({8, 2, DistributionScheme::Block},
                                        {9, 2, DistributionScheme::Block}),
                    std::invalid_argument);
}

TEST_CASE("plans are sorted by destination and satisfy conservation") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::uint64_t n = rng() % 500;
        const Layout oldl{n, static_cast<std::uint32_t>(rng() % 8 + 1),
                          kSchemes[rng() % 2]};
        const Layout newl{n, static_cast<std::uint32_t>(rng() % 8 + 1),
                          kSchemes[rng() % 2]};
        const auto plan = redistribution_plan(oldl, newl);
        CHECK(!verify_plan(plan).has_value());
        for (std::size_t i = 1; i < plan.transfers.size(); ++i) {
            const auto &a = plan.transfers[i - 1];
            const auto &b = plan.transfers[i];
            CHECK((a.dst_rank < b.dst_rank ||
                   (a.dst_rank == b.dst_rank && a.dst_offset < b.dst_offset)));
        }
    }
}

TEST_CASE("apply_plan identity returns inputs byte-equal") {
    const Layout l{100, 4, DistributionScheme::Cyclic};
    const auto src = random_rank_buffers(l, 8, 99);
    const auto out = apply_plan(redistribution_plan(l, l), src, 8);
    CHECK(out == src);
}

TEST_CASE("apply_plan block expand places expected elements") {
    // Elements 0..7 as single bytes, 2 -> 4 ranks: new rank 2 holds {4, 5}.
    const Layout oldl{8, 2, DistributionScheme::Block};
    const Layout newl{8, 4, DistributionScheme::Block};
    std::vector<std::vector<std::byte>> src(2);
    for (Rank r = 0; r < 2; ++r)
        for (std::uint64_t j = 0; j < 4; ++j)
            src[r].push_back(static_cast<std::byte>(r * 4 + j));
    const auto out = apply_plan(redistribution_plan(oldl, newl), src, 1);
    CHECK(out[2] == std::vector<std::byte>{std::byte{4}, std::byte{5}});
    CHECK(out == gather_scatter(oldl, newl, src, 1));
}

TEST_CASE("apply_plan equals gather-then-scatter oracle on random cases") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 60; ++trial) {
        const std::uint64_t n = rng() % 10001;
        const Layout oldl{n, static_cast<std::uint32_t>(rng() % 8 + 1),
                          kSchemes[rng() % 2]};
        const Layout newl{n, static_cast<std::uint32_t>(rng() % 8 + 1),
                          kSchemes[rng() % 2]};
        const std::uint32_t elem = 1u << (rng() % 4);
        const auto src = random_rank_buffers(oldl, elem, rng());
        const auto out = apply_plan(redistribution_plan(oldl, newl), src, elem);
        CHECK(out == gather_scatter(oldl, newl, src, elem));
    }
}

TEST_CASE("redistributing there and back restores buffers") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const std::uint64_t n = rng() % 300;
        const Layout a{n, static_cast<std::uint32_t>(rng() % 6 + 1), kSchemes[rng() % 2]};
        const Layout b{n, static_cast<std::uint32_t>(rng() % 6 + 1), kSchemes[rng() % 2]};
        const auto src = random_rank_buffers(a, 4, rng());
        const auto mid = apply_plan(redistribution_plan(a, b), src, 4);
        const auto back = apply_plan(redistribution_plan(b, a), mid, 4);
        CHECK(back == src);
    }
}

TEST_CASE("apply_plan rejects wrong source buffer lengths") {
    const Layout l{8, 2, DistributionScheme::Block};
    auto src = random_rank_buffers(l, 4, 1);
    src[1].pop_back();
    CHECK_THROWS_AS(apply_plan(redistribution_plan(l, l), src, 4),
                    CorruptStateError);
}
