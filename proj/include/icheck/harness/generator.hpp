// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "icheck/layout/layout.hpp"

namespace icheck::harness {

// Synthetic rank data: every element is a pure function of
// (seed, iteration, global index), with the iteration embedded in the low
// two bytes so any buffer can be dated and re-derived independently.

std::uint64_t element_block(std::uint64_t seed, std::uint64_t iter,
                            std::uint64_t gidx, std::uint64_t block);

void write_element(std::byte *dst, std::uint32_t elem_size, std::uint64_t seed,
                   std::uint64_t iter, std::uint64_t gidx);

// Fills rank r's slice of the layout.
void fill_buffer(std::span<std::byte> buf, std::uint32_t elem_size,
                 const Layout &layout, Rank rank, std::uint64_t seed,
                 std::uint64_t iter);

// The iteration stamped into the element at the given index.
std::uint16_t decode_iter(std::span<const std::byte> buf, std::uint32_t elem_size,
                          std::uint64_t index = 0);

struct Divergence {
    std::uint64_t local_index = 0;
    std::uint64_t global_index = 0;
    std::uint64_t byte_offset = 0;
    std::string detail;
};

// Byte-exact check of rank r's slice against the generator at `iter`.
std::optional<Divergence> verify_buffer(std::span<const std::byte> buf,
                                        std::uint32_t elem_size,
                                        const Layout &layout, Rank rank,
                                        std::uint64_t seed, std::uint64_t iter);

// Torn-state check: every element must carry the same iteration stamp.
std::optional<Divergence> verify_uniform_iter(std::span<const std::byte> buf,
                                              std::uint32_t elem_size);

} // namespace icheck::harness
