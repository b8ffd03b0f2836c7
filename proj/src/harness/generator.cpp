// SPDX-License-Identifier: Apache-2.0
#include "icheck/harness/generator.hpp"

namespace icheck::harness {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t element_block(std::uint64_t seed, std::uint64_t iter,
                            std::uint64_t gidx, std::uint64_t block) {
    return splitmix64(seed * 0xA24BAED4963EE407ull ^ iter * 0x9FB21C651E98DF25ull ^
                      gidx * 0xD6E8FEB86659FD93ull ^ block);
}

void write_element(std::byte *dst, std::uint32_t elem_size, std::uint64_t seed,
                   std::uint64_t iter, std::uint64_t gidx) {
    dst[0] = static_cast<std::byte>(iter & 0xFF);
    if (elem_size > 1)
        dst[1] = static_cast<std::byte>((iter >> 8) & 0xFF);
    for (std::uint32_t j = 2; j < elem_size; ++j) {
        const std::uint64_t block = element_block(seed, iter, gidx, j / 8);
        dst[j] = static_cast<std::byte>((block >> (8 * (j % 8))) & 0xFF);
    }
}

void fill_buffer(std::span<std::byte> buf, std::uint32_t elem_size,
                 const Layout &layout, Rank rank, std::uint64_t seed,
                 std::uint64_t iter) {
    const std::uint64_t count = owned_count(layout, rank);
    for (std::uint64_t j = 0; j < count; ++j)
        write_element(buf.data() + j * elem_size, elem_size, seed, iter,
                      global_index(layout, rank, j));
}

std::uint16_t decode_iter(std::span<const std::byte> buf, std::uint32_t elem_size,
                          std::uint64_t index) {
    const std::byte *p = buf.data() + index * elem_size;
    std::uint16_t iter = static_cast<std::uint8_t>(p[0]);
    if (elem_size > 1)
        iter |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(p[1])) << 8;
    return iter;
}

std::optional<Divergence> verify_buffer(std::span<const std::byte> buf,
                                        std::uint32_t elem_size,
                                        const Layout &layout, Rank rank,
                                        std::uint64_t seed, std::uint64_t iter) {
    const std::uint64_t count = owned_count(layout, rank);
    if (buf.size() != count * elem_size)
        return Divergence{0, 0, 0,
                          "buffer holds " + std::to_string(buf.size()) +
                              " bytes, expected " +
                              std::to_string(count * elem_size)};
    std::byte expect[64];
    for (std::uint64_t j = 0; j < count; ++j) {
        const std::uint64_t g = global_index(layout, rank, j);
        for (std::uint32_t off = 0; off < elem_size; off += 64) {
            const std::uint32_t n = std::min<std::uint32_t>(64, elem_size - off);
            for (std::uint32_t k = 0; k < n; ++k) {
                const std::uint32_t byte_in_elem = off + k;
                std::byte want;
                if (byte_in_elem == 0)
                    want = static_cast<std::byte>(iter & 0xFF);
                else if (byte_in_elem == 1)
                    want = static_cast<std::byte>((iter >> 8) & 0xFF);
                else
                    want = static_cast<std::byte>(
                        (element_block(seed, iter, g, byte_in_elem / 8) >>
                         (8 * (byte_in_elem % 8))) &
                        0xFF);
                expect[k] = want;
            }
            const std::uint64_t at = j * elem_size + off;
            for (std::uint32_t k = 0; k < n; ++k) {
                if (buf[at + k] != expect[k])
                    return Divergence{j, g, at + k,
                                      "byte mismatch at element " + std::to_string(j)};
            }
        }
    }
    return std::nullopt;
}

std::optional<Divergence> verify_uniform_iter(std::span<const std::byte> buf,
                                              std::uint32_t elem_size) {
    if (buf.empty())
        return std::nullopt;
    const std::uint64_t count = buf.size() / elem_size;
    const std::uint16_t first = decode_iter(buf, elem_size, 0);
    for (std::uint64_t j = 1; j < count; ++j)
        if (decode_iter(buf, elem_size, j) != first)
            return Divergence{j, 0, j * elem_size,
                              "element stamped with iteration " +
                                  std::to_string(decode_iter(buf, elem_size, j)) +
                                  ", first element has " + std::to_string(first)};
    return std::nullopt;
}

} // namespace icheck::harness
