// SPDX-License-Identifier: Apache-2.0
#include "icheck/core/crc32.hpp"

#include <array>
#include <cstring>

namespace icheck {

namespace {

// Slicing-by-8 tables for the reflected 0x04C11DB7 polynomial.
struct Tables {
    std::uint32_t t[8][256];
};

Tables make_tables() {
    Tables tb{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k)
            c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        tb.t[0][i] = c;
    }
    for (std::uint32_t i = 0; i < 256; ++i)
        for (int j = 1; j < 8; ++j)
            tb.t[j][i] = (tb.t[j - 1][i] >> 8) ^ tb.t[0][tb.t[j - 1][i] & 0xFF];
    return tb;
}

const Tables &tables() {
    static const Tables tb = make_tables();
    return tb;
}

std::uint32_t advance(std::uint32_t state, const void *data, std::size_t len) {
    const auto *p = static_cast<const unsigned char *>(data);
    const auto &tb = tables();
    while (len >= 8) {
        std::uint32_t lo;
        std::memcpy(&lo, p, 4);
        lo ^= state;
        std::uint32_t hi;
        std::memcpy(&hi, p + 4, 4);
        state = tb.t[7][lo & 0xFF] ^ tb.t[6][(lo >> 8) & 0xFF] ^
                tb.t[5][(lo >> 16) & 0xFF] ^ tb.t[4][lo >> 24] ^
                tb.t[3][hi & 0xFF] ^ tb.t[2][(hi >> 8) & 0xFF] ^
                tb.t[1][(hi >> 16) & 0xFF] ^ tb.t[0][hi >> 24];
        p += 8;
        len -= 8;
    }
    while (len--)
        state = tb.t[0][(state ^ *p++) & 0xFFu] ^ (state >> 8);
    return state;
}

} // namespace

std::uint32_t crc32(const void *data, std::size_t len) {
    return advance(0xFFFFFFFFu, data, len) ^ 0xFFFFFFFFu;
}

void Crc32::update(const void *data, std::size_t len) {
    state_ = advance(state_, data, len);
}

} // namespace icheck
