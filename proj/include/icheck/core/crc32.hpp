// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

namespace icheck {

// CRC-32/ISO-HDLC: reflected 0x04C11DB7, init 0xFFFFFFFF, final xor 0xFFFFFFFF.
std::uint32_t crc32(const void *data, std::size_t len);

// Incremental form for chunked transfers.
class Crc32 {
  public:
    void update(const void *data, std::size_t len);
    std::uint32_t value() const { return state_ ^ 0xFFFFFFFFu; }
    void reset() { state_ = 0xFFFFFFFFu; }

  private:
    std::uint32_t state_ = 0xFFFFFFFFu;
};

} // namespace icheck
