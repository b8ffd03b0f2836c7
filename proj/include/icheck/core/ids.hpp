// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>

namespace icheck {

// Strictly increasing 64-bit ids, one sequence per generator instance.
class IdGenerator {
  public:
    explicit IdGenerator(std::uint64_t start = 1) : next_(start) {}

    std::uint64_t next() { return next_.fetch_add(1, std::memory_order_relaxed); }

  private:
    std::atomic<std::uint64_t> next_;
};

} // namespace icheck
