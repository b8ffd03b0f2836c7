// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "icheck/harness/scenario.hpp"

namespace icheck::harness {

struct RankArgs {
    AppSpec app;
    Rank rank = 0;
    ProcessType type = ProcessType::Initial;
    std::uint32_t attempt = 0;
    std::uint32_t current_world = 1; // world size at (re)start time
    std::string controller_endpoint;
    std::string control_endpoint;
    std::string out_dir;
    std::uint64_t throttle_bytes_per_sec = 0;
};

// One synthetic application rank: the compute/commit/probe loop with
// restart and adapt handling. Returns a process exit code:
//   0 finished (or departed in a shrink), 2 verification mismatch,
//   3 checkpoint service error.
int run_rank(const RankArgs &args);

} // namespace icheck::harness
