// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "icheck/harness/control.hpp"
#include "icheck/harness/scenario.hpp"

namespace icheck::harness {

struct RunResult {
    bool pass = false;
    std::vector<std::string> failures;
    std::vector<RankReport> reports;
    std::string out_dir;
    int restarts = 0;
    std::uint64_t plans_prepushed = 0; // single-process mode only
    std::uint64_t plans_local = 0;
    std::vector<std::string> rm_log;
};

// Spawns the whole stack (as child processes, or in-process when the
// scenario says single_process), runs the synthetic application through the
// scripted events, verifies every restore/redistribution against the data
// generator, and writes metrics + verdict under out_dir.
RunResult run_scenario(const Scenario &scenario, const std::string &out_dir);

// Aggregated commit-overhead statistics from the per-rank CSV files.
struct OverheadStats {
    std::size_t commits = 0;
    double mean_copy_us = 0, mean_blocked_us = 0, mean_transfer_us = 0;
    double p95_blocked_us = 0;
    std::string mode; // ASYNC, SYNC, or MIXED
};

OverheadStats summarize_dir(const std::string &out_dir);
std::string render_summary(const OverheadStats &s);
// Paired comparison when both an async and a sync run are supplied.
std::string render_comparison(const OverheadStats &async_stats,
                              const OverheadStats &sync_stats);

} // namespace icheck::harness
