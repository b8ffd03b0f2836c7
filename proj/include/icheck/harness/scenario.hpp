// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "icheck/controller/policy.hpp"
#include "icheck/core/types.hpp"

namespace icheck::harness {

struct RegionSpec {
    std::string id;
    std::uint32_t elem_size = 8;
    std::uint64_t total_elems = 0;
    DistributionScheme scheme = DistributionScheme::Block;
};

struct AppSpec {
    std::string name = "synth";
    std::uint32_t world_size = 1;
    std::vector<RegionSpec> regions;
    std::uint32_t iterations = 10;
    std::uint32_t checkpoint_interval = 1; // iterations per commit
    std::uint32_t probe_interval = 0;      // 0 = never probe
    std::uint32_t compute_ms = 0;
    std::uint64_t seed = 1;
    bool sync_mode = false;
};

struct NodeSpec {
    std::string id;
    std::uint64_t mem_capacity = 1ull << 30;
};

struct RmEventSpec {
    double at_s = 0;
    std::string action; // grant|reclaim|migrate_hint|adapt|kill_app|kill_agent|throttle
    std::vector<std::string> nodes;
    double deadline_s = 0;
    std::string node_from, node_to;
    std::string app;
    std::uint32_t new_world_size = 0;
    std::uint64_t agent_id = 0;
    std::uint64_t throttle_bps = 0;
};

struct FaultSpecJson { // mid-commit process kill
    Rank rank = 0;
    Version version = 0;
    double fraction = 0.5;
};

struct Scenario {
    std::string name = "scenario";
    AppSpec app;
    std::vector<NodeSpec> icheck_nodes;
    std::vector<NodeSpec> spare_nodes;
    ctrl::PolicyConfig policy;
    std::vector<RmEventSpec> rm_script;
    std::uint64_t throttle_bytes_per_sec = 0;
    bool single_process = false;
    std::uint32_t restart_limit = 3;
    std::optional<FaultSpecJson> fault;
};

// Parses and cross-validates; collects every problem instead of stopping
// at the first.
struct ScenarioErrors {
    std::vector<std::string> errors;
    bool ok() const { return errors.empty(); }
};

Scenario parse_scenario(const std::string &json_text, ScenarioErrors &errors);
Scenario load_scenario_file(const std::string &path, ScenarioErrors &errors);
std::string render_scenario(const Scenario &s); // JSON, for tooling

} // namespace icheck::harness
