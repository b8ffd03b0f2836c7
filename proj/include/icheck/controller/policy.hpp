// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace icheck::ctrl {

struct PolicyConfig {
    std::uint64_t per_agent_capacity = 256ull << 20; // bytes
    std::uint32_t max_agents_per_app = 8;
    double mem_headroom = 0.15;        // fraction of capacity kept free
    double target_rate = 1ull << 30;   // bytes/sec, probe reference
    double flush_age_s = 30.0;         // age before a version goes to PFS
    double flush_pressure = 0.75;      // node memory fraction forcing flushes

    void validate() const; // throws ConfigError

    static PolicyConfig from_json_text(const std::string &text);
};

// Capacity-driven agent count, clamped to [1, min(max_agents, world_size)].
std::uint32_t agent_count_for(std::uint64_t total_ckpt_bytes,
                              std::uint32_t world_size, const PolicyConfig &cfg);

struct NodeView {
    std::string node_id;
    std::uint64_t mem_capacity = 0;
    std::uint64_t mem_used = 0;
    double mem_predicted = 0;
};

// Picks the node with the most predicted free memory among those where
// mem_used + share stays within (1 - headroom) * capacity.
std::optional<std::string> choose_node(std::span<const NodeView> nodes,
                                       std::uint64_t share_bytes,
                                       double headroom);

enum class ProbeDecision { NoChange, Grow, Shrink };

// Dead band: grow below half target, shrink above double target.
ProbeDecision probe_decision(double observed_rate, double target_rate,
                             std::uint32_t current_agents,
                             std::uint32_t max_allowed);

const char *to_string(ProbeDecision d);

} // namespace icheck::ctrl
