// SPDX-License-Identifier: Apache-2.0
#include "icheck/controller/policy.hpp"

#include <algorithm>

#include <json.hpp>

#include "icheck/core/errors.hpp"

namespace icheck::ctrl {

void PolicyConfig::validate() const {
    if (per_agent_capacity == 0 || max_agents_per_app == 0)
        throw ConfigError("per_agent_capacity and max_agents_per_app must be positive");
    if (mem_headroom <= 0 || mem_headroom >= 1)
        throw ConfigError("mem_headroom must be in (0,1)");
    if (flush_pressure <= 0 || flush_pressure >= 1)
        throw ConfigError("flush_pressure must be in (0,1)");
    if (target_rate <= 0 || flush_age_s <= 0)
        throw ConfigError("target_rate and flush_age must be positive");
}

PolicyConfig PolicyConfig::from_json_text(const std::string &text) {
    PolicyConfig cfg;
    const auto j = nlohmann::json::parse(text);
    if (j.contains("per_agent_capacity"))
        cfg.per_agent_capacity = j["per_agent_capacity"].get<std::uint64_t>();
    if (j.contains("max_agents_per_app"))
        cfg.max_agents_per_app = j["max_agents_per_app"].get<std::uint32_t>();
    if (j.contains("mem_headroom"))
        cfg.mem_headroom = j["mem_headroom"].get<double>();
    if (j.contains("target_rate"))
        cfg.target_rate = j["target_rate"].get<double>();
    if (j.contains("flush_age_s"))
        cfg.flush_age_s = j["flush_age_s"].get<double>();
    if (j.contains("flush_pressure"))
        cfg.flush_pressure = j["flush_pressure"].get<double>();
    cfg.validate();
    return cfg;
}

std::uint32_t agent_count_for(std::uint64_t total_ckpt_bytes,
                              std::uint32_t world_size, const PolicyConfig &cfg) {
    const std::uint64_t by_size =
        (total_ckpt_bytes + cfg.per_agent_capacity - 1) / cfg.per_agent_capacity;
    const std::uint32_t upper = std::min(cfg.max_agents_per_app, world_size);
    return static_cast<std::uint32_t>(
        std::clamp<std::uint64_t>(by_size, 1, std::max<std::uint32_t>(upper, 1)));
}

std::optional<std::string> choose_node(std::span<const NodeView> nodes,
                                       std::uint64_t share_bytes,
                                       double headroom) {
    const NodeView *best = nullptr;
    double best_free = -1;
    for (const auto &n : nodes) {
        const double limit = (1.0 - headroom) * static_cast<double>(n.mem_capacity);
        if (static_cast<double>(n.mem_used + share_bytes) > limit)
            continue;
        const double predicted_free =
            static_cast<double>(n.mem_capacity) - n.mem_predicted;
        if (predicted_free > best_free) {
            best_free = predicted_free;
            best = &n;
        }
    }
    if (!best)
        return std::nullopt;
    return best->node_id;
}

ProbeDecision probe_decision(double observed_rate, double target_rate,
                             std::uint32_t current_agents,
                             std::uint32_t max_allowed) {
    if (observed_rate < 0.5 * target_rate && current_agents < max_allowed)
        return ProbeDecision::Grow;
    if (observed_rate > 2.0 * target_rate && current_agents > 1)
        return ProbeDecision::Shrink;
    return ProbeDecision::NoChange;
}

const char *to_string(ProbeDecision d) {
    switch (d) {
    case ProbeDecision::NoChange: return "no_change";
    case ProbeDecision::Grow: return "grow";
    case ProbeDecision::Shrink: return "shrink";
    }
    return "?";
}

} // namespace icheck::ctrl
