// SPDX-License-Identifier: Apache-2.0
#include "icheck/harness/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace icheck::harness {

using nlohmann::json;

namespace {

DistributionScheme scheme_of(const std::string &s, ScenarioErrors &errors,
                             const std::string &where) {
    if (s == "block")
        return DistributionScheme::Block;
    if (s == "cyclic")
        return DistributionScheme::Cyclic;
    errors.errors.push_back(where + ": unknown scheme '" + s + "'");
    return DistributionScheme::Block;
}

} // namespace

Scenario parse_scenario(const std::string &text, ScenarioErrors &errors) {
    Scenario s;
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception &e) {
        errors.errors.push_back(std::string("json: ") + e.what());
        return s;
    }
    try {
        if (j.contains("name"))
            s.name = j["name"].get<std::string>();
        if (j.contains("app")) {
            const auto &a = j["app"];
            if (a.contains("name"))
                s.app.name = a["name"].get<std::string>();
            if (a.contains("world_size"))
                s.app.world_size = a["world_size"].get<std::uint32_t>();
            if (a.contains("iterations"))
                s.app.iterations = a["iterations"].get<std::uint32_t>();
            if (a.contains("checkpoint_interval"))
                s.app.checkpoint_interval =
                    a["checkpoint_interval"].get<std::uint32_t>();
            if (a.contains("probe_interval"))
                s.app.probe_interval = a["probe_interval"].get<std::uint32_t>();
            if (a.contains("compute_ms"))
                s.app.compute_ms = a["compute_ms"].get<std::uint32_t>();
            if (a.contains("seed"))
                s.app.seed = a["seed"].get<std::uint64_t>();
            if (a.contains("mode"))
                s.app.sync_mode = a["mode"].get<std::string>() == "sync";
            for (const auto &r : a.value("regions", json::array())) {
                RegionSpec spec;
                spec.id = r.value("id", "data");
                spec.elem_size = r.value("elem_size", 8u);
                spec.total_elems = r.value("total_elems", 0ull);
                spec.scheme = scheme_of(r.value("scheme", "block"), errors,
                                        "app.regions[" + spec.id + "]");
                s.app.regions.push_back(spec);
            }
        }
        if (j.contains("cluster")) {
            for (const auto &n : j["cluster"].value("icheck_nodes", json::array()))
                s.icheck_nodes.push_back(
                    {n.value("id", ""), n.value("mem_capacity", 1ull << 30)});
            for (const auto &n : j["cluster"].value("spare_nodes", json::array()))
                s.spare_nodes.push_back(
                    {n.value("id", ""), n.value("mem_capacity", 1ull << 30)});
        }
        if (j.contains("policy"))
            s.policy = ctrl::PolicyConfig::from_json_text(j["policy"].dump());
        for (const auto &e : j.value("rm_script", json::array())) {
            RmEventSpec ev;
            ev.at_s = e.value("at", 0.0);
            ev.action = e.value("action", "");
            if (e.contains("nodes"))
                ev.nodes = e["nodes"].get<std::vector<std::string>>();
            ev.deadline_s = e.value("deadline_s", 0.0);
            ev.node_from = e.value("from", "");
            ev.node_to = e.value("to", "");
            ev.app = e.value("app", "");
            ev.new_world_size = e.value("new_world_size", 0u);
            ev.agent_id = e.value("agent_id", 0ull);
            ev.throttle_bps = e.value("throttle_bytes_per_sec", 0ull);
            s.rm_script.push_back(std::move(ev));
        }
        if (j.contains("transport"))
            s.throttle_bytes_per_sec =
                j["transport"].value("throttle_bytes_per_sec", 0ull);
        if (j.contains("single_process"))
            s.single_process = j["single_process"].get<bool>();
        if (j.contains("restart_limit"))
            s.restart_limit = j["restart_limit"].get<std::uint32_t>();
        if (j.contains("fault")) {
            FaultSpecJson f;
            f.rank = j["fault"].value("rank", 0u);
            f.version = j["fault"].value("version", 0ull);
            f.fraction = j["fault"].value("fraction", 0.5);
            s.fault = f;
        }
    } catch (const std::exception &e) {
        errors.errors.push_back(std::string("parse: ") + e.what());
        return s;
    }

    // Cross-validation.
    if (s.app.world_size == 0)
        errors.errors.push_back("app.world_size: must be >= 1");
    if (s.app.checkpoint_interval == 0)
        errors.errors.push_back("app.checkpoint_interval: must be >= 1");
    if (s.app.regions.empty())
        errors.errors.push_back("app.regions: at least one region required");
    for (const auto &r : s.app.regions) {
        if (r.elem_size < 2)
            errors.errors.push_back("region '" + r.id +
                                    "': elem_size must be >= 2 so the iteration "
                                    "stamp fits");
        if (r.total_elems == 0)
            errors.errors.push_back("region '" + r.id + "': total_elems must be >= 1");
    }
    if (s.icheck_nodes.empty())
        errors.errors.push_back("cluster.icheck_nodes: at least one node required");

    std::set<std::string> known_nodes;
    for (const auto &n : s.icheck_nodes)
        known_nodes.insert(n.id);
    for (const auto &n : s.spare_nodes)
        known_nodes.insert(n.id);
    double last_at = 0;
    static const std::set<std::string> kActions = {
        "grant", "reclaim", "migrate_hint", "adapt",
        "kill_app", "kill_agent", "throttle"};
    for (std::size_t i = 0; i < s.rm_script.size(); ++i) {
        const auto &ev = s.rm_script[i];
        const std::string where = "rm_script[" + std::to_string(i) + "]";
        if (!kActions.count(ev.action))
            errors.errors.push_back(where + ": unknown action '" + ev.action + "'");
        if (ev.at_s < last_at)
            errors.errors.push_back(where + ": times must be non-decreasing");
        last_at = std::max(last_at, ev.at_s);
        for (const auto &n : ev.nodes)
            if (!known_nodes.count(n))
                errors.errors.push_back(where + ": unknown node '" + n + "'");
        if (ev.action == "migrate_hint") {
            if (!known_nodes.count(ev.node_from))
                errors.errors.push_back(where + ": unknown node '" + ev.node_from + "'");
            if (!known_nodes.count(ev.node_to))
                errors.errors.push_back(where + ": unknown node '" + ev.node_to + "'");
        }
        if ((ev.action == "adapt" || ev.action == "kill_app") &&
            ev.app != s.app.name)
            errors.errors.push_back(where + ": unknown app '" + ev.app + "'");
        if (ev.action == "adapt" && ev.new_world_size == 0)
            errors.errors.push_back(where + ": adapt requires new_world_size");
        if ((ev.action == "kill_app" || ev.action == "kill_agent") &&
            s.single_process)
            errors.errors.push_back(where +
                                    ": kill events require process mode");
    }
    if (s.fault && s.single_process)
        errors.errors.push_back("fault: mid-commit kill requires process mode");
    if (s.fault && s.fault->rank >= s.app.world_size)
        errors.errors.push_back("fault.rank: out of range");
    return s;
}

Scenario load_scenario_file(const std::string &path, ScenarioErrors &errors) {
    std::ifstream in(path);
    if (!in) {
        errors.errors.push_back("cannot open scenario file: " + path);
        return {};
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), errors);
}

std::string render_scenario(const Scenario &s) {
    json j;
    j["name"] = s.name;
    json a;
    a["name"] = s.app.name;
    a["world_size"] = s.app.world_size;
    a["iterations"] = s.app.iterations;
    a["checkpoint_interval"] = s.app.checkpoint_interval;
    a["probe_interval"] = s.app.probe_interval;
    a["compute_ms"] = s.app.compute_ms;
    a["seed"] = s.app.seed;
    a["mode"] = s.app.sync_mode ? "sync" : "async";
    a["regions"] = json::array();
    for (const auto &r : s.app.regions)
        a["regions"].push_back({{"id", r.id},
                                {"elem_size", r.elem_size},
                                {"total_elems", r.total_elems},
                                {"scheme", to_string(r.scheme)}});
    j["app"] = a;
    json cluster;
    cluster["icheck_nodes"] = json::array();
    for (const auto &n : s.icheck_nodes)
        cluster["icheck_nodes"].push_back(
            {{"id", n.id}, {"mem_capacity", n.mem_capacity}});
    cluster["spare_nodes"] = json::array();
    for (const auto &n : s.spare_nodes)
        cluster["spare_nodes"].push_back(
            {{"id", n.id}, {"mem_capacity", n.mem_capacity}});
    j["cluster"] = cluster;
    j["rm_script"] = json::array();
    for (const auto &ev : s.rm_script) {
        json e;
        e["at"] = ev.at_s;
        e["action"] = ev.action;
        if (!ev.nodes.empty())
            e["nodes"] = ev.nodes;
        if (ev.deadline_s > 0)
            e["deadline_s"] = ev.deadline_s;
        if (!ev.node_from.empty())
            e["from"] = ev.node_from;
        if (!ev.node_to.empty())
            e["to"] = ev.node_to;
        if (!ev.app.empty())
            e["app"] = ev.app;
        if (ev.new_world_size)
            e["new_world_size"] = ev.new_world_size;
        if (ev.agent_id)
            e["agent_id"] = ev.agent_id;
        if (ev.throttle_bps)
            e["throttle_bytes_per_sec"] = ev.throttle_bps;
        j["rm_script"].push_back(e);
    }
    j["transport"] = {{"throttle_bytes_per_sec", s.throttle_bytes_per_sec}};
    j["single_process"] = s.single_process;
    j["restart_limit"] = s.restart_limit;
    if (s.fault)
        j["fault"] = {{"rank", s.fault->rank},
                      {"version", s.fault->version},
                      {"fraction", s.fault->fraction}};
    return j.dump(2);
}

} // namespace icheck::harness
