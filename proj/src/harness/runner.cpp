// SPDX-License-Identifier: Apache-2.0
#include "icheck/harness/runner.hpp"

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include <json.hpp>

#include "icheck/controller/controller.hpp"
#include "icheck/core/log.hpp"
#include "icheck/core/proc.hpp"
#include "icheck/harness/rank_logic.hpp"
#include "icheck/manager/manager.hpp"
#include "icheck/rm/rm.hpp"

namespace icheck::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// One live rank, either a thread (single-process) or a child process.
struct RankHandle {
    Rank rank = 0;
    std::uint32_t attempt = 0;
    bool is_thread = false;
    std::thread thread;
    std::shared_ptr<std::atomic<int>> thread_result; // -1 while running
    ChildProc proc;

    bool done() {
        if (is_thread)
            return thread_result->load() != -1;
        return !proc.alive();
    }
    int exit_code() {
        if (is_thread)
            return thread_result->load();
        return proc.exit_code().value_or(proc.wait());
    }
};

struct Stack {
    // single-process members
    std::unique_ptr<ctrl::Controller> controller;
    std::vector<std::unique_ptr<mgr::ManagerService>> managers;
    // process-mode members
    ChildProc controller_proc;
    std::vector<ChildProc> manager_procs;
    ChildProc rm_proc;
    std::string controller_endpoint;
};

std::string tool_path(const std::string &name) {
    const auto dir = fs::path(self_exe_dir());
    // Tool binaries live next to the caller or in a sibling tools/ dir.
    for (const auto &candidate :
         {dir / name, dir / ".." / "tools" / name, dir / "tools" / name,
          dir / ".." / ".." / "tools" / name}) {
        std::error_code ec;
        if (fs::exists(candidate, ec))
            return candidate.string();
    }
    return (dir / name).string();
}

std::string wait_endpoint_file(const std::string &path, int timeout_ms) {
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(timeout_ms);
    while (std::chrono::steady_clock::now() < deadline) {
        std::ifstream in(path);
        std::string ep;
        if (in >> ep && !ep.empty())
            return ep;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    throw NetError("endpoint file never appeared: " + path);
}

double percentile(std::vector<double> v, double p) {
    if (v.empty())
        return 0;
    std::sort(v.begin(), v.end());
    const auto idx = static_cast<std::size_t>(p * (v.size() - 1) + 0.5);
    return v[std::min(idx, v.size() - 1)];
}

} // namespace

RunResult run_scenario(const Scenario &scenario, const std::string &out_dir) {
    RunResult result;
    result.out_dir = out_dir;
    fs::create_directories(out_dir);
    fs::create_directories(fs::path(out_dir) / "logs");
    const std::string pfs_root = (fs::path(out_dir) / "pfs").string();
    fs::create_directories(pfs_root);

    ControlServer control;
    Stack stack;
    std::unique_ptr<rm::RmStub> rm_stub; // single-process mode

    // --- bring up the service stack ---
    if (scenario.single_process) {
        ctrl::ControllerConfig ccfg;
        ccfg.pfs_root = pfs_root;
        ccfg.policy = scenario.policy;
        ccfg.tick_ms = 50;
        stack.controller = std::make_unique<ctrl::Controller>(ccfg);
        stack.controller_endpoint = stack.controller->endpoint();
        auto add_node = [&](const NodeSpec &n) {
            mgr::ManagerConfig mc;
            mc.node_id = n.id;
            mc.controller_endpoint = stack.controller_endpoint;
            mc.mem_capacity = n.mem_capacity;
            mc.single_process = true;
            mc.report_period_ms = 100;
            stack.managers.push_back(std::make_unique<mgr::ManagerService>(mc));
        };
        for (const auto &n : scenario.icheck_nodes)
            add_node(n);
        for (const auto &n : scenario.spare_nodes)
            add_node(n);

        rm::RmConfig rcfg;
        rcfg.controller_endpoint = stack.controller_endpoint;
        rcfg.harness_endpoint = control.endpoint();
        for (const auto &n : scenario.icheck_nodes)
            rcfg.nodes.push_back(n.id), rcfg.initial_grant.push_back(n.id);
        for (const auto &n : scenario.spare_nodes)
            rcfg.nodes.push_back(n.id);
        rcfg.script = scenario.rm_script;
        rm_stub = std::make_unique<rm::RmStub>(rcfg);
        rm_stub->start();
    } else {
        const std::string logs = (fs::path(out_dir) / "logs").string();
        const std::string epfile = (fs::path(out_dir) / "controller.endpoint").string();
        json ctrl_cfg;
        ctrl_cfg["pfs_root"] = pfs_root;
        ctrl_cfg["tick_ms"] = 50;
        ctrl_cfg["policy"] =
            json::parse(R"({})"); // defaults, overridden below
        ctrl_cfg["policy"]["per_agent_capacity"] = scenario.policy.per_agent_capacity;
        ctrl_cfg["policy"]["max_agents_per_app"] = scenario.policy.max_agents_per_app;
        ctrl_cfg["policy"]["mem_headroom"] = scenario.policy.mem_headroom;
        ctrl_cfg["policy"]["target_rate"] = scenario.policy.target_rate;
        ctrl_cfg["policy"]["flush_age_s"] = scenario.policy.flush_age_s;
        ctrl_cfg["policy"]["flush_pressure"] = scenario.policy.flush_pressure;
        const std::string cfg_path = (fs::path(out_dir) / "controller.json").string();
        std::ofstream(cfg_path) << ctrl_cfg.dump(2);
        stack.controller_proc = ChildProc::spawn(
            {tool_path("icheck-controller"), "--config", cfg_path,
             "--endpoint-file", epfile},
            logs + "/controller.log");
        stack.controller_endpoint = wait_endpoint_file(epfile, 10000);

        auto spawn_manager = [&](const NodeSpec &n) {
            stack.manager_procs.push_back(ChildProc::spawn(
                {tool_path("icheck-manager"), "--node-id", n.id, "--controller",
                 stack.controller_endpoint, "--mem-capacity",
                 std::to_string(n.mem_capacity)},
                logs + "/manager_" + n.id + ".log"));
        };
        for (const auto &n : scenario.icheck_nodes)
            spawn_manager(n);
        for (const auto &n : scenario.spare_nodes)
            spawn_manager(n);

        json script = json::array();
        for (const auto &ev : scenario.rm_script) {
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
            script.push_back(e);
        }
        const std::string script_path = (fs::path(out_dir) / "rm_script.json").string();
        std::ofstream(script_path) << script.dump(2);
        std::string nodes_csv, grant_csv;
        for (const auto &n : scenario.icheck_nodes) {
            nodes_csv += (nodes_csv.empty() ? "" : ",") + n.id;
            grant_csv += (grant_csv.empty() ? "" : ",") + n.id;
        }
        for (const auto &n : scenario.spare_nodes)
            nodes_csv += (nodes_csv.empty() ? "" : ",") + n.id;
        stack.rm_proc = ChildProc::spawn(
            {tool_path("icheck-rm"), "--script", script_path, "--controller",
             stack.controller_endpoint, "--nodes", nodes_csv, "--grant", grant_csv,
             "--harness", control.endpoint()},
            logs + "/rm.log");
    }

    const std::string scenario_path = (fs::path(out_dir) / "scenario.json").string();
    std::ofstream(scenario_path) << render_scenario(scenario);

    // --- rank supervision ---
    std::vector<std::unique_ptr<RankHandle>> live;
    std::uint32_t attempt = 0;
    std::uint32_t current_world = scenario.app.world_size;
    std::uint32_t spawned_adapt_target = 0;
    bool aborted = false;

    auto spawn_rank = [&](Rank r, ProcessType type, std::uint32_t world) {
        auto h = std::make_unique<RankHandle>();
        h->rank = r;
        h->attempt = attempt;
        if (scenario.single_process) {
            h->is_thread = true;
            h->thread_result = std::make_shared<std::atomic<int>>(-1);
            RankArgs args;
            args.app = scenario.app;
            args.rank = r;
            args.type = type;
            args.attempt = attempt;
            args.current_world = world;
            args.controller_endpoint = stack.controller_endpoint;
            args.control_endpoint = control.endpoint();
            args.out_dir = out_dir;
            args.throttle_bytes_per_sec = scenario.throttle_bytes_per_sec;
            h->thread = std::thread([args, res = h->thread_result] {
                int code = 3;
                try {
                    code = run_rank(args);
                } catch (...) {
                }
                res->store(code);
            });
        } else {
            h->proc = ChildProc::spawn(
                {tool_path("icheck-rank"), "--scenario", scenario_path, "--rank",
                 std::to_string(r), "--type",
                 type == ProcessType::Joining ? "joining" : "initial", "--attempt",
                 std::to_string(attempt), "--world", std::to_string(world),
                 "--controller", stack.controller_endpoint, "--control",
                 control.endpoint(), "--out", out_dir},
                (fs::path(out_dir) / "logs" /
                 ("rank" + std::to_string(r) + "_a" + std::to_string(attempt) +
                  ".log"))
                    .string());
        }
        live.push_back(std::move(h));
    };

    auto kill_all = [&] {
        for (auto &h : live) {
            if (h->is_thread)
                continue; // thread ranks cannot be killed; validated upfront
            h->proc.kill(SIGKILL);
        }
        for (auto &h : live) {
            if (h->is_thread) {
                if (h->thread.joinable())
                    h->thread.join();
            } else {
                h->proc.wait();
            }
        }
        live.clear();
    };

    // Arm the optional scripted mid-commit kill.
    if (scenario.fault)
        control.arm_fault(scenario.fault->rank, scenario.fault->version,
                          scenario.fault->fraction);

    for (Rank r = 0; r < scenario.app.world_size; ++r)
        spawn_rank(r, ProcessType::Initial, scenario.app.world_size);

    const auto deadline =
        std::chrono::steady_clock::now() +
        std::chrono::milliseconds(
            60000 + scenario.app.iterations *
                        (scenario.app.compute_ms + 100) * 4);

    while (!aborted) {
        if (std::chrono::steady_clock::now() > deadline) {
            result.failures.push_back("run timed out");
            aborted = true;
            break;
        }
        // RM-driven application kill.
        if (control.kill_requested()) {
            control.clear_kill();
            if (scenario.single_process) {
                result.failures.push_back("kill_app requires process mode");
                aborted = true;
                break;
            }
            kill_all();
            ++attempt;
            ++result.restarts;
            if (result.restarts > static_cast<int>(scenario.restart_limit)) {
                result.failures.push_back("restart limit exceeded");
                aborted = true;
                break;
            }
            for (Rank r = 0; r < current_world; ++r)
                spawn_rank(r, ProcessType::Initial, current_world);
            continue;
        }
        // Expansion: start joining ranks when the adapt signal is pending.
        const auto target = control.adapt_target();
        if (target > current_world && spawned_adapt_target != target) {
            for (Rank r = current_world; r < target; ++r)
                spawn_rank(r, ProcessType::Joining, target);
            spawned_adapt_target = target;
        }
        if (target != 0 && target != current_world &&
            control.adapt_acks() >= std::max(current_world, target))
            current_world = target;

        // Reap rank exits.
        bool any_live = false;
        for (auto &h : live) {
            if (!h->done()) {
                any_live = true;
                continue;
            }
            if (h->is_thread && h->thread.joinable())
                h->thread.join();
            const int code = h->exit_code();
            if (code == 0)
                continue;
            if (code == 137 || code > 128) {
                // Crashed (injected fault or external kill): restart the app.
                kill_all();
                ++attempt;
                ++result.restarts;
                if (result.restarts > static_cast<int>(scenario.restart_limit)) {
                    result.failures.push_back("restart limit exceeded");
                    aborted = true;
                    break;
                }
                for (Rank r = 0; r < current_world; ++r)
                    spawn_rank(r, ProcessType::Initial, current_world);
                any_live = true;
                break;
            }
            result.failures.push_back("rank " + std::to_string(h->rank) +
                                      " exited with code " + std::to_string(code));
            aborted = true;
            break;
        }
        if (aborted)
            break;
        if (!any_live)
            break; // everyone finished cleanly
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }

    kill_all();
    result.reports = control.reports();

    // --- verdict ---
    for (const auto &r : result.reports)
        if (r.kind == "fail")
            result.failures.push_back("rank " + std::to_string(r.rank) +
                                      " verification: " + r.detail);
    if (!aborted) {
        const std::uint32_t final_world = current_world;
        std::map<Rank, std::uint64_t> done_iters;
        for (const auto &r : result.reports)
            if (r.kind == "done")
                done_iters[r.rank] = r.iter;
        for (Rank r = 0; r < final_world; ++r)
            if (!done_iters.count(r))
                result.failures.push_back("rank " + std::to_string(r) +
                                          " never reported done");
        // Crash consistency: within one attempt every restored rank must
        // land on the same COMPLETE version's iteration.
        std::map<std::uint32_t, std::set<std::uint64_t>> restored_by_attempt;
        for (const auto &r : result.reports)
            if (r.kind == "restored")
                restored_by_attempt[r.attempt].insert(r.iter);
        for (const auto &[att, iters] : restored_by_attempt)
            if (iters.size() > 1)
                result.failures.push_back(
                    "attempt " + std::to_string(att) +
                    " restored a torn mixture of versions");
    }

    if (rm_stub) {
        for (const auto &e : rm_stub->event_log())
            result.rm_log.push_back(e.what);
        rm_stub->stop();
    }
    if (scenario.single_process) {
        for (const auto &m : stack.managers)
            for (const auto &a : m->local_agents()) {
                result.plans_prepushed += a->plans_prepushed();
                result.plans_local += a->plans_computed_local();
            }
        for (auto &m : stack.managers)
            m->stop();
        if (stack.controller)
            stack.controller->stop();
    } else {
        stack.rm_proc.kill(SIGTERM);
        for (auto &m : stack.manager_procs)
            m.kill(SIGTERM);
        stack.controller_proc.kill(SIGTERM);
        stack.rm_proc.wait();
        for (auto &m : stack.manager_procs)
            m.wait();
        stack.controller_proc.wait();
    }
    control.stop();

    result.pass = result.failures.empty();
    json verdict;
    verdict["pass"] = result.pass;
    verdict["failures"] = result.failures;
    verdict["restarts"] = result.restarts;
    json reports = json::array();
    for (const auto &r : result.reports)
        reports.push_back({{"rank", r.rank},
                           {"attempt", r.attempt},
                           {"kind", r.kind},
                           {"iter", r.iter},
                           {"detail", r.detail}});
    verdict["reports"] = reports;
    std::ofstream(fs::path(out_dir) / "verdict.json") << verdict.dump(2);
    return result;
}

OverheadStats summarize_dir(const std::string &out_dir) {
    OverheadStats s;
    std::vector<double> blocked;
    double sum_copy = 0, sum_blocked = 0, sum_transfer = 0;
    std::set<std::string> modes;
    for (const auto &entry : fs::directory_iterator(out_dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("rank", 0) != 0 || entry.path().extension() != ".csv")
            continue;
        std::ifstream in(entry.path());
        std::string line;
        std::getline(in, line); // header
        while (std::getline(in, line)) {
            std::stringstream ss(line);
            std::string field;
            std::vector<std::string> fields;
            while (std::getline(ss, field, ','))
                fields.push_back(field);
            if (fields.size() != 6)
                continue;
            sum_copy += std::stod(fields[2]);
            sum_blocked += std::stod(fields[3]);
            sum_transfer += std::stod(fields[4]);
            blocked.push_back(std::stod(fields[3]));
            modes.insert(fields[5]);
            ++s.commits;
        }
    }
    if (s.commits) {
        s.mean_copy_us = sum_copy / s.commits;
        s.mean_blocked_us = sum_blocked / s.commits;
        s.mean_transfer_us = sum_transfer / s.commits;
        s.p95_blocked_us = percentile(blocked, 0.95);
    }
    s.mode = modes.size() == 1 ? *modes.begin() : modes.empty() ? "" : "MIXED";
    return s;
}

std::string render_summary(const OverheadStats &s) {
    std::ostringstream out;
    out << "commits=" << s.commits << " mode=" << s.mode
        << " mean_copy_us=" << s.mean_copy_us
        << " mean_blocked_us=" << s.mean_blocked_us
        << " mean_transfer_us=" << s.mean_transfer_us
        << " p95_blocked_us=" << s.p95_blocked_us;
    return out.str();
}

std::string render_comparison(const OverheadStats &async_stats,
                              const OverheadStats &sync_stats) {
    std::ostringstream out;
    out << "async: " << render_summary(async_stats) << "\n";
    out << "sync:  " << render_summary(sync_stats) << "\n";
    if (sync_stats.mean_blocked_us > 0)
        out << "blocked ratio (async/sync): "
            << async_stats.mean_blocked_us / sync_stats.mean_blocked_us << "\n";
    return out.str();
}

} // namespace icheck::harness
