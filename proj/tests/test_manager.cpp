// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <csignal>
#include <random>

#include "icheck/core/proc.hpp"
#include "icheck/client/session.hpp"
#include "icheck/manager/manager.hpp"
#include "support/cluster.hpp"
#include "support/raw_server.hpp"

using namespace icheck;
using namespace icheck::mgr;
using namespace icheck::testing;

TEST_CASE("ewma initializes from the first sample") {
    CHECK(ewma(std::nullopt, 100.0, 0.5) == 100.0);
}

TEST_CASE("ewma blends per the smoothing factor") {
    CHECK(ewma(100.0, 200.0, 0.5) == doctest::Approx(150.0).epsilon(1e-12));
    CHECK(ewma(100.0, 200.0, 0.25) == doctest::Approx(125.0).epsilon(1e-12));
}

TEST_CASE("ewma is a fixed point on constant input") {
    double pred = ewma(std::nullopt, 42.0, 0.5);
    for (int i = 0; i < 100; ++i)
        pred = ewma(pred, 42.0, 0.5);
    CHECK(pred == doctest::Approx(42.0).epsilon(1e-12));
}

TEST_CASE("ewma output stays within the historical sample range") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const double alpha = 0.05 + (rng() % 95) / 100.0;
        std::optional<double> pred;
        double lo = 1e300, hi = -1e300;
        for (int i = 0; i < 200; ++i) {
            const double sample = static_cast<double>(rng() % 1000000);
            lo = std::min(lo, sample);
            hi = std::max(hi, sample);
            pred = ewma(pred, sample, alpha);
            CHECK(*pred >= lo - 1e-9);
            CHECK(*pred <= hi + 1e-9);
        }
    }
}

TEST_CASE("duplicate agent ids in a launch order are rejected") {
    RawServer controller;
    ManagerConfig cfg;
    cfg.node_id = "n1";
    cfg.controller_endpoint = controller.endpoint();
    cfg.single_process = true;
    ManagerService manager(cfg);

    proto::LaunchAgents launch;
    launch.app_id = 1;
    launch.app_name = "t";
    launch.agents.push_back({7, 1 << 20, {0}});
    auto conn = controller.conn();
    REQUIRE(conn);
    conn->send(launch);
    auto first_ready = controller.next_of<proto::AgentReady>();
    // ready may race with the agent's own hello; both carry ok=1
    REQUIRE(first_ready.has_value());
    conn->send(launch);
    bool saw_reject = false;
    for (int i = 0; i < 4 && !saw_reject; ++i) {
        auto msg = controller.next_of<proto::AgentReady>(2000);
        if (msg && msg->ok == 0 && msg->reason == "duplicate agent id")
            saw_reject = true;
    }
    CHECK(saw_reject);
    manager.stop();
}

TEST_CASE("node stats sum agent staging and report bandwidth") {
    TestCluster cluster(1);
    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "stats";
    sc.rank = 0;
    sc.world_size = 1;
    auto s = client::Session::init(sc);
    std::vector<std::uint64_t> data(1 << 17, 3); // 1 MiB
    s->add_adapt("data", data.data(), data.size(), 8, DistributionScheme::Block);
    s->commit();
    CHECK(wait_until(
        [&] { return cluster.managers[0]->current_stats().mem_used == (1u << 20); },
        5000));
    const auto stats = cluster.managers[0]->current_stats();
    CHECK(stats.mem_capacity == 1ull << 30);
    CHECK(stats.mem_predicted > 0);
    CHECK(stats.mem_predicted <= static_cast<double>(stats.mem_used));
    s->finalize();
}

TEST_CASE("spawn failure is reported back as a failed launch") {
    RawServer controller;
    ManagerConfig cfg;
    cfg.node_id = "n1";
    cfg.controller_endpoint = controller.endpoint();
    cfg.single_process = false;
    cfg.agent_binary = "/bin/false"; // exits immediately, never reports in
    cfg.launch_hello_timeout_ms = 600;
    ManagerService manager(cfg);

    proto::LaunchAgents launch;
    launch.app_id = 1;
    launch.app_name = "t";
    launch.agents.push_back({9, 1 << 20, {0}});
    auto conn = controller.conn();
    REQUIRE(conn);
    conn->send(launch);
    const auto ready = controller.next_of<proto::AgentReady>(5000);
    REQUIRE(ready.has_value());
    CHECK(ready->ok == 0);
    manager.stop();
}

TEST_CASE("a killed agent process shows up in the dead list") {
    RawServer controller;
    ManagerConfig cfg;
    cfg.node_id = "n1";
    cfg.controller_endpoint = controller.endpoint();
    cfg.single_process = false;
    cfg.report_period_ms = 100;
    // The agent binary sits next to the test binary's sibling tools dir.
    cfg.agent_binary = self_exe_dir() + "/../tools/icheck-agent";
    ManagerService manager(cfg);

    proto::LaunchAgents launch;
    launch.app_id = 1;
    launch.app_name = "t";
    launch.agents.push_back({5, 1 << 20, {0}});
    auto conn = controller.conn();
    REQUIRE(conn);
    conn->send(launch);
    const auto ready = controller.next_of<proto::AgentReady>(8000);
    REQUIRE(ready.has_value());
    REQUIRE(ready->ok == 1);

    const auto pids = manager.agent_pids();
    REQUIRE(pids.size() == 1);
    ::kill(pids[0].second, SIGKILL);

    bool flagged = false;
    for (int i = 0; i < 30 && !flagged; ++i) {
        const auto report = controller.next_of<proto::StatsReport>(1000);
        if (report && !report->dead_agents.empty()) {
            CHECK(report->dead_agents[0] == 5);
            flagged = true;
        }
    }
    CHECK(flagged);
    manager.stop();
}
