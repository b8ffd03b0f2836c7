// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "icheck/client/session.hpp"
#include "icheck/controller/policy.hpp"
#include "support/agent_driver.hpp"
#include "support/cluster.hpp"

using namespace icheck;
using namespace icheck::ctrl;
using namespace icheck::testing;

TEST_CASE("agent count follows capacity and clamps") {
    PolicyConfig cfg;
    cfg.per_agent_capacity = 256ull << 20;
    cfg.max_agents_per_app = 8;
    CHECK(agent_count_for(8ull << 20, 4, cfg) == 1);
    CHECK(agent_count_for(1ull << 30, 48, cfg) == 4);
    CHECK(agent_count_for(100ull << 30, 48, cfg) == 8);  // max_agents cap
    CHECK(agent_count_for(100ull << 30, 3, cfg) == 3);   // world cap
    CHECK(agent_count_for(0, 4, cfg) == 1);              // lower clamp
}

TEST_CASE("rank groups for 48 ranks over 4 agents are 12 each") {
    const auto groups = block_partition(48, agent_count_for(1ull << 30, 48, {}));
    REQUIRE(groups.size() == 4);
    for (const auto &g : groups)
        CHECK(g.length == 12);
}

TEST_CASE("placement picks the node with most predicted free memory") {
    std::vector<NodeView> nodes = {
        {"busy", 1000, 700, 700.0},
        {"idle", 1000, 100, 100.0},
    };
    CHECK(choose_node(nodes, 50, 0.15) == "idle");
    // Headroom filter: share that would push past (1-h)*cap is rejected.
    CHECK(choose_node(nodes, 800, 0.15) == std::nullopt);
    std::vector<NodeView> one = {{"n", 1000, 0, 0.0}};
    CHECK(choose_node(one, 850, 0.15) == "n");
    CHECK(choose_node(one, 851, 0.15) == std::nullopt);
}

TEST_CASE("probe decision dead band") {
    CHECK(probe_decision(1.0, 1.0, 2, 8) == ProbeDecision::NoChange);
    CHECK(probe_decision(0.1, 1.0, 1, 8) == ProbeDecision::Grow);
    CHECK(probe_decision(0.1, 1.0, 8, 8) == ProbeDecision::NoChange); // clamped
    CHECK(probe_decision(2.5, 1.0, 2, 8) == ProbeDecision::Shrink);
    CHECK(probe_decision(2.5, 1.0, 1, 8) == ProbeDecision::NoChange); // floor
    CHECK(probe_decision(0.49, 1.0, 3, 8) == ProbeDecision::Grow);
    CHECK(probe_decision(0.51, 1.0, 3, 8) == ProbeDecision::NoChange);
}

TEST_CASE("policy config rejects out-of-range fields") {
    CHECK_THROWS_AS(PolicyConfig::from_json_text(R"({"mem_headroom": 1.5})"),
                    ConfigError);
    CHECK_THROWS_AS(PolicyConfig::from_json_text(R"({"flush_pressure": 0})"),
                    ConfigError);
    CHECK(PolicyConfig::from_json_text(R"({"target_rate": 1000})").target_rate ==
          1000);
}

TEST_CASE("registration launches an agent and returns its assignment") {
    TestCluster cluster(1);
    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "reg1";
    sc.rank = 0;
    sc.world_size = 1;
    auto session = client::Session::init(sc);
    const auto snap = cluster.controller->app_snapshot(session->app_id());
    REQUIRE(snap.has_value());
    CHECK(snap->world_size == 1);
    CHECK(snap->assignments.size() == 1);
    CHECK(snap->assignments[0].ranks == std::vector<Rank>{0});
    CHECK(assignments_cover_world(snap->assignments, 1));
    session->finalize();
}

TEST_CASE("coordinated version completes only after every rank commits") {
    TestCluster cluster(1);
    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "coord";
    sc.world_size = 2;

    sc.rank = 0;
    auto s0 = client::Session::init(sc);
    sc.rank = 1;
    auto s1 = client::Session::init(sc);

    std::vector<std::uint64_t> d0(100, 7), d1(100, 9);
    s0->add_adapt("data", d0.data(), d0.size(), 8, DistributionScheme::Block);
    s1->add_adapt("data", d1.data(), d1.size(), 8, DistributionScheme::Block);

    s0->commit();
    // Only rank 0 committed: nothing is COMPLETE yet.
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s0->app_id());
        return snap && snap->tracked_versions == 1;
    }));
    {
        const auto snap = cluster.controller->app_snapshot(s0->app_id());
        CHECK(!snap->latest_complete.has_value());
    }
    s1->commit();
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s0->app_id());
        return snap && snap->latest_complete == 1;
    }));

    // Restart info returns the COMPLETE version, not the torn one.
    s0->commit(); // v2 from rank 0 only
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s0->app_id());
        return snap && snap->tracked_versions == 2;
    }));
    auto conn = net::MsgConn::dial(cluster.controller->endpoint(),
                                   std::chrono::seconds(5));
    const auto info =
        std::get<proto::RestartInfo>(conn->request(proto::RestartQuery{"coord", 0}));
    CHECK(info.found == 1);
    CHECK(info.version == 1);
    s1->commit();
    s0->finalize();
    s1->finalize();
}

TEST_CASE("duplicate commit reports are idempotent") {
    TestCluster cluster(1);
    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "dup";
    sc.rank = 0;
    sc.world_size = 2;
    auto s0 = client::Session::init(sc);
    // Forge the same commit report twice for rank 0 of version 1.
    auto conn = net::MsgConn::dial(cluster.controller->endpoint(),
                                   std::chrono::seconds(5));
    proto::CommitReport rep;
    rep.app_id = s0->app_id();
    rep.epoch = 0;
    rep.version = 1;
    rep.rank = 0;
    rep.agent_id = 999;
    rep.bytes = 10;
    rep.transfer_us = 5;
    conn->send(rep);
    conn->send(rep);
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s0->app_id());
        return snap && snap->tracked_versions == 1;
    }));
    // Two ranks in the world: a double report from one rank never completes it.
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    const auto snap = cluster.controller->app_snapshot(s0->app_id());
    CHECK(!snap->latest_complete.has_value());
}

TEST_CASE("garbage collection keeps the last two complete versions") {
    TestCluster cluster(1);
    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "gc";
    sc.rank = 0;
    sc.world_size = 1;
    auto s = client::Session::init(sc);
    std::vector<std::uint64_t> data(512, 1);
    s->add_adapt("data", data.data(), data.size(), 8, DistributionScheme::Block);
    for (int i = 0; i < 5; ++i)
        s->commit();
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s->app_id());
        return snap && snap->latest_complete == 5 && snap->tracked_versions == 2;
    }));
    // The agent store was told to drop old versions too.
    auto agent = cluster.first_agent();
    REQUIRE(agent);
    CHECK(wait_until([&] {
        return agent->staged_bytes() == 2 * 512 * 8;
    }));
    s->finalize();
}

TEST_CASE("restart query for an unknown app reports none") {
    TestCluster cluster(1);
    auto conn = net::MsgConn::dial(cluster.controller->endpoint(),
                                   std::chrono::seconds(5));
    const auto info =
        std::get<proto::RestartInfo>(conn->request(proto::RestartQuery{"ghost", 0}));
    CHECK(info.found == 0);
}

TEST_CASE("aged complete versions are flushed to the PFS tier") {
    PolicyConfig policy;
    policy.flush_age_s = 0.2;
    TestCluster cluster(1, policy);
    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "flush";
    sc.rank = 0;
    sc.world_size = 1;
    auto s = client::Session::init(sc);
    std::vector<std::uint64_t> data(256, 3);
    s->add_adapt("data", data.data(), data.size(), 8, DistributionScheme::Block);
    s->commit();
    CHECK(wait_until([&] {
        return pfs::version_on_pfs(cluster.pfs_root, s->app_id(), 0, 1);
    }, 5000));
    const auto manifest = pfs::load_manifest(cluster.pfs_root, s->app_id(), 0, 1);
    REQUIRE(manifest.has_value());
    CHECK(manifest->app_name == "flush");
    CHECK(manifest->world_size == 1);
    REQUIRE(manifest->entries.size() == 1);
    CHECK(manifest->entries[0].bytes == 256 * 8);
    s->finalize();
}

TEST_CASE("node grant is idempotent and empty grants clear requests") {
    TestCluster cluster(1);
    CHECK(cluster.controller->owned_nodes() == std::vector<std::string>{"n1"});
    cluster.grant({"n1"});
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    CHECK(cluster.controller->owned_nodes() == std::vector<std::string>{"n1"});
    cluster.grant({});
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    CHECK(cluster.controller->owned_nodes() == std::vector<std::string>{"n1"});
}

TEST_CASE("reclaiming an unowned node is refused") {
    TestCluster cluster(1);
    cluster.reclaim({"nope"});
    const auto msg = cluster.rm->recv();
    REQUIRE(msg.has_value());
    const auto &err = std::get<proto::ErrorMsg>(*msg);
    CHECK(err.code == "not_owned");
}

TEST_CASE("reclaim with a target node migrates agents and preserves restores") {
    TestCluster cluster(2);
    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "reclaim";
    sc.rank = 0;
    sc.world_size = 1;
    auto s = client::Session::init(sc);
    std::vector<std::uint64_t> data(4096);
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = i * 31;
    s->add_adapt("data", data.data(), data.size(), 8, DistributionScheme::Block);
    s->commit();
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s->app_id());
        return snap && snap->latest_complete == 1;
    }));

    const auto before = cluster.controller->app_snapshot(s->app_id());
    const std::string host_node = before->assignments[0].node_id;
    cluster.reclaim({host_node});
    CHECK(wait_until([&] { return !cluster.controller->node_owned(host_node); },
                     10000));
    const auto after = cluster.controller->app_snapshot(s->app_id());
    REQUIRE(after.has_value());
    REQUIRE(after->assignments.size() == 1);
    CHECK(after->assignments[0].node_id != host_node);

    // Restore must still return the committed bytes, post-migration.
    std::vector<std::uint64_t> scratch(4096, 0);
    std::memcpy(scratch.data(), data.data(), 1); // keep layout identical
    std::vector<std::uint64_t> original = data;
    for (auto &d : data)
        d = 0;
    CHECK(s->restart());
    CHECK(data == original);
    s->finalize();
}

TEST_CASE("reclaiming the only node degrades the data to the PFS tier") {
    PolicyConfig policy;
    TestCluster cluster(1, policy);
    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "lastnode";
    sc.rank = 0;
    sc.world_size = 1;
    auto s = client::Session::init(sc);
    std::vector<std::uint64_t> data(1024);
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = i ^ 0xA5A5;
    s->add_adapt("data", data.data(), data.size(), 8, DistributionScheme::Block);
    s->commit();
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s->app_id());
        return snap && snap->latest_complete == 1;
    }));

    cluster.reclaim({"n1"});
    CHECK(wait_until([&] { return !cluster.controller->node_owned("n1"); }, 15000));
    CHECK(pfs::version_on_pfs(cluster.pfs_root, s->app_id(), 0, 1));

    const auto original = data;
    for (auto &d : data)
        d = 0;
    CHECK(s->restart()); // served from the PFS tier
    CHECK(data == original);
    s->finalize();
}

TEST_CASE("adapt notice precomputes plans on the agents") {
    TestCluster cluster(1);
    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "adaptn";
    sc.world_size = 2;
    sc.rank = 0;
    auto s0 = client::Session::init(sc);
    sc.rank = 1;
    auto s1 = client::Session::init(sc);
    std::vector<std::uint64_t> d0(50), d1(50);
    s0->add_adapt("data", d0.data(), 50, 8, DistributionScheme::Block);
    s1->add_adapt("data", d1.data(), 50, 8, DistributionScheme::Block);
    s0->commit();
    s1->commit();
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s0->app_id());
        return snap && snap->latest_complete == 1;
    }));

    cluster.rm->send(proto::AppAdaptNotice{s0->app_id(), "", 4, 0});
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s0->app_id());
        return snap && snap->world_size == 4 && snap->epoch == 1;
    }));
    auto agent = cluster.first_agent();
    REQUIRE(agent);
    CHECK(wait_until([&] { return agent->plans_prepushed() > 0; }));
    CHECK(agent->plans_computed_local() == 0);

    // Same world size again: a no-op, nothing changes.
    const auto before = cluster.controller->app_snapshot(s0->app_id());
    cluster.rm->send(proto::AppAdaptNotice{s0->app_id(), "", 4, 0});
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    const auto after = cluster.controller->app_snapshot(s0->app_id());
    CHECK(after->epoch == before->epoch);
}

TEST_CASE("capacity errors trigger a single outstanding node request") {
    TestCluster cluster(1);
    auto agent_conn = net::MsgConn::dial(cluster.controller->endpoint(),
                                         std::chrono::seconds(5));
    agent_conn->send(proto::ErrorMsg{"capacity", "agent 1 over budget"});
    agent_conn->send(proto::ErrorMsg{"capacity", "agent 1 over budget"});
    // The RM sees exactly one NODE_REQUEST.
    const auto first = cluster.rm->recv();
    REQUIRE(first.has_value());
    CHECK(std::get<proto::NodeRequest>(*first).reason == "memory");
    CHECK(wait_until([&] {
        return cluster.controller->outstanding_node_requests() == 1;
    }));
    cluster.grant({});
    CHECK(wait_until([&] {
        return cluster.controller->outstanding_node_requests() == 0;
    }));
}

TEST_CASE("migrate hint moves agents while the source node stays owned") {
    TestCluster cluster(2);
    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "hint";
    sc.rank = 0;
    sc.world_size = 1;
    auto s = client::Session::init(sc);
    std::vector<std::uint64_t> data(2048);
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = i * 7;
    s->add_adapt("data", data.data(), data.size(), 8, DistributionScheme::Block);
    s->commit();
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s->app_id());
        return snap && snap->latest_complete == 1;
    }));
    const auto before = cluster.controller->app_snapshot(s->app_id());
    const std::string from = before->assignments[0].node_id;
    const std::string to = from == "n1" ? "n2" : "n1";
    cluster.rm->send(proto::MigrateHint{from, to});
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s->app_id());
        return snap && !snap->assignments.empty() &&
               snap->assignments[0].node_id == to;
    }, 10000));
    CHECK(cluster.controller->node_owned(from)); // unlike a reclaim
    const auto original = data;
    for (auto &d : data)
        d = 0;
    CHECK(s->restart());
    CHECK(data == original);
    s->finalize();
}

TEST_CASE("migrate hint with an empty source node is a no-op") {
    TestCluster cluster(2);
    cluster.rm->send(proto::MigrateHint{"n1", "n2"});
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    CHECK(cluster.controller->node_owned("n1"));
    CHECK(cluster.controller->node_owned("n2"));
}

TEST_CASE("migrate hint to a node without headroom is rejected with a reason") {
    TestCluster cluster(1);
    cluster.add_manager("tiny", 1000); // far too small for the staged data
    cluster.grant({"tiny"});
    CHECK(wait_until([&] { return cluster.controller->node_owned("tiny"); }));

    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "cramped";
    sc.rank = 0;
    sc.world_size = 1;
    auto s = client::Session::init(sc);
    std::vector<std::uint64_t> data(2048);
    s->add_adapt("data", data.data(), data.size(), 8, DistributionScheme::Block);
    s->commit();
    CHECK(wait_until([&] {
        const auto snap = cluster.controller->app_snapshot(s->app_id());
        return snap && snap->latest_complete == 1;
    }));
    const auto snap = cluster.controller->app_snapshot(s->app_id());
    cluster.rm->send(proto::MigrateHint{snap->assignments[0].node_id, "tiny"});
    const auto reply = cluster.rm->recv();
    REQUIRE(reply.has_value());
    CHECK(std::get<proto::ErrorMsg>(*reply).code == "no_headroom");
    s->finalize();
}

TEST_CASE("migrate hint to an unknown node is refused") {
    TestCluster cluster(1);
    cluster.rm->send(proto::MigrateHint{"n1", "ghost"});
    const auto reply = cluster.rm->recv();
    REQUIRE(reply.has_value());
    CHECK(std::get<proto::ErrorMsg>(*reply).code == "not_owned");
}
