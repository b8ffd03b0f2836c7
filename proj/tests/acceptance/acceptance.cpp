// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
// the binary exits nonzero if any criterion fails. Run a single criterion
// with `acceptance --criterion N`.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>

#include "icheck/client/session.hpp"
#include "icheck/harness/generator.hpp"
#include "icheck/harness/runner.hpp"
#include "icheck/manager/manager.hpp"
#include "support/agent_driver.hpp"
#include "support/cluster.hpp"
#include "support/msg_random.hpp"
#include "support/oracles.hpp"
#include "support/standalone_agent.hpp"

using namespace icheck;
using namespace icheck::testing;

namespace {

struct CheckFail : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string &what) {
    if (!cond)
        throw CheckFail(what);
}

double mean_of(const std::vector<double> &v) {
    double s = 0;
    for (double x : v)
        s += x;
    return v.empty() ? 0 : s / v.size();
}

// ---------------------------------------------------------------------------
// 1. Round-trip fidelity: 1000 randomized commit/restore cycles, 1 B..16 MiB.
void criterion_round_trip() {
    StandaloneFixture fx;
    auto conn = fx.dial();
    std::mt19937_64 rng(1001);
    const auto hello = std::get<proto::Ack>(conn->request(proto::Connect{fx.app, 0, 0}));
    expect(hello.status == 0, "agent refused the connection");
    for (int cycle = 1; cycle <= 1000; ++cycle) {
        const double log_size = (rng() % 24001) / 1000.0; // [0, 24] bits
        const auto size = static_cast<std::size_t>(std::pow(2.0, log_size));
        const auto bytes = random_blob(size, rng());
        mem_register(*conn, fx.app, 0, 0, "data", 1, size);
        const auto ack = commit_bytes(*conn, fx.app, 0, cycle, 0, "data", bytes,
                                      proto::kChunkBytes);
        expect(ack.status == 0, "commit " + std::to_string(cycle) + " refused: " +
                                    ack.reason);
        const auto back = restore_bytes(*conn, fx.app, cycle, 0, 0, "data");
        expect(back.status == proto::Status::Ok, "restore refused");
        expect(back.bytes == bytes,
               "cycle " + std::to_string(cycle) + ": restored bytes differ");
        // Drop the previous version so staging stays bounded.
        proto::GcOrder gc;
        gc.app_id = fx.app;
        gc.epoch = 0;
        gc.min_version_keep = cycle;
        fx.svc->apply_gc(gc);
    }
}

// ---------------------------------------------------------------------------
// 2. Redistribution oracle equivalence, exhaustive over the stated grid.
void criterion_redistribution_oracle() {
    std::mt19937_64 rng(2002);
    const DistributionScheme schemes[] = {DistributionScheme::Block,
                                          DistributionScheme::Cyclic};
    for (std::uint64_t n : {0ull, 1ull, 7ull, 64ull, 10000ull}) {
        for (std::uint32_t p_old = 1; p_old <= 8; ++p_old) {
            for (std::uint32_t p_new = 1; p_new <= 8; ++p_new) {
                for (auto s_old : schemes) {
                    for (auto s_new : schemes) {
                        const Layout oldl{n, p_old, s_old};
                        const Layout newl{n, p_new, s_new};
                        const auto plan = redistribution_plan(oldl, newl);
                        const auto bad = verify_plan(plan);
                        expect(!bad, "plan invariant violated: " +
                                         bad.value_or(""));
                        const auto src = random_rank_buffers(oldl, 4, rng());
                        const auto got = apply_plan(plan, src, 4);
                        const auto want = gather_scatter(oldl, newl, src, 4);
                        expect(got == want, "apply_plan diverged from oracle at N=" +
                                                std::to_string(n));
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 3. Coordinated atomicity under mid-commit kills, 20 random kill points.
void criterion_atomicity() {
    std::mt19937_64 rng(3003);
    for (int trial = 0; trial < 20; ++trial) {
        harness::Scenario s;
        s.name = "atomicity";
        s.app.name = "synth-atom-" + std::to_string(trial);
        s.app.world_size = 4;
        s.app.iterations = 16;
        s.app.checkpoint_interval = 2;
        s.app.compute_ms = 20;
        s.app.seed = 9000 + trial;
        s.app.regions.push_back({"data", 8, 2048, DistributionScheme::Block});
        s.icheck_nodes.push_back({"n1", 1ull << 30});
        s.single_process = false;
        harness::FaultSpecJson fault;
        fault.rank = static_cast<Rank>(rng() % 4);
        fault.version = 2 + rng() % 5; // versions 2..6 of 8
        fault.fraction = 0.1 + (rng() % 80) / 100.0;
        s.fault = fault;

        const auto out = fresh_tmp_dir("acc3");
        const auto result = harness::run_scenario(s, out);
        std::string all;
        for (const auto &f : result.failures)
            all += f + "; ";
        expect(result.pass, "trial " + std::to_string(trial) + " failed: " + all);
        expect(result.restarts == 1,
               "trial " + std::to_string(trial) + ": expected one restart, saw " +
                   std::to_string(result.restarts));
        std::size_t restored = 0;
        for (const auto &r : result.reports) {
            if (r.kind != "restored")
                continue;
            ++restored;
            // The killed version must never serve a restore: the restored
            // iteration has to predate the faulted commit and be a commit
            // boundary of an older version.
            const std::uint64_t fault_iter =
                fault.version * s.app.checkpoint_interval - 1;
            expect(r.iter < fault_iter, "restored data from the torn version");
            expect((r.iter + 1) % s.app.checkpoint_interval == 0,
                   "restored iteration is not a commit point");
        }
        expect(restored == 4, "expected all four ranks to restore, saw " +
                                  std::to_string(restored));
        std::filesystem::remove_all(out);
    }
}

// ---------------------------------------------------------------------------
// 4. Async vs sync blocking under a throttled and an unthrottled transport.
void criterion_async_blocking() {
    TestCluster cluster(1, {}, 4ull << 30);
    const std::size_t elems = (64u << 20) / 8; // 64 MiB region

    auto run = [&](const std::string &name, bool sync, std::uint64_t throttle,
                   int interval_ms, int commits) {
        client::SessionConfig sc;
        sc.controller_endpoint = cluster.controller->endpoint();
        sc.name = name;
        sc.rank = 0;
        sc.world_size = 1;
        sc.sync_mode = sync;
        sc.throttle_bytes_per_sec = throttle;
        auto s = client::Session::init(sc);
        std::vector<std::uint64_t> data(elems, 7);
        s->add_adapt("data", data.data(), data.size(), 8,
                     DistributionScheme::Block);
        for (int i = 0; i < commits; ++i) {
            for (std::size_t k = 0; k < 64; ++k)
                data[k * 1024] = i * k;
            s->commit();
            std::this_thread::sleep_for(std::chrono::milliseconds(interval_ms));
        }
        return s->finalize();
    };

    const std::uint64_t throttle = 256ull << 20;
    // Calibrate the commit interval to the transport: meaningfully shorter
    // than one transfer, long enough that a 0.6 blocked ratio is the
    // async/sync contract rather than measurement noise.
    const auto warmup = run("acc4-warmup", false, throttle, 900, 3);
    std::vector<double> w_transfer;
    for (const auto &st : warmup)
        w_transfer.push_back(st.t_transfer_us);
    const double t_mean_us = mean_of(w_transfer);
    const int interval_ms = std::clamp<int>(
        static_cast<int>(0.65 * t_mean_us / 1000.0), 260, 800);
    const auto async_stats = run("acc4-async", false, throttle, interval_ms, 16);
    const auto sync_stats = run("acc4-sync", true, throttle, interval_ms, 16);
    std::vector<double> a_blocked, s_blocked, a_copy;
    for (const auto &st : async_stats) {
        a_blocked.push_back(st.t_blocked_us);
        a_copy.push_back(st.t_copy_us);
    }
    for (const auto &st : sync_stats)
        s_blocked.push_back(st.t_blocked_us);
    const double mean_async = mean_of(a_blocked);
    const double mean_sync = mean_of(s_blocked);
    expect(mean_async <= 0.6 * mean_sync,
           "throttled: mean blocked async " + std::to_string(mean_async) +
               "us vs sync " + std::to_string(mean_sync) + "us");

    // Same calibration for the loopback phase: the gap must comfortably
    // cover one transfer so blocking reduces to the staging copy.
    const auto fast_warmup = run("acc4-fast-warmup", false, 0, 900, 3);
    std::vector<double> fw_transfer;
    for (const auto &st : fast_warmup)
        fw_transfer.push_back(st.t_transfer_us);
    const int fast_interval_ms = std::clamp<int>(
        static_cast<int>(2.0 * mean_of(fw_transfer) / 1000.0), 500, 1500);
    const auto fast_stats = run("acc4-fast", false, 0, fast_interval_ms, 16);
    std::vector<double> f_blocked, f_copy;
    for (const auto &st : fast_stats) {
        f_blocked.push_back(st.t_blocked_us);
        f_copy.push_back(st.t_copy_us);
    }
    const double mean_blocked = mean_of(f_blocked);
    const double mean_copy = mean_of(f_copy);
    expect(mean_blocked <= 1.5 * mean_copy,
           "unthrottled: mean blocked " + std::to_string(mean_blocked) +
               "us vs copy " + std::to_string(mean_copy) + "us");
}

// ---------------------------------------------------------------------------
// 5. Snapshot isolation: post-commit mutations never reach the checkpoint.
void criterion_snapshot_isolation() {
    TestCluster cluster(1);
    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "acc5";
    sc.rank = 0;
    sc.world_size = 1;
    auto s = client::Session::init(sc);
    std::vector<std::uint64_t> data(8192); // 64 KiB
    s->add_adapt("data", data.data(), data.size(), 8, DistributionScheme::Block);

    std::mt19937_64 rng(5005);
    for (int trial = 1; trial <= 100; ++trial) {
        for (auto &x : data)
            x = rng();
        const auto committed = data;
        const auto version = s->commit();
        // Mutate immediately, while the transfer may still be inflight.
        for (auto &x : data)
            x = 0xDEADDEADDEADDEADull;
        expect(wait_until([&] {
                   const auto snap = cluster.controller->app_snapshot(s->app_id());
                   return snap && snap->latest_complete == version;
               }),
               "version never completed");
        expect(s->restart(), "restart found nothing");
        expect(data == committed,
               "trial " + std::to_string(trial) + ": restored bytes are not the "
                                                  "pre-mutation snapshot");
    }
    s->finalize();
}

// ---------------------------------------------------------------------------
// 6. Malleability under reclaim: restores stay byte-exact during and after
//    migration; with no target node the PFS tier serves.
void criterion_reclaim() {
    {
        TestCluster cluster(2);
        client::SessionConfig sc;
        sc.controller_endpoint = cluster.controller->endpoint();
        sc.name = "acc6a";
        sc.rank = 0;
        sc.world_size = 1;
        auto s = client::Session::init(sc);
        std::vector<std::uint64_t> data(1 << 16); // 512 KiB
        for (std::size_t i = 0; i < data.size(); ++i)
            data[i] = i * 2654435761u;
        const auto committed = data;
        s->add_adapt("data", data.data(), data.size(), 8, DistributionScheme::Block);
        s->commit();
        expect(wait_until([&] {
                   const auto snap = cluster.controller->app_snapshot(s->app_id());
                   return snap && snap->latest_complete == 1;
               }),
               "commit never completed");

        const auto before = cluster.controller->app_snapshot(s->app_id());
        const std::string host = before->assignments[0].node_id;
        cluster.reclaim({host});

        // Hammer restores while the migration is in flight.
        const auto until = std::chrono::steady_clock::now() + std::chrono::seconds(2);
        int checks = 0;
        while (std::chrono::steady_clock::now() < until) {
            std::fill(data.begin(), data.end(), 0);
            expect(s->restart(), "restore failed during migration");
            expect(data == committed, "restore diverged during migration");
            ++checks;
        }
        expect(checks > 3, "too few restore probes completed");
        expect(wait_until([&] { return !cluster.controller->node_owned(host); },
                          10000),
               "node was never released");
        std::fill(data.begin(), data.end(), 0);
        expect(s->restart(), "restore failed after migration");
        expect(data == committed, "restore diverged after migration");
        s->finalize();
    }
    {
        TestCluster cluster(1);
        client::SessionConfig sc;
        sc.controller_endpoint = cluster.controller->endpoint();
        sc.name = "acc6b";
        sc.rank = 0;
        sc.world_size = 1;
        auto s = client::Session::init(sc);
        std::vector<std::uint64_t> data(1 << 15);
        for (std::size_t i = 0; i < data.size(); ++i)
            data[i] = i ^ 0xFEEDFACEu;
        const auto committed = data;
        s->add_adapt("data", data.data(), data.size(), 8, DistributionScheme::Block);
        s->commit();
        expect(wait_until([&] {
                   const auto snap = cluster.controller->app_snapshot(s->app_id());
                   return snap && snap->latest_complete == 1;
               }),
               "commit never completed");
        cluster.reclaim({"n1"});
        expect(wait_until([&] { return !cluster.controller->node_owned("n1"); },
                          15000),
               "node was never released");
        expect(pfs::version_on_pfs(cluster.pfs_root, s->app_id(), 0, 1),
               "version absent from the PFS tier after forced flush");
        std::fill(data.begin(), data.end(), 0);
        expect(s->restart(), "restore from PFS failed");
        expect(data == committed, "PFS restore diverged");
        s->finalize();
    }
}

// ---------------------------------------------------------------------------
// 7. Malleability under adaptation: expand 4->8 and shrink 8->4 with
//    controller-prepushed plans.
void criterion_adapt() {
    auto run = [&](std::uint32_t from, std::uint32_t to, std::uint64_t seed) {
        harness::Scenario s;
        s.name = "acc7";
        s.app.name = "synth-adapt-" + std::to_string(from) + "-" +
                     std::to_string(to) + "-" + std::to_string(seed);
        s.app.world_size = from;
        s.app.iterations = 36;
        s.app.checkpoint_interval = 4;
        s.app.compute_ms = 30;
        s.app.seed = seed;
        s.app.regions.push_back({"data", 8, 16384, DistributionScheme::Block});
        s.icheck_nodes.push_back({"n1", 1ull << 30});
        s.single_process = true;
        harness::RmEventSpec adapt;
        adapt.at_s = 0.4;
        adapt.action = "adapt";
        adapt.app = s.app.name;
        adapt.new_world_size = to;
        s.rm_script.push_back(adapt);

        const auto out = fresh_tmp_dir("acc7");
        const auto result = harness::run_scenario(s, out);
        std::string all;
        for (const auto &f : result.failures)
            all += f + "; ";
        expect(result.pass, "adapt " + std::to_string(from) + "->" +
                                std::to_string(to) + " failed: " + all);
        std::size_t adapted = 0, done = 0;
        for (const auto &r : result.reports) {
            if (r.kind == "adapted")
                ++adapted;
            if (r.kind == "done")
                ++done;
        }
        expect(adapted >= std::min(from, to),
               "not every rank redistributed (saw " + std::to_string(adapted) + ")");
        expect(done == to, "final world did not finish (saw " +
                               std::to_string(done) + " of " + std::to_string(to) +
                               ")");
        // The notice preceded the adapt: every plan was prepared up front.
        expect(result.plans_prepushed > 0, "no prepushed plans recorded");
        expect(result.plans_local == 0,
               "agents computed " + std::to_string(result.plans_local) +
                   " plans after the notice");
        std::filesystem::remove_all(out);
    };
    run(4, 8, 7101);
    run(8, 4, 7102);
}

// ---------------------------------------------------------------------------
// 8. Probe-driven agent scaling in both directions.
void criterion_probe_scaling() {
    ctrl::PolicyConfig policy;
    policy.target_rate = 100.0 * (1 << 20); // 100 MiB/s reference
    TestCluster cluster(2, policy);

    client::SessionConfig sc;
    sc.controller_endpoint = cluster.controller->endpoint();
    sc.name = "acc8";
    sc.world_size = 2;
    sc.throttle_bytes_per_sec = 24ull << 20; // observed rate ~0.45x target
    sc.rank = 0;
    auto s0 = client::Session::init(sc);
    sc.rank = 1;
    auto s1 = client::Session::init(sc);

    std::vector<std::uint64_t> d0(1 << 20), d1(1 << 20); // 8 MiB each
    s0->add_adapt("data", d0.data(), d0.size(), 8, DistributionScheme::Block);
    s1->add_adapt("data", d1.data(), d1.size(), 8, DistributionScheme::Block);

    auto commit_both = [&] {
        std::thread t1([&] { s1->commit(); });
        s0->commit();
        t1.join();
    };
    commit_both();
    expect(wait_until([&] {
               const auto snap = cluster.controller->app_snapshot(s0->app_id());
               return snap && snap->latest_complete.has_value();
           }, 20000),
           "first version never completed");

    const auto before = cluster.controller->app_snapshot(s0->app_id());
    expect(before->assignments.size() == 1, "expected one initial agent");

    // Slow observed rate: the next probe must add an agent.
    expect(s0->probe_agents(), "probe did not report new assignments");
    s1->probe_agents();
    const auto grown = cluster.controller->app_snapshot(s0->app_id());
    expect(grown->assignments.size() == 2,
           "agent count after slow-rate probe is " +
               std::to_string(grown->assignments.size()));

    // The next version lands on the new agent set.
    commit_both();
    expect(wait_until([&] {
               const auto snap = cluster.controller->app_snapshot(s0->app_id());
               return snap && snap->latest_complete &&
                      *snap->latest_complete >= 2 && snap->retiring_agents == 0;
           }, 20000),
           "version on the grown agent set never completed");
    std::size_t serving = 0;
    for (const auto &a : cluster.all_agents())
        if (a->staged_bytes() > 0 && !a->config().ranks.empty())
            ++serving;
    expect(serving >= 2, "new version is not distributed over the new agents");

    // Fast observed rate: the next probe must drop an agent.
    s0->set_throttle(0);
    s1->set_throttle(0);
    commit_both();
    expect(wait_until([&] {
               const auto snap = cluster.controller->app_snapshot(s0->app_id());
               return snap && snap->latest_complete && *snap->latest_complete >= 3;
           }, 20000),
           "unthrottled version never completed");
    expect(s0->probe_agents(), "probe did not shrink the agent set");
    const auto shrunk = cluster.controller->app_snapshot(s0->app_id());
    expect(shrunk->assignments.size() == 1,
           "agent count after fast-rate probe is " +
               std::to_string(shrunk->assignments.size()));
    s1->probe_agents();
    commit_both();
    expect(wait_until([&] {
               const auto snap = cluster.controller->app_snapshot(s0->app_id());
               return snap && snap->latest_complete && *snap->latest_complete >= 4;
           }, 20000),
           "version after shrink never completed");
    s0->finalize();
    s1->finalize();
}

// ---------------------------------------------------------------------------
// 9. Protocol round-trip fuzzing, malformed-frame rejection, re-chunking.
void criterion_protocol() {
    std::mt19937_64 rng(9009);
    constexpr auto variants = std::variant_size_v<proto::Message>;
    for (int i = 0; i < 10000; ++i) {
        const auto m = random_message(rng() % variants, rng, 300);
        proto::Decoder d;
        d.feed(proto::encode(m));
        const auto back = d.poll();
        expect(back.has_value() && *back == m, "round-trip mismatch at case " +
                                                   std::to_string(i));
    }
    // Malformed frames map to the specified error classes.
    auto expect_error = [&](proto::Blob frame, const std::string &field) {
        proto::Decoder d;
        d.feed(frame);
        try {
            d.poll();
            expect(false, "malformed frame accepted (" + field + ")");
        } catch (const ProtocolError &e) {
            expect(e.field() == field, "wrong error class: got " + e.field() +
                                           ", want " + field);
        }
    };
    const auto good = proto::encode(proto::ProbeAgents{1, 2, 3, 0});
    {
        auto f = good;
        f[0] = std::byte{'X'};
        expect_error(f, "magic");
    }
    {
        auto f = good;
        f[4] = std::byte{7};
        expect_error(f, "version");
    }
    {
        auto f = good;
        f[5] = std::byte{200};
        expect_error(f, "msg_type");
    }
    {
        auto f = good;
        f.resize(f.size() - 2);
        f[9] = static_cast<std::byte>(static_cast<unsigned>(f[9]) - 2);
        expect_error(f, "payload");
    }
    // Chunk-boundary independence under random re-chunking.
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<proto::Message> msgs;
        proto::Blob stream;
        for (int i = 0; i < 50; ++i) {
            msgs.push_back(random_message(rng() % variants, rng, 200));
            const auto f = proto::encode(msgs.back());
            stream.insert(stream.end(), f.begin(), f.end());
        }
        proto::Decoder d;
        std::vector<proto::Message> got;
        std::size_t at = 0;
        while (at < stream.size()) {
            const std::size_t n = std::min(stream.size() - at, rng() % 173 + 1);
            d.feed(std::span<const std::byte>(stream.data() + at, n));
            at += n;
            while (auto m = d.poll())
                got.push_back(*m);
        }
        expect(got == msgs, "re-chunked stream decoded differently");
    }
}

// ---------------------------------------------------------------------------
// 10. Layout unit laws, exhaustive for N <= 256, P <= 16.
void criterion_layout_laws() {
    const DistributionScheme schemes[] = {DistributionScheme::Block,
                                          DistributionScheme::Cyclic};
    for (std::uint64_t n = 0; n <= 256; ++n) {
        for (std::uint32_t p = 1; p <= 16; ++p) {
            // Block balance.
            std::uint64_t lo = UINT64_MAX, hi = 0, sum = 0;
            for (Rank r = 0; r < p; ++r) {
                const auto c = owned_count({n, p, DistributionScheme::Block}, r);
                lo = std::min(lo, c);
                hi = std::max(hi, c);
                sum += c;
            }
            expect(hi - lo <= 1, "block balance spread exceeds one");
            expect(sum == n, "block counts do not sum to N");
            // Coverage/disjointness for both schemes via the ownership maps.
            for (auto scheme : schemes) {
                const Layout l{n, p, scheme};
                std::uint64_t covered = 0;
                for (Rank r = 0; r < p; ++r)
                    covered += owned_count(l, r);
                expect(covered == n, "counts do not partition the index space");
                for (std::uint64_t g = 0; g < n; ++g) {
                    const auto [r, j] = owner_of(l, g);
                    expect(global_index(l, r, j) == g, "owner map not invertible");
                }
            }
            // Cyclic owner formula against explicit round-robin dealing.
            const auto dealt = naive_cyclic(n, p);
            for (Rank r = 0; r < p; ++r)
                for (std::size_t j = 0; j < dealt[r].size(); ++j) {
                    expect(cyclic_owner(dealt[r][j], p) ==
                               std::pair<Rank, std::uint64_t>{r, j},
                           "cyclic owner formula disagrees with dealing");
                }
        }
    }
    // Involution: A -> B -> A restores per-rank buffers byte-exactly.
    std::mt19937_64 rng(1010);
    for (std::uint64_t n = 0; n <= 256; n += (n < 16 ? 1 : 7)) {
        for (std::uint32_t pa = 1; pa <= 16; pa += 3) {
            for (std::uint32_t pb = 1; pb <= 16; pb += 3) {
                for (auto sa : schemes) {
                    for (auto sb : schemes) {
                        const Layout a{n, pa, sa};
                        const Layout b{n, pb, sb};
                        const auto src = random_rank_buffers(a, 1, rng());
                        const auto mid = apply_plan(redistribution_plan(a, b), src, 1);
                        const auto back = apply_plan(redistribution_plan(b, a), mid, 1);
                        expect(back == src, "A->B->A did not restore buffers");
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 11. PFS manifest as the commit point.
void criterion_pfs_manifest() {
    StandaloneFixture fx;
    auto conn = fx.dial();
    mem_register(*conn, fx.app, 0, 0, "data", 1, 8192);
    const auto bytes = random_blob(8192, 42);
    expect(commit_bytes(*conn, fx.app, 0, 1, 0, "data", bytes).status == 0,
           "commit refused");

    pfs::Manifest m;
    m.app_name = "acc11";
    m.app_id = fx.app;
    m.epoch = 0;
    m.version = 1;
    m.world_size = 1;
    m.entries.push_back({0, "data", bytes.size(), crc32(bytes.data(), bytes.size())});
    proto::FlushOrder order;
    order.app_id = fx.app;
    order.epoch = 0;
    order.version = 1;
    order.agent_id = fx.svc->config().agent_id;
    order.ranks = {0};
    order.write_manifest = 1;
    order.manifest_json = pfs::render_manifest(m);

    // Crash between the data files and the manifest rename.
    fx.svc->set_pfs_crash_point(pfs::CrashPoint::BeforeManifest);
    const auto crashed = fx.svc->do_flush(order);
    expect(crashed.ok == 0, "crashed flush acked success");
    expect(!pfs::version_on_pfs(fx.pfs, fx.app, 0, 1),
           "version reported on PFS without a manifest");

    // Recovery: rerun the flush, then serve the restore purely from PFS.
    fx.svc->set_pfs_crash_point(pfs::CrashPoint::None);
    expect(fx.svc->do_flush(order).ok == 1, "flush retry failed");
    expect(pfs::version_on_pfs(fx.pfs, fx.app, 0, 1), "manifest missing");
    proto::GcOrder purge;
    purge.app_id = fx.app;
    purge.epoch = 0;
    purge.purge_flushed = 1;
    purge.complete_watermark = 1;
    fx.svc->apply_gc(purge);
    expect(fx.svc->staged_bytes() == 0, "memory copy survived the purge");
    const auto back = restore_bytes(*conn, fx.app, 1, 0, 0, "data");
    expect(back.status == proto::Status::Ok, "PFS restore refused");
    expect(back.bytes == bytes, "PFS restore not byte-exact");
}

// ---------------------------------------------------------------------------
// 12. EWMA prediction: exact formula and convex-combination bound.
void criterion_ewma() {
    expect(std::abs(mgr::ewma(std::nullopt, 100.0, 0.5) - 100.0) < 1e-12,
           "first sample must initialize the prediction");
    expect(std::abs(mgr::ewma(100.0, 200.0, 0.5) - 150.0) < 1e-12,
           "alpha 0.5 blend of 100 and 200 must be 150");
    std::mt19937_64 rng(1212);
    for (int trial = 0; trial < 200; ++trial) {
        const double alpha = 0.01 + (rng() % 100) / 101.0;
        std::optional<double> pred;
        double lo = 1e300, hi = -1e300;
        for (int i = 0; i < 300; ++i) {
            const double sample = static_cast<double>(rng() % 1000000) / 7.0;
            const double expect_val =
                pred ? alpha * sample + (1 - alpha) * *pred : sample;
            pred = mgr::ewma(pred, sample, alpha);
            expect(std::abs(*pred - expect_val) < 1e-12, "EWMA formula drifted");
            lo = std::min(lo, sample);
            hi = std::max(hi, sample);
            expect(*pred >= lo - 1e-9 && *pred <= hi + 1e-9,
                   "EWMA left the sample hull");
        }
    }
}

struct Criterion {
    int id;
    const char *name;
    std::function<void()> fn;
};

const Criterion kCriteria[] = {
    {1, "round-trip fidelity (1000 randomized commit/restore cycles)",
     criterion_round_trip},
    {2, "redistribution oracle equivalence (exhaustive grid)",
     criterion_redistribution_oracle},
    {3, "coordinated atomicity under mid-commit kills", criterion_atomicity},
    {4, "async vs sync commit blocking", criterion_async_blocking},
    {5, "snapshot isolation of async commits", criterion_snapshot_isolation},
    {6, "malleability: node reclaim with migration and PFS fallback",
     criterion_reclaim},
    {7, "malleability: expand and shrink adaptation with prepushed plans",
     criterion_adapt},
    {8, "probe-driven agent scaling", criterion_probe_scaling},
    {9, "protocol round-trip and malformed-frame rejection", criterion_protocol},
    {10, "layout unit laws (exhaustive N<=256, P<=16)", criterion_layout_laws},
    {11, "PFS manifest as commit point", criterion_pfs_manifest},
    {12, "EWMA prediction", criterion_ewma},
};

} // namespace

int main(int argc, char **argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--criterion" && i + 1 < argc)
            only = std::atoi(argv[i + 1]);
    }
    int failures = 0;
    for (const auto &c : kCriteria) {
        if (only != 0 && c.id != only)
            continue;
        std::string verdict = "PASS";
        std::string detail;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.fn();
        } catch (const std::exception &e) {
            verdict = "FAIL";
            detail = e.what();
            ++failures;
        }
        const auto secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        std::printf("[%2d] %-68s %s (%.1fs)%s%s\n", c.id, c.name, verdict.c_str(),
                    secs, detail.empty() ? "" : " -- ", detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
