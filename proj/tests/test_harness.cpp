// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>

#include "icheck/harness/generator.hpp"
#include "icheck/harness/runner.hpp"
#include "icheck/harness/scenario.hpp"
#include "support/cluster.hpp"
#include "support/oracles.hpp"

using namespace icheck;
using namespace icheck::harness;
using icheck::testing::fresh_tmp_dir;

TEST_CASE("generator output is deterministic and iteration-stamped") {
    const Layout l{1000, 4, DistributionScheme::Block};
    proto::Blob a(owned_count(l, 1) * 8), b(a.size());
    fill_buffer(a, 8, l, 1, 42, 7);
    fill_buffer(b, 8, l, 1, 42, 7);
    CHECK(a == b);
    CHECK(decode_iter(a, 8) == 7);
    CHECK(!verify_buffer(a, 8, l, 1, 42, 7).has_value());
    CHECK(verify_buffer(a, 8, l, 1, 42, 8).has_value());  // wrong iteration
    CHECK(verify_buffer(a, 8, l, 1, 43, 7).has_value());  // wrong seed
    a[12] = static_cast<std::byte>(static_cast<unsigned char>(a[12]) ^ 1);
    const auto bad = verify_buffer(a, 8, l, 1, 42, 7);
    REQUIRE(bad.has_value());
    CHECK(bad->byte_offset == 12);
}

TEST_CASE("uniform iteration check catches torn buffers") {
    const Layout l{100, 1, DistributionScheme::Block};
    proto::Blob buf(100 * 8);
    fill_buffer(buf, 8, l, 0, 1, 3);
    CHECK(!verify_uniform_iter(buf, 8).has_value());
    proto::Blob other(100 * 8);
    fill_buffer(other, 8, l, 0, 1, 4);
    std::copy(other.begin(), other.begin() + 8 * 10, buf.begin() + 8 * 50);
    CHECK(verify_uniform_iter(buf, 8).has_value());
}

TEST_CASE("generator data survives re-slicing to another layout") {
    const std::uint64_t n = 512;
    const Layout a{n, 3, DistributionScheme::Block};
    const Layout b{n, 5, DistributionScheme::Cyclic};
    std::vector<std::vector<std::byte>> pieces;
    for (Rank r = 0; r < a.p; ++r) {
        std::vector<std::byte> buf(owned_count(a, r) * 8);
        fill_buffer(buf, 8, a, r, 9, 2);
        pieces.push_back(std::move(buf));
    }
    const auto resliced = icheck::testing::gather_scatter(a, b, pieces, 8);
    for (Rank r = 0; r < b.p; ++r)
        CHECK(!verify_buffer(resliced[r], 8, b, r, 9, 2).has_value());
}

TEST_CASE("scenario parsing accepts a complete file") {
    ScenarioErrors errors;
    const auto s = parse_scenario(R"({
      "name": "ok",
      "app": {"name":"synth","world_size":2,"iterations":5,
              "checkpoint_interval":2,"seed":3,
              "regions":[{"id":"data","elem_size":8,"total_elems":100,"scheme":"block"}]},
      "cluster": {"icheck_nodes":[{"id":"n1"}],"spare_nodes":[{"id":"n2"}]},
      "rm_script": [{"at":0.5,"action":"grant","nodes":["n2"]}]
    })", errors);
    CHECK(errors.ok());
    CHECK(s.app.world_size == 2);
    CHECK(s.app.regions.size() == 1);
    CHECK(s.rm_script.size() == 1);
}

TEST_CASE("scenario validation lists every problem") {
    ScenarioErrors errors;
    parse_scenario(R"({
      "app": {"name":"synth","world_size":0,"checkpoint_interval":0,
              "regions":[{"id":"r","elem_size":1,"total_elems":0}]},
      "cluster": {"icheck_nodes":[]},
      "rm_script": [{"at":1.0,"action":"warp","nodes":["ghost"]},
                     {"at":0.5,"action":"grant"}]
    })", errors);
    REQUIRE(!errors.ok());
    auto has = [&](const std::string &needle) {
        for (const auto &e : errors.errors)
            if (e.find(needle) != std::string::npos)
                return true;
        return false;
    };
    CHECK(has("world_size"));
    CHECK(has("checkpoint_interval"));
    CHECK(has("elem_size"));
    CHECK(has("total_elems"));
    CHECK(has("icheck_nodes"));
    CHECK(has("unknown action 'warp'"));
    CHECK(has("unknown node 'ghost'"));
    CHECK(has("non-decreasing"));
}

TEST_CASE("kill events demand process mode") {
    ScenarioErrors errors;
    parse_scenario(R"({
      "app": {"name":"synth","world_size":1,
              "regions":[{"id":"d","elem_size":8,"total_elems":10}]},
      "cluster": {"icheck_nodes":[{"id":"n1"}]},
      "single_process": true,
      "rm_script": [{"at":0.1,"action":"kill_app","app":"synth"}]
    })", errors);
    REQUIRE(!errors.ok());
    CHECK(errors.errors[0].find("process mode") != std::string::npos);
}

TEST_CASE("scenario round-trips through render and parse") {
    ScenarioErrors errors;
    Scenario s;
    s.app.regions.push_back({"data", 8, 100, DistributionScheme::Cyclic});
    s.icheck_nodes.push_back({"n1", 1 << 30});
    RmEventSpec ev;
    ev.at_s = 1.5;
    ev.action = "adapt";
    ev.app = s.app.name;
    ev.new_world_size = 2;
    s.rm_script.push_back(ev);
    const auto text = render_scenario(s);
    const auto back = parse_scenario(text, errors);
    CHECK(errors.ok());
    CHECK(back.app.regions[0].scheme == DistributionScheme::Cyclic);
    CHECK(back.rm_script[0].action == "adapt");
}

TEST_CASE("summarize aggregates per-rank csv files") {
    const auto dir = fresh_tmp_dir("summ");
    std::ofstream(dir + "/rank0_attempt0.csv")
        << "commit,version,t_copy_us,t_blocked_us,t_transfer_us,mode\n"
           "0,1,100,200,300,ASYNC\n"
           "1,2,100,400,300,ASYNC\n";
    std::ofstream(dir + "/rank1_attempt0.csv")
        << "commit,version,t_copy_us,t_blocked_us,t_transfer_us,mode\n"
           "0,1,100,600,300,ASYNC\n";
    const auto s = summarize_dir(dir);
    CHECK(s.commits == 3);
    CHECK(s.mean_copy_us == doctest::Approx(100));
    CHECK(s.mean_blocked_us == doctest::Approx(400));
    CHECK(s.mode == "ASYNC");
    CHECK(s.p95_blocked_us == doctest::Approx(600));
    std::filesystem::remove_all(dir);
}

TEST_CASE("single commit is its own 95th percentile") {
    const auto dir = fresh_tmp_dir("summ1");
    std::ofstream(dir + "/rank0_attempt0.csv")
        << "commit,version,t_copy_us,t_blocked_us,t_transfer_us,mode\n"
           "0,1,10,20,30,SYNC\n";
    const auto s = summarize_dir(dir);
    CHECK(s.commits == 1);
    CHECK(s.p95_blocked_us == doctest::Approx(20));
    CHECK(s.mode == "SYNC");
    std::filesystem::remove_all(dir);
}

TEST_CASE("baseline scenario runs clean in single-process mode") {
    Scenario s;
    s.name = "baseline-sp";
    s.app.name = "synth-sp";
    s.app.world_size = 2;
    s.app.iterations = 8;
    s.app.checkpoint_interval = 2;
    s.app.compute_ms = 1;
    s.app.seed = 11;
    s.app.regions.push_back({"data", 8, 4096, DistributionScheme::Block});
    s.icheck_nodes.push_back({"n1", 1 << 30});
    s.single_process = true;
    const auto out = fresh_tmp_dir("run_sp");
    const auto result = run_scenario(s, out);
    for (const auto &f : result.failures)
        MESSAGE(f);
    CHECK(result.pass);
    std::size_t done = 0;
    for (const auto &r : result.reports)
        if (r.kind == "done") {
            ++done;
            CHECK(r.iter == 7);
        }
    CHECK(done == 2);
    // Metrics landed on disk.
    CHECK(summarize_dir(out).commits == 8);
    std::filesystem::remove_all(out);
}

TEST_CASE("zero-iteration scenario starts and stops clean") {
    Scenario s;
    s.name = "zero";
    s.app.name = "synth-zero";
    s.app.iterations = 0;
    s.app.regions.push_back({"data", 8, 64, DistributionScheme::Block});
    s.icheck_nodes.push_back({"n1", 1 << 30});
    s.single_process = true;
    const auto out = fresh_tmp_dir("run_zero");
    const auto result = run_scenario(s, out);
    CHECK(result.pass);
    CHECK(summarize_dir(out).commits == 0);
    std::filesystem::remove_all(out);
}

TEST_CASE("kill and restart recovers the last complete version (process mode)") {
    Scenario s;
    s.name = "killrun";
    s.app.name = "synth-kill";
    s.app.world_size = 2;
    s.app.iterations = 40;
    s.app.checkpoint_interval = 4;
    s.app.compute_ms = 40;
    s.app.seed = 23;
    s.app.regions.push_back({"data", 8, 4096, DistributionScheme::Block});
    s.icheck_nodes.push_back({"n1", 1 << 30});
    s.single_process = false;
    RmEventSpec kill;
    kill.at_s = 1.0;
    kill.action = "kill_app";
    kill.app = s.app.name;
    s.rm_script.push_back(kill);

    const auto out = fresh_tmp_dir("run_kill");
    const auto result = run_scenario(s, out);
    for (const auto &f : result.failures)
        MESSAGE(f);
    CHECK(result.pass);
    CHECK(result.restarts == 1);
    std::size_t restored = 0;
    for (const auto &r : result.reports)
        if (r.kind == "restored") {
            ++restored;
            // Commits happen at iterations 3, 7, 11...: the restored stamp
            // must be one of those.
            CHECK((r.iter + 1) % s.app.checkpoint_interval == 0);
        }
    CHECK(restored == 2);
    std::filesystem::remove_all(out);
}

TEST_CASE("paired comparison reports the blocked-time ratio") {
    OverheadStats a, s;
    a.commits = s.commits = 4;
    a.mean_blocked_us = 100;
    s.mean_blocked_us = 400;
    a.mode = "ASYNC";
    s.mode = "SYNC";
    const auto text = render_comparison(a, s);
    CHECK(text.find("async:") != std::string::npos);
    CHECK(text.find("0.25") != std::string::npos);
}
