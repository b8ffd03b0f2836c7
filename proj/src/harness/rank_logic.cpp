// SPDX-License-Identifier: Apache-2.0
#include "icheck/harness/rank_logic.hpp"

#include <fstream>
#include <thread>

#include "icheck/client/session.hpp"
#include "icheck/core/log.hpp"
#include "icheck/harness/control.hpp"
#include "icheck/harness/generator.hpp"

namespace icheck::harness {

using client::Session;

namespace {

struct RegionState {
    RegionSpec spec;
    proto::Blob buf;

    Layout layout(std::uint32_t world) const {
        return Layout{spec.total_elems, world, spec.scheme};
    }
};

std::string divergence_str(Rank rank, const std::string &region,
                           const Divergence &d) {
    return "rank " + std::to_string(rank) + " region '" + region +
           "' byte offset " + std::to_string(d.byte_offset) + ": " + d.detail;
}

} // namespace

int run_rank(const RankArgs &args) {
    ControlClient control(args.control_endpoint, args.rank, args.attempt);
    std::uint32_t world = args.current_world;

    client::SessionConfig sc;
    sc.controller_endpoint = args.controller_endpoint;
    sc.name = args.app.name;
    sc.rank = args.rank;
    sc.world_size = world;
    sc.process_type = args.type;
    sc.sync_mode = args.app.sync_mode;
    sc.throttle_bytes_per_sec = args.throttle_bytes_per_sec;

    std::unique_ptr<Session> session;
    std::vector<RegionState> regions;
    std::uint64_t iter = 0;
    bool filled = false;

    auto write_csv = [&] {
        if (args.out_dir.empty() || !session)
            return;
        std::ofstream out(args.out_dir + "/rank" + std::to_string(args.rank) +
                          "_attempt" + std::to_string(args.attempt) + ".csv");
        Session::write_stats_csv(out, session->stats());
    };

    try {
        session = Session::init(sc);
        for (const auto &spec : args.app.regions) {
            RegionState r{spec, {}};
            const auto count = owned_count(r.layout(world), args.rank);
            r.buf.resize(count * spec.elem_size);
            regions.push_back(std::move(r));
        }
        for (auto &r : regions)
            session->add_adapt(r.spec.id, r.buf.data(),
                               r.buf.size() / r.spec.elem_size, r.spec.elem_size,
                               r.spec.scheme);

        if (args.type == ProcessType::Initial) {
            if (session->restart()) {
                const auto stamped =
                    decode_iter(regions[0].buf, regions[0].spec.elem_size);
                for (auto &r : regions) {
                    if (auto torn = verify_uniform_iter(r.buf, r.spec.elem_size)) {
                        control.report("fail", stamped,
                                       divergence_str(args.rank, r.spec.id, *torn));
                        return 2;
                    }
                    if (auto bad = verify_buffer(r.buf, r.spec.elem_size,
                                                 r.layout(world), args.rank,
                                                 args.app.seed, stamped)) {
                        control.report("fail", stamped,
                                       divergence_str(args.rank, r.spec.id, *bad));
                        return 2;
                    }
                }
                control.report("restored", stamped);
                iter = stamped + 1;
                filled = true;
            } else {
                control.report("fresh", 0);
            }
        } else {
            // Joining rank: pull this rank's slice via redistribution.
            for (auto &r : regions)
                session->redistribute(r.spec.id, r.buf.data(),
                                      r.buf.size() / r.spec.elem_size,
                                      r.spec.scheme);
            const auto stamped =
                regions[0].buf.empty()
                    ? 0
                    : decode_iter(regions[0].buf, regions[0].spec.elem_size);
            for (auto &r : regions) {
                if (r.buf.empty())
                    continue;
                if (auto bad = verify_buffer(r.buf, r.spec.elem_size,
                                             r.layout(world), args.rank,
                                             args.app.seed, stamped)) {
                    control.report("fail", stamped,
                                   divergence_str(args.rank, r.spec.id, *bad));
                    return 2;
                }
            }
            control.report("adapted", stamped);
            iter = stamped + 1;
            filled = true;
        }

        while (iter < args.app.iterations) {
            const auto directives = control.poll(iter);
            if (directives.throttle)
                session->set_throttle(*directives.throttle);
            if (directives.fault)
                session->set_fault({directives.fault->first,
                                    directives.fault->second});
            if (directives.adapt_world && *directives.adapt_world != world) {
                const std::uint32_t new_world = *directives.adapt_world;
                const std::uint64_t stamped = filled ? iter - 1 : 0;
                std::vector<proto::Blob> fresh(regions.size());
                for (std::size_t i = 0; i < regions.size(); ++i) {
                    auto &r = regions[i];
                    const Layout newl{r.spec.total_elems, new_world, r.spec.scheme};
                    const std::uint64_t cnt =
                        args.rank < new_world ? owned_count(newl, args.rank) : 0;
                    fresh[i].resize(cnt * r.spec.elem_size);
                    session->redistribute(r.spec.id, fresh[i].data(), cnt,
                                          r.spec.scheme);
                }
                if (args.rank >= new_world) {
                    control.report("left", iter);
                    write_csv();
                    session->finalize();
                    return 0;
                }
                for (std::size_t i = 0; i < regions.size(); ++i) {
                    regions[i].buf = std::move(fresh[i]);
                    if (!filled)
                        continue;
                    const Layout newl{regions[i].spec.total_elems, new_world,
                                      regions[i].spec.scheme};
                    if (auto bad = verify_buffer(
                            regions[i].buf, regions[i].spec.elem_size, newl,
                            args.rank, args.app.seed, stamped)) {
                        control.report("fail", stamped,
                                       divergence_str(args.rank,
                                                      regions[i].spec.id, *bad));
                        return 2;
                    }
                }
                world = new_world;
                control.report("adapted", stamped);
            }

            for (auto &r : regions)
                fill_buffer(r.buf, r.spec.elem_size, r.layout(world), args.rank,
                            args.app.seed, iter);
            filled = true;

            if ((iter + 1) % args.app.checkpoint_interval == 0)
                session->commit();
            if (args.app.probe_interval != 0 &&
                (iter + 1) % args.app.probe_interval == 0)
                session->probe_agents();
            if (args.app.compute_ms)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(args.app.compute_ms));
            ++iter;
        }

        // End-of-run self check: the buffers must still be exactly the last
        // generator output for this rank's slice.
        if (filled) {
            for (auto &r : regions) {
                if (auto bad = verify_buffer(r.buf, r.spec.elem_size,
                                             r.layout(world), args.rank,
                                             args.app.seed, iter - 1)) {
                    control.report("fail", iter - 1,
                                   divergence_str(args.rank, r.spec.id, *bad));
                    return 2;
                }
            }
        }
        write_csv();
        session->finalize();
        control.report("done", iter == 0 ? 0 : iter - 1);
        return 0;
    } catch (const std::exception &e) {
        try {
            control.report("fail", iter, e.what());
            write_csv();
        } catch (...) {
        }
        return 3;
    }
}

} // namespace icheck::harness
