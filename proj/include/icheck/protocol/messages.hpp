// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "icheck/core/types.hpp"
#include "icheck/protocol/wire.hpp"

namespace icheck::proto {

// Reply status carried by acks and data-plane responses.
enum class Status : std::uint8_t {
    Ok = 0,
    Integrity = 1,
    Unregistered = 2,
    Capacity = 3,
    Missing = 4,
    Storage = 5,
    NoSource = 6,
    Layout = 7,
    UnknownApp = 8,
    NotOwned = 9,
    Rejected = 10,
    Internal = 11,
    Timeout = 12,
};

const char *to_string(Status s);

enum class AssignmentChange : std::uint8_t { NoChange = 0, NewAssignments = 1 };

enum class PayloadKind : std::uint8_t { Checkpoint = 0, Snapshot = 1, Migrated = 2 };

// ---- shared wire sub-structures ----

struct WireRegion { // full descriptor with per-rank counts
    std::string id;
    std::uint32_t elem_size = 0;
    std::uint8_t scheme = 0;
    std::vector<std::uint64_t> counts;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.id), v(s.elem_size), v(s.scheme), v(s.counts);
    }
    bool operator==(const WireRegion &) const = default;
};

struct WireRegionDecl { // one rank's declaration
    std::string id;
    std::uint32_t elem_size = 0;
    std::uint64_t count = 0;
    std::uint8_t scheme = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.id), v(s.elem_size), v(s.count), v(s.scheme);
    }
    bool operator==(const WireRegionDecl &) const = default;
};

struct WireRegionPayload { // length + checksum of one region's bytes
    std::string id;
    std::uint64_t total_len = 0;
    std::uint32_t crc = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.id), v(s.total_len), v(s.crc);
    }
    bool operator==(const WireRegionPayload &) const = default;
};

struct WireAssignment {
    std::uint64_t agent_id = 0;
    std::string node_id;
    std::string endpoint;
    std::vector<std::uint32_t> ranks;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.agent_id), v(s.node_id), v(s.endpoint), v(s.ranks);
    }
    bool operator==(const WireAssignment &) const = default;
};

struct WireLayout {
    std::uint64_t total_n = 0;
    std::uint32_t p = 1;
    std::uint8_t scheme = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.total_n), v(s.p), v(s.scheme);
    }
    bool operator==(const WireLayout &) const = default;
};

struct WireNodeStats {
    std::string node_id;
    std::uint64_t mem_capacity = 0;
    std::uint64_t mem_used = 0;
    double bw_used = 0;
    double mem_predicted = 0;
    double bw_predicted = 0;
    std::uint64_t sample_time_ms = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.node_id), v(s.mem_capacity), v(s.mem_used), v(s.bw_used),
            v(s.mem_predicted), v(s.bw_predicted), v(s.sample_time_ms);
    }
    bool operator==(const WireNodeStats &) const = default;
};

struct WireAgentLaunch {
    std::uint64_t agent_id = 0;
    std::uint64_t capacity = 0;
    std::vector<std::uint32_t> ranks;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.agent_id), v(s.capacity), v(s.ranks);
    }
    bool operator==(const WireAgentLaunch &) const = default;
};

// ---- client <-> controller ----

struct Register {
    static constexpr std::uint8_t kType = 1;
    std::string name;
    std::uint32_t rank = 0;
    std::uint32_t world_size = 1;
    std::uint8_t process_type = 0;
    std::vector<WireRegion> regions;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.name), v(s.rank), v(s.world_size), v(s.process_type), v(s.regions);
    }
    bool operator==(const Register &) const = default;
};

struct RegisterAck {
    static constexpr std::uint8_t kType = 2;
    std::uint8_t status = 0;
    std::string reason;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0;
    std::uint64_t next_version = 1;
    std::uint32_t world_size = 1;
    std::uint32_t prev_world = 0; // former world size during an adaptation
    std::uint64_t assignment_revision = 0;
    std::vector<WireAssignment> assignments;
    std::vector<WireRegion> regions;
    std::string pfs_root;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.status), v(s.reason), v(s.app_id), v(s.epoch), v(s.next_version),
            v(s.world_size), v(s.prev_world), v(s.assignment_revision),
            v(s.assignments), v(s.regions), v(s.pfs_root);
    }
    bool operator==(const RegisterAck &) const = default;
};

struct ProbeAgents {
    static constexpr std::uint8_t kType = 3;
    std::uint64_t app_id = 0;
    std::uint32_t rank = 0;
    std::uint64_t assignment_revision = 0;
    std::uint8_t evaluate = 0; // 1 = explicit probe: may rescale the agent set

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.rank), v(s.assignment_revision), v(s.evaluate);
    }
    bool operator==(const ProbeAgents &) const = default;
};

struct ProbeAgentsAck {
    static constexpr std::uint8_t kType = 4;
    std::uint8_t change = 0; // AssignmentChange
    std::uint64_t epoch = 0;
    std::uint32_t world_size = 1;
    std::uint32_t prev_world = 0; // former world size during an adaptation
    std::uint64_t next_version = 1;
    std::uint64_t assignment_revision = 0;
    std::vector<WireAssignment> assignments;
    std::vector<WireRegion> regions;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.change), v(s.epoch), v(s.world_size), v(s.prev_world),
            v(s.next_version), v(s.assignment_revision), v(s.assignments),
            v(s.regions);
    }
    bool operator==(const ProbeAgentsAck &) const = default;
};

struct RestartQuery {
    static constexpr std::uint8_t kType = 5;
    std::string name;       // empty when querying by id
    std::uint64_t app_id = 0; // 0 when querying by name

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.name), v(s.app_id);
    }
    bool operator==(const RestartQuery &) const = default;
};

struct RestartInfo {
    static constexpr std::uint8_t kType = 6;
    std::uint8_t found = 0;
    std::uint64_t app_id = 0;
    std::uint64_t version = 0;
    std::uint64_t epoch = 0;
    std::uint32_t world_size = 1;
    std::uint64_t assignment_revision = 0;
    std::vector<WireAssignment> assignments;
    std::vector<WireRegion> regions;
    std::string pfs_root;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.found), v(s.app_id), v(s.version), v(s.epoch), v(s.world_size),
            v(s.assignment_revision), v(s.assignments), v(s.regions), v(s.pfs_root);
    }
    bool operator==(const RestartInfo &) const = default;
};

struct Deregister {
    static constexpr std::uint8_t kType = 7;
    std::uint64_t app_id = 0;
    std::uint32_t rank = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.rank);
    }
    bool operator==(const Deregister &) const = default;
};

// ---- client <-> agent ----

struct Connect {
    static constexpr std::uint8_t kType = 16;
    std::uint64_t app_id = 0;
    std::uint32_t rank = 0;
    std::uint64_t epoch = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.rank), v(s.epoch);
    }
    bool operator==(const Connect &) const = default;
};

struct MemRegister {
    static constexpr std::uint8_t kType = 17;
    std::uint64_t app_id = 0;
    std::uint32_t rank = 0;
    std::uint64_t epoch = 0;
    WireRegionDecl region;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.rank), v(s.epoch), v(s.region);
    }
    bool operator==(const MemRegister &) const = default;
};

struct CommitBegin {
    static constexpr std::uint8_t kType = 18;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0;
    std::uint64_t version = 0;
    std::uint32_t rank = 0;
    std::vector<WireRegionPayload> regions;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.epoch), v(s.version), v(s.rank), v(s.regions);
    }
    bool operator==(const CommitBegin &) const = default;
};

struct CommitData {
    static constexpr std::uint8_t kType = 19;
    std::uint64_t app_id = 0;
    std::uint64_t version = 0;
    std::uint32_t rank = 0;
    std::string region_id;
    std::uint64_t offset = 0;
    Blob blob;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.version), v(s.rank), v(s.region_id), v(s.offset), v(s.blob);
    }
    bool operator==(const CommitData &) const = default;
};

struct CommitEnd {
    static constexpr std::uint8_t kType = 20;
    std::uint64_t app_id = 0;
    std::uint64_t version = 0;
    std::uint32_t rank = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.version), v(s.rank);
    }
    bool operator==(const CommitEnd &) const = default;
};

struct CommitAck {
    static constexpr std::uint8_t kType = 21;
    std::uint64_t app_id = 0;
    std::uint64_t version = 0;
    std::uint32_t rank = 0;
    std::uint8_t status = 0; // Status
    std::string reason;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.version), v(s.rank), v(s.status), v(s.reason);
    }
    bool operator==(const CommitAck &) const = default;
};

struct RestoreReq {
    static constexpr std::uint8_t kType = 22;
    std::uint64_t app_id = 0;
    std::uint64_t version = 0;
    std::uint64_t epoch = 0;
    std::uint32_t rank = 0;
    std::string region_id;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.version), v(s.epoch), v(s.rank), v(s.region_id);
    }
    bool operator==(const RestoreReq &) const = default;
};

struct RestoreData {
    static constexpr std::uint8_t kType = 23;
    std::uint8_t status = 0;
    std::string reason;
    std::uint64_t app_id = 0;
    std::uint64_t version = 0;
    std::uint32_t rank = 0;
    std::string region_id;
    std::uint64_t total_len = 0;
    std::uint32_t crc = 0;
    std::uint64_t offset = 0;
    Blob blob;
    std::uint8_t last = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.status), v(s.reason), v(s.app_id), v(s.version), v(s.rank),
            v(s.region_id), v(s.total_len), v(s.crc), v(s.offset), v(s.blob),
            v(s.last);
    }
    bool operator==(const RestoreData &) const = default;
};

struct RedistReq {
    static constexpr std::uint8_t kType = 24;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0;
    std::string region_id;
    WireLayout old_layout;
    WireLayout new_layout;
    std::uint32_t elem_size = 0;
    std::uint32_t dst_rank = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.epoch), v(s.region_id), v(s.old_layout), v(s.new_layout),
            v(s.elem_size), v(s.dst_rank);
    }
    bool operator==(const RedistReq &) const = default;
};

struct RedistData {
    static constexpr std::uint8_t kType = 25;
    std::uint8_t status = 0;
    std::string reason;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0;
    std::string region_id;
    std::uint64_t total_len = 0;
    std::uint32_t crc = 0;
    std::uint64_t offset = 0;
    Blob blob;
    std::uint8_t last = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.status), v(s.reason), v(s.app_id), v(s.epoch), v(s.region_id),
            v(s.total_len), v(s.crc), v(s.offset), v(s.blob), v(s.last);
    }
    bool operator==(const RedistData &) const = default;
};

// Adapt-time snapshot header; followed by CommitData/CommitEnd like a commit.
struct SnapshotPush {
    static constexpr std::uint8_t kType = 26;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0; // the pending adapt epoch this snapshot feeds
    std::uint32_t rank = 0;
    std::vector<WireRegionPayload> regions;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.epoch), v(s.rank), v(s.regions);
    }
    bool operator==(const SnapshotPush &) const = default;
};

// ---- controller <-> manager ----

struct LaunchAgents {
    static constexpr std::uint8_t kType = 32;
    std::uint64_t app_id = 0;
    std::string app_name;
    std::string pfs_root;
    std::vector<WireAgentLaunch> agents;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.app_name), v(s.pfs_root), v(s.agents);
    }
    bool operator==(const LaunchAgents &) const = default;
};

struct AgentReady {
    static constexpr std::uint8_t kType = 33;
    std::uint64_t app_id = 0;
    std::uint64_t agent_id = 0;
    std::string node_id;
    std::string endpoint;
    std::uint8_t ok = 1;
    std::string reason;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.agent_id), v(s.node_id), v(s.endpoint), v(s.ok), v(s.reason);
    }
    bool operator==(const AgentReady &) const = default;
};

struct StatsReport {
    static constexpr std::uint8_t kType = 34;
    WireNodeStats stats;
    std::vector<std::uint64_t> dead_agents;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.stats), v(s.dead_agents);
    }
    bool operator==(const StatsReport &) const = default;
};

struct FlushOrder {
    static constexpr std::uint8_t kType = 35;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0;
    std::uint64_t version = 0;
    std::uint64_t agent_id = 0;
    std::vector<std::uint32_t> ranks;
    std::uint8_t write_manifest = 0;
    Blob manifest_json; // exact manifest bytes, written after data files

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.epoch), v(s.version), v(s.agent_id), v(s.ranks),
            v(s.write_manifest), v(s.manifest_json);
    }
    bool operator==(const FlushOrder &) const = default;
};

struct MigrateOrder {
    static constexpr std::uint8_t kType = 36;
    std::uint64_t app_id = 0;
    std::uint64_t agent_id = 0;
    std::string target_endpoint;
    std::uint64_t target_agent_id = 0;
    std::vector<std::uint32_t> ranks;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.agent_id), v(s.target_endpoint), v(s.target_agent_id),
            v(s.ranks);
    }
    bool operator==(const MigrateOrder &) const = default;
};

struct Shutdown {
    static constexpr std::uint8_t kType = 37;
    std::uint64_t agent_id = 0; // 0 targets the manager itself
    std::string reason;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.agent_id), v(s.reason);
    }
    bool operator==(const Shutdown &) const = default;
};

// ---- controller <-> resource manager ----

struct NodeRequest {
    static constexpr std::uint8_t kType = 48;
    std::uint32_t count = 0;
    std::string reason;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.count), v(s.reason);
    }
    bool operator==(const NodeRequest &) const = default;
};

struct NodeGrant {
    static constexpr std::uint8_t kType = 49;
    std::vector<std::string> node_ids; // empty = denial
    std::uint32_t requested = 0;
    std::uint8_t partial = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.node_ids), v(s.requested), v(s.partial);
    }
    bool operator==(const NodeGrant &) const = default;
};

struct NodeReclaim {
    static constexpr std::uint8_t kType = 50;
    std::vector<std::string> node_ids;
    std::uint64_t deadline_ms = 0;
    std::uint8_t release = 0; // set on the controller->RM confirmation

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.node_ids), v(s.deadline_ms), v(s.release);
    }
    bool operator==(const NodeReclaim &) const = default;
};

struct MigrateHint {
    static constexpr std::uint8_t kType = 51;
    std::string node_from;
    std::string node_to;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.node_from), v(s.node_to);
    }
    bool operator==(const MigrateHint &) const = default;
};

struct AppAdaptNotice {
    static constexpr std::uint8_t kType = 52;
    std::uint64_t app_id = 0; // 0 when addressed by name
    std::string app_name;
    std::uint32_t new_world_size = 0;
    std::uint64_t epoch = 0; // 0 lets the controller pick current+1

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.app_name), v(s.new_world_size), v(s.epoch);
    }
    bool operator==(const AppAdaptNotice &) const = default;
};

// ---- agent <-> agent ----

// Migration header; followed by CommitData/CommitEnd, acked by CommitAck.
struct MigrateStream {
    static constexpr std::uint8_t kType = 64;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0;
    std::uint64_t version = 0;
    std::uint32_t rank = 0;
    std::uint8_t kind = 0; // PayloadKind
    std::vector<WireRegionPayload> regions;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.epoch), v(s.version), v(s.rank), v(s.kind), v(s.regions);
    }
    bool operator==(const MigrateStream &) const = default;
};

struct PeerFetch {
    static constexpr std::uint8_t kType = 65;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0;
    std::uint32_t src_rank = 0;
    std::string region_id;
    std::uint64_t offset = 0; // bytes
    std::uint64_t len = 0;    // bytes

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.epoch), v(s.src_rank), v(s.region_id), v(s.offset), v(s.len);
    }
    bool operator==(const PeerFetch &) const = default;
};

struct PeerData {
    static constexpr std::uint8_t kType = 66;
    std::uint8_t status = 0;
    std::string reason;
    std::uint64_t offset = 0;
    Blob blob;
    std::uint8_t last = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.status), v(s.reason), v(s.offset), v(s.blob), v(s.last);
    }
    bool operator==(const PeerData &) const = default;
};

// ---- service plumbing ----

struct Ack {
    static constexpr std::uint8_t kType = 70;
    std::uint8_t status = 0;
    std::string reason;
    std::uint64_t context = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.status), v(s.reason), v(s.context);
    }
    bool operator==(const Ack &) const = default;
};

struct CommitReport {
    static constexpr std::uint8_t kType = 71;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0;
    std::uint64_t version = 0;
    std::uint32_t rank = 0;
    std::uint64_t agent_id = 0;
    std::string node_id;
    std::uint64_t bytes = 0;
    std::uint64_t transfer_us = 0;
    std::uint8_t kind = 0; // PayloadKind
    std::vector<WireRegionPayload> regions;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.epoch), v(s.version), v(s.rank), v(s.agent_id),
            v(s.node_id), v(s.bytes), v(s.transfer_us), v(s.kind), v(s.regions);
    }
    bool operator==(const CommitReport &) const = default;
};

struct FlushAck {
    static constexpr std::uint8_t kType = 72;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0;
    std::uint64_t version = 0;
    std::uint64_t agent_id = 0;
    std::uint8_t ok = 1;
    std::string reason;
    std::uint8_t manifest_written = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.epoch), v(s.version), v(s.agent_id), v(s.ok), v(s.reason),
            v(s.manifest_written);
    }
    bool operator==(const FlushAck &) const = default;
};

struct MigrateAck {
    static constexpr std::uint8_t kType = 73;
    std::uint64_t app_id = 0;
    std::uint64_t agent_id = 0;
    std::uint8_t ok = 1;
    std::string reason;
    std::uint64_t moved_bytes = 0;
    std::vector<std::uint32_t> ranks;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.agent_id), v(s.ok), v(s.reason), v(s.moved_bytes), v(s.ranks);
    }
    bool operator==(const MigrateAck &) const = default;
};

struct AgentStats {
    static constexpr std::uint8_t kType = 74;
    std::uint64_t agent_id = 0;
    std::uint64_t app_id = 0;
    std::string endpoint;
    std::uint64_t staged_bytes = 0;
    std::uint64_t moved_bytes_delta = 0;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.agent_id), v(s.app_id), v(s.endpoint), v(s.staged_bytes),
            v(s.moved_bytes_delta);
    }
    bool operator==(const AgentStats &) const = default;
};

// Controller -> agent heads-up before a resource change: layouts, plans and
// peer endpoints become derivable before the first REDIST_REQ arrives.
struct AdaptPrep {
    static constexpr std::uint8_t kType = 75;
    std::uint64_t app_id = 0;
    std::string app_name;
    std::uint64_t epoch = 0; // the new epoch
    std::uint32_t old_world = 1;
    std::uint32_t new_world = 1;
    std::vector<WireRegion> regions; // counts for the new world
    std::vector<WireAssignment> old_assignments;
    std::vector<WireAssignment> new_assignments;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.app_name), v(s.epoch), v(s.old_world), v(s.new_world),
            v(s.regions), v(s.old_assignments), v(s.new_assignments);
    }
    bool operator==(const AdaptPrep &) const = default;
};

struct GcOrder {
    static constexpr std::uint8_t kType = 76;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0;
    std::uint64_t min_version_keep = 0; // drop staged versions below this
    std::uint8_t purge_flushed = 0;     // drop memory copies held on PFS
    std::uint64_t drop_snapshots_epoch_below = 0;
    std::uint64_t complete_watermark = 0; // newest COMPLETE version

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.epoch), v(s.min_version_keep), v(s.purge_flushed),
            v(s.drop_snapshots_epoch_below), v(s.complete_watermark);
    }
    bool operator==(const GcOrder &) const = default;
};

// Agent -> controller relay of one rank's MEM_REGISTER.
struct RegionDecl {
    static constexpr std::uint8_t kType = 77;
    std::uint64_t app_id = 0;
    std::uint64_t epoch = 0;
    std::uint32_t rank = 0;
    std::uint64_t agent_id = 0;
    WireRegionDecl region;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.app_id), v(s.epoch), v(s.rank), v(s.agent_id), v(s.region);
    }
    bool operator==(const RegionDecl &) const = default;
};

struct ErrorMsg {
    static constexpr std::uint8_t kType = 127;
    std::string code;
    std::string detail;

    template <class S, class V> static void visit(S &s, V &&v) {
        v(s.code), v(s.detail);
    }
    bool operator==(const ErrorMsg &) const = default;
};

using Message = std::variant<
    Register, RegisterAck, ProbeAgents, ProbeAgentsAck, RestartQuery, RestartInfo,
    Deregister, Connect, MemRegister, CommitBegin, CommitData, CommitEnd,
    CommitAck, RestoreReq, RestoreData, RedistReq, RedistData, SnapshotPush,
    LaunchAgents, AgentReady, StatsReport, FlushOrder, MigrateOrder, Shutdown,
    NodeRequest, NodeGrant, NodeReclaim, MigrateHint, AppAdaptNotice,
    MigrateStream, PeerFetch, PeerData, Ack, CommitReport, FlushAck, MigrateAck,
    AgentStats, AdaptPrep, GcOrder, RegionDecl, ErrorMsg>;

const char *message_name(const Message &m);

} // namespace icheck::proto
