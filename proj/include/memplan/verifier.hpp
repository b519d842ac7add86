// Copyright 2026 The Memplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memplan/memgraph.hpp"
#include "memplan/taskgraph.hpp"

namespace memplan {

/// Outcome of one check; a failure always carries a concrete witness the
/// caller can replay.
struct CheckResult {
    bool passed = true;
    std::string witness;  // empty on pass

    static CheckResult pass() { return {}; }
    static CheckResult fail(std::string w) { return {false, std::move(w)}; }
};

/// Pass iff the memgraph has no directed cycle; the witness names one cycle.
CheckResult check_acyclic(const MemGraph& m);

/// Pass iff every taskgraph edge v1->v2 appears as a Data edge or as a Data
/// chain v1 -> offload -> reload (-> offload -> reload)* -> v2.
CheckResult check_data_preservation(const TaskGraph& g, const MemGraph& m);

/// Pass iff for every pair of vertices whose regions overlap on one device,
/// one safely overwrites the other: every consumer of the overwritten vertex
/// has a directed path to the overwriter. A vertex whose output is never read
/// may instead be ordered entirely before the other writer. Superfluous flags
/// are ignored; paths may use any edge.
CheckResult check_race_freedom(const MemGraph& m, const MemoryMap& map);

/// Replays `order` against the placement lifetimes: per-device live usage
/// never exceeds capacity and concurrently live regions never intersect.
CheckResult check_capacity(const MemGraph& m, const MemoryMap& map,
                           const std::vector<VertexId>& order);

struct ScheduleCheckResult {
    bool passed = true;
    bool sampled = false;           // true when the extension count exceeded the limit
    std::int64_t schedules_run = 0;
    std::string witness;
};

/// Symbolically executes linear extensions of `m` (all of them up to `limit`,
/// otherwise `limit` random ones): every vertex writes a unique token to its
/// region and every consumer must read its producer's token in every schedule.
ScheduleCheckResult enumerate_schedules_check(const MemGraph& m, const MemoryMap& map,
                                              std::int64_t limit, std::uint64_t seed = 0);

struct VerificationReport {
    CheckResult acyclic;
    CheckResult data_preservation;
    CheckResult race_freedom;
    CheckResult capacity;
    std::optional<ScheduleCheckResult> schedules;

    bool all_passed() const;
    std::string to_json() const;
};

/// Runs the four structural checks (and the schedule check when
/// `schedule_limit` > 0) against one compiled artifact.
VerificationReport verify_all(const TaskGraph& g, const MemGraph& m, const MemoryMap& map,
                              std::int64_t schedule_limit = 0);

}  // namespace memplan
