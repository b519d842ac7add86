// Copyright 2026 The Memplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memplan/memgraph.hpp"

namespace memplan {

enum class NoiseKind : std::uint8_t { None, Uniform, Lognormal };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::None;
    double param = 0.0;  // +/- fraction for Uniform, sigma for Lognormal
};

/// Latency and resource model shared by all devices. Time is abstract.
struct DeviceProfile {
    std::int32_t streams_per_device = 5;
    double kernel_multiplier = 1.0;
    double d2d_bandwidth = 1.0;        // bytes per time unit
    double host_link_bandwidth = 1.0;  // bytes per time unit, per device per direction
    double link_latency = 0.0;         // fixed overhead per transfer
    NoiseSpec noise;
    std::uint64_t seed = 0;
};

enum class SchedulerKind : std::uint8_t { EventDriven, FixedOrder };
enum class TieBreak : std::uint8_t { Fifo, SeededRandom, LowestId };

struct SchedulerPolicy {
    SchedulerKind kind = SchedulerKind::EventDriven;
    TieBreak tie_break = TieBreak::Fifo;
};

TieBreak tie_break_from_string(const std::string& name);
SchedulerKind scheduler_kind_from_string(const std::string& name);

struct TraceRow {
    VertexId vertex = 0;
    double start = 0.0;
    double end = 0.0;
    DeviceId device = 0;
    std::int32_t stream = -1;  // -1 for input vertices (no resource held)
};

struct ExecutionTrace {
    std::vector<TraceRow> rows;  // in dispatch order
    double makespan = 0.0;
    std::vector<double> busy_time;  // per device
    std::vector<double> idle_time;
    std::vector<std::int64_t> peak_live;  // per device, slots or bytes
    std::int64_t host_bytes_transferred = 0;

    std::string to_json() const;
    std::string to_csv() const;
};

/// Event-driven simulation of one memgraph execution. A vertex dispatches
/// once every predecessor finished, a stream on its device is free, and (for
/// kernels) the device's exclusive compute token is free. Deterministic for
/// a fixed seed.
ExecutionTrace simulate(const MemGraph& m, const MemoryMap& map, const DeviceProfile& profile,
                        const SchedulerPolicy& policy, std::uint64_t seed);

/// Returns `m` plus chain edges forcing each device to execute its vertices
/// exactly in `order` (defaulting to the build order embedded in `m`).
MemGraph make_fixed_order(const MemGraph& m);
MemGraph make_fixed_order(const MemGraph& m, const std::vector<VertexId>& order);

/// Expected duration of one vertex under `profile` with the given noise draw
/// already applied by the caller's rng stream.
double sample_duration(const MemVertex& v, const DeviceProfile& profile, std::uint64_t draw_seed);

struct PolicyStats {
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::vector<double> makespans;
};

struct ComparisonSummary {
    PolicyStats event_driven;
    PolicyStats fixed_order;
    double speedup_mean = 0.0;  // (fixed - event) / fixed, averaged over trials
    double speedup_ci_low = 0.0;
    double speedup_ci_high = 0.0;
    std::int64_t trials = 0;

    std::string to_json() const;
};

/// Runs `trials` paired simulations per policy (same per-trial noise draws
/// for both) and summarizes makespans and the relative speedup with a
/// seeded bootstrap 95% confidence interval.
ComparisonSummary compare_policies(const MemGraph& m, const MemoryMap& map,
                                   const DeviceProfile& profile, std::int64_t trials,
                                   std::uint64_t seed);

// --- profile serialization --------------------------------------------------

std::string serialize_profile(const DeviceProfile& profile);
DeviceProfile parse_profile(const std::string& text);

}  // namespace memplan
