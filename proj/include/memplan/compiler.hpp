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

enum class VictimPolicy : std::uint8_t { FarthestNextUse, LastAllocated, SeededRandom };
enum class AllocHorizonMode : std::uint8_t {
    /// Push the allocation horizon as far past the execution horizon as
    /// memory allows.
    Greedy,
    /// Reserve each output only when the vertex is about to execute.
    Lazy,
};

VictimPolicy victim_policy_from_string(const std::string& name);
const char* to_string(VictimPolicy policy);
AllocHorizonMode alloc_horizon_from_string(const std::string& name);
const char* to_string(AllocHorizonMode mode);

struct BuildOptions {
    VictimPolicy victim_policy = VictimPolicy::FarthestNextUse;
    std::uint64_t victim_seed = 0;
    AllocHorizonMode alloc_horizon = AllocHorizonMode::Greedy;
    /// Keep memory edges implied by another path, flagged superfluous.
    bool keep_superfluous = true;
    /// Host capacity in bytes; unset means unbounded.
    std::optional<std::int64_t> host_capacity;
    /// Assert internal accounting invariants on every step (tests).
    bool check_invariants = false;
};

struct BuildStats {
    std::int64_t offload_count = 0;
    std::int64_t reload_count = 0;
    std::int64_t memory_edge_count = 0;
    std::int64_t required_memory_edge_count = 0;
    std::vector<std::int64_t> peak_usage;  // per device, slots or bytes
};

struct BuildResult {
    MemGraph memgraph;
    MemoryMap memory_map;
    BuildStats stats;
};

/// Compiles `g` into a race-free dependency graph with static memory
/// assignments by simulating an execution along `order`, inserting
/// offload/reload pairs when a device region cannot be found.
///
/// Capacities are per device: slot counts in slot mode, bytes otherwise.
/// Throws SingleTensorTooLargeError when some tensor can never fit, and
/// InternalError if the simulation wedges (nothing evictable).
BuildResult build_memgraph(const TaskGraph& g, const VertexOrder& order,
                           const std::vector<std::int64_t>& capacities, MemoryMode mode,
                           const BuildOptions& options = {});

/// Marks every Memory edge (u, w) with another u->w path as superfluous;
/// when `drop` is set those edges are removed instead. Reachability is
/// unchanged either way.
MemGraph prune_superfluous_edges(const MemGraph& m, bool drop = false);

struct SingleTensorTooLargeError : MemplanError {
    SingleTensorTooLargeError(std::string message, VertexId v)
        : MemplanError(std::move(message)), vertex(v) {}
    VertexId vertex;
};

struct OffloadOverflowError : MemplanError {
    using MemplanError::MemplanError;
};

struct InternalError : MemplanError {
    using MemplanError::MemplanError;
};

}  // namespace memplan
