// Copyright 2026 The Memplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "memplan/taskgraph.hpp"

namespace memplan {

enum class MemOriginKind : std::uint8_t { Original, Offload, Reload };
enum class MemOpKind : std::uint8_t { Input, Kernel, Transfer, Offload, Reload };
enum class EdgeKind : std::uint8_t { Data, Memory };

const char* to_string(MemOriginKind kind);
const char* to_string(MemOpKind kind);
const char* to_string(EdgeKind kind);

/// Where a memgraph vertex came from: the original taskgraph vertex, or an
/// offload/reload inserted for evictee `ref` (generation counts re-evictions).
struct MemOrigin {
    MemOriginKind kind = MemOriginKind::Original;
    VertexId ref = 0;       // taskgraph id (Original) or evictee root id
    std::int32_t gen = 0;   // eviction generation, 0 for originals
};

struct MemVertex {
    VertexId id = 0;
    MemOrigin origin;
    MemOpKind op = MemOpKind::Kernel;
    DeviceId device = 0;       // GPU side for offload/reload
    DeviceId src_device = -1;  // transfers only
    std::int64_t size = 1;
    double cost_hint = 1.0;
};

struct MemEdge {
    VertexId from = 0;
    VertexId to = 0;
    EdgeKind kind = EdgeKind::Data;
    bool superfluous = false;
};

/// Dependency graph with static memory placements: original vertices plus
/// inserted offload/reload vertices. Any execution order respecting the
/// edges is valid.
struct MemGraph {
    std::vector<MemVertex> vertices;
    std::vector<MemEdge> edges;
    /// Vertex ids in the total order used during construction (offloads and
    /// reloads sit just before the vertex they were created for, offloads
    /// first). Every edge points forward in this order.
    std::vector<VertexId> total_order;
    std::int32_t device_count = 1;

    const MemVertex* find(VertexId id) const;
    const MemVertex& at(VertexId id) const;
    std::vector<VertexId> data_consumers(VertexId id) const;
    bool has_edge(VertexId from, VertexId to, EdgeKind kind) const;
};

enum class MemoryMode : std::uint8_t { Slot, Byte };

struct Placement {
    DeviceId device = 0;
    std::int64_t offset = 0;  // slot index in slot mode, byte offset otherwise
    std::int64_t size = 1;    // 1 in slot mode
};

/// One entry of a device region's occupancy history, in claim order.
struct RegionClaim {
    VertexId owner = 0;
    DeviceId device = 0;
    std::int64_t offset = 0;
    std::int64_t size = 0;
};

struct MemoryMap {
    MemoryMode mode = MemoryMode::Slot;
    std::vector<std::int64_t> capacities;  // per device, slots or bytes
    std::map<VertexId, Placement> placements;
    std::vector<RegionClaim> history;

    bool overlaps(const Placement& a, const Placement& b) const;
};

// --- serialization ----------------------------------------------------------

/// Memgraph plus its memory map in one JSON document.
std::string serialize_memgraph(const MemGraph& m, const MemoryMap& map);
std::pair<MemGraph, MemoryMap> parse_memgraph(const std::string& text);
std::string memgraph_to_dot(const MemGraph& m);

}  // namespace memplan
