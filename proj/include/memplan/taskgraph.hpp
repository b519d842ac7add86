// Copyright 2026 The Memplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace memplan {

using VertexId = std::int64_t;
using DeviceId = std::int32_t;

enum class VertexKind : std::uint8_t { Input, Kernel, Transfer };

const char* to_string(VertexKind kind);

/// One tensor-producing operation in a device-assigned dataflow graph.
/// `device` is where the output tensor lives; transfers additionally carry
/// the device the tensor is read from.
struct TaskVertex {
    VertexId id = 0;
    VertexKind kind = VertexKind::Input;
    DeviceId device = 0;
    DeviceId src_device = -1;  // transfers only
    std::int64_t output_size = 1;
    double cost_hint = 1.0;
};

/// Directed acyclic dataflow graph over device-assigned operations.
/// Edges carry tensors from producer to consumer; cross-device data flow
/// must pass through an explicit Transfer vertex.
struct TaskGraph {
    std::int32_t device_count = 1;
    std::vector<TaskVertex> vertices;
    std::vector<std::pair<VertexId, VertexId>> edges;

    const TaskVertex* find(VertexId id) const;
    const TaskVertex& at(VertexId id) const;
    std::vector<VertexId> consumers(VertexId id) const;
    std::vector<VertexId> producers(VertexId id) const;

    bool operator==(const TaskGraph& other) const;
};

struct Violation {
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate_taskgraph(const TaskGraph& g);

enum class OrderPolicy : std::uint8_t { AsListed, DepthFirst, MinMemoryGreedy };

OrderPolicy order_policy_from_string(const std::string& name);
const char* to_string(OrderPolicy policy);

/// A permutation of all vertex ids in which every producer precedes its
/// consumers.
using VertexOrder = std::vector<VertexId>;

/// Computes a linear extension of `g`. Deterministic for a fixed
/// (policy, seed); throws CycleError when the graph has a cycle.
VertexOrder topological_order(const TaskGraph& g, OrderPolicy policy, std::uint64_t seed = 0);

/// True iff `order` is a permutation of the vertices of `g` with every edge
/// pointing forward.
bool is_linear_extension(const TaskGraph& g, const VertexOrder& order);

// --- serialization ---------------------------------------------------------

std::string serialize_taskgraph(const TaskGraph& g);
TaskGraph parse_taskgraph(const std::string& text);
std::string taskgraph_to_dot(const TaskGraph& g);

// --- generators -------------------------------------------------------------

/// Blocked matrix-multiply style workload over `parts` devices: one input
/// pair and a partial-product kernel per device, transfers routing the
/// partials toward device 0, and aggregation kernels on device 0.
TaskGraph gen_matmul(int parts);

/// Repeated-block workload: `layers` blocks of `width` kernels per device,
/// with ring transfers between consecutive blocks.
TaskGraph gen_layered(int layers, int width, int devices, std::uint64_t seed);

/// Random legalized DAG with ~edge_density edge probability over `n` logical
/// nodes; cross-device edges are rewritten through Transfer vertices.
TaskGraph gen_random_dag(int n, double edge_density, int devices, std::uint64_t seed);

// --- errors -----------------------------------------------------------------

struct MemplanError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : MemplanError {
    using MemplanError::MemplanError;
};

struct CycleError : MemplanError {
    CycleError(std::string message, std::vector<VertexId> witness)
        : MemplanError(std::move(message)), cycle(std::move(witness)) {}
    std::vector<VertexId> cycle;
};

}  // namespace memplan
