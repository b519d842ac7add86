// Copyright 2026 The Memplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "memplan/compiler.hpp"
#include "memplan/memgraph.hpp"
#include "memplan/simulator.hpp"
#include "memplan/taskgraph.hpp"
#include "memplan/verifier.hpp"

namespace py = pybind11;
using namespace memplan;

namespace {

BuildOptions make_options(const std::string& victim_policy, std::uint64_t victim_seed,
                          const std::string& alloc_horizon, bool keep_superfluous) {
    BuildOptions opts;
    opts.victim_policy = victim_policy_from_string(victim_policy);
    opts.victim_seed = victim_seed;
    opts.alloc_horizon = alloc_horizon_from_string(alloc_horizon);
    opts.keep_superfluous = keep_superfluous;
    return opts;
}

}  // namespace

PYBIND11_MODULE(_memplan, m) {
    m.doc() = "memory-planning compiler, verifier and execution simulator for "
              "device-assigned dataflow graphs";

    py::register_exception<MemplanError>(m, "MemplanError");

    // Graphs travel across the boundary as their JSON serializations; the
    // python layer stays thin and format-stable.
    m.def("validate_taskgraph", [](const std::string& graph_json) {
        auto g = parse_taskgraph(graph_json);
        auto report = validate_taskgraph(g);
        std::vector<std::string> out;
        for (const auto& v : report.violations) out.push_back(v.message);
        return out;
    }, py::arg("graph_json"), "Returns a list of invariant violations (empty when valid).");

    m.def("topological_order", [](const std::string& graph_json, const std::string& policy,
                                  std::uint64_t seed) {
        auto g = parse_taskgraph(graph_json);
        return topological_order(g, order_policy_from_string(policy), seed);
    }, py::arg("graph_json"), py::arg("policy") = "as-listed", py::arg("seed") = 0);

    m.def("gen_matmul", [](int parts) { return serialize_taskgraph(gen_matmul(parts)); },
          py::arg("parts"));
    m.def("gen_layered", [](int layers, int width, int devices, std::uint64_t seed) {
        return serialize_taskgraph(gen_layered(layers, width, devices, seed));
    }, py::arg("layers"), py::arg("width"), py::arg("devices"), py::arg("seed") = 0);
    m.def("gen_random_dag", [](int n, double edge_density, int devices, std::uint64_t seed) {
        return serialize_taskgraph(gen_random_dag(n, edge_density, devices, seed));
    }, py::arg("n"), py::arg("edge_density"), py::arg("devices"), py::arg("seed") = 0);

    m.def("build_memgraph", [](const std::string& graph_json,
                               const std::vector<std::int64_t>& capacities, const std::string& mode,
                               const std::vector<VertexId>& order, const std::string& order_policy,
                               const std::string& victim_policy, std::uint64_t seed,
                               const std::string& alloc_horizon, bool keep_superfluous) {
        auto g = parse_taskgraph(graph_json);
        VertexOrder v_order = order;
        if (v_order.empty())
            v_order = topological_order(g, order_policy_from_string(order_policy), seed);
        MemoryMode memory_mode = mode == "byte" ? MemoryMode::Byte : MemoryMode::Slot;
        auto result = build_memgraph(g, v_order, capacities, memory_mode,
                                     make_options(victim_policy, seed, alloc_horizon,
                                                  keep_superfluous));
        py::dict stats;
        stats["offloads"] = result.stats.offload_count;
        stats["reloads"] = result.stats.reload_count;
        stats["memory_edges"] = result.stats.memory_edge_count;
        stats["required_memory_edges"] = result.stats.required_memory_edge_count;
        stats["peak_usage"] = result.stats.peak_usage;
        return py::make_tuple(serialize_memgraph(result.memgraph, result.memory_map), stats);
    }, py::arg("graph_json"), py::arg("capacities"), py::arg("mode") = "slot",
       py::arg("order") = std::vector<VertexId>{}, py::arg("order_policy") = "as-listed",
       py::arg("victim_policy") = "farthest-next-use", py::arg("seed") = 0,
       py::arg("alloc_horizon") = "greedy", py::arg("keep_superfluous") = true,
       "Compiles a taskgraph; returns (memgraph_json, stats).");

    m.def("verify", [](const std::string& graph_json, const std::string& memgraph_json,
                       std::int64_t schedule_limit) {
        auto g = parse_taskgraph(graph_json);
        auto [mg, map] = parse_memgraph(memgraph_json);
        return verify_all(g, mg, map, schedule_limit).to_json();
    }, py::arg("graph_json"), py::arg("memgraph_json"), py::arg("schedule_limit") = 0,
       "Runs every verifier check; returns the report as JSON.");

    m.def("simulate", [](const std::string& memgraph_json, const std::string& profile_json,
                         const std::string& policy, const std::string& tie_break,
                         std::uint64_t seed) {
        auto [mg, map] = parse_memgraph(memgraph_json);
        DeviceProfile profile;
        if (!profile_json.empty()) profile = parse_profile(profile_json);
        SchedulerPolicy pol;
        pol.kind = scheduler_kind_from_string(policy);
        pol.tie_break = tie_break_from_string(tie_break);
        return simulate(mg, map, profile, pol, seed).to_json();
    }, py::arg("memgraph_json"), py::arg("profile_json") = "",
       py::arg("policy") = "event-driven", py::arg("tie_break") = "fifo", py::arg("seed") = 0,
       "Runs one simulated execution; returns the trace as JSON.");

    m.def("compare_policies", [](const std::string& memgraph_json, const std::string& profile_json,
                                 std::int64_t trials, std::uint64_t seed) {
        auto [mg, map] = parse_memgraph(memgraph_json);
        DeviceProfile profile;
        if (!profile_json.empty()) profile = parse_profile(profile_json);
        return compare_policies(mg, map, profile, trials, seed).to_json();
    }, py::arg("memgraph_json"), py::arg("profile_json") = "", py::arg("trials") = 20,
       py::arg("seed") = 0, "Benchmarks event-driven against fixed-order scheduling.");

    m.def("taskgraph_to_dot", [](const std::string& graph_json) {
        return taskgraph_to_dot(parse_taskgraph(graph_json));
    }, py::arg("graph_json"));
    m.def("memgraph_to_dot", [](const std::string& memgraph_json) {
        auto [mg, map] = parse_memgraph(memgraph_json);
        return memgraph_to_dot(mg);
    }, py::arg("memgraph_json"));
}
