#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "memplan/compiler.hpp"
#include "memplan/simulator.hpp"
#include "memplan/verifier.hpp"
#include "test_helpers.hpp"

using namespace memplan;
using namespace testutil;

namespace {

// Every predecessor finishes before its successor starts, and no two rows on
// one (device, stream) overlap.
void check_trace_invariants(const MemGraph& m, const ExecutionTrace& trace) {
    std::map<VertexId, const TraceRow*> row_of;
    for (const auto& r : trace.rows) row_of[r.vertex] = &r;
    REQUIRE(row_of.size() == m.vertices.size());
    for (const auto& e : m.edges) {
        CHECK(row_of.at(e.from)->end <= row_of.at(e.to)->start + 1e-9);
    }
    for (size_t i = 0; i < trace.rows.size(); ++i) {
        for (size_t j = i + 1; j < trace.rows.size(); ++j) {
            const auto& a = trace.rows[i];
            const auto& b = trace.rows[j];
            if (a.device != b.device || a.stream != b.stream || a.stream < 0) continue;
            bool overlap = a.start < b.end - 1e-9 && b.start < a.end - 1e-9;
            CHECK_FALSE(overlap);
        }
    }
}

BuildResult compile_default(const TaskGraph& g, const std::vector<std::int64_t>& caps) {
    auto order = topological_order(g, OrderPolicy::AsListed, 0);
    return build_memgraph(g, order, caps, MemoryMode::Slot);
}

// Single-device memgraph of the motivating scenario: after two kernels, an
// offload of one tensor and a reload of another are in flight at once, and a
// later kernel hangs off each. Whichever transfer finishes first decides the
// kernel order.
std::pair<MemGraph, MemoryMap> offload_vs_reload(std::int64_t offload_size,
                                                 std::int64_t reload_size) {
    MemGraph m;
    m.device_count = 1;
    auto add = [&](VertexId id, MemOpKind op, MemOriginKind ok, VertexId ref, std::int64_t size,
                   double cost) {
        MemVertex v;
        v.id = id;
        v.op = op;
        v.origin = {ok, ref, 0};
        v.device = 0;
        v.size = size;
        v.cost_hint = cost;
        m.vertices.push_back(v);
    };
    add(1, MemOpKind::Kernel, MemOriginKind::Original, 1, 1, 1.0);
    add(2, MemOpKind::Kernel, MemOriginKind::Original, 2, 1, 1.0);
    add(6, MemOpKind::Offload, MemOriginKind::Offload, 1, offload_size, 0.0);  // offload of 1
    add(7, MemOpKind::Reload, MemOriginKind::Reload, 3, reload_size, 0.0);     // 3 spilled earlier
    add(4, MemOpKind::Kernel, MemOriginKind::Original, 4, 1, 1.0);  // overwrites 1's slot
    add(5, MemOpKind::Kernel, MemOriginKind::Original, 5, 1, 1.0);  // consumes the reload
    m.edges.push_back({1, 6, EdgeKind::Data, false});
    m.edges.push_back({6, 4, EdgeKind::Memory, false});
    m.edges.push_back({2, 4, EdgeKind::Data, false});
    m.edges.push_back({7, 5, EdgeKind::Data, false});
    m.edges.push_back({2, 5, EdgeKind::Data, false});
    m.total_order = {1, 2, 6, 7, 4, 5};

    MemoryMap map;
    map.mode = MemoryMode::Slot;
    map.capacities = {5};
    map.placements[1] = {0, 0, 1};
    map.placements[2] = {0, 1, 1};
    map.placements[4] = {0, 0, 1};  // reuses 1's location, gated by the offload
    map.placements[7] = {0, 2, 1};
    map.placements[5] = {0, 3, 1};
    return {m, map};
}

}  // namespace

TEST_CASE("a serial chain of unit kernels takes its length") {
    TaskGraph g = make_kernel_chain(3);
    auto result = compile_default(g, {4});
    DeviceProfile profile;
    SchedulerPolicy policy;
    auto trace = simulate(result.memgraph, result.memory_map, profile, policy, 0);
    CHECK(trace.makespan == doctest::Approx(3.0));
    check_trace_invariants(result.memgraph, trace);
}

TEST_CASE("independent kernels serialize on one device and overlap on two") {
    auto build = [&](int devices) {
        TaskGraph g;
        g.device_count = devices;
        g.vertices.push_back(input(0, 0));
        g.vertices.push_back(kernel(1, 0));
        DeviceId second = devices > 1 ? 1 : 0;
        g.vertices.push_back(input(2, second));
        g.vertices.push_back(kernel(3, second));
        g.edges.emplace_back(0, 1);
        g.edges.emplace_back(2, 3);
        std::vector<std::int64_t> caps(devices, 4);
        return compile_default(g, caps);
    };
    DeviceProfile profile;
    SchedulerPolicy policy;

    auto one = build(1);
    CHECK(simulate(one.memgraph, one.memory_map, profile, policy, 0).makespan ==
          doctest::Approx(2.0));

    auto two = build(2);
    CHECK(simulate(two.memgraph, two.memory_map, profile, policy, 0).makespan ==
          doctest::Approx(1.0));
}

TEST_CASE("the event loop reacts to whichever transfer finishes first") {
    DeviceProfile profile;
    profile.host_link_bandwidth = 10.0;
    SchedulerPolicy policy;

    auto start_of = [](const ExecutionTrace& t, VertexId id) {
        for (const auto& r : t.rows)
            if (r.vertex == id) return r.start;
        REQUIRE(false);
        return 0.0;
    };

    SUBCASE("slow offload: the reload-gated kernel runs first") {
        auto [m, map] = offload_vs_reload(/*offload_size=*/100, /*reload_size=*/10);
        auto trace = simulate(m, map, profile, policy, 0);
        check_trace_invariants(m, trace);
        CHECK(start_of(trace, 5) < start_of(trace, 4));
    }
    SUBCASE("slow reload: the offload-gated kernel runs first") {
        auto [m, map] = offload_vs_reload(/*offload_size=*/10, /*reload_size=*/100);
        auto trace = simulate(m, map, profile, policy, 0);
        check_trace_invariants(m, trace);
        CHECK(start_of(trace, 4) < start_of(trace, 5));
    }
}

TEST_CASE("offload and reload overlap but two offloads serialize") {
    // Two offloads (same direction) against an offload plus reload.
    auto build = [&](MemOpKind second_kind) {
        MemGraph m;
        m.device_count = 1;
        MemVertex a;
        a.id = 0;
        a.op = MemOpKind::Offload;
        a.origin = {MemOriginKind::Offload, 10, 0};
        a.device = 0;
        a.size = 100;
        MemVertex b = a;
        b.id = 1;
        b.op = second_kind;
        b.origin = {second_kind == MemOpKind::Offload ? MemOriginKind::Offload
                                                      : MemOriginKind::Reload,
                    11, 0};
        m.vertices = {a, b};
        m.total_order = {0, 1};
        MemoryMap map;
        map.mode = MemoryMode::Slot;
        map.capacities = {2};
        if (second_kind == MemOpKind::Reload) map.placements[1] = {0, 1, 1};
        return std::pair(m, map);
    };
    DeviceProfile profile;
    profile.host_link_bandwidth = 100.0;
    SchedulerPolicy policy;

    auto [m1, map1] = build(MemOpKind::Offload);
    CHECK(simulate(m1, map1, profile, policy, 0).makespan == doctest::Approx(2.0));

    auto [m2, map2] = build(MemOpKind::Reload);
    CHECK(simulate(m2, map2, profile, policy, 0).makespan == doctest::Approx(1.0));
}

TEST_CASE("fixed order chains each device") {
    SUBCASE("a single-device graph gets one chain") {
        TaskGraph g = gen_matmul(1);
        auto result = compile_default(g, {4});
        MemGraph fixed = make_fixed_order(result.memgraph);
        // Non-input vertices must be linked consecutively.
        std::vector<VertexId> ops;
        for (VertexId id : result.memgraph.total_order)
            if (result.memgraph.at(id).op != MemOpKind::Input) ops.push_back(id);
        for (size_t i = 0; i + 1 < ops.size(); ++i) {
            bool linked = fixed.has_edge(ops[i], ops[i + 1], EdgeKind::Memory) ||
                          fixed.has_edge(ops[i], ops[i + 1], EdgeKind::Data);
            CHECK(linked);
        }
    }
    SUBCASE("the chained five-slot build stays acyclic") {
        TaskGraph g = gen_matmul(3);
        auto result = compile_default(g, {5, 5, 5});
        MemGraph fixed = make_fixed_order(result.memgraph);
        CHECK(check_acyclic(fixed).passed);
    }
}

TEST_CASE("event-driven never loses to fixed order without noise") {
    DeviceProfile profile;
    SchedulerPolicy policy;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        TaskGraph g = gen_random_dag(14, 0.3, 2, seed);
        auto caps = working_set_floor(g, MemoryMode::Slot);
        BuildResult result;
        try {
            result = compile_default(g, caps);
        } catch (const InternalError&) {
            continue;
        }
        double event = simulate(result.memgraph, result.memory_map, profile, policy, seed)
                           .makespan;
        SchedulerPolicy fixed;
        fixed.kind = SchedulerKind::FixedOrder;
        double chained = simulate(result.memgraph, result.memory_map, profile, fixed, seed)
                             .makespan;
        CHECK(event <= chained + 1e-9);
    }
}

TEST_CASE("policy comparison on a chain shows zero speedup") {
    TaskGraph g = make_kernel_chain(4);
    auto result = compile_default(g, {5});
    DeviceProfile profile;
    auto summary = compare_policies(result.memgraph, result.memory_map, profile, 10, 7);
    CHECK(summary.speedup_mean == doctest::Approx(0.0));
    CHECK(summary.trials == 10);
}

TEST_CASE("simulated traces respect memgraph precedence as token reads") {
    TaskGraph g = gen_matmul(3);
    auto result = compile_default(g, {5, 5, 5});
    DeviceProfile profile;
    profile.noise = {NoiseKind::Lognormal, 0.4};
    SchedulerPolicy policy;
    auto trace = simulate(result.memgraph, result.memory_map, profile, policy, 42);
    check_trace_invariants(result.memgraph, trace);

    // The completion order is itself a linear extension of the memgraph:
    // replaying it against the placement lifetimes must stay within capacity.
    std::vector<VertexId> schedule;
    std::vector<std::tuple<double, VertexId>> by_end;
    for (const auto& r : trace.rows) by_end.emplace_back(r.end, r.vertex);
    std::sort(by_end.begin(), by_end.end());
    for (const auto& [t, id] : by_end) schedule.push_back(id);
    CHECK(check_capacity(result.memgraph, result.memory_map, schedule).passed);
    CHECK(trace.peak_live[0] <= result.memory_map.capacities[0]);
    CHECK(trace.peak_live[1] <= result.memory_map.capacities[1]);
}

TEST_CASE("durations") {
    DeviceProfile profile;
    profile.d2d_bandwidth = 50.0;
    profile.link_latency = 0.0;

    MemVertex t;
    t.op = MemOpKind::Transfer;
    t.size = 100;

    SUBCASE("transfer time is size over bandwidth") {
        CHECK(sample_duration(t, profile, 1) == doctest::Approx(2.0));
    }
    SUBCASE("no noise means identical values") {
        CHECK(sample_duration(t, profile, 5) == sample_duration(t, profile, 5));
        CHECK(sample_duration(t, profile, 5) == sample_duration(t, profile, 6));
    }
    SUBCASE("lognormal noise keeps the median near the base value") {
        profile.noise = {NoiseKind::Lognormal, 0.3};
        std::vector<double> draws;
        for (std::uint64_t i = 0; i < 100000; ++i)
            draws.push_back(sample_duration(t, profile, i));
        std::sort(draws.begin(), draws.end());
        double median = draws[draws.size() / 2];
        CHECK(median == doctest::Approx(2.0).epsilon(0.05));
    }
    SUBCASE("durations stay strictly positive") {
        MemVertex k;
        k.op = MemOpKind::Kernel;
        k.cost_hint = 0.0;
        CHECK(sample_duration(k, profile, 3) > 0.0);
    }
}

TEST_CASE("identical seeds give byte-identical traces") {
    TaskGraph g = gen_layered(2, 2, 2, 3);
    auto caps = working_set_floor(g, MemoryMode::Slot);
    auto result = compile_default(g, caps);
    DeviceProfile profile;
    profile.noise = {NoiseKind::Uniform, 0.2};
    SchedulerPolicy policy;
    policy.tie_break = TieBreak::SeededRandom;
    auto a = simulate(result.memgraph, result.memory_map, profile, policy, 99);
    auto b = simulate(result.memgraph, result.memory_map, profile, policy, 99);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.to_csv() == b.to_csv());
}

TEST_CASE("profile round trip") {
    DeviceProfile p;
    p.streams_per_device = 3;
    p.kernel_multiplier = 2.5;
    p.noise = {NoiseKind::Lognormal, 0.3};
    p.seed = 17;
    DeviceProfile q = parse_profile(serialize_profile(p));
    CHECK(q.streams_per_device == 3);
    CHECK(q.kernel_multiplier == doctest::Approx(2.5));
    CHECK(q.noise.kind == NoiseKind::Lognormal);
    CHECK(q.noise.param == doctest::Approx(0.3));
    CHECK_THROWS_AS(parse_profile("{\"streams_per_device\": 0}"), ParseError);
}
