// Acceptance suite: runs every compiled-in criterion and prints one PASS or
// FAIL line per criterion. Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "memplan/compiler.hpp"
#include "memplan/simulator.hpp"
#include "memplan/taskgraph.hpp"
#include "memplan/verifier.hpp"
#include "test_helpers.hpp"

using namespace memplan;
using namespace testutil;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail = "") {
    std::printf("%s  %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : "  -- ", detail.c_str());
    if (!ok) ++failures;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

const MemEdge* find_edge(const MemGraph& m, VertexId from, VertexId to, EdgeKind kind) {
    for (const auto& e : m.edges)
        if (e.from == from && e.to == to && e.kind == kind) return &e;
    return nullptr;
}

// --- criterion 1: worked example, five uniform slots per device --------------

void worked_example_five_slots() {
    auto start = Clock::now();
    TaskGraph g = gen_matmul(3);
    auto order = topological_order(g, OrderPolicy::AsListed, 0);
    auto result = build_memgraph(g, order, {5, 5, 5}, MemoryMode::Slot);

    const auto& pl = result.memory_map.placements;
    bool share_x = pl.at(0).device == pl.at(13).device && pl.at(0).offset == pl.at(13).offset;
    bool share_y = pl.at(1).device == pl.at(14).device && pl.at(1).offset == pl.at(14).offset;
    const MemEdge* required = find_edge(result.memgraph, 2, 13, EdgeKind::Memory);
    const MemEdge* redundant = find_edge(result.memgraph, 2, 14, EdgeKind::Memory);

    bool ok = share_x && share_y && required && !required->superfluous && redundant &&
              redundant->superfluous && result.stats.offload_count == 0 &&
              seconds_since(start) < 1.0;
    report("worked example, 5 slots: two shared locations, one required and one "
           "superfluous memory edge",
           ok);
}

// --- criterion 2: worked example, four slots on device 0 ---------------------

void worked_example_four_slots() {
    auto start = Clock::now();
    TaskGraph g = gen_matmul(3);
    VertexOrder order{0, 1, 6, 7, 8, 9, 3, 4, 5, 10, 11, 12, 13, 2, 14};
    BuildOptions opts;
    opts.alloc_horizon = AllocHorizonMode::Lazy;
    auto result = build_memgraph(g, order, {4, 5, 5}, MemoryMode::Slot, opts);

    std::vector<const MemVertex*> offloads, reloads;
    for (const auto& v : result.memgraph.vertices) {
        if (v.origin.kind == MemOriginKind::Offload) offloads.push_back(&v);
        if (v.origin.kind == MemOriginKind::Reload) reloads.push_back(&v);
    }
    bool one_pair = offloads.size() == 1 && reloads.size() == 1 &&
                    offloads[0]->origin.ref == 0 && reloads[0]->origin.ref == 0;
    bool edges_ok = false;
    if (one_pair) {
        const MemEdge* gate = find_edge(result.memgraph, offloads[0]->id, 13, EdgeKind::Memory);
        const MemEdge* back = find_edge(result.memgraph, 13, reloads[0]->id, EdgeKind::Memory);
        edges_ok = gate && back;
    }
    bool ok = one_pair && edges_ok && seconds_since(start) < 1.0;
    report("worked example, 4 slots on device 0: exactly one offload-reload pair "
           "with its two gating memory edges",
           ok);
}

// --- criterion 3: randomized compiler correctness sweep -----------------------

struct CorpusEntry {
    TaskGraph graph;
    VertexOrder order;
    std::vector<std::int64_t> capacities;
    MemoryMode mode;
    BuildOptions options;
    BuildResult result;
};

std::vector<CorpusEntry> build_corpus(int target, std::uint64_t seed_base, bool* all_valid,
                                      std::string* why) {
    std::vector<CorpusEntry> corpus;
    OrderPolicy order_policies[] = {OrderPolicy::AsListed, OrderPolicy::DepthFirst,
                                    OrderPolicy::MinMemoryGreedy};
    VictimPolicy victim_policies[] = {VictimPolicy::FarthestNextUse, VictimPolicy::LastAllocated,
                                      VictimPolicy::SeededRandom};
    *all_valid = true;

    int produced = 0;
    for (std::uint64_t seed = seed_base; produced < target; ++seed) {
        TaskGraph g;
        switch (seed % 3) {
            case 0: g = gen_random_dag(8 + static_cast<int>(seed % 29), 0.25, 1 + seed % 3, seed); break;
            case 1: g = gen_layered(1 + seed % 3, 1 + seed % 3, 1 + seed % 3, seed); break;
            default: g = gen_matmul(2 + static_cast<int>(seed % 3)); break;
        }
        if (g.vertices.size() > 60) continue;
        if (!validate_taskgraph(g).ok()) {
            *all_valid = false;
            *why = "generator emitted an invalid graph at seed " + std::to_string(seed);
            break;
        }

        MemoryMode mode = seed % 2 ? MemoryMode::Byte : MemoryMode::Slot;
        auto order =
            topological_order(g, order_policies[seed % 3], seed);
        auto floor = working_set_floor(g, mode);
        auto total = total_bytes_per_device(g, mode);

        // Capacity ladder: everything fits, midway, and the working-set floor.
        for (int rung = 0; rung < 3 && produced < target; ++rung) {
            CorpusEntry entry;
            entry.graph = g;
            entry.order = order;
            entry.mode = mode;
            entry.capacities.resize(g.device_count);
            for (int d = 0; d < g.device_count; ++d) {
                std::int64_t lo = floor[d], hi = std::max(total[d], lo);
                entry.capacities[d] = rung == 0 ? hi : rung == 1 ? (lo + hi) / 2 : lo;
            }
            entry.options.victim_policy = victim_policies[(seed + rung) % 3];
            entry.options.victim_seed = seed;
            entry.options.alloc_horizon =
                (seed + rung) % 4 == 0 ? AllocHorizonMode::Lazy : AllocHorizonMode::Greedy;
            try {
                entry.result = build_memgraph(g, order, entry.capacities, mode, entry.options);
            } catch (const MemplanError& e) {
                *all_valid = false;
                *why = "build failed at seed " + std::to_string(seed) + ": " + e.what();
                return corpus;
            }
            corpus.push_back(std::move(entry));
            ++produced;
        }
    }
    return corpus;
}

void compiler_correctness_sweep(const std::vector<CorpusEntry>& corpus, bool corpus_ok,
                                const std::string& why) {
    auto start = Clock::now();
    if (!corpus_ok) {
        report("compiler correctness sweep (500 randomized builds)", false, why);
        return;
    }
    int checked = 0;
    std::string detail;
    for (const auto& entry : corpus) {
        auto report_v = verify_all(entry.graph, entry.result.memgraph, entry.result.memory_map);
        if (!report_v.all_passed()) {
            detail = "verifier failed on instance " + std::to_string(checked);
            break;
        }
        ++checked;
    }
    bool ok = detail.empty() && checked == static_cast<int>(corpus.size()) &&
              seconds_since(start) < 120.0;
    report("compiler correctness sweep (" + std::to_string(checked) +
               " randomized builds pass all verifier checks)",
           ok, detail);
}

// --- criterion 4: race check agrees with exhaustive schedule enumeration ------

void oracle_equivalence() {
    int instances = 0, disagreements = 0;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        TaskGraph g = gen_random_dag(2 + static_cast<int>(seed % 4), 0.5, 1 + seed % 2, seed);
        if (g.vertices.size() > 8) continue;
        auto order = topological_order(g, OrderPolicy::AsListed, 0);
        auto caps = working_set_floor(g, MemoryMode::Slot);
        BuildResult result;
        try {
            result = build_memgraph(g, order, caps, MemoryMode::Slot);
        } catch (const MemplanError&) {
            continue;
        }
        if (result.memgraph.vertices.size() > 8) continue;

        auto agree = [&](const MemGraph& m, const MemoryMap& map) {
            bool race = check_race_freedom(m, map).passed;
            auto sched = enumerate_schedules_check(m, map, 1000000);
            if (sched.sampled) return true;  // should not happen at this size
            ++instances;
            if (race != sched.passed) ++disagreements;
            return race == sched.passed;
        };

        agree(result.memgraph, result.memory_map);

        // Injected racing mutants: drop each required memory edge.
        for (size_t i = 0; i < result.memgraph.edges.size(); ++i) {
            const auto& e = result.memgraph.edges[i];
            if (e.kind != EdgeKind::Memory || e.superfluous) continue;
            MemGraph mutant = result.memgraph;
            mutant.edges.erase(mutant.edges.begin() + i);
            agree(mutant, result.memory_map);
        }
    }
    bool ok = instances >= 30 && disagreements == 0;
    report("race-freedom check agrees with exhaustive schedule enumeration on " +
               std::to_string(instances) + " small instances (including racing mutants)",
           ok,
           disagreements ? std::to_string(disagreements) + " disagreements" : "");
}

// --- criterion 5: mutation kill rate ------------------------------------------

void mutation_kill_rate(const std::vector<CorpusEntry>& corpus, bool corpus_ok) {
    if (!corpus_ok) {
        report("mutation kill rate", false, "corpus unavailable");
        return;
    }
    int killed = 0, total = 0;
    for (const auto& entry : corpus) {
        if (total >= 200) break;
        for (size_t i = 0; i < entry.result.memgraph.edges.size() && total < 200; ++i) {
            const auto& e = entry.result.memgraph.edges[i];
            if (e.kind != EdgeKind::Memory || e.superfluous) continue;
            MemGraph mutant = entry.result.memgraph;
            mutant.edges.erase(mutant.edges.begin() + i);
            auto rep = verify_all(entry.graph, mutant, entry.result.memory_map);
            ++total;
            if (!rep.all_passed()) ++killed;
        }
    }
    bool ok = total >= 200 && killed == total;
    report("deleting any of " + std::to_string(total) +
               " sampled required memory edges fails at least one check (" +
               std::to_string(killed) + " killed)",
           ok);
}

// --- criterion 6: makespan dominance and stochastic speedup -------------------

void makespan_dominance() {
    auto start = Clock::now();
    DeviceProfile quiet;
    SchedulerPolicy event_policy;
    SchedulerPolicy fixed_policy;
    fixed_policy.kind = SchedulerKind::FixedOrder;

    int instances = 0, violations = 0;
    for (std::uint64_t seed = 0; instances < 200 && seed < 1000; ++seed) {
        TaskGraph g;
        if (seed % 2) g = gen_layered(1 + seed % 3, 1 + seed % 2, 2 + seed % 2, seed);
        else g = gen_random_dag(10 + static_cast<int>(seed % 20), 0.3, 2, seed);
        auto caps = working_set_floor(g, MemoryMode::Slot);
        BuildResult result;
        try {
            auto order = topological_order(g, OrderPolicy::AsListed, seed);
            result = build_memgraph(g, order, caps, MemoryMode::Slot);
        } catch (const MemplanError&) {
            continue;
        }
        double event =
            simulate(result.memgraph, result.memory_map, quiet, event_policy, seed).makespan;
        double fixed =
            simulate(result.memgraph, result.memory_map, quiet, fixed_policy, seed).makespan;
        ++instances;
        if (event > fixed + 1e-9) ++violations;
    }
    report("zero-noise event-driven makespan <= fixed-order makespan on " +
               std::to_string(instances) + " instances",
           instances == 200 && violations == 0,
           violations ? std::to_string(violations) + " violations" : "");

    // Offload-heavy workloads under stochastic transfer noise: the mean
    // speedup must be positive with 95% bootstrap confidence. Tail chains in
    // the layered workloads keep early tensors live, so tight capacities
    // force heavy spilling.
    DeviceProfile noisy;
    noisy.noise = {NoiseKind::Lognormal, 0.3};
    noisy.host_link_bandwidth = 2.0;

    std::vector<double> speedups;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        int layers = 4 + static_cast<int>(seed % 5);
        TaskGraph g = gen_layered(layers, 2, 2, seed);
        std::vector<std::int64_t> caps(2, 5);
        BuildOptions opts;
        opts.alloc_horizon = layers > 4 ? AllocHorizonMode::Lazy : AllocHorizonMode::Greedy;
        BuildResult result;
        try {
            auto order = topological_order(g, OrderPolicy::AsListed, seed);
            result = build_memgraph(g, order, caps, MemoryMode::Slot, opts);
        } catch (const MemplanError&) {
            continue;
        }
        if (result.stats.offload_count == 0) continue;
        auto summary = compare_policies(result.memgraph, result.memory_map, noisy, 25, seed);
        speedups.push_back(summary.speedup_mean);
    }
    double mean = 0;
    for (double s : speedups) mean += s;
    mean = speedups.empty() ? 0 : mean / static_cast<double>(speedups.size());

    std::mt19937_64 rng(4242);
    std::vector<double> boot;
    if (!speedups.empty()) {
        std::uniform_int_distribution<size_t> pick(0, speedups.size() - 1);
        for (int r = 0; r < 2000; ++r) {
            double acc = 0;
            for (size_t i = 0; i < speedups.size(); ++i) acc += speedups[pick(rng)];
            boot.push_back(acc / static_cast<double>(speedups.size()));
        }
        std::sort(boot.begin(), boot.end());
    }
    double ci_low = boot.empty() ? 0 : boot[static_cast<size_t>(0.025 * (boot.size() - 1))];
    bool ok = speedups.size() >= 8 && mean > 0 && ci_low > 0 && seconds_since(start) < 300.0;
    char detail[128];
    std::snprintf(detail, sizeof(detail), "mean speedup %.1f%%, bootstrap CI low %.1f%% over %zu workloads",
                  100 * mean, 100 * ci_low, speedups.size());
    report("offload-heavy workloads under lognormal transfer noise favor event-driven "
           "scheduling with 95% confidence",
           ok, detail);
}

// --- criterion 7: plenty-of-memory identity -----------------------------------

void plenty_of_memory_identity() {
    int checked = 0, exact = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        TaskGraph g = gen_random_dag(6 + static_cast<int>(seed % 25), 0.3, 1 + seed % 3, seed);
        MemoryMode mode = seed % 2 ? MemoryMode::Byte : MemoryMode::Slot;
        auto caps = total_bytes_per_device(g, mode);
        auto order = topological_order(g, OrderPolicy::AsListed, seed);
        auto result = build_memgraph(g, order, caps, mode);
        ++checked;

        std::set<VertexId> task_ids, mem_ids;
        for (const auto& v : g.vertices) task_ids.insert(v.id);
        for (const auto& v : result.memgraph.vertices) mem_ids.insert(v.id);
        std::set<std::pair<VertexId, VertexId>> task_edges(g.edges.begin(), g.edges.end());
        std::set<std::pair<VertexId, VertexId>> data_edges, required;
        for (const auto& e : result.memgraph.edges) {
            if (e.kind == EdgeKind::Data) data_edges.insert({e.from, e.to});
            else if (!e.superfluous) required.insert({e.from, e.to});
        }
        if (result.stats.offload_count == 0 && result.stats.reload_count == 0 &&
            task_ids == mem_ids && task_edges == data_edges && required.empty())
            ++exact;
    }
    report("plenty of memory: 100 builds have zero offloads and exactly the taskgraph's "
               "data edges",
           checked == 100 && exact == 100);
}

// --- criterion 8: byte-identical reruns ----------------------------------------

void determinism() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 10 && ok; ++seed) {
        TaskGraph g = seed % 2 ? gen_layered(2, 2, 2, seed)
                               : gen_random_dag(15, 0.3, 2, seed);
        MemoryMode mode = seed % 2 ? MemoryMode::Byte : MemoryMode::Slot;
        auto caps = working_set_floor(g, mode);

        std::vector<std::string> runs;
        for (int rep = 0; rep < 3; ++rep) {
            std::string blob = serialize_taskgraph(g);
            TaskGraph parsed = parse_taskgraph(blob);
            auto order = topological_order(parsed, OrderPolicy::MinMemoryGreedy, seed);
            BuildOptions opts;
            opts.victim_policy = VictimPolicy::SeededRandom;
            opts.victim_seed = seed;
            auto result = build_memgraph(parsed, order, caps, mode, opts);
            blob += serialize_memgraph(result.memgraph, result.memory_map);
            DeviceProfile profile;
            profile.noise = {NoiseKind::Lognormal, 0.2};
            SchedulerPolicy policy;
            policy.tie_break = TieBreak::SeededRandom;
            blob += simulate(result.memgraph, result.memory_map, profile, policy, seed).to_json();
            blob += compare_policies(result.memgraph, result.memory_map, profile, 5, seed)
                        .to_json();
            runs.push_back(std::move(blob));
        }
        if (runs[0] != runs[1] || runs[1] != runs[2]) {
            ok = false;
            detail = "divergence at seed " + std::to_string(seed);
        }
    }
    report("full pipeline reruns are byte-identical across 3 repetitions", ok, detail);
}

}  // namespace

int main() {
    auto start = Clock::now();

    worked_example_five_slots();
    worked_example_four_slots();

    bool corpus_ok = true;
    std::string why;
    auto corpus = build_corpus(500, 1000, &corpus_ok, &why);
    compiler_correctness_sweep(corpus, corpus_ok, why);

    oracle_equivalence();
    mutation_kill_rate(corpus, corpus_ok);
    makespan_dominance();
    plenty_of_memory_identity();
    determinism();

    std::printf("%s  (%d criterion(s) failed, %.1fs total)\n", failures ? "RESULT: FAIL" : "RESULT: PASS",
                failures, seconds_since(start));
    return failures ? 1 : 0;
}
