// Copyright 2026 The Memplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "memplan/compiler.hpp"
#include "memplan/memgraph.hpp"
#include "memplan/simulator.hpp"
#include "memplan/taskgraph.hpp"
#include "memplan/verifier.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw memplan::MemplanError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw memplan::MemplanError("cannot write " + path);
    out << content;
}

// "slots:N", "slots:a,b,c", "a,b,c", or a single byte count.
std::pair<std::vector<std::int64_t>, memplan::MemoryMode> parse_capacities(
    const std::string& text, int device_count) {
    std::string spec = text;
    memplan::MemoryMode mode = memplan::MemoryMode::Byte;
    if (spec.rfind("slots:", 0) == 0) {
        mode = memplan::MemoryMode::Slot;
        spec = spec.substr(6);
    }
    std::vector<std::int64_t> values;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        values.push_back(std::stoll(item));
    }
    if (values.empty()) throw memplan::MemplanError("empty capacity spec: " + text);
    if (values.size() == 1) values.assign(device_count, values[0]);
    if (static_cast<int>(values.size()) != device_count)
        throw memplan::MemplanError("capacity spec names " + std::to_string(values.size()) +
                                    " devices, graph has " + std::to_string(device_count));
    return {values, mode};
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("MEMPLAN_SEED")) return std::strtoull(env, nullptr, 10);
    return 0;
}

memplan::VertexOrder load_order_file(const std::string& path) {
    auto j = nlohmann::json::parse(read_file(path));
    if (!j.is_array()) throw memplan::ParseError("order file must be a JSON array of ids");
    memplan::VertexOrder order;
    for (const auto& v : j) order.push_back(v.get<memplan::VertexId>());
    return order;
}

struct CompileArgs {
    std::string graph_path;
    std::string capacities = "slots:5";
    std::string order_policy = "as-listed";
    std::string order_file;
    std::string victim_policy = "farthest-next-use";
    std::string alloc_horizon = "greedy";
    std::uint64_t seed = 0;
    bool drop_superfluous = false;
    std::string out;
};

int cmd_compile(const CompileArgs& args) {
    auto g = memplan::parse_taskgraph(read_file(args.graph_path));
    auto report = memplan::validate_taskgraph(g);
    if (!report.ok()) {
        for (const auto& v : report.violations) std::cerr << "invalid graph: " << v.message << "\n";
        return kExitCheckFailed;
    }
    auto [caps, mode] = parse_capacities(args.capacities, g.device_count);
    memplan::VertexOrder order =
        args.order_file.empty()
            ? memplan::topological_order(g, memplan::order_policy_from_string(args.order_policy),
                                         args.seed)
            : load_order_file(args.order_file);

    memplan::BuildOptions options;
    options.victim_policy = memplan::victim_policy_from_string(args.victim_policy);
    options.victim_seed = args.seed;
    options.alloc_horizon = memplan::alloc_horizon_from_string(args.alloc_horizon);
    options.keep_superfluous = !args.drop_superfluous;

    auto result = memplan::build_memgraph(g, order, caps, mode, options);

    nlohmann::ordered_json stats;
    stats["offloads"] = result.stats.offload_count;
    stats["reloads"] = result.stats.reload_count;
    stats["memory_edges"] = result.stats.memory_edge_count;
    stats["required_memory_edges"] = result.stats.required_memory_edge_count;
    stats["peak_usage"] = result.stats.peak_usage;
    std::cout << stats.dump(2) << "\n";

    if (!args.out.empty())
        write_file(args.out, memplan::serialize_memgraph(result.memgraph, result.memory_map));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"memory-planning compiler, verifier and execution simulator for "
                 "device-assigned dataflow graphs"};
    app.require_subcommand(1);

    std::uint64_t seed = default_seed();

    // validate
    std::string val_graph;
    auto* validate = app.add_subcommand("validate", "check a taskgraph against its invariants");
    validate->add_option("--graph", val_graph, "taskgraph JSON file")->required();

    // compile
    CompileArgs cargs;
    cargs.seed = seed;
    auto* compile = app.add_subcommand("compile", "build a memgraph and memory map");
    compile->add_option("--graph", cargs.graph_path, "taskgraph JSON file")->required();
    compile->add_option("--capacities", cargs.capacities,
                        "per-device capacities: bytes list or slots:N");
    compile->add_option("--order-policy", cargs.order_policy,
                        "as-listed | depth-first | min-memory-greedy");
    compile->add_option("--order-file", cargs.order_file, "explicit order (JSON array of ids)");
    compile->add_option("--victim-policy", cargs.victim_policy,
                        "farthest-next-use | last-allocated | seeded-random");
    compile->add_option("--alloc-horizon", cargs.alloc_horizon, "greedy | lazy");
    compile->add_flag("--drop-superfluous", cargs.drop_superfluous,
                      "drop superfluous memory edges instead of flagging them");
    compile->add_option("--seed", cargs.seed, "seed for order/victim policies");
    compile->add_option("--out", cargs.out, "output memgraph JSON path");

    // verify
    std::string ver_graph, ver_memgraph;
    std::int64_t ver_schedules = 0;
    auto* verify = app.add_subcommand("verify", "check a compiled memgraph and memory map");
    verify->add_option("--graph", ver_graph, "taskgraph JSON file")->required();
    verify->add_option("--memgraph", ver_memgraph, "memgraph JSON file")->required();
    verify->add_option("--schedules", ver_schedules,
                       "also run the schedule enumeration check with this limit");

    // simulate
    std::string sim_memgraph, sim_profile, sim_policy = "event-driven", sim_tie = "fifo";
    std::string sim_out, sim_format = "json";
    auto* simulate = app.add_subcommand("simulate", "run one simulated execution");
    simulate->add_option("--memgraph", sim_memgraph, "memgraph JSON file")->required();
    simulate->add_option("--profile", sim_profile, "device profile JSON file");
    simulate->add_option("--policy", sim_policy, "event-driven | fixed-order");
    simulate->add_option("--tie-break", sim_tie, "fifo | seeded-random | lowest-id");
    simulate->add_option("--seed", seed, "simulation seed");
    simulate->add_option("--out", sim_out, "trace output path");
    simulate->add_option("--format", sim_format, "json | csv");

    // bench
    std::string bench_memgraph, bench_profile, bench_out;
    std::int64_t bench_trials = 20;
    auto* bench = app.add_subcommand("bench", "compare event-driven and fixed-order policies");
    bench->add_option("--memgraph", bench_memgraph, "memgraph JSON file")->required();
    bench->add_option("--profile", bench_profile, "device profile JSON file");
    bench->add_option("--trials", bench_trials, "simulations per policy");
    bench->add_option("--seed", seed, "base seed");
    bench->add_option("--out", bench_out, "summary output path");

    // export-dot
    std::string dot_graph, dot_memgraph, dot_out;
    auto* export_dot = app.add_subcommand("export-dot", "emit a graphviz rendering");
    export_dot->add_option("--graph", dot_graph, "taskgraph JSON file");
    export_dot->add_option("--memgraph", dot_memgraph, "memgraph JSON file");
    export_dot->add_option("--out", dot_out, "output .dot path");

    // gen
    std::string gen_kind = "matmul", gen_out;
    int gen_parts = 3, gen_layers = 2, gen_width = 2, gen_devices = 2, gen_n = 16;
    double gen_density = 0.3;
    auto* gen = app.add_subcommand("gen", "generate a synthetic taskgraph");
    gen->add_option("--kind", gen_kind, "matmul | layered | random");
    gen->add_option("--parts", gen_parts, "matmul: number of devices");
    gen->add_option("--layers", gen_layers, "layered: block count");
    gen->add_option("--width", gen_width, "layered: kernels per block per device");
    gen->add_option("--devices", gen_devices, "layered/random: device count");
    gen->add_option("--n", gen_n, "random: logical node count");
    gen->add_option("--density", gen_density, "random: edge probability");
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--out", gen_out, "output taskgraph path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (validate->parsed()) {
            auto g = memplan::parse_taskgraph(read_file(val_graph));
            auto report = memplan::validate_taskgraph(g);
            if (report.ok()) {
                std::cout << "ok\n";
                return kExitOk;
            }
            for (const auto& v : report.violations) std::cout << "violation: " << v.message << "\n";
            return kExitCheckFailed;
        }

        if (compile->parsed()) return cmd_compile(cargs);

        if (verify->parsed()) {
            auto g = memplan::parse_taskgraph(read_file(ver_graph));
            auto [m, map] = memplan::parse_memgraph(read_file(ver_memgraph));
            auto report = memplan::verify_all(g, m, map, ver_schedules);
            std::cout << report.to_json();
            return report.all_passed() ? kExitOk : kExitCheckFailed;
        }

        if (simulate->parsed()) {
            auto [m, map] = memplan::parse_memgraph(read_file(sim_memgraph));
            memplan::DeviceProfile profile;
            if (!sim_profile.empty()) profile = memplan::parse_profile(read_file(sim_profile));
            memplan::SchedulerPolicy policy;
            policy.kind = memplan::scheduler_kind_from_string(sim_policy);
            policy.tie_break = memplan::tie_break_from_string(sim_tie);
            auto trace = memplan::simulate(m, map, profile, policy, seed);
            std::string output = sim_format == "csv" ? trace.to_csv() : trace.to_json();
            if (sim_out.empty()) {
                std::cout << output;
            } else {
                write_file(sim_out, output);
                nlohmann::ordered_json summary;
                summary["makespan"] = trace.makespan;
                summary["host_bytes_transferred"] = trace.host_bytes_transferred;
                std::cout << summary.dump(2) << "\n";
            }
            return kExitOk;
        }

        if (bench->parsed()) {
            auto [m, map] = memplan::parse_memgraph(read_file(bench_memgraph));
            memplan::DeviceProfile profile;
            if (!bench_profile.empty()) profile = memplan::parse_profile(read_file(bench_profile));
            auto summary = memplan::compare_policies(m, map, profile, bench_trials, seed);
            std::string output = summary.to_json();
            if (!bench_out.empty()) write_file(bench_out, output);
            else std::cout << output;
            std::printf("%-14s %12s %24s\n", "policy", "mean", "95% CI");
            std::printf("%-14s %12.4f [%10.4f, %10.4f]\n", "event-driven",
                        summary.event_driven.mean, summary.event_driven.ci_low,
                        summary.event_driven.ci_high);
            std::printf("%-14s %12.4f [%10.4f, %10.4f]\n", "fixed-order",
                        summary.fixed_order.mean, summary.fixed_order.ci_low,
                        summary.fixed_order.ci_high);
            std::printf("%-14s %11.2f%% [%9.2f%%, %9.2f%%]\n", "speedup",
                        100 * summary.speedup_mean, 100 * summary.speedup_ci_low,
                        100 * summary.speedup_ci_high);
            return kExitOk;
        }

        if (export_dot->parsed()) {
            std::string dot;
            if (!dot_memgraph.empty()) {
                auto [m, map] = memplan::parse_memgraph(read_file(dot_memgraph));
                dot = memplan::memgraph_to_dot(m);
            } else if (!dot_graph.empty()) {
                dot = memplan::taskgraph_to_dot(memplan::parse_taskgraph(read_file(dot_graph)));
            } else {
                std::cerr << "export-dot needs --graph or --memgraph\n";
                return kExitUsage;
            }
            if (dot_out.empty()) std::cout << dot;
            else write_file(dot_out, dot);
            return kExitOk;
        }

        if (gen->parsed()) {
            memplan::TaskGraph g;
            if (gen_kind == "matmul") g = memplan::gen_matmul(gen_parts);
            else if (gen_kind == "layered")
                g = memplan::gen_layered(gen_layers, gen_width, gen_devices, seed);
            else if (gen_kind == "random")
                g = memplan::gen_random_dag(gen_n, gen_density, gen_devices, seed);
            else {
                std::cerr << "unknown generator kind: " << gen_kind << "\n";
                return kExitUsage;
            }
            std::string output = memplan::serialize_taskgraph(g);
            if (gen_out.empty()) std::cout << output;
            else write_file(gen_out, output);
            return kExitOk;
        }
    } catch (const memplan::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const memplan::MemplanError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
