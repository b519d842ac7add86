// Copyright 2026 The Memplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "memplan/taskgraph.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

namespace memplan {

using json = nlohmann::ordered_json;

const char* to_string(VertexKind kind) {
    switch (kind) {
        case VertexKind::Input: return "input";
        case VertexKind::Kernel: return "kernel";
        case VertexKind::Transfer: return "transfer";
    }
    return "?";
}

const char* to_string(OrderPolicy policy) {
    switch (policy) {
        case OrderPolicy::AsListed: return "as-listed";
        case OrderPolicy::DepthFirst: return "depth-first";
        case OrderPolicy::MinMemoryGreedy: return "min-memory-greedy";
    }
    return "?";
}

OrderPolicy order_policy_from_string(const std::string& name) {
    if (name == "as-listed") return OrderPolicy::AsListed;
    if (name == "depth-first") return OrderPolicy::DepthFirst;
    if (name == "min-memory-greedy") return OrderPolicy::MinMemoryGreedy;
    throw MemplanError("unknown order policy: " + name);
}

const TaskVertex* TaskGraph::find(VertexId id) const {
    for (const auto& v : vertices) {
        if (v.id == id) return &v;
    }
    return nullptr;
}

const TaskVertex& TaskGraph::at(VertexId id) const {
    const TaskVertex* v = find(id);
    if (!v) throw MemplanError("no vertex with id " + std::to_string(id));
    return *v;
}

std::vector<VertexId> TaskGraph::consumers(VertexId id) const {
    std::vector<VertexId> out;
    for (const auto& [p, c] : edges) {
        if (p == id) out.push_back(c);
    }
    return out;
}

std::vector<VertexId> TaskGraph::producers(VertexId id) const {
    std::vector<VertexId> out;
    for (const auto& [p, c] : edges) {
        if (c == id) out.push_back(p);
    }
    return out;
}

bool TaskGraph::operator==(const TaskGraph& other) const {
    if (device_count != other.device_count) return false;
    if (vertices.size() != other.vertices.size() || edges.size() != other.edges.size())
        return false;
    auto key = [](const TaskVertex& v) {
        return std::tuple(v.id, v.kind, v.device, v.src_device, v.output_size, v.cost_hint);
    };
    auto sorted = [&](const std::vector<TaskVertex>& vs) {
        std::vector<TaskVertex> s = vs;
        std::sort(s.begin(), s.end(),
                  [&](const TaskVertex& a, const TaskVertex& b) { return key(a) < key(b); });
        return s;
    };
    auto va = sorted(vertices), vb = sorted(other.vertices);
    for (size_t i = 0; i < va.size(); ++i) {
        if (key(va[i]) != key(vb[i])) return false;
    }
    auto ea = edges, eb = other.edges;
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    return ea == eb;
}

// --- validation --------------------------------------------------------------

ValidationReport validate_taskgraph(const TaskGraph& g) {
    ValidationReport report;
    auto violate = [&](std::string msg) { report.violations.push_back({std::move(msg)}); };

    if (g.device_count < 1) violate("device_count must be >= 1");

    std::map<VertexId, const TaskVertex*> by_id;
    for (const auto& v : g.vertices) {
        if (!by_id.emplace(v.id, &v).second)
            violate("duplicate vertex id " + std::to_string(v.id));
        if (v.output_size <= 0)
            violate("vertex " + std::to_string(v.id) + ": output_size must be > 0");
        if (v.device < 0 || v.device >= g.device_count)
            violate("vertex " + std::to_string(v.id) + ": device out of range");
        if (v.kind == VertexKind::Transfer) {
            if (v.src_device < 0 || v.src_device >= g.device_count)
                violate("transfer " + std::to_string(v.id) + ": src_device out of range");
            else if (v.src_device == v.device)
                violate("transfer " + std::to_string(v.id) +
                        ": source device equals destination device");
        }
        if (v.cost_hint < 0)
            violate("vertex " + std::to_string(v.id) + ": cost_hint must be >= 0");
    }

    std::set<std::pair<VertexId, VertexId>> seen;
    std::map<VertexId, int> indegree;
    for (const auto& [p, c] : g.edges) {
        if (p == c) {
            violate("self-loop at " + std::to_string(p));
            continue;
        }
        if (!by_id.count(p))
            violate("edge references missing producer " + std::to_string(p));
        if (!by_id.count(c))
            violate("edge references missing consumer " + std::to_string(c));
        if (!seen.insert({p, c}).second)
            violate("duplicate edge " + std::to_string(p) + "->" + std::to_string(c));
        indegree[c]++;
    }

    for (const auto& v : g.vertices) {
        int in = indegree.count(v.id) ? indegree[v.id] : 0;
        switch (v.kind) {
            case VertexKind::Input:
                if (in != 0)
                    violate("input " + std::to_string(v.id) + " has inbound edges");
                break;
            case VertexKind::Transfer:
                if (in != 1)
                    violate("transfer " + std::to_string(v.id) + " must have exactly one inbound edge");
                break;
            case VertexKind::Kernel:
                if (in < 1)
                    violate("kernel " + std::to_string(v.id) + " has no inbound edges");
                break;
        }
    }

    // Cross-device reads: a kernel consumes only tensors living on its own
    // device; a transfer reads from exactly its src_device.
    for (const auto& [p, c] : g.edges) {
        auto pi = by_id.find(p);
        auto ci = by_id.find(c);
        if (pi == by_id.end() || ci == by_id.end()) continue;
        const TaskVertex& prod = *pi->second;
        const TaskVertex& cons = *ci->second;
        if (cons.kind == VertexKind::Kernel && prod.device != cons.device)
            violate("kernel " + std::to_string(c) + " on device " + std::to_string(cons.device) +
                    " reads tensor " + std::to_string(p) + " on device " +
                    std::to_string(prod.device) + " without a transfer");
        if (cons.kind == VertexKind::Transfer && prod.device != cons.src_device)
            violate("transfer " + std::to_string(c) + " declares src_device " +
                    std::to_string(cons.src_device) + " but reads tensor on device " +
                    std::to_string(prod.device));
    }

    // Acyclicity via Kahn; report one cycle if found.
    if (!by_id.empty()) {
        std::map<VertexId, int> deg;
        for (const auto& v : g.vertices) deg[v.id] = 0;
        for (const auto& [p, c] : g.edges)
            if (by_id.count(p) && by_id.count(c) && p != c) deg[c]++;
        std::queue<VertexId> ready;
        for (const auto& [id, d] : deg)
            if (d == 0) ready.push(id);
        size_t visited = 0;
        auto deg2 = deg;
        while (!ready.empty()) {
            VertexId u = ready.front();
            ready.pop();
            ++visited;
            for (const auto& [p, c] : g.edges) {
                if (p != u || !deg2.count(c)) continue;
                if (--deg2[c] == 0) ready.push(c);
            }
        }
        if (visited != by_id.size()) violate("graph contains a cycle");
    }

    return report;
}

// --- topological ordering ----------------------------------------------------

namespace {

std::vector<VertexId> find_cycle(const TaskGraph& g) {
    // DFS with colors; returns one cycle as [v, ..., v].
    std::map<VertexId, int> color;  // 0 white, 1 gray, 2 black
    std::map<VertexId, VertexId> parent;
    std::map<VertexId, std::vector<VertexId>> adj;
    for (const auto& [p, c] : g.edges) adj[p].push_back(c);
    for (const auto& v : g.vertices) color[v.id] = 0;

    std::vector<VertexId> cycle;
    std::function<bool(VertexId)> dfs = [&](VertexId u) {
        color[u] = 1;
        for (VertexId w : adj[u]) {
            if (color[w] == 1) {
                cycle.push_back(w);
                for (VertexId x = u; x != w; x = parent[x]) cycle.push_back(x);
                cycle.push_back(w);
                std::reverse(cycle.begin(), cycle.end());
                return true;
            }
            if (color[w] == 0) {
                parent[w] = u;
                if (dfs(w)) return true;
            }
        }
        color[u] = 2;
        return false;
    };
    for (const auto& v : g.vertices) {
        if (color[v.id] == 0 && dfs(v.id)) return cycle;
    }
    return {};
}

}  // namespace

VertexOrder topological_order(const TaskGraph& g, OrderPolicy policy, std::uint64_t seed) {
    (void)seed;  // reserved for future randomized policies
    std::map<VertexId, size_t> listed_pos;
    for (size_t i = 0; i < g.vertices.size(); ++i) listed_pos[g.vertices[i].id] = i;

    std::map<VertexId, std::vector<VertexId>> adj, radj;
    std::map<VertexId, int> indeg;
    for (const auto& v : g.vertices) indeg[v.id] = 0;
    for (const auto& [p, c] : g.edges) {
        adj[p].push_back(c);
        radj[c].push_back(p);
        indeg[c]++;
    }
    for (auto& [id, list] : adj)
        std::sort(list.begin(), list.end(),
                  [&](VertexId a, VertexId b) { return listed_pos[a] < listed_pos[b]; });

    VertexOrder order;
    order.reserve(g.vertices.size());

    if (policy == OrderPolicy::DepthFirst) {
        // Reverse finish order of a DFS from roots in listed order.
        std::map<VertexId, int> state;
        std::vector<VertexId> finish;
        std::function<void(VertexId)> dfs = [&](VertexId u) {
            state[u] = 1;
            for (VertexId w : adj[u]) {
                if (!state.count(w) || state[w] == 0) dfs(w);
                else if (state[w] == 1) throw CycleError("cycle detected", find_cycle(g));
            }
            state[u] = 2;
            finish.push_back(u);
        };
        for (const auto& v : g.vertices)
            if (!state.count(v.id) || state[v.id] == 0) dfs(v.id);
        order.assign(finish.rbegin(), finish.rend());
        if (order.size() != g.vertices.size()) throw CycleError("cycle detected", find_cycle(g));
        return order;
    }

    // Kahn's algorithm; the policies differ only in how the next ready vertex
    // is chosen.
    std::set<VertexId> ready;
    for (const auto& v : g.vertices)
        if (indeg[v.id] == 0) ready.insert(v.id);

    // Remaining consumer count drives the min-memory score: picking a vertex
    // frees each input whose last remaining consumer it is.
    std::map<VertexId, int> remaining_consumers;
    for (const auto& [p, c] : g.edges) remaining_consumers[p]++;

    auto pick = [&]() -> VertexId {
        if (policy == OrderPolicy::AsListed) {
            return *std::min_element(ready.begin(), ready.end(), [&](VertexId a, VertexId b) {
                return listed_pos[a] < listed_pos[b];
            });
        }
        // MinMemoryGreedy: minimize immediate live-size delta, ties by listed
        // position.
        VertexId best = 0;
        std::int64_t best_delta = 0;
        bool first = true;
        for (VertexId cand : ready) {
            std::int64_t delta = g.at(cand).output_size;
            for (VertexId in : radj[cand])
                if (remaining_consumers[in] == 1) delta -= g.at(in).output_size;
            if (first || delta < best_delta ||
                (delta == best_delta && listed_pos[cand] < listed_pos[best])) {
                best = cand;
                best_delta = delta;
                first = false;
            }
        }
        return best;
    };

    while (!ready.empty()) {
        VertexId u = pick();
        ready.erase(u);
        order.push_back(u);
        for (VertexId in : radj[u]) remaining_consumers[in]--;
        for (VertexId w : adj[u])
            if (--indeg[w] == 0) ready.insert(w);
    }
    if (order.size() != g.vertices.size()) throw CycleError("cycle detected", find_cycle(g));
    return order;
}

bool is_linear_extension(const TaskGraph& g, const VertexOrder& order) {
    if (order.size() != g.vertices.size()) return false;
    std::map<VertexId, size_t> pos;
    for (size_t i = 0; i < order.size(); ++i) {
        if (!g.find(order[i])) return false;
        if (!pos.emplace(order[i], i).second) return false;
    }
    for (const auto& [p, c] : g.edges)
        if (pos[p] >= pos[c]) return false;
    return true;
}

// --- serialization -----------------------------------------------------------

std::string serialize_taskgraph(const TaskGraph& g) {
    json j;
    j["device_count"] = g.device_count;
    j["vertices"] = json::array();
    for (const auto& v : g.vertices) {
        json jv;
        jv["id"] = v.id;
        jv["kind"] = to_string(v.kind);
        jv["device"] = v.device;
        if (v.kind == VertexKind::Transfer) jv["src_device"] = v.src_device;
        jv["output_size"] = v.output_size;
        jv["cost_hint"] = v.cost_hint;
        j["vertices"].push_back(jv);
    }
    j["edges"] = json::array();
    for (const auto& [p, c] : g.edges) j["edges"].push_back(json::array({p, c}));
    return j.dump(2) + "\n";
}

TaskGraph parse_taskgraph(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("top level must be an object");
    if (!j.contains("vertices")) throw ParseError("missing vertices");

    TaskGraph g;
    g.device_count = j.value("device_count", 1);
    for (const auto& jv : j["vertices"]) {
        TaskVertex v;
        if (!jv.contains("id")) throw ParseError("vertex missing id");
        v.id = jv["id"].get<VertexId>();
        std::string kind = jv.value("kind", "");
        if (kind == "input") v.kind = VertexKind::Input;
        else if (kind == "kernel") v.kind = VertexKind::Kernel;
        else if (kind == "transfer") v.kind = VertexKind::Transfer;
        else throw ParseError("vertex " + std::to_string(v.id) + ": unknown kind '" + kind + "'");
        v.device = jv.value("device", 0);
        v.src_device = jv.value("src_device", -1);
        v.output_size = jv.value("output_size", std::int64_t{1});
        v.cost_hint = jv.value("cost_hint", 1.0);
        g.vertices.push_back(v);
    }
    for (const auto& je : j.value("edges", json::array())) {
        if (!je.is_array() || je.size() != 2)
            throw ParseError("edge must be a [producer, consumer] pair");
        VertexId p = je[0].get<VertexId>();
        VertexId c = je[1].get<VertexId>();
        if (!g.find(p))
            throw ParseError("edge references unknown vertex " + std::to_string(p));
        if (!g.find(c))
            throw ParseError("edge references unknown vertex " + std::to_string(c));
        g.edges.emplace_back(p, c);
    }
    return g;
}

std::string taskgraph_to_dot(const TaskGraph& g) {
    std::ostringstream out;
    out << "digraph taskgraph {\n";
    for (const auto& v : g.vertices) {
        out << "  v" << v.id << " [label=\"" << v.id << " " << to_string(v.kind) << "@"
            << v.device << "\"];\n";
    }
    for (const auto& [p, c] : g.edges) out << "  v" << p << " -> v" << c << ";\n";
    out << "}\n";
    return out.str();
}

// --- generators ---------------------------------------------------------------

TaskGraph gen_matmul(int parts) {
    if (parts < 1) throw MemplanError("gen_matmul: parts must be >= 1");
    TaskGraph g;
    g.device_count = parts;
    VertexId next = 0;
    auto add = [&](VertexKind kind, DeviceId dev, DeviceId src = -1) {
        TaskVertex v;
        v.id = next++;
        v.kind = kind;
        v.device = dev;
        v.src_device = src;
        v.output_size = 1;
        v.cost_hint = 1.0;
        g.vertices.push_back(v);
        return v.id;
    };
    auto edge = [&](VertexId p, VertexId c) { g.edges.emplace_back(p, c); };

    // Device 0 holds one input pair and its local partial product.
    VertexId x0 = add(VertexKind::Input, 0);
    VertexId y0 = add(VertexKind::Input, 0);
    VertexId p0 = add(VertexKind::Kernel, 0);
    edge(x0, p0);
    edge(y0, p0);
    if (parts == 1) return g;

    // Every other device computes its own partial product.
    std::vector<VertexId> partial(parts);
    partial[0] = p0;
    for (int d = 1; d < parts; ++d) {
        VertexId x = add(VertexKind::Input, d);
        VertexId y = add(VertexKind::Input, d);
        VertexId p = add(VertexKind::Kernel, d);
        edge(x, p);
        edge(y, p);
        partial[d] = p;
    }

    // Partials hop device-by-device toward device 1, combined at each stop.
    VertexId tail = partial[parts - 1];
    for (int d = parts - 1; d >= 2; --d) {
        VertexId t = add(VertexKind::Transfer, d - 1, d);
        edge(tail, t);
        VertexId combine = add(VertexKind::Kernel, d - 1);
        edge(partial[d - 1], combine);
        edge(t, combine);
        tail = combine;
    }

    // Device 0 receives the combined remote partials, reshapes them, and
    // aggregates with its local partial.
    VertexId ship = add(VertexKind::Transfer, 0, 1);
    edge(tail, ship);
    VertexId reshape;
    if (parts >= 3) {
        VertexId raw = add(VertexKind::Transfer, 0, 1);
        edge(partial[1], raw);
        reshape = add(VertexKind::Kernel, 0);
        edge(ship, reshape);
        edge(raw, reshape);
    } else {
        reshape = add(VertexKind::Kernel, 0);
        edge(ship, reshape);
    }
    VertexId result = add(VertexKind::Kernel, 0);
    edge(p0, result);
    edge(reshape, result);
    return g;
}

TaskGraph gen_layered(int layers, int width, int devices, std::uint64_t seed) {
    if (layers < 1 || width < 1 || devices < 1)
        throw MemplanError("gen_layered: parameters must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> size_dist(1, 4);
    std::uniform_real_distribution<double> cost_dist(0.5, 2.0);

    TaskGraph g;
    g.device_count = devices;
    VertexId next = 0;
    auto add = [&](VertexKind kind, DeviceId dev, DeviceId src = -1) {
        TaskVertex v;
        v.id = next++;
        v.kind = kind;
        v.device = dev;
        v.src_device = src;
        v.output_size = size_dist(rng);
        v.cost_hint = cost_dist(rng);
        g.vertices.push_back(v);
        return v.id;
    };
    auto edge = [&](VertexId p, VertexId c) { g.edges.emplace_back(p, c); };

    // One activation input per device; each block is `width` chained kernels,
    // then the block output rotates to the next device for the next block.
    // Every block boundary is also read back by a per-device tail kernel, so
    // boundary tensors stay live across the whole run.
    std::vector<VertexId> head(devices);
    std::vector<std::vector<VertexId>> boundaries(devices);
    for (int d = 0; d < devices; ++d) head[d] = add(VertexKind::Input, d);

    for (int layer = 0; layer < layers; ++layer) {
        std::vector<VertexId> out(devices);
        for (int d = 0; d < devices; ++d) {
            VertexId cur = head[d];
            for (int k = 0; k < width; ++k) {
                VertexId ker = add(VertexKind::Kernel, d);
                edge(cur, ker);
                // Skip connection back to the block head for width > 1.
                if (k == width - 1 && width > 1) edge(head[d], ker);
                cur = ker;
            }
            out[d] = cur;
            boundaries[d].push_back(cur);
        }
        if (devices > 1) {
            for (int d = 0; d < devices; ++d) {
                int dst = (d + 1) % devices;
                VertexId t = add(VertexKind::Transfer, dst, d);
                edge(out[d], t);
                head[dst] = t;
            }
        } else {
            head[0] = out[0];
        }
    }
    // Backward-style tail chain per device: block boundaries are re-read in
    // reverse, newest first, so early boundaries live across the whole run.
    for (int d = 0; d < devices; ++d) {
        VertexId prev = -1;
        for (int layer = layers - 1; layer >= 0; --layer) {
            VertexId tail = add(VertexKind::Kernel, d);
            edge(boundaries[d][layer], tail);
            if (prev != -1) edge(prev, tail);
            prev = tail;
        }
    }
    return g;
}

TaskGraph gen_random_dag(int n, double edge_density, int devices, std::uint64_t seed) {
    if (n < 1 || devices < 1) throw MemplanError("gen_random_dag: parameters must be positive");
    if (!(edge_density > 0.0 && edge_density <= 1.0))
        throw MemplanError("gen_random_dag: edge_density must be in (0, 1]");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dev_dist(0, devices - 1);
    std::uniform_int_distribution<std::int64_t> size_dist(1, 8);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    // Logical nodes first: node i may consume any earlier node. Cross-device
    // consumption is legalized afterwards through transfer vertices.
    struct Node {
        DeviceId device;
        std::int64_t size;
        std::vector<int> parents;
    };
    std::vector<Node> nodes(n);
    for (int i = 0; i < n; ++i) {
        nodes[i].device = dev_dist(rng);
        nodes[i].size = size_dist(rng);
        for (int p = 0; p < i; ++p)
            if (coin(rng) < edge_density) nodes[i].parents.push_back(p);
    }

    TaskGraph g;
    g.device_count = devices;
    VertexId next = 0;
    auto add = [&](VertexKind kind, DeviceId dev, std::int64_t size, DeviceId src = -1) {
        TaskVertex v;
        v.id = next++;
        v.kind = kind;
        v.device = dev;
        v.src_device = src;
        v.output_size = size;
        v.cost_hint = 1.0;
        g.vertices.push_back(v);
        return v.id;
    };

    std::vector<VertexId> node_id(n);
    for (int i = 0; i < n; ++i) {
        if (nodes[i].parents.empty()) {
            node_id[i] = add(VertexKind::Input, nodes[i].device, nodes[i].size);
            continue;
        }
        node_id[i] = add(VertexKind::Kernel, nodes[i].device, nodes[i].size);
        for (int p : nodes[i].parents) {
            if (nodes[p].device == nodes[i].device) {
                g.edges.emplace_back(node_id[p], node_id[i]);
            } else {
                VertexId t = add(VertexKind::Transfer, nodes[i].device, nodes[p].size,
                                 nodes[p].device);
                g.edges.emplace_back(node_id[p], t);
                g.edges.emplace_back(t, node_id[i]);
            }
        }
    }
    return g;
}

}  // namespace memplan
