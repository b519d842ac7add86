// Copyright 2026 The Memplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "memplan/compiler.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <tuple>

namespace memplan {

VictimPolicy victim_policy_from_string(const std::string& name) {
    if (name == "farthest-next-use") return VictimPolicy::FarthestNextUse;
    if (name == "last-allocated") return VictimPolicy::LastAllocated;
    if (name == "seeded-random") return VictimPolicy::SeededRandom;
    throw MemplanError("unknown victim policy: " + name);
}

const char* to_string(VictimPolicy policy) {
    switch (policy) {
        case VictimPolicy::FarthestNextUse: return "farthest-next-use";
        case VictimPolicy::LastAllocated: return "last-allocated";
        case VictimPolicy::SeededRandom: return "seeded-random";
    }
    return "?";
}

AllocHorizonMode alloc_horizon_from_string(const std::string& name) {
    if (name == "greedy") return AllocHorizonMode::Greedy;
    if (name == "lazy") return AllocHorizonMode::Lazy;
    throw MemplanError("unknown alloc horizon mode: " + name);
}

const char* to_string(AllocHorizonMode mode) {
    return mode == AllocHorizonMode::Greedy ? "greedy" : "lazy";
}

namespace {

// Total-order key for a memgraph vertex: offloads and reloads anchor just
// before the vertex they were produced for, offloads first.
struct OrderKey {
    int base = 0;
    int phase = 2;  // 0 offload, 1 reload, 2 original
    std::int64_t seq = 0;

    bool operator<(const OrderKey& other) const {
        return std::tie(base, phase, seq) < std::tie(other.base, other.phase, other.seq);
    }
};

struct Builder {
    const TaskGraph& g;
    const VertexOrder& order;
    MemoryMode mode;
    BuildOptions opts;

    int n = 0;
    std::map<VertexId, int> pos_of;              // taskgraph id -> position in V
    std::vector<VertexId> id_at;                 // position -> taskgraph id
    std::vector<std::vector<int>> consumers_at;  // per position, consumer positions (sorted)
    std::vector<std::vector<int>> deps_at;       // per position, producer positions (sorted)
    std::vector<int> last_use_at;                // per position, max consumer position or -1

    std::vector<VertexId> current_source;  // per position, mem vertex embodying the tensor
    std::vector<int> generation;           // per position, eviction generation
    std::vector<bool> executed;            // per position
    std::set<VertexId> evicted;            // reload ids awaiting a region

    struct Ghost {
        std::int64_t offset = 0;
        std::int64_t size = 0;
        std::vector<VertexId> sources;  // vertices that must precede any new owner
    };
    struct DeviceState {
        std::int64_t capacity = 0;
        std::vector<std::pair<std::int64_t, std::int64_t>> free_list;  // (offset, size)
        std::vector<Ghost> ghosts;
        std::vector<VertexId> residents;  // mem ids currently owning a region
        std::int64_t live = 0;
        std::int64_t peak = 0;
    };
    std::vector<DeviceState> devices;

    MemGraph mg;
    MemoryMap map;
    BuildStats stats;

    std::map<VertexId, OrderKey> keys;
    std::map<VertexId, std::vector<VertexId>> readers;  // mem id -> readers so far
    std::map<VertexId, int> root_of;                    // mem id -> root position
    std::map<VertexId, std::int64_t> claim_seq;
    std::set<std::pair<VertexId, VertexId>> memory_edges_added;
    std::int64_t next_claim = 0;
    std::int64_t next_key_seq = 0;
    VertexId next_mem_id = 0;
    std::int64_t host_live = 0;
    std::int64_t eviction_counter = 0;

    int exec_hzn = 0;
    int alloc_hzn = 0;

    Builder(const TaskGraph& graph, const VertexOrder& vorder,
            const std::vector<std::int64_t>& capacities, MemoryMode memory_mode,
            const BuildOptions& options)
        : g(graph), order(vorder), mode(memory_mode), opts(options) {
        n = static_cast<int>(order.size());
        if (!is_linear_extension(g, order))
            throw MemplanError("order is not a linear extension of the graph");
        if (static_cast<std::int32_t>(capacities.size()) != g.device_count)
            throw MemplanError("capacities must list one entry per device");

        id_at = order;
        for (int i = 0; i < n; ++i) pos_of[order[i]] = i;

        consumers_at.resize(n);
        deps_at.resize(n);
        last_use_at.assign(n, -1);
        for (const auto& [p, c] : g.edges) {
            int pp = pos_of.at(p), cp = pos_of.at(c);
            consumers_at[pp].push_back(cp);
            deps_at[cp].push_back(pp);
            last_use_at[pp] = std::max(last_use_at[pp], cp);
        }
        for (auto& v : consumers_at) std::sort(v.begin(), v.end());
        for (auto& v : deps_at) std::sort(v.begin(), v.end());

        current_source.assign(n, 0);
        generation.assign(n, 0);
        executed.assign(n, false);

        devices.resize(g.device_count);
        for (int d = 0; d < g.device_count; ++d) {
            devices[d].capacity = capacities[d];
            devices[d].free_list = {{0, capacities[d]}};
        }

        map.mode = mode;
        map.capacities = capacities;
        mg.device_count = g.device_count;

        for (const auto& v : g.vertices) next_mem_id = std::max(next_mem_id, v.id + 1);

        for (const auto& v : g.vertices) {
            if (unit_size(v) > capacities[v.device])
                throw SingleTensorTooLargeError(
                    "tensor of vertex " + std::to_string(v.id) + " (" +
                        std::to_string(unit_size(v)) + " units) exceeds device " +
                        std::to_string(v.device) + " capacity " +
                        std::to_string(capacities[v.device]),
                    v.id);
        }
    }

    std::int64_t unit_size(const TaskVertex& v) const {
        return mode == MemoryMode::Slot ? 1 : v.output_size;
    }
    std::int64_t unit_size_at(int pos) const { return unit_size(g.at(id_at[pos])); }

    bool is_output(int pos) const { return consumers_at[pos].empty(); }

    int next_use(int pos) const {
        for (int c : consumers_at[pos])
            if (!executed[c]) return c;
        return -1;
    }

    // --- memgraph assembly ---------------------------------------------------

    void add_vertex(MemVertex v, OrderKey key) {
        keys[v.id] = key;
        mg.vertices.push_back(std::move(v));
    }

    void assert_forward(VertexId from, VertexId to) {
        auto fi = keys.find(from);
        auto ti = keys.find(to);
        // The reload side of an offload->reload pair is keyed later; the
        // final pass re-checks every edge.
        if (fi == keys.end() || ti == keys.end()) return;
        if (!(fi->second < ti->second))
            throw InternalError("edge " + std::to_string(from) + "->" + std::to_string(to) +
                                " does not point forward in the total order");
    }

    void add_data_edge(VertexId from, VertexId to) {
        assert_forward(from, to);
        mg.edges.push_back({from, to, EdgeKind::Data, false});
    }

    void add_memory_edge(VertexId from, VertexId to) {
        if (from == to) return;
        if (!memory_edges_added.insert({from, to}).second) return;
        assert_forward(from, to);
        mg.edges.push_back({from, to, EdgeKind::Memory, false});
    }

    // --- allocator -----------------------------------------------------------

    // Lowest-offset free interval that fits; claims its prefix. Returns false
    // when no interval fits.
    bool try_claim(DeviceId dev, std::int64_t size, VertexId claimer) {
        auto& ds = devices[dev];
        for (size_t i = 0; i < ds.free_list.size(); ++i) {
            auto [off, len] = ds.free_list[i];
            if (len < size) continue;
            if (len == size) ds.free_list.erase(ds.free_list.begin() + i);
            else ds.free_list[i] = {off + size, len - size};
            commit_claim(dev, off, size, claimer);
            return true;
        }
        return false;
    }

    void commit_claim(DeviceId dev, std::int64_t off, std::int64_t size, VertexId claimer) {
        auto& ds = devices[dev];
        // Order the new owner after every recorded reader of bytes it reuses.
        std::vector<Ghost> kept;
        for (auto& ghost : ds.ghosts) {
            std::int64_t lo = std::max(ghost.offset, off);
            std::int64_t hi = std::min(ghost.offset + ghost.size, off + size);
            if (lo >= hi) {
                kept.push_back(std::move(ghost));
                continue;
            }
            for (VertexId s : ghost.sources) add_memory_edge(s, claimer);
            if (ghost.offset < lo) kept.push_back({ghost.offset, lo - ghost.offset, ghost.sources});
            if (ghost.offset + ghost.size > hi)
                kept.push_back({hi, ghost.offset + ghost.size - hi, ghost.sources});
        }
        ds.ghosts = std::move(kept);

        map.placements[claimer] = Placement{dev, off, size};
        map.history.push_back({claimer, dev, off, size});
        ds.residents.push_back(claimer);
        ds.live += size;
        ds.peak = std::max(ds.peak, ds.live);
        claim_seq[claimer] = next_claim++;
    }

    void release_region(VertexId owner, std::vector<VertexId> ghost_sources) {
        const Placement& p = map.placements.at(owner);
        auto& ds = devices[p.device];
        auto it = std::find(ds.residents.begin(), ds.residents.end(), owner);
        if (it == ds.residents.end())
            throw InternalError("freeing region not owned by vertex " + std::to_string(owner));
        ds.residents.erase(it);
        ds.live -= p.size;
        ds.ghosts.push_back({p.offset, p.size, std::move(ghost_sources)});
        insert_free(ds, p.offset, p.size);
    }

    void insert_free(DeviceState& ds, std::int64_t off, std::int64_t size) {
        auto& fl = ds.free_list;
        auto it = std::lower_bound(fl.begin(), fl.end(), std::make_pair(off, std::int64_t{0}));
        it = fl.insert(it, {off, size});
        // Coalesce with neighbors.
        if (it != fl.begin()) {
            auto prev = std::prev(it);
            if (prev->first + prev->second == it->first) {
                prev->second += it->second;
                it = fl.erase(it);
                it = std::prev(it);
            }
        }
        auto next = std::next(it);
        if (next != fl.end() && it->first + it->second == next->first) {
            it->second += next->second;
            fl.erase(next);
        }
    }

    // --- victim selection ----------------------------------------------------

    std::vector<VertexId> victim_candidates(DeviceId dev, const std::set<VertexId>& protect) {
        std::vector<VertexId> out;
        for (VertexId r : devices[dev].residents) {
            if (protect.count(r)) continue;
            auto ri = root_of.find(r);
            if (ri == root_of.end()) continue;
            int root = ri->second;
            if (!executed[root]) continue;     // pending pre-allocation, holds no data yet
            if (is_output(root)) continue;     // outputs are never evicted
            if (next_use(root) < 0) continue;  // nothing will read it again
            out.push_back(r);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    VertexId pick_victim(const std::vector<VertexId>& candidates) {
        switch (opts.victim_policy) {
            case VictimPolicy::FarthestNextUse: {
                VertexId best = candidates.front();
                int best_use = next_use(root_of.at(best));
                for (VertexId c : candidates) {
                    int use = next_use(root_of.at(c));
                    if (use > best_use) {
                        best = c;
                        best_use = use;
                    }
                }
                return best;
            }
            case VictimPolicy::LastAllocated: {
                VertexId best = candidates.front();
                for (VertexId c : candidates)
                    if (claim_seq.at(c) > claim_seq.at(best)) best = c;
                return best;
            }
            case VictimPolicy::SeededRandom: {
                std::mt19937_64 rng(opts.victim_seed * 0x9e3779b97f4a7c15ULL +
                                    static_cast<std::uint64_t>(eviction_counter));
                std::uniform_int_distribution<size_t> dist(0, candidates.size() - 1);
                return candidates[dist(rng)];
            }
        }
        return candidates.front();
    }

    void evict(VertexId victim, int anchor_pos) {
        int root = root_of.at(victim);
        const TaskVertex& root_v = g.at(id_at[root]);
        std::int64_t size = unit_size(root_v);
        DeviceId dev = map.placements.at(victim).device;

        VertexId offload_id = next_mem_id++;
        VertexId reload_id = next_mem_id++;
        int gen = generation[root]++;

        MemVertex off;
        off.id = offload_id;
        off.origin = {MemOriginKind::Offload, root_v.id, gen};
        off.op = MemOpKind::Offload;
        off.device = dev;
        off.size = size;
        off.cost_hint = 0.0;
        add_vertex(off, OrderKey{anchor_pos, 0, next_key_seq++});

        MemVertex rel;
        rel.id = reload_id;
        rel.origin = {MemOriginKind::Reload, root_v.id, gen};
        rel.op = MemOpKind::Reload;
        rel.device = dev;
        rel.size = size;
        rel.cost_hint = 0.0;
        // Keyed when force-reloaded; record the vertex now.
        mg.vertices.push_back(rel);

        add_data_edge(victim, offload_id);
        mg.edges.push_back({offload_id, reload_id, EdgeKind::Data, false});

        // Readers of the dead bytes, plus the offload that copies them out.
        std::vector<VertexId> sources = readers[victim];
        sources.push_back(offload_id);
        release_region(victim, std::move(sources));

        current_source[root] = reload_id;
        root_of[reload_id] = root;
        evicted.insert(reload_id);

        host_live += root_v.output_size;
        if (opts.host_capacity && host_live > *opts.host_capacity)
            throw OffloadOverflowError("host capacity exceeded while evicting vertex " +
                                       std::to_string(root_v.id));

        stats.offload_count++;
        stats.reload_count++;
        eviction_counter++;
    }

    // Claim with eviction; cannot fail while something is evictable.
    void claim_or_evict(DeviceId dev, std::int64_t size, VertexId claimer, int anchor_pos,
                        const std::set<VertexId>& protect) {
        while (!try_claim(dev, size, claimer)) {
            auto candidates = victim_candidates(dev, protect);
            if (candidates.empty())
                throw InternalError(
                    "allocation wedged on device " + std::to_string(dev) +
                    ": nothing evictable for a request of " + std::to_string(size) + " units");
            evict(pick_victim(candidates), anchor_pos);
        }
    }

    // --- build loop ---------------------------------------------------------

    std::set<VertexId> protected_for(int pos) {
        std::set<VertexId> protect;
        for (int d : deps_at[pos]) protect.insert(current_source[d]);
        return protect;
    }

    bool try_alloc_next() {
        int pos = alloc_hzn;
        const TaskVertex& v = g.at(id_at[pos]);
        VertexId mem_id = v.id;
        if (!try_claim(v.device, unit_size(v), mem_id)) return false;
        register_original(v, pos);
        return true;
    }

    void alloc_next_with_eviction() {
        int pos = alloc_hzn;
        const TaskVertex& v = g.at(id_at[pos]);
        claim_or_evict(v.device, unit_size(v), v.id, pos, protected_for(pos));
        register_original(v, pos);
    }

    void register_original(const TaskVertex& v, int pos) {
        MemVertex mv;
        mv.id = v.id;
        mv.origin = {MemOriginKind::Original, v.id, 0};
        switch (v.kind) {
            case VertexKind::Input: mv.op = MemOpKind::Input; break;
            case VertexKind::Kernel: mv.op = MemOpKind::Kernel; break;
            case VertexKind::Transfer: mv.op = MemOpKind::Transfer; break;
        }
        mv.device = v.device;
        mv.src_device = v.src_device;
        mv.size = unit_size(v);
        mv.cost_hint = v.cost_hint;
        add_vertex(mv, OrderKey{pos, 2, 0});
        current_source[pos] = v.id;
        root_of[v.id] = pos;
    }

    void force_reload(int dep_pos, int consumer_pos) {
        VertexId reload_id = current_source[dep_pos];
        evicted.erase(reload_id);
        keys[reload_id] = OrderKey{consumer_pos, 1, next_key_seq++};

        const TaskVertex& root_v = g.at(id_at[dep_pos]);
        std::int64_t size = unit_size(root_v);
        std::set<VertexId> protect = protected_for(consumer_pos);
        protect.insert(id_at[consumer_pos]);  // the consumer's own reserved output
        claim_or_evict(root_v.device, size, reload_id, consumer_pos, protect);
        host_live -= root_v.output_size;
    }

    void execute_next() {
        int pos = exec_hzn;
        VertexId mem_id = id_at[pos];

        // Reload evicted inputs first: their regions must come from space that
        // is already free, never from bytes this step is still reading.
        for (int d : deps_at[pos])
            if (evicted.count(current_source[d])) force_reload(d, pos);

        for (int d : deps_at[pos]) {
            if (!executed[d])
                throw InternalError("vertex " + std::to_string(mem_id) +
                                    " executed before its dependency " +
                                    std::to_string(id_at[d]));
            if (!map.placements.count(current_source[d]))
                throw InternalError("dependency " + std::to_string(id_at[d]) +
                                    " has no resident region");
        }

        for (int d : deps_at[pos]) {
            readers[current_source[d]].push_back(mem_id);
            add_data_edge(current_source[d], mem_id);
        }

        // Drop tensors this step read for the last time.
        for (int d : deps_at[pos]) {
            if (last_use_at[d] == pos && !is_output(d))
                release_region(current_source[d], readers[current_source[d]]);
        }

        executed[pos] = true;
    }

    void check_invariants() const {
        for (int dev = 0; dev < g.device_count; ++dev) {
            const auto& ds = devices[dev];
            std::int64_t free_total = 0;
            for (auto [off, len] : ds.free_list) free_total += len;
            if (free_total + ds.live != ds.capacity)
                throw InternalError("accounting mismatch on device " + std::to_string(dev));
        }
        if (exec_hzn > alloc_hzn) throw InternalError("execution horizon passed allocation horizon");
    }

    BuildResult run() {
        bool greedy = opts.alloc_horizon == AllocHorizonMode::Greedy;
        while (exec_hzn < n) {
            bool allocated = false;
            if (alloc_hzn < n && (greedy || alloc_hzn == exec_hzn)) allocated = try_alloc_next();
            if (allocated) {
                alloc_hzn++;
            } else if (alloc_hzn < n && alloc_hzn == exec_hzn) {
                alloc_next_with_eviction();
                alloc_hzn++;
            } else {
                execute_next();
                exec_hzn++;
            }
            if (opts.check_invariants) check_invariants();
        }
        if (!evicted.empty())
            throw InternalError("build finished with pending reloads");

        // Total order, final forward check, superfluous flagging.
        std::vector<std::pair<OrderKey, VertexId>> keyed;
        keyed.reserve(mg.vertices.size());
        for (const auto& v : mg.vertices) {
            auto it = keys.find(v.id);
            if (it == keys.end())
                throw InternalError("vertex " + std::to_string(v.id) + " has no order key");
            keyed.emplace_back(it->second, v.id);
        }
        std::sort(keyed.begin(), keyed.end());
        for (const auto& [key, id] : keyed) mg.total_order.push_back(id);
        for (const auto& e : mg.edges) {
            if (!(keys.at(e.from) < keys.at(e.to)))
                throw InternalError("edge " + std::to_string(e.from) + "->" +
                                    std::to_string(e.to) + " points backward");
        }

        MemGraph flagged = prune_superfluous_edges(mg, !opts.keep_superfluous);
        stats.memory_edge_count = 0;
        stats.required_memory_edge_count = 0;
        for (const auto& e : flagged.edges) {
            if (e.kind != EdgeKind::Memory) continue;
            stats.memory_edge_count++;
            if (!e.superfluous) stats.required_memory_edge_count++;
        }
        for (const auto& ds : devices) stats.peak_usage.push_back(ds.peak);

        return BuildResult{std::move(flagged), std::move(map), std::move(stats)};
    }
};

}  // namespace

BuildResult build_memgraph(const TaskGraph& g, const VertexOrder& order,
                           const std::vector<std::int64_t>& capacities, MemoryMode mode,
                           const BuildOptions& options) {
    Builder builder(g, order, capacities, mode, options);
    return builder.run();
}

MemGraph prune_superfluous_edges(const MemGraph& m, bool drop) {
    MemGraph out = m;
    // Adjacency over edge indices so single edges can be skipped.
    std::map<VertexId, std::vector<size_t>> adj;
    std::vector<bool> removed(out.edges.size(), false);
    for (size_t i = 0; i < out.edges.size(); ++i) adj[out.edges[i].from].push_back(i);

    auto reaches_without = [&](VertexId from, VertexId to, size_t skip) {
        std::set<VertexId> seen{from};
        std::queue<VertexId> q;
        q.push(from);
        while (!q.empty()) {
            VertexId u = q.front();
            q.pop();
            for (size_t ei : adj[u]) {
                if (ei == skip || removed[ei]) continue;
                VertexId w = out.edges[ei].to;
                if (w == to) return true;
                if (seen.insert(w).second) q.push(w);
            }
        }
        return false;
    };

    for (size_t i = 0; i < out.edges.size(); ++i) {
        auto& e = out.edges[i];
        if (e.kind != EdgeKind::Memory) continue;
        if (reaches_without(e.from, e.to, i)) {
            e.superfluous = true;
            if (drop) removed[i] = true;
        }
    }
    if (drop) {
        std::vector<MemEdge> kept;
        for (size_t i = 0; i < out.edges.size(); ++i)
            if (!removed[i]) kept.push_back(out.edges[i]);
        out.edges = std::move(kept);
    }
    return out;
}

}  // namespace memplan
