// Copyright 2026 The Memplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "memplan/verifier.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace memplan {

using json = nlohmann::ordered_json;

namespace {

std::map<VertexId, std::vector<VertexId>> adjacency(const MemGraph& m) {
    std::map<VertexId, std::vector<VertexId>> adj;
    for (const auto& v : m.vertices) adj[v.id];
    for (const auto& e : m.edges) adj[e.from].push_back(e.to);
    return adj;
}

bool reachable(const std::map<VertexId, std::vector<VertexId>>& adj, VertexId from, VertexId to) {
    if (from == to) return true;
    std::set<VertexId> seen{from};
    std::queue<VertexId> q;
    q.push(from);
    while (!q.empty()) {
        VertexId u = q.front();
        q.pop();
        auto it = adj.find(u);
        if (it == adj.end()) continue;
        for (VertexId w : it->second) {
            if (w == to) return true;
            if (seen.insert(w).second) q.push(w);
        }
    }
    return false;
}

std::string join_ids(const std::vector<VertexId>& ids, const char* sep = " -> ") {
    std::ostringstream out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out << sep;
        out << ids[i];
    }
    return out.str();
}

}  // namespace

CheckResult check_acyclic(const MemGraph& m) {
    auto adj = adjacency(m);
    std::map<VertexId, int> color;
    std::map<VertexId, VertexId> parent;
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
    for (const auto& v : m.vertices) {
        if (color[v.id] == 0 && dfs(v.id))
            return CheckResult::fail("cycle: " + join_ids(cycle));
    }
    return CheckResult::pass();
}

CheckResult check_data_preservation(const TaskGraph& g, const MemGraph& m) {
    // Data adjacency restricted to each producer's offload/reload chain.
    std::map<VertexId, std::vector<VertexId>> data_adj;
    for (const auto& e : m.edges)
        if (e.kind == EdgeKind::Data) data_adj[e.from].push_back(e.to);

    for (const auto& v : g.vertices) {
        if (!m.find(v.id) ||
            m.at(v.id).origin.kind != MemOriginKind::Original)
            return CheckResult::fail("taskgraph vertex " + std::to_string(v.id) +
                                     " missing from memgraph");
    }

    for (const auto& [p, c] : g.edges) {
        // Walk from p through vertices belonging to p's chain only.
        std::set<VertexId> chain;
        chain.insert(p);
        for (const auto& mv : m.vertices)
            if (mv.origin.kind != MemOriginKind::Original && mv.origin.ref == p)
                chain.insert(mv.id);

        bool found = false;
        std::set<VertexId> seen{p};
        std::queue<VertexId> q;
        q.push(p);
        while (!q.empty() && !found) {
            VertexId u = q.front();
            q.pop();
            for (VertexId w : data_adj[u]) {
                if (w == c) {
                    found = true;
                    break;
                }
                if (chain.count(w) && seen.insert(w).second) q.push(w);
            }
        }
        if (!found)
            return CheckResult::fail("data dependency " + std::to_string(p) + "->" +
                                     std::to_string(c) +
                                     " is not preserved (directly or via an offload-reload chain)");
    }
    return CheckResult::pass();
}

CheckResult check_race_freedom(const MemGraph& m, const MemoryMap& map) {
    auto adj = adjacency(m);

    // Consumers that actually read a vertex's bytes: its data-edge successors.
    std::map<VertexId, std::vector<VertexId>> readers;
    for (const auto& e : m.edges)
        if (e.kind == EdgeKind::Data) readers[e.from].push_back(e.to);

    std::vector<VertexId> owners;
    for (const auto& [id, p] : map.placements) {
        if (!m.find(id))
            return CheckResult::fail("placement references unknown vertex " + std::to_string(id));
        owners.push_back(id);
    }

    // u safely overwrites w when every reader of w is ordered (by some path)
    // before u.
    auto safely_overwrites = [&](VertexId u, VertexId w,
                                 VertexId* blocking_reader) {
        for (VertexId c : readers[w]) {
            if (!reachable(adj, c, u)) {
                *blocking_reader = c;
                return false;
            }
        }
        return true;
    };

    for (size_t i = 0; i < owners.size(); ++i) {
        for (size_t j = i + 1; j < owners.size(); ++j) {
            VertexId a = owners[i], b = owners[j];
            if (!map.overlaps(map.placements.at(a), map.placements.at(b))) continue;
            bool a_read = !readers[a].empty();
            bool b_read = !readers[b].empty();
            if (!a_read && !b_read) continue;  // neither output is ever read

            VertexId blocked_ab = -1, blocked_ba = -1;
            bool safe;
            if (!b_read) {
                // b is never read: it must either be written before a (and be
                // harmlessly clobbered) or wait for all of a's readers.
                safe = reachable(adj, b, a) || safely_overwrites(b, a, &blocked_ba);
            } else if (!a_read) {
                safe = reachable(adj, a, b) || safely_overwrites(a, b, &blocked_ab);
            } else {
                safe = safely_overwrites(b, a, &blocked_ba) ||
                       safely_overwrites(a, b, &blocked_ab);
            }
            if (!safe) {
                std::ostringstream out;
                out << "racing pair (" << a << ", " << b << "):";
                if (blocked_ba != -1)
                    out << " consumer " << blocked_ba << " of " << a
                        << " is not ordered before " << b << ";";
                if (blocked_ab != -1)
                    out << " consumer " << blocked_ab << " of " << b
                        << " is not ordered before " << a << ";";
                out << " neither vertex safely overwrites the other";
                return CheckResult::fail(out.str());
            }
        }
    }
    return CheckResult::pass();
}

CheckResult check_capacity(const MemGraph& m, const MemoryMap& map,
                           const std::vector<VertexId>& order) {
    std::map<VertexId, size_t> pos;
    for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    for (const auto& v : m.vertices)
        if (!pos.count(v.id))
            return CheckResult::fail("order does not cover vertex " + std::to_string(v.id));

    // Ownership structure: offloads hold no device region, everything else
    // holds exactly one.
    for (const auto& v : m.vertices) {
        bool owns = map.placements.count(v.id) > 0;
        if (v.origin.kind == MemOriginKind::Offload && owns)
            return CheckResult::fail("offload " + std::to_string(v.id) +
                                     " owns a device region");
        if (v.origin.kind != MemOriginKind::Offload && !owns)
            return CheckResult::fail("vertex " + std::to_string(v.id) +
                                     " has no assigned region");
    }

    // Layout bounds.
    for (const auto& [id, p] : map.placements) {
        if (p.device < 0 || p.device >= static_cast<DeviceId>(map.capacities.size()))
            return CheckResult::fail("placement of " + std::to_string(id) +
                                     " names unknown device " + std::to_string(p.device));
        if (p.offset < 0 || p.offset + p.size > map.capacities[p.device])
            return CheckResult::fail("placement of " + std::to_string(id) +
                                     " exceeds device capacity");
    }

    // Lifetime of a region: from its owner's instant to its last reader's
    // instant (forever for unread tensors).
    std::map<VertexId, std::vector<VertexId>> readers;
    for (const auto& e : m.edges)
        if (e.kind == EdgeKind::Data) readers[e.from].push_back(e.to);

    struct Interval {
        VertexId owner;
        size_t start, end;  // end = SIZE_MAX for never-freed
    };
    std::vector<Interval> intervals;
    for (const auto& [id, p] : map.placements) {
        size_t start = pos.at(id);
        size_t end = 0;
        bool has_reader = false;
        for (VertexId r : readers[id]) {
            has_reader = true;
            end = std::max(end, pos.at(r));
        }
        intervals.push_back({id, start, has_reader ? end : SIZE_MAX});
    }

    // Overlapping regions must have disjoint lifetimes.
    for (size_t i = 0; i < intervals.size(); ++i) {
        for (size_t j = i + 1; j < intervals.size(); ++j) {
            const auto& a = intervals[i];
            const auto& b = intervals[j];
            if (!map.overlaps(map.placements.at(a.owner), map.placements.at(b.owner))) continue;
            bool disjoint = a.end != SIZE_MAX && a.end < b.start;
            disjoint = disjoint || (b.end != SIZE_MAX && b.end < a.start);
            if (!disjoint) {
                std::ostringstream out;
                out << "regions of " << a.owner << " and " << b.owner
                    << " overlap while both live (instant " << std::max(a.start, b.start)
                    << ", device " << map.placements.at(a.owner).device << ")";
                return CheckResult::fail(out.str());
            }
        }
    }

    // Per-instant live usage against capacity.
    size_t n = order.size();
    std::vector<std::vector<std::int64_t>> live(map.capacities.size(),
                                                std::vector<std::int64_t>(n + 1, 0));
    for (const auto& iv : intervals) {
        const auto& p = map.placements.at(iv.owner);
        size_t end = iv.end == SIZE_MAX ? n : std::min(iv.end, n - 1) + 1;
        for (size_t t = iv.start; t < end; ++t) live[p.device][t] += p.size;
    }
    for (size_t d = 0; d < live.size(); ++d) {
        for (size_t t = 0; t < live[d].size(); ++t) {
            if (live[d][t] > map.capacities[d]) {
                std::ostringstream out;
                out << "device " << d << " holds " << live[d][t] << " units at instant " << t
                    << " (capacity " << map.capacities[d] << ")";
                return CheckResult::fail(out.str());
            }
        }
    }
    return CheckResult::pass();
}

// --- schedule enumeration ------------------------------------------------------

namespace {

struct TokenMachine {
    const MemGraph& m;
    const MemoryMap& map;
    std::vector<std::pair<VertexId, VertexId>> reads;  // (producer, consumer) data edges
    std::map<VertexId, std::vector<VertexId>> overlapping;

    explicit TokenMachine(const MemGraph& graph, const MemoryMap& memory_map)
        : m(graph), map(memory_map) {
        for (const auto& e : m.edges)
            if (e.kind == EdgeKind::Data) reads.emplace_back(e.from, e.to);
        std::vector<VertexId> owners;
        for (const auto& [id, p] : map.placements) owners.push_back(id);
        for (size_t i = 0; i < owners.size(); ++i) {
            for (size_t j = 0; j < owners.size(); ++j) {
                if (i == j) continue;
                if (map.overlaps(map.placements.at(owners[i]), map.placements.at(owners[j])))
                    overlapping[owners[i]].push_back(owners[j]);
            }
        }
    }

    // Runs one schedule; returns a witness string on a divergent read.
    std::string run(const std::vector<VertexId>& schedule) const {
        std::map<VertexId, VertexId> last_writer;  // placement owner -> last writer
        std::map<VertexId, size_t> at;
        for (size_t i = 0; i < schedule.size(); ++i) at[schedule[i]] = i;

        std::map<VertexId, std::vector<std::pair<VertexId, size_t>>> reads_of;
        for (const auto& [p, c] : reads) reads_of[c].emplace_back(p, at.at(p));

        for (VertexId v : schedule) {
            // Reads happen at this vertex's instant, before its own write lands
            // anywhere visible to it.
            for (const auto& [producer, ppos] : reads_of[v]) {
                (void)ppos;
                if (!map.placements.count(producer)) continue;  // host-side source
                auto it = last_writer.find(producer);
                VertexId seen = it == last_writer.end() ? -1 : it->second;
                if (seen != producer) {
                    std::ostringstream out;
                    out << "vertex " << v << " reads region of " << producer << " but finds ";
                    if (seen == -1) out << "nothing written";
                    else out << "the output of " << seen;
                    out << " [schedule " << join_ids(schedule, ",") << "]";
                    return out.str();
                }
            }
            if (map.placements.count(v)) {
                last_writer[v] = v;
                auto ov = overlapping.find(v);
                if (ov != overlapping.end())
                    for (VertexId w : ov->second) last_writer[w] = v;
            }
        }
        return {};
    }
};

}  // namespace

ScheduleCheckResult enumerate_schedules_check(const MemGraph& m, const MemoryMap& map,
                                              std::int64_t limit, std::uint64_t seed) {
    ScheduleCheckResult result;
    if (limit <= 0) limit = 1;

    std::map<VertexId, std::vector<VertexId>> adj;
    std::map<VertexId, int> indeg;
    for (const auto& v : m.vertices) indeg[v.id] = 0;
    for (const auto& e : m.edges) {
        adj[e.from].push_back(e.to);
        indeg[e.to]++;
    }

    TokenMachine machine(m, map);

    // Exhaustive lazy enumeration, aborted when the count passes the limit.
    std::vector<VertexId> schedule;
    std::set<VertexId> ready;
    for (const auto& [id, d] : indeg)
        if (d == 0) ready.insert(id);
    auto deg = indeg;

    bool overflow = false;
    std::int64_t run_count = 0;
    std::string witness;
    std::string agreeing_schedule;  // first clean schedule, for the witness

    std::function<bool()> enumerate = [&]() -> bool {  // true = stop
        if (ready.empty()) {
            if (schedule.size() != m.vertices.size()) return false;  // dead end (cycle)
            if (run_count >= limit) {
                overflow = true;
                return true;
            }
            ++run_count;
            witness = machine.run(schedule);
            if (witness.empty() && agreeing_schedule.empty())
                agreeing_schedule = join_ids(schedule, ",");
            return !witness.empty();
        }
        std::vector<VertexId> choices(ready.begin(), ready.end());
        for (VertexId u : choices) {
            ready.erase(u);
            schedule.push_back(u);
            std::vector<VertexId> became;
            for (VertexId w : adj[u])
                if (--deg[w] == 0) {
                    ready.insert(w);
                    became.push_back(w);
                }
            bool stop = enumerate();
            for (VertexId w : became) ready.erase(w);
            for (VertexId w : adj[u]) deg[w]++;
            schedule.pop_back();
            ready.insert(u);
            if (stop) return true;
        }
        return false;
    };
    enumerate();

    if (!witness.empty()) {
        result.passed = false;
        result.witness = witness;
        if (!agreeing_schedule.empty())
            result.witness += " [diverges from schedule " + agreeing_schedule + "]";
        result.schedules_run = run_count + 1;
        return result;
    }

    if (!overflow) {
        result.schedules_run = run_count;
        return result;
    }

    // Too many extensions: sample `limit` random ones instead.
    result.sampled = true;
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 1);
    for (std::int64_t t = 0; t < limit; ++t) {
        std::vector<VertexId> sched;
        auto d2 = indeg;
        std::vector<VertexId> frontier;
        for (const auto& [id, d] : d2)
            if (d == 0) frontier.push_back(id);
        while (!frontier.empty()) {
            std::sort(frontier.begin(), frontier.end());
            std::uniform_int_distribution<size_t> dist(0, frontier.size() - 1);
            size_t k = dist(rng);
            VertexId u = frontier[k];
            frontier.erase(frontier.begin() + k);
            sched.push_back(u);
            for (VertexId w : adj[u])
                if (--d2[w] == 0) frontier.push_back(w);
        }
        if (sched.size() != m.vertices.size()) {
            result.passed = false;
            result.witness = "graph has a cycle; no complete schedule exists";
            return result;
        }
        std::string w = machine.run(sched);
        ++result.schedules_run;
        if (!w.empty()) {
            result.passed = false;
            result.witness = w;
            if (!agreeing_schedule.empty())
                result.witness += " [diverges from schedule " + agreeing_schedule + "]";
            return result;
        }
        if (agreeing_schedule.empty()) agreeing_schedule = join_ids(sched, ",");
    }
    return result;
}

bool VerificationReport::all_passed() const {
    bool ok = acyclic.passed && data_preservation.passed && race_freedom.passed &&
              capacity.passed;
    if (schedules) ok = ok && schedules->passed;
    return ok;
}

std::string VerificationReport::to_json() const {
    json j;
    auto put = [&](const char* name, const CheckResult& r) {
        j[name] = {{"passed", r.passed}};
        if (!r.passed) j[name]["witness"] = r.witness;
    };
    put("acyclic", acyclic);
    put("data_preservation", data_preservation);
    put("race_freedom", race_freedom);
    put("capacity", capacity);
    if (schedules) {
        j["schedules"] = {{"passed", schedules->passed},
                          {"sampled", schedules->sampled},
                          {"schedules_run", schedules->schedules_run}};
        if (!schedules->passed) j["schedules"]["witness"] = schedules->witness;
    }
    j["all_passed"] = all_passed();
    return j.dump(2) + "\n";
}

VerificationReport verify_all(const TaskGraph& g, const MemGraph& m, const MemoryMap& map,
                              std::int64_t schedule_limit) {
    VerificationReport report;
    report.acyclic = check_acyclic(m);
    report.data_preservation = check_data_preservation(g, m);
    report.race_freedom = check_race_freedom(m, map);
    std::vector<VertexId> order = m.total_order;
    if (order.empty() && report.acyclic.passed) {
        // Derive one topological order when the artifact carries none.
        std::map<VertexId, int> indeg;
        std::map<VertexId, std::vector<VertexId>> adj;
        for (const auto& v : m.vertices) indeg[v.id] = 0;
        for (const auto& e : m.edges) {
            adj[e.from].push_back(e.to);
            indeg[e.to]++;
        }
        std::set<VertexId> ready;
        for (const auto& [id, d] : indeg)
            if (d == 0) ready.insert(id);
        while (!ready.empty()) {
            VertexId u = *ready.begin();
            ready.erase(ready.begin());
            order.push_back(u);
            for (VertexId w : adj[u])
                if (--indeg[w] == 0) ready.insert(w);
        }
    }
    report.capacity = check_capacity(m, map, order);
    if (schedule_limit > 0)
        report.schedules = enumerate_schedules_check(m, map, schedule_limit);
    return report;
}

}  // namespace memplan
