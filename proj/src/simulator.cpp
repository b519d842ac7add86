// Copyright 2026 The Memplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "memplan/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace memplan {

using json = nlohmann::ordered_json;

TieBreak tie_break_from_string(const std::string& name) {
    if (name == "fifo") return TieBreak::Fifo;
    if (name == "seeded-random") return TieBreak::SeededRandom;
    if (name == "lowest-id") return TieBreak::LowestId;
    throw MemplanError("unknown tie break: " + name);
}

SchedulerKind scheduler_kind_from_string(const std::string& name) {
    if (name == "event-driven") return SchedulerKind::EventDriven;
    if (name == "fixed-order") return SchedulerKind::FixedOrder;
    throw MemplanError("unknown scheduler policy: " + name);
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double noise_multiplier(const NoiseSpec& noise, std::uint64_t draw_seed) {
    switch (noise.kind) {
        case NoiseKind::None:
            return 1.0;
        case NoiseKind::Uniform: {
            std::mt19937_64 rng(draw_seed);
            std::uniform_real_distribution<double> dist(1.0 - noise.param, 1.0 + noise.param);
            return std::max(dist(rng), 1e-9);
        }
        case NoiseKind::Lognormal: {
            std::mt19937_64 rng(draw_seed);
            std::normal_distribution<double> dist(0.0, noise.param);
            return std::exp(dist(rng));
        }
    }
    return 1.0;
}

}  // namespace

double sample_duration(const MemVertex& v, const DeviceProfile& profile,
                       std::uint64_t draw_seed) {
    double base = 0.0;
    switch (v.op) {
        case MemOpKind::Input:
            return 0.0;
        case MemOpKind::Kernel:
            base = v.cost_hint * profile.kernel_multiplier;
            break;
        case MemOpKind::Transfer:
            base = profile.link_latency + static_cast<double>(v.size) / profile.d2d_bandwidth;
            break;
        case MemOpKind::Offload:
        case MemOpKind::Reload:
            base = profile.link_latency +
                   static_cast<double>(v.size) / profile.host_link_bandwidth;
            break;
    }
    double value = base * noise_multiplier(profile.noise, draw_seed);
    return std::max(value, 1e-9);
}

MemGraph make_fixed_order(const MemGraph& m) { return make_fixed_order(m, m.total_order); }

MemGraph make_fixed_order(const MemGraph& m, const std::vector<VertexId>& order) {
    if (order.size() != m.vertices.size())
        throw MemplanError("fixed-order requires an order covering every memgraph vertex");
    MemGraph out = m;
    std::map<DeviceId, std::vector<VertexId>> per_device;
    for (VertexId id : order) {
        const MemVertex& v = m.at(id);
        if (v.op == MemOpKind::Input) continue;  // inputs are no-ops, not operations
        per_device[v.device].push_back(id);
    }
    for (const auto& [dev, chain] : per_device) {
        for (size_t i = 0; i + 1 < chain.size(); ++i) {
            if (!out.has_edge(chain[i], chain[i + 1], EdgeKind::Memory) &&
                !out.has_edge(chain[i], chain[i + 1], EdgeKind::Data))
                out.edges.push_back({chain[i], chain[i + 1], EdgeKind::Memory, false});
        }
    }
    return out;
}

namespace {

struct Dispatcher {
    const MemGraph& m;
    const MemoryMap& map;
    const DeviceProfile& profile;
    SchedulerPolicy policy;
    std::uint64_t seed;

    struct DeviceRes {
        std::set<std::int32_t> free_streams;
        bool compute_free = true;
        bool host_out_free = true;
        bool host_in_free = true;
    };
    std::vector<DeviceRes> devices;

    struct Completion {
        double time;
        std::int64_t seq;  // dispatch order, makes event ordering total
        VertexId vertex;
        bool operator>(const Completion& other) const {
            return std::tie(time, seq) > std::tie(other.time, other.seq);
        }
    };
    std::priority_queue<Completion, std::vector<Completion>, std::greater<>> events;

    std::map<VertexId, int> pending_preds;
    std::map<VertexId, std::vector<VertexId>> successors;
    struct ReadyEntry {
        double ready_time;
        std::int64_t arrival;
        VertexId vertex;
    };
    std::vector<ReadyEntry> ready;
    std::int64_t arrivals = 0;
    std::int64_t dispatch_seq = 0;
    std::mt19937_64 tie_rng;

    ExecutionTrace trace;
    double now = 0.0;
    std::int64_t done_count = 0;

    Dispatcher(const MemGraph& graph, const MemoryMap& memory_map, const DeviceProfile& prof,
               SchedulerPolicy pol, std::uint64_t s)
        : m(graph), map(memory_map), profile(prof), policy(pol), seed(s), tie_rng(mix64(s)) {
        devices.resize(m.device_count);
        for (auto& d : devices)
            for (std::int32_t i = 0; i < profile.streams_per_device; ++i) d.free_streams.insert(i);

        for (const auto& v : m.vertices) pending_preds[v.id] = 0;
        for (const auto& e : m.edges) {
            pending_preds[e.to]++;
            successors[e.from].push_back(e.to);
        }
        for (const auto& v : m.vertices)
            if (pending_preds[v.id] == 0) push_ready(v.id, 0.0);
    }

    void push_ready(VertexId id, double t) { ready.push_back({t, arrivals++, id}); }

    bool resources_free(const MemVertex& v) const {
        const DeviceRes& d = devices[v.device];
        switch (v.op) {
            case MemOpKind::Input: return true;
            case MemOpKind::Kernel: return !d.free_streams.empty() && d.compute_free;
            case MemOpKind::Transfer: return !d.free_streams.empty();
            case MemOpKind::Offload: return !d.free_streams.empty() && d.host_out_free;
            case MemOpKind::Reload: return !d.free_streams.empty() && d.host_in_free;
        }
        return false;
    }

    std::int32_t acquire(const MemVertex& v) {
        DeviceRes& d = devices[v.device];
        if (v.op == MemOpKind::Input) return -1;
        std::int32_t stream = *d.free_streams.begin();
        d.free_streams.erase(d.free_streams.begin());
        if (v.op == MemOpKind::Kernel) d.compute_free = false;
        if (v.op == MemOpKind::Offload) d.host_out_free = false;
        if (v.op == MemOpKind::Reload) d.host_in_free = false;
        return stream;
    }

    void release(const MemVertex& v, std::int32_t stream) {
        if (v.op == MemOpKind::Input) return;
        DeviceRes& d = devices[v.device];
        d.free_streams.insert(stream);
        if (v.op == MemOpKind::Kernel) d.compute_free = true;
        if (v.op == MemOpKind::Offload) d.host_out_free = true;
        if (v.op == MemOpKind::Reload) d.host_in_free = true;
    }

    // Orders the ready list for the next dispatch sweep.
    void sort_ready() {
        switch (policy.tie_break) {
            case TieBreak::Fifo:
                std::sort(ready.begin(), ready.end(), [](const ReadyEntry& a, const ReadyEntry& b) {
                    return std::tie(a.ready_time, a.arrival) < std::tie(b.ready_time, b.arrival);
                });
                break;
            case TieBreak::LowestId:
                std::sort(ready.begin(), ready.end(), [](const ReadyEntry& a, const ReadyEntry& b) {
                    return a.vertex < b.vertex;
                });
                break;
            case TieBreak::SeededRandom:
                std::sort(ready.begin(), ready.end(), [](const ReadyEntry& a, const ReadyEntry& b) {
                    return a.vertex < b.vertex;
                });
                std::shuffle(ready.begin(), ready.end(), tie_rng);
                break;
        }
    }

    ExecutionTrace run() {
        std::map<VertexId, std::int32_t> held_stream;

        while (done_count < static_cast<std::int64_t>(m.vertices.size())) {
            // Dispatch greedily until nothing fits.
            bool dispatched = true;
            while (dispatched) {
                dispatched = false;
                sort_ready();
                for (size_t i = 0; i < ready.size(); ++i) {
                    const MemVertex& v = m.at(ready[i].vertex);
                    if (!resources_free(v)) continue;
                    std::int32_t stream = acquire(v);
                    double duration =
                        v.op == MemOpKind::Input
                            ? 0.0
                            : sample_duration(v, profile, mix64(seed ^ static_cast<std::uint64_t>(
                                                                          v.id * 2654435761ULL)));
                    trace.rows.push_back({v.id, now, now + duration, v.device, stream});
                    events.push({now + duration, dispatch_seq++, v.id});
                    held_stream[v.id] = stream;
                    ready.erase(ready.begin() + i);
                    dispatched = true;
                    break;  // re-sort and rescan after each dispatch
                }
            }

            if (events.empty()) {
                if (done_count < static_cast<std::int64_t>(m.vertices.size())) {
                    std::ostringstream out;
                    out << "simulation deadlock: " << ready.size()
                        << " vertices ready but blocked, none in flight; frontier:";
                    for (const auto& r : ready) out << " " << r.vertex;
                    throw MemplanError(out.str());
                }
                break;
            }

            // Advance to the next completion.
            Completion done = events.top();
            events.pop();
            now = std::max(now, done.time);
            const MemVertex& v = m.at(done.vertex);
            release(v, held_stream[done.vertex]);
            done_count++;
            for (VertexId w : successors[done.vertex])
                if (--pending_preds[w] == 0) push_ready(w, now);
        }

        finalize();
        return std::move(trace);
    }

    void finalize() {
        double makespan = 0.0;
        for (const auto& r : trace.rows) makespan = std::max(makespan, r.end);
        trace.makespan = makespan;

        trace.busy_time.assign(m.device_count, 0.0);
        trace.idle_time.assign(m.device_count, 0.0);
        // Busy = measure of instants with at least one vertex in flight.
        for (int d = 0; d < m.device_count; ++d) {
            std::vector<std::pair<double, double>> spans;
            for (const auto& r : trace.rows)
                if (r.device == d && r.end > r.start) spans.emplace_back(r.start, r.end);
            std::sort(spans.begin(), spans.end());
            double busy = 0.0, cur_start = 0.0, cur_end = -1.0;
            for (const auto& [s, e] : spans) {
                if (cur_end < 0 || s > cur_end) {
                    if (cur_end >= 0) busy += cur_end - cur_start;
                    cur_start = s;
                    cur_end = e;
                } else {
                    cur_end = std::max(cur_end, e);
                }
            }
            if (cur_end >= 0) busy += cur_end - cur_start;
            trace.busy_time[d] = busy;
            trace.idle_time[d] = makespan - busy;
        }

        // Peak live units per device: a region is live from its owner's start
        // until its last reader finishes (or the end of the run).
        std::map<VertexId, double> start_of, end_of;
        for (const auto& r : trace.rows) {
            start_of[r.vertex] = r.start;
            end_of[r.vertex] = r.end;
        }
        std::map<VertexId, double> last_read;
        for (const auto& [id, p] : map.placements) last_read[id] = -1.0;
        for (const auto& e : m.edges) {
            if (e.kind != EdgeKind::Data) continue;
            auto it = last_read.find(e.from);
            if (it == last_read.end()) continue;
            it->second = std::max(it->second, end_of[e.to]);
        }
        trace.peak_live.assign(m.device_count, 0);
        std::vector<std::vector<std::pair<double, std::int64_t>>> deltas(m.device_count);
        for (const auto& [id, p] : map.placements) {
            double s = start_of.count(id) ? start_of[id] : 0.0;
            double e = last_read[id] >= 0 ? last_read[id] : makespan;
            deltas[p.device].push_back({s, p.size});
            deltas[p.device].push_back({e, -p.size});
        }
        for (int d = 0; d < m.device_count; ++d) {
            auto& ds = deltas[d];
            std::sort(ds.begin(), ds.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first < b.first;
                return a.second < b.second;  // deaths before starts at equal instants
            });
            std::int64_t live = 0, peak = 0;
            for (const auto& [t, delta] : ds) {
                live += delta;
                peak = std::max(peak, live);
            }
            trace.peak_live[d] = peak;
        }

        trace.host_bytes_transferred = 0;
        for (const auto& v : m.vertices)
            if (v.op == MemOpKind::Offload || v.op == MemOpKind::Reload)
                trace.host_bytes_transferred += v.size;
    }
};

}  // namespace

ExecutionTrace simulate(const MemGraph& m, const MemoryMap& map, const DeviceProfile& profile,
                        const SchedulerPolicy& policy, std::uint64_t seed) {
    if (policy.kind == SchedulerKind::FixedOrder) {
        MemGraph fixed = make_fixed_order(m);
        SchedulerPolicy inner = policy;
        inner.kind = SchedulerKind::EventDriven;
        Dispatcher dispatcher(fixed, map, profile, inner, seed);
        return dispatcher.run();
    }
    Dispatcher dispatcher(m, map, profile, policy, seed);
    return dispatcher.run();
}

// --- summaries ----------------------------------------------------------------

namespace {

PolicyStats bootstrap_stats(const std::vector<double>& samples, std::uint64_t seed) {
    PolicyStats stats;
    stats.makespans = samples;
    if (samples.empty()) return stats;
    double sum = 0.0;
    for (double s : samples) sum += s;
    stats.mean = sum / static_cast<double>(samples.size());

    const int resamples = 2000;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick(0, samples.size() - 1);
    std::vector<double> means;
    means.reserve(resamples);
    for (int r = 0; r < resamples; ++r) {
        double acc = 0.0;
        for (size_t i = 0; i < samples.size(); ++i) acc += samples[pick(rng)];
        means.push_back(acc / static_cast<double>(samples.size()));
    }
    std::sort(means.begin(), means.end());
    stats.ci_low = means[static_cast<size_t>(0.025 * (resamples - 1))];
    stats.ci_high = means[static_cast<size_t>(0.975 * (resamples - 1))];
    return stats;
}

}  // namespace

ComparisonSummary compare_policies(const MemGraph& m, const MemoryMap& map,
                                   const DeviceProfile& profile, std::int64_t trials,
                                   std::uint64_t seed) {
    if (trials < 1) throw MemplanError("compare_policies: trials must be >= 1");
    ComparisonSummary summary;
    summary.trials = trials;

    std::vector<double> event_ms, fixed_ms, speedups;
    MemGraph fixed = make_fixed_order(m);
    for (std::int64_t t = 0; t < trials; ++t) {
        std::uint64_t trial_seed = mix64(seed + static_cast<std::uint64_t>(t));
        SchedulerPolicy ev{SchedulerKind::EventDriven, TieBreak::Fifo};
        double e = simulate(m, map, profile, ev, trial_seed).makespan;
        double f = simulate(fixed, map, profile, ev, trial_seed).makespan;
        event_ms.push_back(e);
        fixed_ms.push_back(f);
        speedups.push_back(f > 0 ? (f - e) / f : 0.0);
    }

    summary.event_driven = bootstrap_stats(event_ms, mix64(seed ^ 0xeeeeULL));
    summary.fixed_order = bootstrap_stats(fixed_ms, mix64(seed ^ 0xffffULL));
    PolicyStats sp = bootstrap_stats(speedups, mix64(seed ^ 0x5bedULL));
    summary.speedup_mean = sp.mean;
    summary.speedup_ci_low = sp.ci_low;
    summary.speedup_ci_high = sp.ci_high;
    return summary;
}

// --- serialization --------------------------------------------------------------

std::string ExecutionTrace::to_json() const {
    json j;
    j["makespan"] = makespan;
    j["rows"] = json::array();
    for (const auto& r : rows)
        j["rows"].push_back({{"vertex", r.vertex},
                             {"start", r.start},
                             {"end", r.end},
                             {"device", r.device},
                             {"stream", r.stream}});
    j["busy_time"] = busy_time;
    j["idle_time"] = idle_time;
    j["peak_live"] = peak_live;
    j["host_bytes_transferred"] = host_bytes_transferred;
    return j.dump(2) + "\n";
}

std::string ExecutionTrace::to_csv() const {
    std::ostringstream out;
    out << "vertex,start,end,device,stream\n";
    for (const auto& r : rows)
        out << r.vertex << "," << r.start << "," << r.end << "," << r.device << "," << r.stream
            << "\n";
    return out.str();
}

std::string ComparisonSummary::to_json() const {
    json j;
    auto put = [&](const char* name, const PolicyStats& s) {
        j[name] = {{"mean_makespan", s.mean},
                   {"ci_low", s.ci_low},
                   {"ci_high", s.ci_high},
                   {"makespans", s.makespans}};
    };
    put("event_driven", event_driven);
    put("fixed_order", fixed_order);
    j["speedup"] = {{"mean", speedup_mean},
                    {"ci_low", speedup_ci_low},
                    {"ci_high", speedup_ci_high}};
    j["trials"] = trials;
    return j.dump(2) + "\n";
}

std::string serialize_profile(const DeviceProfile& profile) {
    json j;
    j["streams_per_device"] = profile.streams_per_device;
    j["kernel_multiplier"] = profile.kernel_multiplier;
    j["d2d_bandwidth"] = profile.d2d_bandwidth;
    j["host_link_bandwidth"] = profile.host_link_bandwidth;
    j["link_latency"] = profile.link_latency;
    const char* kind = profile.noise.kind == NoiseKind::None
                           ? "none"
                           : profile.noise.kind == NoiseKind::Uniform ? "uniform" : "lognormal";
    j["noise"] = {{"kind", kind}, {"param", profile.noise.param}};
    j["seed"] = profile.seed;
    return j.dump(2) + "\n";
}

DeviceProfile parse_profile(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid profile JSON: ") + e.what());
    }
    DeviceProfile p;
    p.streams_per_device = j.value("streams_per_device", 5);
    p.kernel_multiplier = j.value("kernel_multiplier", 1.0);
    p.d2d_bandwidth = j.value("d2d_bandwidth", 1.0);
    p.host_link_bandwidth = j.value("host_link_bandwidth", 1.0);
    p.link_latency = j.value("link_latency", 0.0);
    if (j.contains("noise")) {
        std::string kind = j["noise"].value("kind", "none");
        if (kind == "none") p.noise.kind = NoiseKind::None;
        else if (kind == "uniform") p.noise.kind = NoiseKind::Uniform;
        else if (kind == "lognormal") p.noise.kind = NoiseKind::Lognormal;
        else throw ParseError("unknown noise kind '" + kind + "'");
        p.noise.param = j["noise"].value("param", 0.0);
    }
    p.seed = j.value("seed", std::uint64_t{0});
    if (p.streams_per_device < 1) throw ParseError("streams_per_device must be >= 1");
    if (p.d2d_bandwidth <= 0 || p.host_link_bandwidth <= 0)
        throw ParseError("bandwidths must be > 0");
    return p;
}

}  // namespace memplan
