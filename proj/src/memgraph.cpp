// Copyright 2026 The Memplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "memplan/memgraph.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace memplan {

using json = nlohmann::ordered_json;

const char* to_string(MemOriginKind kind) {
    switch (kind) {
        case MemOriginKind::Original: return "original";
        case MemOriginKind::Offload: return "offload";
        case MemOriginKind::Reload: return "reload";
    }
    return "?";
}

const char* to_string(MemOpKind kind) {
    switch (kind) {
        case MemOpKind::Input: return "input";
        case MemOpKind::Kernel: return "kernel";
        case MemOpKind::Transfer: return "transfer";
        case MemOpKind::Offload: return "offload";
        case MemOpKind::Reload: return "reload";
    }
    return "?";
}

const char* to_string(EdgeKind kind) {
    return kind == EdgeKind::Data ? "data" : "memory";
}

const MemVertex* MemGraph::find(VertexId id) const {
    for (const auto& v : vertices)
        if (v.id == id) return &v;
    return nullptr;
}

const MemVertex& MemGraph::at(VertexId id) const {
    const MemVertex* v = find(id);
    if (!v) throw MemplanError("no memgraph vertex with id " + std::to_string(id));
    return *v;
}

std::vector<VertexId> MemGraph::data_consumers(VertexId id) const {
    std::vector<VertexId> out;
    for (const auto& e : edges)
        if (e.from == id && e.kind == EdgeKind::Data) out.push_back(e.to);
    return out;
}

bool MemGraph::has_edge(VertexId from, VertexId to, EdgeKind kind) const {
    for (const auto& e : edges)
        if (e.from == from && e.to == to && e.kind == kind) return true;
    return false;
}

bool MemoryMap::overlaps(const Placement& a, const Placement& b) const {
    if (a.device != b.device) return false;
    return a.offset < b.offset + b.size && b.offset < a.offset + a.size;
}

// --- serialization ------------------------------------------------------------

std::string serialize_memgraph(const MemGraph& m, const MemoryMap& map) {
    json j;
    j["device_count"] = m.device_count;
    j["mode"] = map.mode == MemoryMode::Slot ? "slot" : "byte";
    j["capacities"] = map.capacities;
    j["vertices"] = json::array();
    for (const auto& v : m.vertices) {
        json jv;
        jv["id"] = v.id;
        jv["origin"] = {{"kind", to_string(v.origin.kind)}, {"ref", v.origin.ref}};
        if (v.origin.kind != MemOriginKind::Original) jv["origin"]["gen"] = v.origin.gen;
        jv["op"] = to_string(v.op);
        jv["device"] = v.device;
        if (v.op == MemOpKind::Transfer) jv["src_device"] = v.src_device;
        jv["size"] = v.size;
        jv["cost_hint"] = v.cost_hint;
        j["vertices"].push_back(jv);
    }
    j["edges"] = json::array();
    for (const auto& e : m.edges) {
        j["edges"].push_back({{"from", e.from},
                              {"to", e.to},
                              {"kind", to_string(e.kind)},
                              {"superfluous", e.superfluous}});
    }
    j["total_order"] = m.total_order;
    j["placement"] = json::object();
    for (const auto& [id, p] : map.placements) {
        j["placement"][std::to_string(id)] = {
            {"device", p.device}, {"offset", p.offset}, {"size", p.size}};
    }
    j["history"] = json::array();
    for (const auto& h : map.history) {
        j["history"].push_back({{"owner", h.owner},
                                {"device", h.device},
                                {"offset", h.offset},
                                {"size", h.size}});
    }
    return j.dump(2) + "\n";
}

std::pair<MemGraph, MemoryMap> parse_memgraph(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.contains("vertices") || !j.contains("edges"))
        throw ParseError("memgraph file needs vertices and edges");

    MemGraph m;
    MemoryMap map;
    m.device_count = j.value("device_count", 1);
    map.mode = j.value("mode", "slot") == std::string("byte") ? MemoryMode::Byte
                                                              : MemoryMode::Slot;
    map.capacities = j.value("capacities", std::vector<std::int64_t>{});

    for (const auto& jv : j["vertices"]) {
        MemVertex v;
        v.id = jv.at("id").get<VertexId>();
        std::string ok = jv.at("origin").value("kind", "original");
        if (ok == "original") v.origin.kind = MemOriginKind::Original;
        else if (ok == "offload") v.origin.kind = MemOriginKind::Offload;
        else if (ok == "reload") v.origin.kind = MemOriginKind::Reload;
        else throw ParseError("unknown origin kind '" + ok + "'");
        v.origin.ref = jv.at("origin").value("ref", VertexId{0});
        v.origin.gen = jv.at("origin").value("gen", 0);
        std::string op = jv.value("op", "kernel");
        if (op == "input") v.op = MemOpKind::Input;
        else if (op == "kernel") v.op = MemOpKind::Kernel;
        else if (op == "transfer") v.op = MemOpKind::Transfer;
        else if (op == "offload") v.op = MemOpKind::Offload;
        else if (op == "reload") v.op = MemOpKind::Reload;
        else throw ParseError("unknown op kind '" + op + "'");
        v.device = jv.value("device", 0);
        v.src_device = jv.value("src_device", -1);
        v.size = jv.value("size", std::int64_t{1});
        v.cost_hint = jv.value("cost_hint", 1.0);
        m.vertices.push_back(v);
    }
    for (const auto& je : j["edges"]) {
        MemEdge e;
        e.from = je.at("from").get<VertexId>();
        e.to = je.at("to").get<VertexId>();
        e.kind = je.value("kind", "data") == std::string("memory") ? EdgeKind::Memory
                                                                   : EdgeKind::Data;
        e.superfluous = je.value("superfluous", false);
        if (!m.find(e.from) || !m.find(e.to))
            throw ParseError("edge references unknown memgraph vertex");
        m.edges.push_back(e);
    }
    m.total_order = j.value("total_order", std::vector<VertexId>{});
    const json placements = j.value("placement", json::object());
    for (const auto& [key, jp] : placements.items()) {
        Placement p;
        p.device = jp.value("device", 0);
        p.offset = jp.value("offset", std::int64_t{0});
        p.size = jp.value("size", std::int64_t{1});
        map.placements[std::stoll(key)] = p;
    }
    for (const auto& jh : j.value("history", json::array())) {
        RegionClaim h;
        h.owner = jh.value("owner", VertexId{0});
        h.device = jh.value("device", 0);
        h.offset = jh.value("offset", std::int64_t{0});
        h.size = jh.value("size", std::int64_t{0});
        map.history.push_back(h);
    }
    return {std::move(m), std::move(map)};
}

std::string memgraph_to_dot(const MemGraph& m) {
    std::ostringstream out;
    out << "digraph memgraph {\n";
    for (const auto& v : m.vertices) {
        std::string label;
        switch (v.origin.kind) {
            case MemOriginKind::Original:
                label = std::to_string(v.id) + " " + to_string(v.op) + "@" +
                        std::to_string(v.device);
                break;
            case MemOriginKind::Offload:
                label = "offload_" + std::to_string(v.origin.ref) + "@" +
                        std::to_string(v.device);
                break;
            case MemOriginKind::Reload:
                label = "reload_" + std::to_string(v.origin.ref) + "@" +
                        std::to_string(v.device);
                break;
        }
        out << "  v" << v.id << " [label=\"" << label << "\"";
        if (v.origin.kind != MemOriginKind::Original) out << " shape=box";
        out << "];\n";
    }
    // Data edges black solid, memory edges red solid, superfluous gray dashed.
    for (const auto& e : m.edges) {
        out << "  v" << e.from << " -> v" << e.to;
        if (e.superfluous) out << " [color=gray style=dashed]";
        else if (e.kind == EdgeKind::Memory) out << " [color=red]";
        out << ";\n";
    }
    out << "}\n";
    return out.str();
}

}  // namespace memplan
