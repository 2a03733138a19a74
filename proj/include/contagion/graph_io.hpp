#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "contagion/errors.hpp"
#include "contagion/graph.hpp"

namespace contagion {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline void check_csv_field(const std::string& s) {
    if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos)
        throw MalformedRecord("CSV field may not contain ',' or newline: '" + s + "'");
}

inline std::string json_string(const ordered_json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string())
        throw MalformedRecord(std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
}

} // namespace detail

/// Loads a graph from the two-file CSV schema:
///   nodes: header `id,label,entity_type`; edges: header `src,dst,relation_type`.
inline KnowledgeGraph load_graph(std::istream& nodes_csv, std::istream& edges_csv) {
    KnowledgeGraph::Builder b;
    std::string line;

    if (!std::getline(nodes_csv, line) || detail::split_csv_row(line) !=
        std::vector<std::string>{"id", "label", "entity_type"})
        throw MalformedRecord("nodes CSV must start with header 'id,label,entity_type'");
    while (std::getline(nodes_csv, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv_row(line);
        if (f.size() != 3) throw MalformedRecord("node row with " + std::to_string(f.size()) +
                                                 " fields: '" + line + "'");
        b.add_node(f[0], f[1], f[2]);
    }

    if (!std::getline(edges_csv, line) || detail::split_csv_row(line) !=
        std::vector<std::string>{"src", "dst", "relation_type"})
        throw MalformedRecord("edges CSV must start with header 'src,dst,relation_type'");
    while (std::getline(edges_csv, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv_row(line);
        if (f.size() != 3) throw MalformedRecord("edge row with " + std::to_string(f.size()) +
                                                 " fields: '" + line + "'");
        b.add_edge(f[0], f[1], f[2]);
    }
    return std::move(b).build();
}

/// Loads a graph from one JSONL stream with records
/// {"kind":"node","id":...,"label":...,"entity_type":...} and
/// {"kind":"edge","src":...,"dst":...,"relation_type":...}.
inline KnowledgeGraph load_graph_jsonl(std::istream& in) {
    KnowledgeGraph::Builder b;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw MalformedRecord(std::string("bad JSONL line: ") + e.what());
        }
        const std::string kind = detail::json_string(j, "kind");
        if (kind == "node") {
            b.add_node(detail::json_string(j, "id"), detail::json_string(j, "label"),
                       detail::json_string(j, "entity_type"));
        } else if (kind == "edge") {
            b.add_edge(detail::json_string(j, "src"), detail::json_string(j, "dst"),
                       detail::json_string(j, "relation_type"));
        } else {
            throw MalformedRecord("unknown record kind '" + kind + "'");
        }
    }
    return std::move(b).build();
}

inline void save_nodes_csv(const KnowledgeGraph& g, std::ostream& out) {
    out << "id,label,entity_type\n";
    for (const auto& [id, info] : g.nodes()) {
        detail::check_csv_field(id);
        detail::check_csv_field(info.label);
        detail::check_csv_field(info.entity_type);
        out << id << ',' << info.label << ',' << info.entity_type << '\n';
    }
}

inline void save_edges_csv(const KnowledgeGraph& g, std::ostream& out) {
    out << "src,dst,relation_type\n";
    for (const Edge& e : g.edges()) {
        detail::check_csv_field(e.src);
        detail::check_csv_field(e.dst);
        detail::check_csv_field(e.relation_type);
        out << e.src << ',' << e.dst << ',' << e.relation_type << '\n';
    }
}

inline void save_graph_jsonl(const KnowledgeGraph& g, std::ostream& out) {
    for (const auto& [id, info] : g.nodes()) {
        ordered_json j{{"kind", "node"}, {"id", id}, {"label", info.label},
                       {"entity_type", info.entity_type}};
        out << j.dump() << '\n';
    }
    for (const Edge& e : g.edges()) {
        ordered_json j{{"kind", "edge"}, {"src", e.src}, {"dst", e.dst},
                       {"relation_type", e.relation_type}};
        out << j.dump() << '\n';
    }
}

inline ordered_json kg_to_json(const KnowledgeGraph& g) {
    ordered_json nodes = ordered_json::array();
    for (const auto& [id, info] : g.nodes())
        nodes.push_back({{"id", id}, {"label", info.label}, {"entity_type", info.entity_type}});
    ordered_json edges = ordered_json::array();
    for (const Edge& e : g.edges())
        edges.push_back({{"src", e.src}, {"dst", e.dst}, {"relation_type", e.relation_type}});
    return ordered_json{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

inline KnowledgeGraph kg_from_json(const ordered_json& j) {
    if (!j.contains("nodes") || !j.contains("edges"))
        throw MalformedRecord("graph JSON requires 'nodes' and 'edges' arrays");
    KnowledgeGraph::Builder b;
    for (const auto& n : j["nodes"])
        b.add_node(detail::json_string(n, "id"), detail::json_string(n, "label"),
                   detail::json_string(n, "entity_type"));
    for (const auto& e : j["edges"])
        b.add_edge(detail::json_string(e, "src"), detail::json_string(e, "dst"),
                   detail::json_string(e, "relation_type"));
    return std::move(b).build();
}

inline ordered_json factual_to_json(const FactualGraph& f) {
    ordered_json j;
    j["graph"] = kg_to_json(f.graph);
    j["source"] = f.source;
    j["target"] = f.target;
    j["path_nodes"] = f.path_nodes;
    j["attached_nodes"] = f.attached_nodes;
    return j;
}

inline FactualGraph factual_from_json(const ordered_json& j) {
    FactualGraph f;
    f.graph = kg_from_json(j.at("graph"));
    f.source = j.at("source").get<std::string>();
    f.target = j.at("target").get<std::string>();
    for (const auto& n : j.at("path_nodes")) f.path_nodes.insert(n.get<std::string>());
    for (const auto& n : j.at("attached_nodes")) f.attached_nodes.insert(n.get<std::string>());
    f.validate();
    return f;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << content;
}

} // namespace contagion
