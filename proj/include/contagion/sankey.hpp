#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "contagion/errors.hpp"
#include "contagion/graph.hpp"
#include "contagion/pathway.hpp"

namespace contagion {

/// Flow-diagram document: all factual-graph nodes with the extracted
/// pathway highlighted, link widths carrying contagion intensity.
struct SankeyDoc {
    struct Node {
        NodeId id;
        std::string label;
        std::string entity_type;
        bool on_path = false;

        friend bool operator==(const Node&, const Node&) = default;
    };
    struct Link {
        NodeId source;
        NodeId target;
        double value = 0.0;

        friend bool operator==(const Link&, const Link&) = default;
    };
    struct Meta {
        std::string query_id;
        std::uint64_t seed = 0;
        std::string checkpoint_hash;

        friend bool operator==(const Meta&, const Meta&) = default;
    };

    std::vector<Node> nodes;
    std::vector<Link> links;
    std::string explanation;
    Meta meta;

    friend bool operator==(const SankeyDoc&, const SankeyDoc&) = default;
};

/// Context edges that carry no contagion render at a fixed faint width.
inline constexpr double kOffPathLinkValue = 0.05;

/// Builds the Sankey document for one extracted pathway: path links carry
/// the normalized intensities (peak exactly 1), every other factual edge
/// appears once at the faint context value.
inline SankeyDoc export_sankey(const RiskPath& path, const FactualGraph& f,
                               const RiskScores& scores, const std::string& explanation,
                               const SankeyDoc::Meta& meta) {
    if (path.nodes.size() < 2 || path.intensities.size() + 1 != path.nodes.size())
        throw InconsistentInputs("risk path must hold n nodes and n-1 intensities");
    for (const NodeId& v : path.nodes)
        if (!f.graph.has_node(v))
            throw InconsistentInputs("path node '" + v + "' missing from the factual graph");
    for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
        const auto& succ = f.graph.out_neighbors(path.nodes[i]);
        if (!std::binary_search(succ.begin(), succ.end(), path.nodes[i + 1]))
            throw InconsistentInputs("path hop " + path.nodes[i] + " -> " + path.nodes[i + 1] +
                                     " is not a factual edge");
    }
    if (!scores.per_node.empty())
        for (const auto& [id, s] : scores.per_node)
            if (!f.graph.has_node(id))
                throw InconsistentInputs("scored node '" + id + "' missing from the factual graph");

    SankeyDoc doc;
    doc.explanation = explanation;
    doc.meta = meta;
    const std::set<NodeId> on_path(path.nodes.begin(), path.nodes.end());
    for (const auto& [id, info] : f.graph.nodes())
        doc.nodes.push_back({id, info.label, info.entity_type, on_path.count(id) != 0});

    std::set<std::pair<NodeId, NodeId>> path_hops;
    for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
        doc.links.push_back({path.nodes[i], path.nodes[i + 1], path.intensities[i]});
        path_hops.insert({path.nodes[i], path.nodes[i + 1]});
    }
    std::set<std::pair<NodeId, NodeId>> seen; // parallel edges collapse to one link
    for (const Edge& e : f.graph.edges()) {
        if (path_hops.count({e.src, e.dst})) continue;
        if (!seen.insert({e.src, e.dst}).second) continue;
        doc.links.push_back({e.src, e.dst, kOffPathLinkValue});
    }
    return doc;
}

inline nlohmann::ordered_json sankey_to_json(const SankeyDoc& doc) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : doc.nodes)
        nodes.push_back({{"id", n.id}, {"label", n.label}, {"entity_type", n.entity_type},
                         {"on_path", n.on_path}});
    j["nodes"] = std::move(nodes);
    nlohmann::ordered_json links = nlohmann::ordered_json::array();
    for (const auto& l : doc.links)
        links.push_back({{"source", l.source}, {"target", l.target}, {"value", l.value}});
    j["links"] = std::move(links);
    j["explanation"] = doc.explanation;
    j["meta"] = {{"query_id", doc.meta.query_id}, {"seed", doc.meta.seed},
                 {"checkpoint_hash", doc.meta.checkpoint_hash}};
    return j;
}

inline SankeyDoc sankey_from_json(const nlohmann::ordered_json& j) {
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
        throw ConfigError("unsupported sankey schema version");
    SankeyDoc doc;
    for (const auto& n : j.at("nodes"))
        doc.nodes.push_back({n.at("id").get<std::string>(), n.at("label").get<std::string>(),
                             n.at("entity_type").get<std::string>(), n.at("on_path").get<bool>()});
    for (const auto& l : j.at("links"))
        doc.links.push_back({l.at("source").get<std::string>(), l.at("target").get<std::string>(),
                             l.at("value").get<double>()});
    doc.explanation = j.at("explanation").get<std::string>();
    doc.meta.query_id = j.at("meta").at("query_id").get<std::string>();
    doc.meta.seed = j.at("meta").at("seed").get<std::uint64_t>();
    doc.meta.checkpoint_hash = j.at("meta").at("checkpoint_hash").get<std::string>();
    return doc;
}

} // namespace contagion
