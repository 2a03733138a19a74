#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "contagion/errors.hpp"
#include "contagion/graph.hpp"
#include "contagion/graph_io.hpp"

namespace contagion {

/// Probability of risk contagion from source to target under a given
/// (possibly intervened) graph. Under reachability semantics the value is
/// always exactly 0 or 1.
struct ContagionProb {
    double value = 0.0;
};

/// P(v_s -> v_t | g): 1 iff a directed path exists. An intervened-away
/// source means no contagion; an absent target is a contract violation
/// (interventions never remove the target).
inline ContagionProb contagion_probability(const KnowledgeGraph& g, const NodeId& v_s,
                                           const NodeId& v_t) {
    if (!g.has_node(v_t)) throw TargetMissing("target '" + v_t + "' was removed");
    if (!g.has_node(v_s)) return {0.0};
    return {has_directed_path(g, v_s, v_t) ? 1.0 : 0.0};
}

/// One do(nu = 0) variant: the factual graph minus `node`, labeled with the
/// resulting contagion probability.
struct InterventionEntry {
    NodeId node;
    KnowledgeGraph graph;
    ContagionProb label;
};

/// The factual graph plus one node-removal intervention per non-target
/// node, each labeled by the reachability oracle. Entries are ordered by
/// NodeId so identical inputs give identical sets.
struct InterventionSet {
    FactualGraph factual;
    std::vector<InterventionEntry> interventions;
    ContagionProb factual_label;
};

inline InterventionSet build_intervention_set(const FactualGraph& f) {
    f.validate();
    if (!has_directed_path(f.graph, f.source, f.target))
        throw NoPath("factual graph has no " + f.source + " -> " + f.target + " path");
    InterventionSet set;
    set.factual = f;
    set.factual_label = {1.0};
    for (const NodeId& v : f.graph.node_ids()) {
        if (v == f.target) continue;
        KnowledgeGraph intervened = remove_node(f.graph, v);
        ContagionProb label = contagion_probability(intervened, f.source, f.target);
        set.interventions.push_back({v, std::move(intervened), label});
    }
    return set;
}

inline const InterventionEntry& find_intervention(const InterventionSet& s, const NodeId& nu) {
    if (nu == s.factual.target)
        throw TargetIntervention("'" + nu + "' is the contagion target");
    for (const InterventionEntry& e : s.interventions)
        if (e.node == nu) return e;
    throw NodeNotFound("no intervention for node '" + nu + "'");
}

/// Delta(nu) = P(contagion | do(nu=1)) - P(contagion | do(nu=0)). The
/// do(nu=1) state is the factual graph itself.
inline double intervention_effect(const InterventionSet& s, const NodeId& nu) {
    return s.factual_label.value - find_intervention(s, nu).label.value;
}

/// The causal/non-causal split over all intervenable nodes: X holds the
/// nodes whose removal changes contagion, Z the rest.
struct CausalPartition {
    std::set<NodeId> causal;     // X
    std::set<NodeId> non_causal; // Z
    std::map<NodeId, double> effects;
};

inline CausalPartition classify_nodes(const InterventionSet& s) {
    CausalPartition p;
    for (const InterventionEntry& e : s.interventions) {
        const double delta = s.factual_label.value - e.label.value;
        if (delta < 0.0)
            throw NegativeEffect("delta(" + e.node + ") < 0; removal cannot add paths");
        p.effects[e.node] = delta;
        if (delta > 0.0)
            p.causal.insert(e.node);
        else
            p.non_causal.insert(e.node);
    }
    return p;
}

/// The causal chain in propagation order: X topologically sorted over the
/// factual edges among X ∪ {target}, with the target appended. Ties break
/// on NodeId so the chain is deterministic.
inline std::vector<NodeId> causal_chain(const CausalPartition& p, const FactualGraph& f) {
    std::set<NodeId> members = p.causal;
    members.insert(f.target);
    std::map<NodeId, int> indeg;
    std::map<NodeId, std::set<NodeId>> succ;
    for (const NodeId& v : members) indeg[v] = 0;
    for (const Edge& e : f.graph.edges())
        if (members.count(e.src) && members.count(e.dst))
            if (succ[e.src].insert(e.dst).second) ++indeg[e.dst];
    std::vector<NodeId> order;
    std::set<NodeId> ready;
    for (const auto& [v, d] : indeg)
        if (d == 0) ready.insert(v);
    while (!ready.empty()) {
        NodeId v = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(v);
        for (const NodeId& w : succ[v])
            if (--indeg[w] == 0) ready.insert(w);
    }
    // Unreached members (cyclic tangles) appended in id order; keeps the
    // chain total even on degenerate graphs.
    for (const auto& [v, d] : indeg)
        if (std::find(order.begin(), order.end(), v) == order.end()) order.push_back(v);
    // Target goes last regardless of topological position.
    order.erase(std::remove(order.begin(), order.end(), f.target), order.end());
    order.push_back(f.target);
    return order;
}

// --- serialization ---------------------------------------------------------

/// One JSONL record per graph: the factual record carries the extract
/// metadata needed to rebuild the FactualGraph.
inline std::vector<ordered_json> intervention_set_records(const InterventionSet& s) {
    std::vector<ordered_json> records;
    ordered_json fact;
    fact["role"] = "factual";
    fact["intervened_node"] = nullptr;
    fact["label"] = s.factual_label.value;
    fact["graph"] = kg_to_json(s.factual.graph);
    fact["source"] = s.factual.source;
    fact["target"] = s.factual.target;
    fact["path_nodes"] = s.factual.path_nodes;
    fact["attached_nodes"] = s.factual.attached_nodes;
    records.push_back(std::move(fact));
    for (const InterventionEntry& e : s.interventions) {
        ordered_json j;
        j["role"] = "intervention";
        j["intervened_node"] = e.node;
        j["label"] = e.label.value;
        j["graph"] = kg_to_json(e.graph);
        records.push_back(std::move(j));
    }
    return records;
}

inline InterventionSet intervention_set_from_records(const std::vector<ordered_json>& records) {
    if (records.empty()) throw MalformedRecord("empty intervention set");
    const ordered_json& fact = records.front();
    if (fact.at("role") != "factual") throw MalformedRecord("first record must be factual");
    InterventionSet s;
    s.factual.graph = kg_from_json(fact.at("graph"));
    s.factual.source = fact.at("source").get<std::string>();
    s.factual.target = fact.at("target").get<std::string>();
    for (const auto& n : fact.at("path_nodes")) s.factual.path_nodes.insert(n.get<std::string>());
    for (const auto& n : fact.at("attached_nodes"))
        s.factual.attached_nodes.insert(n.get<std::string>());
    s.factual.validate();
    s.factual_label = {fact.at("label").get<double>()};
    for (std::size_t i = 1; i < records.size(); ++i) {
        const ordered_json& j = records[i];
        if (j.at("role") != "intervention") throw MalformedRecord("expected intervention record");
        InterventionEntry e;
        e.node = j.at("intervened_node").get<std::string>();
        e.graph = kg_from_json(j.at("graph"));
        e.label = {j.at("label").get<double>()};
        s.interventions.push_back(std::move(e));
    }
    return s;
}

} // namespace contagion
