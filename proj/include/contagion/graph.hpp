#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "contagion/errors.hpp"

namespace contagion {

using NodeId = std::string;

struct NodeInfo {
    std::string label;
    std::string entity_type;

    friend bool operator==(const NodeInfo&, const NodeInfo&) = default;
};

struct Edge {
    NodeId src;
    NodeId dst;
    std::string relation_type;

    friend bool operator==(const Edge&, const Edge&) = default;
    friend bool operator<(const Edge& a, const Edge& b) {
        return std::tie(a.src, a.dst, a.relation_type) < std::tie(b.src, b.dst, b.relation_type);
    }
};

/// Directed typed multigraph of financial entities. Immutable after
/// construction: every "mutation" builds a new graph. Nodes iterate in
/// NodeId order and edges lexicographically, so all downstream artifacts
/// are reproducible.
class KnowledgeGraph {
public:
    class Builder;

    KnowledgeGraph() = default;

    bool has_node(const NodeId& id) const { return nodes_.count(id) != 0; }

    const NodeInfo& node_info(const NodeId& id) const {
        auto it = nodes_.find(id);
        if (it == nodes_.end()) throw NodeNotFound("node '" + id + "' not in graph");
        return it->second;
    }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    bool empty() const { return nodes_.empty(); }

    const std::map<NodeId, NodeInfo>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }

    /// Node ids in deterministic (sorted) order.
    std::vector<NodeId> node_ids() const {
        std::vector<NodeId> out;
        out.reserve(nodes_.size());
        for (const auto& [id, info] : nodes_) out.push_back(id);
        return out;
    }

    /// Distinct successors, sorted.
    const std::vector<NodeId>& out_neighbors(const NodeId& id) const {
        require_node(id);
        static const std::vector<NodeId> kEmpty;
        auto it = out_.find(id);
        return it == out_.end() ? kEmpty : it->second;
    }

    /// Distinct predecessors, sorted.
    const std::vector<NodeId>& in_neighbors(const NodeId& id) const {
        require_node(id);
        static const std::vector<NodeId> kEmpty;
        auto it = in_.find(id);
        return it == in_.end() ? kEmpty : it->second;
    }

    /// Distinct neighbors ignoring edge direction, sorted.
    std::vector<NodeId> undirected_neighbors(const NodeId& id) const {
        const auto& o = out_neighbors(id);
        const auto& i = in_neighbors(id);
        std::vector<NodeId> merged;
        merged.reserve(o.size() + i.size());
        std::set_union(o.begin(), o.end(), i.begin(), i.end(), std::back_inserter(merged));
        return merged;
    }

    friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
        return a.nodes_ == b.nodes_ && a.edges_ == b.edges_;
    }

private:
    void require_node(const NodeId& id) const {
        if (!has_node(id)) throw NodeNotFound("node '" + id + "' not in graph");
    }

    std::map<NodeId, NodeInfo> nodes_;
    std::vector<Edge> edges_; // sorted lexicographically
    std::map<NodeId, std::vector<NodeId>> out_;
    std::map<NodeId, std::vector<NodeId>> in_;
};

/// Collects raw records, validates the whole batch at build() time so that
/// node/edge record order in the source does not matter.
class KnowledgeGraph::Builder {
public:
    Builder& add_node(NodeId id, std::string label, std::string entity_type) {
        raw_nodes_.push_back({std::move(id), {std::move(label), std::move(entity_type)}});
        return *this;
    }

    Builder& add_edge(NodeId src, NodeId dst, std::string relation_type) {
        raw_edges_.push_back({std::move(src), std::move(dst), std::move(relation_type)});
        return *this;
    }

    KnowledgeGraph build() && {
        KnowledgeGraph g;
        for (auto& [id, info] : raw_nodes_) {
            if (id.empty()) throw MalformedRecord("node with empty id");
            if (!g.nodes_.emplace(id, std::move(info)).second)
                throw DuplicateNode("node '" + id + "' defined twice");
        }
        std::sort(raw_edges_.begin(), raw_edges_.end());
        for (std::size_t i = 0; i < raw_edges_.size(); ++i) {
            const Edge& e = raw_edges_[i];
            if (e.src.empty() || e.dst.empty()) throw MalformedRecord("edge with empty endpoint");
            if (e.src == e.dst) throw SelfLoop("edge " + e.src + " -> " + e.dst);
            if (!g.nodes_.count(e.src))
                throw DanglingEdge("edge source '" + e.src + "' not in nodes");
            if (!g.nodes_.count(e.dst))
                throw DanglingEdge("edge target '" + e.dst + "' not in nodes");
            if (i > 0 && raw_edges_[i - 1] == e)
                throw DuplicateEdge(e.src + " -> " + e.dst + " [" + e.relation_type + "]");
        }
        g.edges_ = std::move(raw_edges_);
        for (const Edge& e : g.edges_) {
            g.out_[e.src].push_back(e.dst);
            g.in_[e.dst].push_back(e.src);
        }
        auto dedup = [](std::map<NodeId, std::vector<NodeId>>& adj) {
            for (auto& [id, v] : adj) {
                std::sort(v.begin(), v.end());
                v.erase(std::unique(v.begin(), v.end()), v.end());
            }
        };
        dedup(g.out_);
        dedup(g.in_);
        return g;
    }

private:
    std::vector<std::pair<NodeId, NodeInfo>> raw_nodes_;
    std::vector<Edge> raw_edges_;
};

/// Returns a new graph with `v` and all its incident edges removed.
/// The input graph is untouched.
inline KnowledgeGraph remove_node(const KnowledgeGraph& g, const NodeId& v) {
    if (!g.has_node(v)) throw NodeNotFound("remove_node: '" + v + "'");
    KnowledgeGraph::Builder b;
    for (const auto& [id, info] : g.nodes())
        if (id != v) b.add_node(id, info.label, info.entity_type);
    for (const Edge& e : g.edges())
        if (e.src != v && e.dst != v) b.add_edge(e.src, e.dst, e.relation_type);
    return std::move(b).build();
}

/// All nodes at undirected distance <= k from v, including v itself.
inline std::set<NodeId> k_hop_neighborhood(const KnowledgeGraph& g, const NodeId& v, int k) {
    if (!g.has_node(v)) throw NodeNotFound("k_hop_neighborhood: '" + v + "'");
    std::set<NodeId> seen{v};
    std::deque<std::pair<NodeId, int>> frontier{{v, 0}};
    while (!frontier.empty()) {
        auto [u, d] = frontier.front();
        frontier.pop_front();
        if (d == k) continue;
        for (const NodeId& w : g.undirected_neighbors(u))
            if (seen.insert(w).second) frontier.push_back({w, d + 1});
    }
    return seen;
}

/// True iff a directed s->t path exists. Either endpoint may be absent
/// (an intervened-away node), in which case there is no path.
inline bool has_directed_path(const KnowledgeGraph& g, const NodeId& s, const NodeId& t) {
    if (!g.has_node(s) || !g.has_node(t)) return false;
    std::set<NodeId> seen{s};
    std::deque<NodeId> frontier{s};
    while (!frontier.empty()) {
        NodeId u = frontier.front();
        frontier.pop_front();
        if (u == t) return true;
        for (const NodeId& w : g.out_neighbors(u))
            if (seen.insert(w).second) frontier.push_back(w);
    }
    return false;
}

/// BFS hop counts from `s`; nodes unreachable within the graph are absent.
/// `reverse` walks edges backwards (distance *to* s).
inline std::map<NodeId, int> bfs_distances(const KnowledgeGraph& g, const NodeId& s, bool reverse = false) {
    std::map<NodeId, int> dist;
    if (!g.has_node(s)) return dist;
    dist[s] = 0;
    std::deque<NodeId> frontier{s};
    while (!frontier.empty()) {
        NodeId u = frontier.front();
        frontier.pop_front();
        const auto& next = reverse ? g.in_neighbors(u) : g.out_neighbors(u);
        for (const NodeId& w : next)
            if (dist.emplace(w, dist[u] + 1).second) frontier.push_back(w);
    }
    return dist;
}

/// A factual extract: the sub-knowledge-graph relevant to one contagion
/// query. path_nodes lie on at least one directed source->target path;
/// attached_nodes are nearby context with no such path through them.
struct FactualGraph {
    KnowledgeGraph graph;
    NodeId source;
    NodeId target;
    std::set<NodeId> path_nodes;
    std::set<NodeId> attached_nodes;

    void validate() const {
        if (!graph.has_node(source)) throw NodeNotFound("factual source '" + source + "'");
        if (!graph.has_node(target)) throw NodeNotFound("factual target '" + target + "'");
        if (source == target) throw InconsistentInputs("factual source equals target");
        std::set<NodeId> all;
        for (const auto& [id, info] : graph.nodes()) all.insert(id);
        std::set<NodeId> unioned = path_nodes;
        unioned.insert(attached_nodes.begin(), attached_nodes.end());
        if (unioned != all) throw InconsistentInputs("path/attached sets do not cover the graph");
        for (const NodeId& id : path_nodes)
            if (attached_nodes.count(id))
                throw InconsistentInputs("node '" + id + "' in both path and attached sets");
    }
};

namespace detail {

// Exhaustive bounded DFS over simple paths, pruned by shortest remaining
// distance to the target. Marks every node that lies on some accepting path.
inline void collect_path_nodes(const KnowledgeGraph& g, const NodeId& t, int max_depth,
                               const std::map<NodeId, int>& dist_to_t,
                               std::vector<NodeId>& stack, std::set<NodeId>& on_stack,
                               std::set<NodeId>& result) {
    const NodeId& u = stack.back();
    if (u == t) {
        result.insert(stack.begin(), stack.end());
        return;
    }
    const int depth = static_cast<int>(stack.size()) - 1;
    for (const NodeId& w : g.out_neighbors(u)) {
        if (on_stack.count(w)) continue;
        auto it = dist_to_t.find(w);
        if (it == dist_to_t.end()) continue;
        if (depth + 1 + it->second > max_depth) continue;
        stack.push_back(w);
        on_stack.insert(w);
        collect_path_nodes(g, t, max_depth, dist_to_t, stack, on_stack, result);
        on_stack.erase(w);
        stack.pop_back();
    }
}

} // namespace detail

/// Extracts the factual graph for a contagion query: every node on a
/// directed v_s->v_t simple path of at most max_depth edges, plus context
/// nodes within attach_hops (undirected) of that path, with all induced
/// edges retained.
inline FactualGraph dfs_extract(const KnowledgeGraph& kg, const NodeId& v_s, const NodeId& v_t,
                                int max_depth = 6, int attach_hops = 1) {
    if (!kg.has_node(v_s)) throw NodeNotFound("dfs_extract source '" + v_s + "'");
    if (!kg.has_node(v_t)) throw NodeNotFound("dfs_extract target '" + v_t + "'");
    if (v_s == v_t) throw InconsistentInputs("dfs_extract: source equals target");

    const auto dist_to_t = bfs_distances(kg, v_t, /*reverse=*/true);
    std::set<NodeId> path_nodes;
    if (auto it = dist_to_t.find(v_s); it != dist_to_t.end() && it->second <= max_depth) {
        std::vector<NodeId> stack{v_s};
        std::set<NodeId> on_stack{v_s};
        detail::collect_path_nodes(kg, v_t, max_depth, dist_to_t, stack, on_stack, path_nodes);
    }
    if (path_nodes.empty())
        throw NoPath("no " + v_s + " -> " + v_t + " path within depth " +
                     std::to_string(max_depth));

    // Attach context: undirected ball of radius attach_hops around the path.
    std::set<NodeId> attached;
    std::deque<std::pair<NodeId, int>> frontier;
    std::set<NodeId> seen = path_nodes;
    for (const NodeId& p : path_nodes) frontier.push_back({p, 0});
    while (!frontier.empty()) {
        auto [u, d] = frontier.front();
        frontier.pop_front();
        if (d == attach_hops) continue;
        for (const NodeId& w : kg.undirected_neighbors(u)) {
            if (seen.insert(w).second) {
                attached.insert(w);
                frontier.push_back({w, d + 1});
            }
        }
    }

    KnowledgeGraph::Builder b;
    for (const NodeId& id : seen) {
        const NodeInfo& info = kg.node_info(id);
        b.add_node(id, info.label, info.entity_type);
    }
    for (const Edge& e : kg.edges())
        if (seen.count(e.src) && seen.count(e.dst)) b.add_edge(e.src, e.dst, e.relation_type);

    FactualGraph f{std::move(b).build(), v_s, v_t, std::move(path_nodes), std::move(attached)};
    f.validate();
    return f;
}

} // namespace contagion
