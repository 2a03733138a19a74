#pragma once

// Test-only oracles, deliberately independent of the library's algorithms:
// brute-force path enumeration, BFS distance tables, pairwise AUC counting
// and hand-rolled forward passes. Everything here prefers clarity over
// speed and is only run on small graphs.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "contagion/graph.hpp"
#include "contagion/matrix.hpp"
#include "contagion/rng.hpp"

namespace oracles {

using contagion::KnowledgeGraph;
using contagion::Matrix;
using contagion::NodeId;

/// Every simple directed path s -> t with at most max_edges edges, found by
/// unpruned exhaustive search over raw edge lists.
inline void enumerate_paths_rec(const KnowledgeGraph& g, const NodeId& t, int max_edges,
                                std::vector<NodeId>& cur, std::set<NodeId>& used,
                                std::vector<std::vector<NodeId>>& out) {
    if (cur.back() == t) {
        out.push_back(cur);
        return;
    }
    if (static_cast<int>(cur.size()) - 1 >= max_edges) return;
    for (const contagion::Edge& e : g.edges()) {
        if (e.src != cur.back() || used.count(e.dst)) continue;
        cur.push_back(e.dst);
        used.insert(e.dst);
        enumerate_paths_rec(g, t, max_edges, cur, used, out);
        used.erase(e.dst);
        cur.pop_back();
    }
}

inline std::vector<std::vector<NodeId>> all_simple_paths(const KnowledgeGraph& g, const NodeId& s,
                                                         const NodeId& t, int max_edges) {
    std::vector<std::vector<NodeId>> out;
    if (!g.has_node(s) || !g.has_node(t)) return out;
    std::vector<NodeId> cur{s};
    std::set<NodeId> used{s};
    enumerate_paths_rec(g, t, max_edges, cur, used, out);
    return out;
}

inline std::set<NodeId> nodes_on_paths(const std::vector<std::vector<NodeId>>& paths) {
    std::set<NodeId> out;
    for (const auto& p : paths) out.insert(p.begin(), p.end());
    return out;
}

inline bool reachable(const KnowledgeGraph& g, const NodeId& s, const NodeId& t) {
    if (!g.has_node(s) || !g.has_node(t)) return false;
    return !all_simple_paths(g, s, t, static_cast<int>(g.node_count())).empty();
}

/// Undirected hop distances by level-by-level expansion over the edge list.
inline std::map<NodeId, int> undirected_distances(const KnowledgeGraph& g, const NodeId& s) {
    std::map<NodeId, int> dist{{s, 0}};
    std::vector<NodeId> frontier{s};
    int d = 0;
    while (!frontier.empty()) {
        ++d;
        std::vector<NodeId> next;
        for (const NodeId& u : frontier) {
            for (const contagion::Edge& e : g.edges()) {
                NodeId other;
                if (e.src == u)
                    other = e.dst;
                else if (e.dst == u)
                    other = e.src;
                else
                    continue;
                if (!dist.count(other)) {
                    dist[other] = d;
                    next.push_back(other);
                }
            }
        }
        frontier = std::move(next);
    }
    return dist;
}

/// Quadratic pairwise AUC with ties counted half.
inline double pairwise_auc(const std::vector<std::pair<double, int>>& preds) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (const auto& [pp, yp] : preds) {
        if (yp == 0) continue;
        for (const auto& [pn, yn] : preds) {
            if (yn != 0) continue;
            ++pairs;
            if (pp > pn)
                wins += 1.0;
            else if (pp == pn)
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

/// Seeded random digraph over n nodes with a guaranteed 0 -> (n-1) chain,
/// used as a factual-graph population for oracle cross-checks.
inline KnowledgeGraph random_routed_graph(int n, double edge_prob, contagion::Rng& rng) {
    KnowledgeGraph::Builder b;
    std::vector<NodeId> ids;
    for (int i = 0; i < n; ++i) {
        NodeId id = "n" + std::to_string(i);
        b.add_node(id, "N " + std::to_string(i), "entity");
        ids.push_back(id);
    }
    std::set<std::pair<int, int>> used;
    // plant a short backbone so source->target stays reachable
    std::vector<int> backbone{0};
    int hops = 1 + static_cast<int>(rng.range(1, std::max(1, n - 2)));
    std::set<int> seen{0, n - 1};
    for (int h = 0; h < hops - 1; ++h) {
        int v = static_cast<int>(rng.range(1, n - 2 >= 1 ? n - 2 : 1));
        if (seen.count(v)) continue;
        seen.insert(v);
        backbone.push_back(v);
    }
    backbone.push_back(n - 1);
    for (std::size_t i = 0; i + 1 < backbone.size(); ++i)
        if (used.insert({backbone[i], backbone[i + 1]}).second)
            b.add_edge(ids[static_cast<std::size_t>(backbone[i])],
                       ids[static_cast<std::size_t>(backbone[i + 1])], "rel");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j || used.count({i, j})) continue;
            if (rng.uniform() < edge_prob) {
                used.insert({i, j});
                b.add_edge(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)],
                           "rel");
            }
        }
    return std::move(b).build();
}

/// Hand-rolled graph-encoder forward with explicit loops, mirroring the
/// documented layer formula (mean in-message, self transform, softplus,
/// residual).
inline Matrix gnn_forward_by_hand(const KnowledgeGraph& g, const Matrix& x0,
                                  const std::vector<std::array<Matrix, 3>>& layers) {
    const auto ids = g.node_ids();
    const int m = static_cast<int>(ids.size());
    const int d = x0.cols;
    Matrix h = x0;
    for (const auto& [w_msg, w_self, bias] : layers) {
        Matrix next = h;
        for (int i = 0; i < m; ++i) {
            std::vector<double> mean_in(static_cast<std::size_t>(d), 0.0);
            const auto& in = g.in_neighbors(ids[static_cast<std::size_t>(i)]);
            for (const NodeId& u : in) {
                int ui = static_cast<int>(
                    std::lower_bound(ids.begin(), ids.end(), u) - ids.begin());
                for (int c = 0; c < d; ++c) mean_in[static_cast<std::size_t>(c)] += h(ui, c);
            }
            if (!in.empty())
                for (double& v : mean_in) v /= static_cast<double>(in.size());
            for (int c = 0; c < d; ++c) {
                double pre = bias(0, c);
                for (int k = 0; k < d; ++k)
                    pre += mean_in[static_cast<std::size_t>(k)] * w_msg(k, c) + h(i, k) * w_self(k, c);
                const double sp = pre > 0.0 ? pre + std::log1p(std::exp(-pre))
                                            : std::log1p(std::exp(pre));
                next(i, c) = h(i, c) + sp;
            }
        }
        h = next;
    }
    return h;
}

} // namespace oracles
