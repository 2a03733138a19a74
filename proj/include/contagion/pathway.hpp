#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "contagion/autodiff.hpp"
#include "contagion/dataset.hpp"
#include "contagion/errors.hpp"
#include "contagion/fusion.hpp"
#include "contagion/graph.hpp"
#include "contagion/intervention.hpp"
#include "contagion/model.hpp"

namespace contagion {

/// Per-node risk scores for one graph plus the graph-level contagion estimate.
struct RiskScores {
    std::map<NodeId, double> per_node;
    double estimate = 0.5; // strictly inside (0, 1)
};

/// Tape-level risk head outputs, for losses that backpropagate through them.
struct RiskVars {
    ad::Var per_node; // 1 x M pre-activations
    ad::Var estimate; // 1 x 1
};

/// Risk head over a set of attention maps: contract the J head axis with
/// the learned head weights and mean-pool the token axis to per-node
/// scores. The graph-level estimate squashes a gated spread statistic of
/// the scores: sigmoid(scale * mean_m tanh^2(gain * (s_m - s_bar) + shift)
/// + bias). A linear node pooling would collapse to a constant because
/// every attention row is a softmax, so the gate reads how attention mass
/// concentrates instead.
inline RiskVars risk_head(ad::Tape& t, const std::vector<ad::Var>& heads, const BoundModel& m) {
    if (heads.empty()) throw DimensionMismatch("risk head needs at least one attention map");
    if (static_cast<int>(heads.size()) != m.hyper->heads)
        throw DimensionMismatch("expected " + std::to_string(m.hyper->heads) +
                                " attention heads, got " + std::to_string(heads.size()));
    std::vector<ad::Var> col_means;
    for (const ad::Var& h : heads) {
        if (!h.value().same_shape(heads[0].value()))
            throw DimensionMismatch("attention heads disagree in shape");
        col_means.push_back(ad::col_mean(t, h)); // 1 x M
    }
    ad::Var stacked = col_means[0];
    for (std::size_t j = 1; j < col_means.size(); ++j)
        stacked = ad::concat_rows(t, stacked, col_means[j]); // J x M
    RiskVars rv;
    rv.per_node = ad::matmul(t, m.pw_head_weights, stacked); // 1 x M
    ad::Var centered = ad::add_scalar_bcast(t, rv.per_node, ad::mean_all(t, rv.per_node), -1.0);
    ad::Var gated = ad::tanh_v(
        t, ad::add_scalar_bcast(t, ad::scalar_mul(t, centered, m.pw_gain), m.pw_shift, 1.0));
    ad::Var pooled = ad::mean_all(t, ad::mul(t, gated, gated));
    rv.estimate = ad::sigmoid_v(
        t, ad::add(t, ad::scalar_mul(t, pooled, m.pw_out_scale), m.pw_out_bias));
    return rv;
}

inline RiskScores node_risk_scores(ad::Tape& t, const AttentionStack& stack,
                                   const std::vector<NodeId>& node_order, const BoundModel& m) {
    RiskVars rv = risk_head(t, stack.heads, m);
    if (static_cast<int>(node_order.size()) != rv.per_node.cols())
        throw DimensionMismatch("node order length does not match attention width");
    RiskScores rs;
    for (std::size_t i = 0; i < node_order.size(); ++i)
        rs.per_node[node_order[i]] = rv.per_node.value()(0, static_cast<int>(i));
    rs.estimate = rv.estimate.scalar();
    return rs;
}

/// Contagion estimate for an arbitrary graph against an already encoded
/// token sequence.
inline ad::Var estimate_for_graph(ad::Tape& t, ad::Var h_token, const KnowledgeGraph& g,
                                  const BoundModel& m) {
    ad::Var h_node = encode_nodes(t, g, m);
    AttentionStack stack = cross_attention_on(t, h_token, h_node, m);
    return risk_head(t, stack.heads, m).estimate;
}

/// L_path = L_Z - L_X from already computed estimates. An empty partition
/// side contributes 0 by definition.
inline ad::Var path_loss_from_estimates(ad::Tape& t, ad::Var factual_estimate,
                                        const std::map<NodeId, ad::Var>& intervened,
                                        const CausalPartition& p) {
    auto side_mean = [&](const std::set<NodeId>& side) -> ad::Var {
        std::vector<ad::Var> diffs;
        for (const NodeId& nu : side) {
            auto it = intervened.find(nu);
            if (it == intervened.end())
                throw NodeNotFound("no estimate for intervened node '" + nu + "'");
            diffs.push_back(ad::sub(t, factual_estimate, it->second));
        }
        if (diffs.empty()) return t.constant(Matrix::zeros(1, 1));
        return ad::scale(t, ad::add_n(t, diffs), 1.0 / static_cast<double>(diffs.size()));
    };
    ad::Var l_x = side_mean(p.causal);
    ad::Var l_z = side_mean(p.non_causal);
    return ad::sub(t, l_z, l_x);
}

/// Full path loss for one instruction: the model forward over every graph
/// in the intervention set, compared across the causal partition.
inline ad::Var path_loss(ad::Tape& t, ad::Var h_token, const InterventionSet& s,
                         const CausalPartition& p, const BoundModel& m,
                         ad::Var factual_estimate = {}) {
    if (!factual_estimate.defined())
        factual_estimate = estimate_for_graph(t, h_token, s.factual.graph, m);
    std::map<NodeId, ad::Var> intervened;
    for (const InterventionEntry& e : s.interventions)
        intervened.emplace(e.node, estimate_for_graph(t, h_token, e.graph, m));
    return path_loss_from_estimates(t, factual_estimate, intervened, p);
}

// --- path extraction ---------------------------------------------------------

/// A concrete source-to-target pathway with per-hop intensities in (0, 1],
/// normalized so the strongest hop is exactly 1.
struct RiskPath {
    std::vector<NodeId> nodes;
    std::vector<double> intensities;
};

namespace detail {

struct PathSearch {
    const KnowledgeGraph* g = nullptr;
    const std::set<NodeId>* allowed = nullptr;
    const std::map<NodeId, double>* scores = nullptr;
    NodeId target;
    std::vector<NodeId> best;
    double best_sum = 0.0;

    void consider(const std::vector<NodeId>& path, double sum) {
        constexpr double kTie = 1e-12;
        if (best.empty() || sum > best_sum + kTie ||
            (std::abs(sum - best_sum) <= kTie && path < best)) {
            best = path;
            best_sum = sum;
        }
    }

    void dfs(std::vector<NodeId>& path, std::set<NodeId>& visited, double sum) {
        const NodeId& u = path.back();
        if (u == target) {
            consider(path, sum);
            return;
        }
        for (const NodeId& w : g->out_neighbors(u)) {
            if (!allowed->count(w) || visited.count(w)) continue;
            path.push_back(w);
            visited.insert(w);
            dfs(path, visited, sum + scores->at(w));
            visited.erase(w);
            path.pop_back();
        }
    }
};

} // namespace detail

/// The directed source->target path through path_nodes maximizing the sum
/// of per-node risk scores. Ties break toward the lexicographically
/// smaller node sequence. Hop intensities are geometric means of the
/// endpoints' min-max scaled scores, renormalized to peak at 1.
inline RiskPath extract_path(const FactualGraph& f, const RiskScores& r) {
    for (const NodeId& v : f.path_nodes)
        if (!r.per_node.count(v))
            throw InconsistentInputs("no risk score for path node '" + v + "'");
    detail::PathSearch search;
    search.g = &f.graph;
    search.allowed = &f.path_nodes;
    search.scores = &r.per_node;
    search.target = f.target;
    if (!f.path_nodes.count(f.source) || !f.path_nodes.count(f.target))
        throw NoPath("factual graph has no source->target path");
    std::vector<NodeId> path{f.source};
    std::set<NodeId> visited{f.source};
    search.dfs(path, visited, r.per_node.at(f.source));
    if (search.best.empty()) throw NoPath("no path survived extraction");

    RiskPath out;
    out.nodes = search.best;
    // Min-max scale scores over the factual graph into (0, 1].
    double lo = r.per_node.begin()->second, hi = lo;
    for (const auto& [id, s] : r.per_node) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    constexpr double kFloor = 1e-6;
    auto scaled = [&](const NodeId& v) {
        if (hi - lo < 1e-300) return 1.0;
        return std::max(kFloor, (r.per_node.at(v) - lo) / (hi - lo));
    };
    double peak = 0.0;
    for (std::size_t i = 0; i + 1 < out.nodes.size(); ++i) {
        const double inten = std::sqrt(scaled(out.nodes[i]) * scaled(out.nodes[i + 1]));
        out.intensities.push_back(inten);
        peak = std::max(peak, inten);
    }
    for (double& v : out.intensities) v /= peak;
    return out;
}

// --- metrics -----------------------------------------------------------------

/// Node-set intersection over union.
inline double iou(const RiskPath& pred, const std::set<NodeId>& truth) {
    if (pred.nodes.empty()) throw EmptyPath("predicted path is empty");
    if (truth.empty()) throw EmptyPath("ground-truth path is empty");
    std::set<NodeId> p(pred.nodes.begin(), pred.nodes.end());
    std::size_t inter = 0;
    for (const NodeId& v : p) inter += truth.count(v);
    const std::size_t uni = p.size() + truth.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Rank-statistic AUC with tied scores counted half. Throws SingleClass
/// when only one label is present.
inline double auc_rank(const std::vector<std::pair<double, int>>& preds) {
    std::size_t n_pos = 0, n_neg = 0;
    for (const auto& [p, y] : preds) (y != 0 ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0)
        throw SingleClass("AUC undefined with a single label class");
    std::vector<std::pair<double, int>> sorted = preds;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j].first == sorted[i].first) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j); // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (sorted[k].second != 0) rank_sum_pos += avg_rank;
        i = j;
    }
    return (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct InstanceRecord {
    std::string id;
    double p_hat = 0.0;
    double label = 0.0;
    std::optional<double> iou;
};

struct EvalReport {
    double acc = 0.0;
    std::optional<double> auc; // undefined with a single class, never 0.5
    double iou_mean = 0.0;
    std::vector<InstanceRecord> per_instance;
};

/// ACC at threshold 0.5 plus rank AUC over (estimate, label) pairs.
inline EvalReport eval_metrics(const std::vector<std::pair<double, int>>& preds) {
    if (preds.empty()) throw EmptyDataset("no predictions to evaluate");
    EvalReport rep;
    std::size_t correct = 0;
    for (const auto& [p, y] : preds) {
        const int decided = p >= 0.5 ? 1 : 0;
        correct += decided == (y != 0 ? 1 : 0);
    }
    rep.acc = static_cast<double>(correct) / static_cast<double>(preds.size());
    try {
        rep.auc = auc_rank(preds);
    } catch (const SingleClass&) {
        rep.auc = std::nullopt;
    }
    return rep;
}

inline nlohmann::ordered_json eval_report_to_json(const EvalReport& rep) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["acc"] = rep.acc;
    j["auc"] = rep.auc ? nlohmann::ordered_json(*rep.auc) : nlohmann::ordered_json(nullptr);
    j["iou_mean"] = rep.iou_mean;
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (const InstanceRecord& r : rep.per_instance) {
        nlohmann::ordered_json e;
        e["id"] = r.id;
        e["p_hat"] = r.p_hat;
        e["label"] = r.label;
        e["iou"] = r.iou ? nlohmann::ordered_json(*r.iou) : nlohmann::ordered_json(nullptr);
        per.push_back(std::move(e));
    }
    j["per_instance"] = std::move(per);
    return j;
}

} // namespace contagion
