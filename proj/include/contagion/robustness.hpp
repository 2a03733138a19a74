#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "contagion/dataset.hpp"
#include "contagion/errors.hpp"
#include "contagion/intervention.hpp"
#include "contagion/rng.hpp"
#include "contagion/trainer.hpp"

namespace contagion {

struct RobustnessReport {
    std::string mode;
    std::uint64_t seed = 0;
    nlohmann::ordered_json params;
    EvalReport base;
    EvalReport perturbed;
    double d_acc = 0.0;
    std::optional<double> d_auc;
    double d_iou = 0.0;

    void finalize() {
        d_acc = perturbed.acc - base.acc;
        if (base.auc && perturbed.auc) d_auc = *perturbed.auc - *base.auc;
        d_iou = perturbed.iou_mean - base.iou_mean;
    }
};

inline nlohmann::ordered_json robustness_report_to_json(const RobustnessReport& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["mode"] = r.mode;
    j["seed"] = r.seed;
    j["params"] = r.params;
    j["base"] = eval_report_to_json(r.base);
    j["perturbed"] = eval_report_to_json(r.perturbed);
    j["delta"]["acc"] = r.d_acc;
    j["delta"]["auc"] = r.d_auc ? nlohmann::ordered_json(*r.d_auc) : nlohmann::ordered_json(nullptr);
    j["delta"]["iou_mean"] = r.d_iou;
    return j;
}

/// Adds n_add confounder nodes to the factual graph, each with one to three
/// outgoing edges into existing nodes and no incoming edges, so no new
/// source->target path can appear. The intervention set is rebuilt from the
/// confounded factual graph.
inline Instruction confound_instruction(const Instruction& inst, int n_add, Rng& rng) {
    if (n_add == 0) return inst;
    const FactualGraph& f = inst.set.factual;
    KnowledgeGraph::Builder b;
    for (const auto& [id, info] : f.graph.nodes()) b.add_node(id, info.label, info.entity_type);
    for (const Edge& e : f.graph.edges()) b.add_edge(e.src, e.dst, e.relation_type);

    const std::vector<NodeId> existing = f.graph.node_ids();
    std::set<NodeId> new_nodes;
    for (int k = 0; k < n_add; ++k) {
        const NodeId id = "zconf_" + forge::pad_int(k, 2);
        b.add_node(id, "Confounder Node " + std::to_string(k + 1), "confounder");
        new_nodes.insert(id);
        const int fanout = static_cast<int>(rng.range(1, 3));
        std::vector<NodeId> targets = existing;
        rng.shuffle(targets);
        for (int e = 0; e < fanout && e < static_cast<int>(targets.size()); ++e)
            b.add_edge(id, targets[static_cast<std::size_t>(e)], "confounds");
    }

    FactualGraph confounded;
    confounded.graph = std::move(b).build();
    confounded.source = f.source;
    confounded.target = f.target;
    confounded.path_nodes = f.path_nodes; // outgoing-only nodes cannot join a path
    confounded.attached_nodes = f.attached_nodes;
    confounded.attached_nodes.insert(new_nodes.begin(), new_nodes.end());
    confounded.validate();

    Instruction out = inst;
    out.set = build_intervention_set(confounded);
    if (!out.referenced.empty())
        out.label = find_intervention(out.set, out.referenced).label.value;
    return out;
}

/// Exact check that confounding left every original node's causal effect
/// untouched.
inline bool confounder_effects_unchanged(const Instruction& original,
                                         const Instruction& perturbed) {
    for (const InterventionEntry& e : original.set.interventions)
        if (intervention_effect(original.set, e.node) !=
            intervention_effect(perturbed.set, e.node))
            return false;
    return true;
}

/// Random Confounder test: evaluates the model before and after injecting
/// confounder nodes into every factual graph and reports the metric deltas.
inline RobustnessReport random_confounder_test(ModelState& m,
                                               const std::vector<Instruction>& instances,
                                               int n_add, std::uint64_t seed) {
    if (n_add < 0) throw ConfigError("n_add must be non-negative");
    RobustnessReport rep;
    rep.mode = "random_confounder";
    rep.seed = seed;
    rep.params = {{"n_add", n_add}};
    rep.base = evaluate(m, instances);
    Rng rng(splitmix64(seed ^ 0xC0FFEEULL));
    std::vector<Instruction> perturbed;
    perturbed.reserve(instances.size());
    for (const Instruction& inst : instances) perturbed.push_back(confound_instruction(inst, n_add, rng));
    rep.perturbed = evaluate(m, perturbed);
    rep.finalize();
    return rep;
}

namespace detail {

inline KnowledgeGraph drop_nodes(const KnowledgeGraph& g, const std::set<NodeId>& dropped) {
    KnowledgeGraph::Builder b;
    for (const auto& [id, info] : g.nodes())
        if (!dropped.count(id)) b.add_node(id, info.label, info.entity_type);
    for (const Edge& e : g.edges())
        if (!dropped.count(e.src) && !dropped.count(e.dst))
            b.add_edge(e.src, e.dst, e.relation_type);
    return std::move(b).build();
}

} // namespace detail

/// Subset-of-Data test: removes a fraction of the non-terminal nodes from
/// each factual graph, relabels every instance with the reachability
/// oracle, and re-evaluates. Instances whose pruned factual graph loses
/// its path keep their (now 0) contagion label but drop out of the IoU
/// average.
inline RobustnessReport subset_of_data_test(ModelState& m,
                                            const std::vector<Instruction>& instances,
                                            double drop_fraction, std::uint64_t seed) {
    if (!(drop_fraction > 0.0 && drop_fraction < 1.0))
        throw ConfigError("drop_fraction must lie in (0, 1)");
    RobustnessReport rep;
    rep.mode = "subset_of_data";
    rep.seed = seed;
    rep.params = {{"drop_fraction", drop_fraction}};
    rep.base = evaluate(m, instances);

    if (m.vocab.empty()) throw VocabMismatch("model carries no usable vocabulary");
    const Vocab vocab = Vocab::from_tokens(m.vocab);
    Rng rng(splitmix64(seed ^ 0x5B5E7ULL));

    std::vector<std::pair<double, int>> preds;
    std::vector<InstanceRecord> records;
    double iou_sum = 0.0;
    std::size_t iou_count = 0;
    for (const Instruction& inst : instances) {
        const FactualGraph& f = inst.set.factual;
        std::vector<NodeId> candidates;
        for (const NodeId& id : f.graph.node_ids())
            if (id != f.source && id != f.target) candidates.push_back(id);
        const auto n_drop = static_cast<std::size_t>(
            std::ceil(drop_fraction * static_cast<double>(candidates.size())));
        rng.shuffle(candidates);
        std::set<NodeId> dropped(candidates.begin(),
                                 candidates.begin() + static_cast<std::ptrdiff_t>(
                                                          std::min(n_drop, candidates.size())));

        KnowledgeGraph pruned_factual = detail::drop_nodes(f.graph, dropped);
        std::set<NodeId> referenced_drop = dropped;
        if (!inst.referenced.empty()) referenced_drop.erase(inst.referenced);
        KnowledgeGraph scored_graph =
            inst.referenced.empty() ? pruned_factual
                                    : detail::drop_nodes(find_intervention(inst.set, inst.referenced).graph,
                                                         referenced_drop);
        const double label = contagion_probability(scored_graph, f.source, f.target).value;

        ad::Tape t;
        ModelVars mv = bind_model(t, m, /*needs_grad=*/false);
        BoundModel bm = bound_view(mv, m);
        ad::Var h_token = encode_tokens(t, inst.token_ids(vocab), bm);
        const double p_hat = estimate_for_graph(t, h_token, scored_graph, bm).scalar();

        InstanceRecord rec;
        rec.id = inst.id;
        rec.p_hat = p_hat;
        rec.label = label;
        if (has_directed_path(pruned_factual, f.source, f.target)) {
            FactualGraph pruned = dfs_extract(pruned_factual, f.source, f.target,
                                              static_cast<int>(pruned_factual.node_count()),
                                              /*attach_hops=*/1);
            InterventionSet pruned_set = build_intervention_set(pruned);
            const CausalPartition part = classify_nodes(pruned_set);
            AttentionStack stack =
                cross_attention_on(t, h_token, encode_nodes(t, pruned.graph, bm), bm);
            RiskScores scores = node_risk_scores(t, stack, pruned.graph.node_ids(), bm);
            const std::vector<NodeId> chain = causal_chain(part, pruned);
            rec.iou = iou(extract_path(pruned, scores), std::set<NodeId>(chain.begin(), chain.end()));
            iou_sum += *rec.iou;
            ++iou_count;
        }
        preds.push_back({p_hat, label > 0.5 ? 1 : 0});
        records.push_back(std::move(rec));
    }
    rep.perturbed = eval_metrics(preds);
    rep.perturbed.iou_mean = iou_count ? iou_sum / static_cast<double>(iou_count) : 0.0;
    rep.perturbed.per_instance = std::move(records);
    rep.finalize();
    return rep;
}

} // namespace contagion
