#pragma once

#include <array>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "contagion/autodiff.hpp"
#include "contagion/dataset.hpp"
#include "contagion/errors.hpp"
#include "contagion/fusion.hpp"
#include "contagion/model.hpp"
#include "contagion/pathway.hpp"

namespace contagion {

struct TrainConfig {
    int epochs = 5;
    double learning_rate = 0.01;
    int batch_size = 1;
    std::uint64_t seed = 42;
    std::array<double, 3> loss_weights{1.0, 1.0, 1.0}; // (L_cl, L_en, L_path)
    int eval_every = 0; // 0 = only at the end

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be positive");
        if (batch_size < 1) throw ConfigError("batch_size must be positive");
        if (learning_rate < 0.0) throw ConfigError("learning_rate must be non-negative");
        for (double w : loss_weights)
            if (w < 0.0) throw ConfigError("loss weights must be non-negative");
    }
};

struct StepRecord {
    int step = 0;
    double l_cl = 0.0;
    double l_en = 0.0;
    double l_path = 0.0;
    double l_joint = 0.0;
};

struct TrainHistory {
    std::vector<StepRecord> steps;
    std::vector<int> epoch_boundaries; // first step index of each epoch
    std::vector<std::pair<int, EvalReport>> interim_evals; // (step, report) per eval_every
    EvalReport final_metrics;

    double epoch_mean_joint(int epoch) const {
        const std::size_t lo = static_cast<std::size_t>(epoch_boundaries.at(static_cast<std::size_t>(epoch)));
        const std::size_t hi = epoch + 1 < static_cast<int>(epoch_boundaries.size())
                                   ? static_cast<std::size_t>(epoch_boundaries[static_cast<std::size_t>(epoch) + 1])
                                   : steps.size();
        double sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i) sum += steps[i].l_joint;
        return sum / static_cast<double>(hi - lo);
    }
};

inline std::string history_to_csv(const TrainHistory& h) {
    std::ostringstream out;
    out.precision(17);
    out << "step,l_cl,l_en,l_path,l_joint\n";
    for (const StepRecord& r : h.steps)
        out << r.step << ',' << r.l_cl << ',' << r.l_en << ',' << r.l_path << ',' << r.l_joint
            << '\n';
    return out.str();
}

namespace detail {

/// Per-instruction immutable training context: tokens, partition, labels.
struct PreparedInstruction {
    const Instruction* inst = nullptr;
    std::vector<int> token_ids;
    CausalPartition partition;
};

inline std::vector<PreparedInstruction> prepare(const std::vector<Instruction>& dataset,
                                                const ModelState& m) {
    if (dataset.empty()) throw EmptyDataset("no instructions");
    if (m.vocab.empty() || m.hyper.vocab_size != static_cast<int>(m.vocab.size()))
        throw VocabMismatch("model carries no usable vocabulary");
    const Vocab vocab = Vocab::from_tokens(m.vocab);
    std::vector<PreparedInstruction> out;
    out.reserve(dataset.size());
    for (const Instruction& inst : dataset) {
        PreparedInstruction p;
        p.inst = &inst;
        p.token_ids = inst.token_ids(vocab);
        p.partition = classify_nodes(inst.set);
        out.push_back(std::move(p));
    }
    return out;
}

struct InstanceLosses {
    ad::Var l_cl, l_en, l_path;
};

inline InstanceLosses instance_losses(ad::Tape& t, const PreparedInstruction& p,
                                      const BoundModel& bm) {
    EncodedPair pair;
    pair.token_ids = p.token_ids;
    pair.h_token = encode_tokens(t, p.token_ids, bm);
    pair.h_node = encode_nodes(t, p.inst->set.factual.graph, bm);
    pair.node_order = p.inst->set.factual.graph.node_ids();

    InstanceLosses out;
    out.l_cl = contrastive_loss(t, pair, p.inst->alignment, p.inst->set.factual, bm);
    AttentionStack stack = cross_attention(t, pair, bm);
    out.l_en = generation_loss(t, stack, p.token_ids, bm);
    ad::Var factual_estimate = risk_head(t, stack.heads, bm).estimate;
    out.l_path = path_loss(t, pair.h_token, p.inst->set, p.partition, bm, factual_estimate);
    return out;
}

} // namespace detail

/// Forwards every instance, thresholds the estimate, and aggregates
/// ACC / AUC / mean path IoU against the oracle causal chain.
inline EvalReport evaluate(ModelState& m, const std::vector<Instruction>& dataset) {
    const auto prepared = detail::prepare(dataset, m);
    std::vector<std::pair<double, int>> preds;
    std::vector<InstanceRecord> records;
    double iou_sum = 0.0;
    std::size_t iou_count = 0;
    for (const auto& p : prepared) {
        ad::Tape t;
        ModelVars mv = bind_model(t, m, /*needs_grad=*/false);
        BoundModel bm = bound_view(mv, m);
        ad::Var h_token = encode_tokens(t, p.token_ids, bm);

        AttentionStack factual_stack =
            cross_attention_on(t, h_token, encode_nodes(t, p.inst->set.factual.graph, bm), bm);
        RiskScores scores =
            node_risk_scores(t, factual_stack, p.inst->set.factual.graph.node_ids(), bm);

        double p_hat = scores.estimate;
        if (!p.inst->referenced.empty()) {
            const InterventionEntry& e = find_intervention(p.inst->set, p.inst->referenced);
            p_hat = estimate_for_graph(t, h_token, e.graph, bm).scalar();
        }
        if (!std::isfinite(p_hat)) throw NonFiniteLoss("estimate for '" + p.inst->id + "'");

        InstanceRecord rec;
        rec.id = p.inst->id;
        rec.p_hat = p_hat;
        rec.label = p.inst->label;
        const std::vector<NodeId> chain = causal_chain(p.partition, p.inst->set.factual);
        RiskPath predicted = extract_path(p.inst->set.factual, scores);
        rec.iou = iou(predicted, std::set<NodeId>(chain.begin(), chain.end()));
        iou_sum += *rec.iou;
        ++iou_count;

        preds.push_back({p_hat, p.inst->label > 0.5 ? 1 : 0});
        records.push_back(std::move(rec));
    }
    EvalReport rep = eval_metrics(preds);
    rep.iou_mean = iou_count ? iou_sum / static_cast<double>(iou_count) : 0.0;
    rep.per_instance = std::move(records);
    return rep;
}

/// Plain gradient descent over the joint loss with a seeded shuffle per
/// epoch. Deterministic: identical (dataset, config, init) reproduce the
/// history bit for bit.
inline std::pair<ModelState, TrainHistory> train(const std::vector<Instruction>& dataset,
                                                 const TrainConfig& cfg, ModelState init) {
    cfg.validate();
    ModelState m = std::move(init);
    const auto prepared = detail::prepare(dataset, m);
    const auto [w_cl, w_en, w_path] = cfg.loss_weights;

    TrainHistory history;
    Rng shuffle_rng(splitmix64(cfg.seed ^ 0x7261696e5f6f7264ULL));
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        history.epoch_boundaries.push_back(static_cast<int>(history.steps.size()));
        std::vector<std::size_t> order(prepared.size());
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);

        std::size_t cursor = 0;
        while (cursor < order.size()) {
            const std::size_t batch_end =
                std::min(order.size(), cursor + static_cast<std::size_t>(cfg.batch_size));
            m.zero_grad();
            double sum_cl = 0.0, sum_en = 0.0, sum_path = 0.0;
            const double inv_batch = 1.0 / static_cast<double>(batch_end - cursor);
            for (std::size_t bi = cursor; bi < batch_end; ++bi) {
                const auto& p = prepared[order[bi]];
                ad::Tape t;
                ModelVars mv = bind_model(t, m, /*needs_grad=*/true);
                BoundModel bm = bound_view(mv, m);
                detail::InstanceLosses losses = detail::instance_losses(t, p, bm);
                ad::Var joint = ad::add_n(
                    t, {ad::scale(t, losses.l_cl, w_cl * inv_batch),
                        ad::scale(t, losses.l_en, w_en * inv_batch),
                        ad::scale(t, losses.l_path, w_path * inv_batch)});
                if (!std::isfinite(joint.scalar()))
                    throw NonFiniteLoss("joint loss at step " + std::to_string(step + 1) +
                                        " (instruction '" + p.inst->id + "')");
                t.backward(joint);
                harvest_grads(mv, m);
                sum_cl += losses.l_cl.scalar();
                sum_en += losses.l_en.scalar();
                sum_path += losses.l_path.scalar();
            }
            m.sgd_step(cfg.learning_rate);
            if (!m.all_finite())
                throw NonFiniteLoss("parameters diverged at step " + std::to_string(step + 1));

            StepRecord rec;
            rec.step = ++step;
            rec.l_cl = sum_cl * inv_batch;
            rec.l_en = sum_en * inv_batch;
            rec.l_path = sum_path * inv_batch;
            rec.l_joint = w_cl * rec.l_cl + w_en * rec.l_en + w_path * rec.l_path;
            history.steps.push_back(rec);
            if (cfg.eval_every > 0 && step % cfg.eval_every == 0)
                history.interim_evals.push_back({step, evaluate(m, dataset)});
            cursor = batch_end;
        }
    }
    history.final_metrics = evaluate(m, dataset);
    return {std::move(m), std::move(history)};
}

} // namespace contagion
