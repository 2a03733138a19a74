#pragma once

#include <string>
#include <vector>

#include "contagion/dataset.hpp"
#include "contagion/fusion.hpp"
#include "contagion/gradcheck.hpp"
#include "contagion/pathway.hpp"
#include "contagion/tokenizer.hpp"

namespace contagion {

/// A purpose-built miniature instance for gradient audits: a three-node
/// chain with one attached sink and a hand-written twelve-token text, so
/// finite differences stay sharp (L <= 12, M <= 6).
struct AuditCase {
    Instruction inst;
    CausalPartition partition;
    std::vector<std::string> vocab_tokens;
};

inline AuditCase make_audit_case() {
    KnowledgeGraph::Builder b;
    b.add_node("a1", "Alpha One", "bank");
    b.add_node("a2", "Beta Two", "fund");
    b.add_node("a3", "Gamma Three", "insurer");
    b.add_node("a4", "Delta Four", "broker");
    b.add_edge("a1", "a2", "lends_to");
    b.add_edge("a2", "a3", "lends_to");
    b.add_edge("a2", "a4", "rates");
    FactualGraph f = dfs_extract(std::move(b).build(), "a1", "a3", 4, 1);

    AuditCase c;
    c.inst.id = "audit_000000";
    c.inst.topic = "Stock";
    c.inst.group = Group::factual;
    c.inst.set = build_intervention_set(f);
    c.partition = classify_nodes(c.inst.set);
    c.inst.label = c.inst.set.factual_label.value;
    c.inst.query = "Alpha One Beta Two Gamma Three Delta Four risk";
    c.inst.explanation = "chain";
    c.inst.alignment = {{0, 2, "a1"}, {2, 4, "a2"}, {4, 6, "a3"}, {6, 8, "a4"}};

    Vocab vocab;
    for (const std::string& tok : tokenize(c.inst.query)) vocab.add(tok);
    for (const std::string& tok : tokenize(c.inst.explanation)) vocab.add(tok);
    c.vocab_tokens = vocab.tokens();
    return c;
}

inline LossBuilder contrastive_loss_builder(const Instruction& inst) {
    return [&inst](ad::Tape& t, const BoundModel& bm) {
        EncodedPair pair = encode_pair(t, inst, bm);
        return contrastive_loss(t, pair, inst.alignment, inst.set.factual, bm);
    };
}

inline LossBuilder generation_loss_builder(const Instruction& inst) {
    return [&inst](ad::Tape& t, const BoundModel& bm) {
        EncodedPair pair = encode_pair(t, inst, bm);
        AttentionStack stack = cross_attention(t, pair, bm);
        return generation_loss(t, stack, pair.token_ids, bm);
    };
}

inline LossBuilder path_loss_builder(const Instruction& inst, const CausalPartition& partition) {
    return [&inst, &partition](ad::Tape& t, const BoundModel& bm) {
        EncodedPair pair = encode_pair(t, inst, bm);
        return path_loss(t, pair.h_token, inst.set, partition, bm);
    };
}

struct AuditResult {
    double err_cl = 0.0;
    double err_en = 0.0;
    double err_path = 0.0;

    double worst() const { return std::max({err_cl, err_en, err_path}); }
};

/// Runs the finite-difference audit of all three losses on the miniature
/// instance at d = 16.
inline AuditResult run_gradient_audit(double eps = 1e-5, int coords = 200,
                                      std::uint64_t seed = 42) {
    AuditCase c = make_audit_case();
    Hyper h;
    h.d = 16;
    h.heads = 4;
    ModelState m = init_model(h, c.vocab_tokens, seed);
    AuditResult r;
    r.err_cl = finite_difference_check(m, contrastive_loss_builder(c.inst), eps, coords, seed + 1);
    r.err_en = finite_difference_check(m, generation_loss_builder(c.inst), eps, coords, seed + 2);
    r.err_path =
        finite_difference_check(m, path_loss_builder(c.inst, c.partition), eps, coords, seed + 3);
    return r;
}

} // namespace contagion
