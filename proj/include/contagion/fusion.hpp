#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "contagion/autodiff.hpp"
#include "contagion/dataset.hpp"
#include "contagion/errors.hpp"
#include "contagion/graph.hpp"
#include "contagion/matrix.hpp"
#include "contagion/model.hpp"
#include "contagion/rng.hpp"
#include "contagion/tokenizer.hpp"

namespace contagion {

/// Token-side and node-side encodings of one instance.
struct EncodedPair {
    ad::Var h_token; // L x d
    ad::Var h_node;  // M x d (factual graph, deterministic node order)
    std::vector<int> token_ids;
    std::vector<NodeId> node_order;
};

/// Cross multi-head attention products for one graph.
struct AttentionStack {
    std::vector<ad::Var> heads; // J matrices, each L x M, rows softmaxed
    ad::Var prompt;             // L x d soft prompt
    ad::Var fused;              // 2L x d: prompt stacked atop h_token
};

namespace fusion {

/// Fixed (non-learned) node input features: the sum of an entity-type
/// direction and a label-hash direction, both seeded deterministically.
inline Matrix node_input_features(const KnowledgeGraph& g, int d) {
    const auto ids = g.node_ids();
    Matrix x(static_cast<int>(ids.size()), d);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const NodeInfo& info = g.node_info(ids[i]);
        Rng type_rng(fnv1a("etype:" + info.entity_type));
        Rng label_rng(fnv1a("label:" + info.label));
        for (int j = 0; j < d; ++j)
            x(static_cast<int>(i), j) =
                type_rng.uniform(-bound, bound) + label_rng.uniform(-bound, bound);
    }
    return x;
}

/// Row-stochastic mean-aggregation matrix over distinct in-neighbors;
/// rows of in-degree-zero nodes stay zero (no message).
inline Matrix mean_in_aggregation(const KnowledgeGraph& g) {
    const auto ids = g.node_ids();
    const int m = static_cast<int>(ids.size());
    Matrix agg(m, m);
    std::map<NodeId, int> index;
    for (int i = 0; i < m; ++i) index[ids[static_cast<std::size_t>(i)]] = i;
    for (int i = 0; i < m; ++i) {
        const auto& in = g.in_neighbors(ids[static_cast<std::size_t>(i)]);
        if (in.empty()) continue;
        const double w = 1.0 / static_cast<double>(in.size());
        for (const NodeId& u : in) agg(i, index.at(u)) = w;
    }
    return agg;
}

/// Mean-pooling matrix over undirected k-hop neighborhoods (self included).
inline Matrix khop_pool(const KnowledgeGraph& g, int k) {
    const auto ids = g.node_ids();
    const int m = static_cast<int>(ids.size());
    Matrix pool(m, m);
    std::map<NodeId, int> index;
    for (int i = 0; i < m; ++i) index[ids[static_cast<std::size_t>(i)]] = i;
    for (int i = 0; i < m; ++i) {
        const auto hood = k_hop_neighborhood(g, ids[static_cast<std::size_t>(i)], k);
        const double w = 1.0 / static_cast<double>(hood.size());
        for (const NodeId& u : hood) pool(i, index.at(u)) = w;
    }
    return pool;
}

/// Mean-pooling matrix over the centered w-token context window, clipped
/// at sequence boundaries.
inline Matrix context_pool(int seq_len, int w) {
    Matrix pool(seq_len, seq_len);
    const int half = (w - 1) / 2;
    for (int i = 0; i < seq_len; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(seq_len - 1, i + half);
        const double weight = 1.0 / static_cast<double>(hi - lo + 1);
        for (int j = lo; j <= hi; ++j) pool(i, j) = weight;
    }
    return pool;
}

/// One language block: single-head self-attention and a feed-forward tail,
/// each with a residual connection. All-zero weights give an identity map.
inline ad::Var lang_block(ad::Tape& t, ad::Var h, const BoundModel::Block& blk, int d) {
    ad::Var q = ad::matmul(t, h, blk.wq);
    ad::Var k = ad::matmul(t, h, blk.wk);
    ad::Var v = ad::matmul(t, h, blk.wv);
    ad::Var scores = ad::scale(t, ad::matmul_nt(t, q, k), 1.0 / std::sqrt(static_cast<double>(d)));
    ad::Var attn = ad::row_softmax(t, scores);
    h = ad::add(t, h, ad::matmul(t, ad::matmul(t, attn, v), blk.wo));
    ad::Var hidden = ad::softplus(t, ad::add_rowvec(t, ad::matmul(t, h, blk.w1), blk.b1));
    return ad::add(t, h, ad::add_rowvec(t, ad::matmul(t, hidden, blk.w2), blk.b2));
}

} // namespace fusion

/// Embedding lookup plus the lower language stack: H_token at the split layer.
inline ad::Var encode_tokens(ad::Tape& t, const std::vector<int>& token_ids,
                             const BoundModel& m) {
    if (token_ids.empty()) throw EmptyInput("cannot encode an empty token sequence");
    for (int id : token_ids)
        if (id < 0 || id >= m.hyper->vocab_size)
            throw LabelOutOfRange("token id " + std::to_string(id));
    ad::Var h = ad::gather_rows(t, m.token_embeddings, token_ids);
    for (const auto& blk : m.lower) h = fusion::lang_block(t, h, blk, m.hyper->d);
    return h;
}

/// Graph encoder: fixed input features, then gnn_rounds of
/// residual(act(mean-in-message * W_msg + self * W_self + bias)).
inline ad::Var encode_nodes(ad::Tape& t, const KnowledgeGraph& g, const BoundModel& m) {
    if (g.empty()) throw EmptyGraph("cannot encode an empty graph");
    Matrix agg = fusion::mean_in_aggregation(g);
    ad::Var h = t.constant(fusion::node_input_features(g, m.hyper->d));
    for (const auto& layer : m.gnn) {
        ad::Var msg = ad::matmul(t, ad::lmul_const(t, agg, h), layer.w_msg);
        ad::Var self = ad::matmul(t, h, layer.w_self);
        ad::Var pre = ad::add_rowvec(t, ad::add(t, msg, self), layer.bias);
        h = ad::add(t, h, ad::softplus(t, pre));
    }
    return h;
}

/// Convenience wrapper producing the encoded pair for an instruction
/// (token stream over [query ; <sep> ; explanation], nodes of the factual graph).
inline EncodedPair encode_pair(ad::Tape& t, const Instruction& inst, const BoundModel& m) {
    EncodedPair pair;
    pair.token_ids = inst.token_ids(Vocab::from_tokens(*m.vocab));
    pair.h_token = encode_tokens(t, pair.token_ids, m);
    pair.h_node = encode_nodes(t, inst.set.factual.graph, m);
    pair.node_order = inst.set.factual.graph.node_ids();
    return pair;
}

namespace fusion {

/// One InfoNCE family term: mean over the aligned (anchor-row, cand-row)
/// positives of softplus(lse_over_unaligned - s_positive), i.e.
/// -log(exp(s+)/ (exp(s+) + sum of unaligned pair scores)). Cosine
/// similarities, temperature tau.
inline ad::Var infonce_term(ad::Tape& t, ad::Var anchors, ad::Var cands,
                            const std::vector<std::pair<int, int>>& positives, double tau) {
    ad::Var an = ad::row_l2_normalize(t, anchors);
    ad::Var cn = ad::row_l2_normalize(t, cands);
    ad::Var sim = ad::scale(t, ad::matmul_nt(t, an, cn), 1.0 / tau);

    Matrix unaligned = Matrix::full(sim.rows(), sim.cols(), 1.0);
    for (const auto& [i, j] : positives) unaligned(i, j) = 0.0;
    bool any_negative = false;
    for (double v : unaligned.a)
        if (v != 0.0) any_negative = true;

    std::vector<ad::Var> losses;
    ad::Var neg_lse;
    if (any_negative) neg_lse = ad::masked_logsumexp(t, sim, unaligned);
    for (const auto& [i, j] : positives) {
        ad::Var pos = ad::cell(t, sim, i, j);
        if (any_negative)
            losses.push_back(ad::softplus(t, ad::sub(t, neg_lse, pos)));
        else
            losses.push_back(t.constant(Matrix::zeros(1, 1)));
    }
    return ad::scale(t, ad::add_n(t, losses), 1.0 / static_cast<double>(losses.size()));
}

/// Expands span alignments into (token index, node index) positive pairs.
inline std::vector<std::pair<int, int>> positive_pairs(const std::vector<AlignEntry>& alignment,
                                                       const std::vector<NodeId>& node_order,
                                                       int seq_len) {
    std::map<NodeId, int> index;
    for (std::size_t i = 0; i < node_order.size(); ++i)
        index[node_order[i]] = static_cast<int>(i);
    std::vector<std::pair<int, int>> pairs;
    for (const AlignEntry& a : alignment) {
        auto it = index.find(a.node);
        if (it == index.end())
            throw NodeNotFound("aligned node '" + a.node + "' not in the factual graph");
        for (int tok = a.begin; tok < a.end; ++tok) {
            if (tok < 0 || tok >= seq_len)
                throw DimensionMismatch("alignment span outside the token sequence");
            pairs.push_back({tok, it->second});
        }
    }
    return pairs;
}

} // namespace fusion

/// Multi-scale contrastive loss: token/context anchors against node/subgraph
/// candidates, four InfoNCE terms summed.
inline ad::Var contrastive_loss(ad::Tape& t, const EncodedPair& pair,
                                const std::vector<AlignEntry>& alignment, const FactualGraph& f,
                                const BoundModel& m) {
    if (alignment.empty()) throw NoPositives("contrastive loss needs at least one aligned pair");
    const auto positives = fusion::positive_pairs(alignment, pair.node_order,
                                                  static_cast<int>(pair.token_ids.size()));
    const double tau = m.hyper->tau;
    ad::Var subgraph = ad::lmul_const(t, fusion::khop_pool(f.graph, m.hyper->k_hops), pair.h_node);
    ad::Var context = ad::lmul_const(
        t, fusion::context_pool(pair.h_token.rows(), m.hyper->context_span), pair.h_token);

    ad::Var token_node = fusion::infonce_term(t, pair.h_token, pair.h_node, positives, tau);
    ad::Var token_subgraph = fusion::infonce_term(t, pair.h_token, subgraph, positives, tau);
    ad::Var context_node = fusion::infonce_term(t, context, pair.h_node, positives, tau);
    ad::Var context_subgraph = fusion::infonce_term(t, context, subgraph, positives, tau);
    return ad::add_n(t, {token_node, token_subgraph, context_node, context_subgraph});
}

/// Cross multi-head attention between a token encoding and a node encoding:
/// queries from tokens, keys/values from nodes, per-head row softmax,
/// concatenated soft prompt, fused sequence [P ; H_token].
inline AttentionStack cross_attention_on(ad::Tape& t, ad::Var h_token, ad::Var h_node,
                                         const BoundModel& m) {
    const int d = m.hyper->d;
    const int J = m.hyper->heads;
    const int dh = m.hyper->head_dim();
    if (h_token.cols() != d || h_node.cols() != d)
        throw DimensionMismatch("cross attention input width");

    ad::Var q = ad::matmul(t, h_token, m.wq_cross);
    ad::Var k = ad::matmul(t, h_node, m.wk_cross);
    ad::Var v = ad::matmul(t, h_node, m.wv_cross);

    AttentionStack stack;
    std::vector<ad::Var> head_outputs;
    for (int j = 0; j < J; ++j) {
        ad::Var qj = ad::slice_cols(t, q, j * dh, (j + 1) * dh);
        ad::Var kj = ad::slice_cols(t, k, j * dh, (j + 1) * dh);
        ad::Var vj = ad::slice_cols(t, v, j * dh, (j + 1) * dh);
        ad::Var scores =
            ad::scale(t, ad::matmul_nt(t, qj, kj), 1.0 / std::sqrt(static_cast<double>(dh)));
        ad::Var attn = ad::row_softmax(t, scores);
        stack.heads.push_back(attn);
        head_outputs.push_back(ad::matmul(t, attn, vj));
    }
    stack.prompt = ad::concat_cols(t, head_outputs);
    stack.fused = ad::concat_rows(t, stack.prompt, h_token);
    return stack;
}

inline AttentionStack cross_attention(ad::Tape& t, const EncodedPair& pair, const BoundModel& m) {
    return cross_attention_on(t, pair.h_token, pair.h_node, m);
}

/// Upper-stack logits over the fused sequence (2L x C).
inline ad::Var generation_logits(ad::Tape& t, const AttentionStack& stack, const BoundModel& m) {
    ad::Var h = stack.fused;
    for (const auto& blk : m.upper) h = fusion::lang_block(t, h, blk, m.hyper->d);
    return ad::matmul(t, h, m.lm_head);
}

/// Token probabilities T: row-softmaxed logits, 2L rows.
inline ad::Var generation_probs(ad::Tape& t, const AttentionStack& stack, const BoundModel& m) {
    return ad::row_softmax(t, generation_logits(t, stack, m));
}

/// Mean cross-entropy of the last L fused rows against the ground-truth
/// token labels.
inline ad::Var generation_loss(ad::Tape& t, const AttentionStack& stack,
                               const std::vector<int>& labels, const BoundModel& m) {
    const int two_l = stack.fused.rows();
    const int l = two_l / 2;
    if (static_cast<int>(labels.size()) != l)
        throw DimensionMismatch("generation labels must cover the last " + std::to_string(l) +
                                " rows");
    for (int id : labels)
        if (id < 0 || id >= m.hyper->vocab_size)
            throw LabelOutOfRange("label id " + std::to_string(id));
    ad::Var logits = generation_logits(t, stack, m);
    return ad::cross_entropy_rows(t, logits, labels, /*from_row=*/l);
}

} // namespace contagion
