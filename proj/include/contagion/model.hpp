#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "contagion/autodiff.hpp"
#include "contagion/errors.hpp"
#include "contagion/matrix.hpp"
#include "contagion/rng.hpp"
#include "contagion/tokenizer.hpp"

namespace contagion {

/// Model-wide dimensions. `d` is the shared embedding width, `heads` the
/// number of cross-attention heads (d must divide evenly), `split_layer`
/// the number of language blocks below the fusion point.
struct Hyper {
    int d = 32;
    int heads = 8;          // J
    int split_layer = 2;    // lower language blocks (l)
    int upper_layers = 2;
    int gnn_rounds = 4;
    int ffn_mult = 2;
    int k_hops = 2;         // subgraph pooling radius (k)
    int context_span = 3;   // token context window (w)
    double tau = 1.0;
    int vocab_size = 0;     // C

    int head_dim() const { return d / heads; }

    void validate() const {
        if (d <= 0 || heads <= 0 || d % heads != 0)
            throw DimensionMismatch("hidden width " + std::to_string(d) +
                                    " not divisible by " + std::to_string(heads) + " heads");
        if (vocab_size < 2) throw VocabMismatch("vocabulary too small");
        if (tau <= 0.0) throw DimensionMismatch("temperature must be positive");
        if (context_span < 1 || context_span % 2 == 0)
            throw DimensionMismatch("context span must be odd and positive");
    }
};

struct Param {
    std::string name;
    Matrix value;
    Matrix grad;

    void ensure_grad() {
        if (grad.rows != value.rows || grad.cols != value.cols)
            grad = Matrix::zeros(value.rows, value.cols);
    }
};

/// Self-attention block with a small feed-forward tail; residual around
/// both halves, so zero weights make the block an identity map.
struct LangBlockParams {
    Param wq, wk, wv, wo;
    Param w1, b1, w2, b2;
};

struct GnnLayerParams {
    Param w_msg;  // transform of the mean in-neighbor message
    Param w_self; // transform of the node's own state
    Param bias;
};

/// Risk-score head: per-head contraction weights plus the scalar gate that
/// turns per-node scores into the graph-level estimate.
struct PathwayParams {
    Param head_weights; // 1 x J
    Param gain;         // 1 x 1
    Param shift;        // 1 x 1
    Param out_scale;    // 1 x 1
    Param out_bias;     // 1 x 1
};

/// All trainable parameters of the desk-scale stack: token embeddings,
/// lower/upper language blocks, graph encoder, cross-attention projections,
/// generation head, and the risk-score head.
struct ModelState {
    Hyper hyper;
    std::vector<std::string> vocab; // id -> token, frozen at init

    Param token_embeddings; // C x d
    std::vector<LangBlockParams> lower;
    std::vector<LangBlockParams> upper;
    std::vector<GnnLayerParams> gnn;
    Param wq_cross, wk_cross, wv_cross; // d x d, columns grouped per head
    Param lm_head;                      // d x C
    PathwayParams pathway;

    /// Fixed traversal order; the checkpoint layout and SGD both use it.
    template <class Fn>
    void for_each_param(Fn&& fn) {
        fn(token_embeddings);
        for (auto& b : lower) {
            fn(b.wq); fn(b.wk); fn(b.wv); fn(b.wo);
            fn(b.w1); fn(b.b1); fn(b.w2); fn(b.b2);
        }
        for (auto& b : upper) {
            fn(b.wq); fn(b.wk); fn(b.wv); fn(b.wo);
            fn(b.w1); fn(b.b1); fn(b.w2); fn(b.b2);
        }
        for (auto& l : gnn) {
            fn(l.w_msg); fn(l.w_self); fn(l.bias);
        }
        fn(wq_cross); fn(wk_cross); fn(wv_cross);
        fn(lm_head);
        fn(pathway.head_weights); fn(pathway.gain); fn(pathway.shift);
        fn(pathway.out_scale); fn(pathway.out_bias);
    }

    template <class Fn>
    void for_each_param(Fn&& fn) const {
        const_cast<ModelState*>(this)->for_each_param(
            [&fn](Param& p) { fn(static_cast<const Param&>(p)); });
    }

    void zero_grad() {
        for_each_param([](Param& p) {
            p.ensure_grad();
            std::fill(p.grad.a.begin(), p.grad.a.end(), 0.0);
        });
    }

    void sgd_step(double lr) {
        for_each_param([lr](Param& p) {
            if (p.grad.empty()) return;
            axpy(p.value, -lr, p.grad);
        });
    }

    bool all_finite() const {
        bool ok = true;
        for_each_param([&ok](const Param& p) { ok = ok && p.value.all_finite(); });
        return ok;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each_param([&n](const Param& p) { n += p.value.size(); });
        return n;
    }
};

namespace detail {

inline Param make_param(std::string name, int r, int c, double bound, Rng& rng) {
    Param p;
    p.name = std::move(name);
    p.value = bound == 0.0 ? Matrix::zeros(r, c) : Matrix::uniform(r, c, -bound, bound, rng);
    return p;
}

inline LangBlockParams make_block(const std::string& prefix, int d, int ffn, double bound,
                                  Rng& rng) {
    LangBlockParams b;
    b.wq = make_param(prefix + ".wq", d, d, bound, rng);
    b.wk = make_param(prefix + ".wk", d, d, bound, rng);
    b.wv = make_param(prefix + ".wv", d, d, bound, rng);
    b.wo = make_param(prefix + ".wo", d, d, bound, rng);
    b.w1 = make_param(prefix + ".w1", d, ffn, bound, rng);
    b.b1 = make_param(prefix + ".b1", 1, ffn, 0.0, rng);
    b.w2 = make_param(prefix + ".w2", ffn, d, bound, rng);
    b.b2 = make_param(prefix + ".b2", 1, d, 0.0, rng);
    return b;
}

} // namespace detail

/// Seeded init: matrices uniform in [-1/sqrt(d), 1/sqrt(d)], biases zero,
/// pathway gate at (gain=1, scale=1, bias=0) so an all-zero score field
/// maps to an estimate of exactly 0.5.
inline ModelState init_model(const Hyper& hyper, const std::vector<std::string>& vocab,
                             std::uint64_t seed) {
    Hyper h = hyper;
    h.vocab_size = static_cast<int>(vocab.size());
    h.validate();
    ModelState m;
    m.hyper = h;
    m.vocab = vocab;
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(h.d));
    const int ffn = h.d * h.ffn_mult;

    m.token_embeddings = detail::make_param("token_embeddings", h.vocab_size, h.d, bound, rng);
    for (int i = 0; i < h.split_layer; ++i)
        m.lower.push_back(detail::make_block("lower." + std::to_string(i), h.d, ffn, bound, rng));
    for (int i = 0; i < h.upper_layers; ++i)
        m.upper.push_back(detail::make_block("upper." + std::to_string(i), h.d, ffn, bound, rng));
    for (int i = 0; i < h.gnn_rounds; ++i) {
        GnnLayerParams l;
        const std::string prefix = "gnn." + std::to_string(i);
        l.w_msg = detail::make_param(prefix + ".w_msg", h.d, h.d, bound, rng);
        l.w_self = detail::make_param(prefix + ".w_self", h.d, h.d, bound, rng);
        l.bias = detail::make_param(prefix + ".bias", 1, h.d, 0.0, rng);
        m.gnn.push_back(std::move(l));
    }
    m.wq_cross = detail::make_param("cross.wq", h.d, h.d, bound, rng);
    m.wk_cross = detail::make_param("cross.wk", h.d, h.d, bound, rng);
    m.wv_cross = detail::make_param("cross.wv", h.d, h.d, bound, rng);
    m.lm_head = detail::make_param("lm_head", h.d, h.vocab_size, bound, rng);
    m.pathway.head_weights = detail::make_param("pathway.head_weights", 1, h.heads, bound, rng);
    m.pathway.gain = detail::make_param("pathway.gain", 1, 1, 0.0, rng);
    m.pathway.gain.value(0, 0) = 8.0; // gate operating point; tanh stays responsive
    m.pathway.shift = detail::make_param("pathway.shift", 1, 1, 0.0, rng);
    m.pathway.out_scale = detail::make_param("pathway.out_scale", 1, 1, 0.0, rng);
    m.pathway.out_scale.value(0, 0) = 1.0;
    m.pathway.out_bias = detail::make_param("pathway.out_bias", 1, 1, 0.0, rng);
    return m;
}

// --- checkpoint I/O ----------------------------------------------------------

inline nlohmann::ordered_json checkpoint_to_json(const ModelState& m) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["format"] = "contagion-checkpoint";
    nlohmann::ordered_json hy;
    hy["d"] = m.hyper.d;
    hy["heads"] = m.hyper.heads;
    hy["split_layer"] = m.hyper.split_layer;
    hy["upper_layers"] = m.hyper.upper_layers;
    hy["gnn_rounds"] = m.hyper.gnn_rounds;
    hy["ffn_mult"] = m.hyper.ffn_mult;
    hy["k_hops"] = m.hyper.k_hops;
    hy["context_span"] = m.hyper.context_span;
    hy["tau"] = m.hyper.tau;
    hy["vocab_size"] = m.hyper.vocab_size;
    j["hyper"] = std::move(hy);
    j["vocab"] = m.vocab;
    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    m.for_each_param([&params](const Param& p) {
        params.push_back({{"name", p.name}, {"rows", p.value.rows}, {"cols", p.value.cols},
                          {"data", p.value.a}});
    });
    j["params"] = std::move(params);
    return j;
}

inline ModelState checkpoint_from_json(const nlohmann::ordered_json& j) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw ConfigError("unsupported checkpoint version");
    Hyper h;
    const auto& hy = j.at("hyper");
    h.d = hy.at("d").get<int>();
    h.heads = hy.at("heads").get<int>();
    h.split_layer = hy.at("split_layer").get<int>();
    h.upper_layers = hy.at("upper_layers").get<int>();
    h.gnn_rounds = hy.at("gnn_rounds").get<int>();
    h.ffn_mult = hy.at("ffn_mult").get<int>();
    h.k_hops = hy.at("k_hops").get<int>();
    h.context_span = hy.at("context_span").get<int>();
    h.tau = hy.at("tau").get<double>();
    h.vocab_size = hy.at("vocab_size").get<int>();

    std::vector<std::string> vocab = j.at("vocab").get<std::vector<std::string>>();
    if (static_cast<int>(vocab.size()) != h.vocab_size)
        throw VocabMismatch("checkpoint vocab length disagrees with hyper block");

    ModelState m = init_model(h, vocab, /*seed=*/0);
    std::size_t idx = 0;
    const auto& params = j.at("params");
    m.for_each_param([&](Param& p) {
        if (idx >= params.size()) throw ConfigError("checkpoint missing parameters");
        const auto& pj = params[idx++];
        if (pj.at("name").get<std::string>() != p.name)
            throw ConfigError("checkpoint parameter order mismatch at '" + p.name + "'");
        const int r = pj.at("rows").get<int>(), c = pj.at("cols").get<int>();
        if (r != p.value.rows || c != p.value.cols)
            throw ConfigError("checkpoint parameter shape mismatch at '" + p.name + "'");
        p.value.a = pj.at("data").get<std::vector<double>>();
        if (p.value.a.size() != static_cast<std::size_t>(r) * static_cast<std::size_t>(c))
            throw ConfigError("checkpoint parameter size mismatch at '" + p.name + "'");
    });
    if (idx != params.size()) throw ConfigError("checkpoint has extra parameters");
    return m;
}

/// Leaf bindings of every parameter to one tape, in for_each_param order.
struct ModelVars {
    std::vector<ad::Var> vars;
    std::size_t cursor = 0;

    ad::Var next() { return vars.at(cursor++); }
    void rewind() { cursor = 0; }
};

inline ModelVars bind_model(ad::Tape& tape, ModelState& m, bool needs_grad = true) {
    ModelVars mv;
    m.for_each_param([&](Param& p) { mv.vars.push_back(tape.leaf(p.value, needs_grad)); });
    return mv;
}

/// Adds tape gradients back into the parameter grad buffers.
inline void harvest_grads(const ModelVars& mv, ModelState& m) {
    std::size_t idx = 0;
    m.for_each_param([&](Param& p) {
        const ad::Var& v = mv.vars.at(idx++);
        p.ensure_grad();
        if (v.node()->has_grad()) axpy(p.grad, 1.0, v.node()->grad);
    });
}

/// View of the bound leaves with the same structure as ModelState.
struct BoundModel {
    ad::Var token_embeddings;
    struct Block { ad::Var wq, wk, wv, wo, w1, b1, w2, b2; };
    std::vector<Block> lower, upper;
    struct Gnn { ad::Var w_msg, w_self, bias; };
    std::vector<Gnn> gnn;
    ad::Var wq_cross, wk_cross, wv_cross, lm_head;
    ad::Var pw_head_weights, pw_gain, pw_shift, pw_out_scale, pw_out_bias;
    const Hyper* hyper = nullptr;
    const std::vector<std::string>* vocab = nullptr;
};

inline BoundModel bound_view(ModelVars& mv, const ModelState& m) {
    mv.rewind();
    BoundModel b;
    b.hyper = &m.hyper;
    b.vocab = &m.vocab;
    b.token_embeddings = mv.next();
    auto take_block = [&mv]() {
        BoundModel::Block blk;
        blk.wq = mv.next(); blk.wk = mv.next(); blk.wv = mv.next(); blk.wo = mv.next();
        blk.w1 = mv.next(); blk.b1 = mv.next(); blk.w2 = mv.next(); blk.b2 = mv.next();
        return blk;
    };
    for (std::size_t i = 0; i < m.lower.size(); ++i) b.lower.push_back(take_block());
    for (std::size_t i = 0; i < m.upper.size(); ++i) b.upper.push_back(take_block());
    for (std::size_t i = 0; i < m.gnn.size(); ++i) {
        BoundModel::Gnn g;
        g.w_msg = mv.next(); g.w_self = mv.next(); g.bias = mv.next();
        b.gnn.push_back(g);
    }
    b.wq_cross = mv.next();
    b.wk_cross = mv.next();
    b.wv_cross = mv.next();
    b.lm_head = mv.next();
    b.pw_head_weights = mv.next();
    b.pw_gain = mv.next();
    b.pw_shift = mv.next();
    b.pw_out_scale = mv.next();
    b.pw_out_bias = mv.next();
    return b;
}

} // namespace contagion
