#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "contagion/dataset.hpp"
#include "contagion/pathway.hpp"
#include "contagion/robustness.hpp"
#include "oracles.hpp"

using namespace contagion;

namespace {

std::vector<std::string> tiny_vocab(int extra) {
    std::vector<std::string> v{"<unk>", "<sep>"};
    for (int i = 0; i < extra; ++i) v.push_back("tok" + std::to_string(i));
    return v;
}

ModelState pathway_model(int heads, std::vector<double> head_weights) {
    Hyper h;
    h.d = 4 * heads;
    h.heads = heads;
    ModelState m = init_model(h, tiny_vocab(2), 1);
    for (int j = 0; j < heads; ++j)
        m.pathway.head_weights.value(0, j) = head_weights[static_cast<std::size_t>(j)];
    m.pathway.gain.value(0, 0) = 1.0;
    m.pathway.shift.value(0, 0) = 0.0;
    m.pathway.out_scale.value(0, 0) = 1.0;
    m.pathway.out_bias.value(0, 0) = 0.0;
    return m;
}

FactualGraph chain_graph(const std::vector<std::pair<std::string, std::string>>& edges,
                         const std::string& s, const std::string& t) {
    KnowledgeGraph::Builder b;
    std::set<std::string> seen;
    for (const auto& [u, v] : edges) {
        for (const std::string& x : {u, v})
            if (seen.insert(x).second) b.add_node(x, x, "e");
    }
    for (const auto& [u, v] : edges) b.add_edge(u, v, "r");
    return dfs_extract(std::move(b).build(), s, t, 10, 1);
}

} // namespace

TEST_CASE("risk head: zero scores give the neutral estimate") {
    ModelState m = pathway_model(1, {0.0}); // weight 0 zeroes every pre-activation
    ad::Tape t;
    ModelVars mv = bind_model(t, m, false);
    BoundModel bm = bound_view(mv, m);
    Matrix a1 = Matrix::full(3, 4, 0.25); // row-stochastic
    RiskVars rv = risk_head(t, {t.constant(a1)}, bm);
    for (int j = 0; j < 4; ++j) CHECK(rv.per_node.value()(0, j) == 0.0);
    CHECK_THAT(rv.estimate.scalar(), Catch::Matchers::WithinAbs(0.5, 1e-15));
}

TEST_CASE("risk head: unit single-head weight reproduces column means") {
    ModelState m = pathway_model(1, {1.0});
    ad::Tape t;
    ModelVars mv = bind_model(t, m, false);
    BoundModel bm = bound_view(mv, m);
    Matrix a1(2, 3);
    a1(0, 0) = 0.5; a1(0, 1) = 0.3; a1(0, 2) = 0.2;
    a1(1, 0) = 0.1; a1(1, 1) = 0.1; a1(1, 2) = 0.8;
    RiskScores rs = node_risk_scores(t, AttentionStack{{t.constant(a1)}, {}, {}},
                                     {"x", "y", "z"}, bm);
    CHECK_THAT(rs.per_node.at("x"), Catch::Matchers::WithinAbs(0.3, 1e-15));
    CHECK_THAT(rs.per_node.at("y"), Catch::Matchers::WithinAbs(0.2, 1e-15));
    CHECK_THAT(rs.per_node.at("z"), Catch::Matchers::WithinAbs(0.5, 1e-15));
}

TEST_CASE("risk head: two-head hand computation") {
    ModelState m = pathway_model(2, {2.0, -1.0});
    m.pathway.gain.value(0, 0) = 3.0;
    m.pathway.shift.value(0, 0) = 0.1;
    m.pathway.out_scale.value(0, 0) = 1.5;
    m.pathway.out_bias.value(0, 0) = -0.2;
    ad::Tape t;
    ModelVars mv = bind_model(t, m, false);
    BoundModel bm = bound_view(mv, m);
    Matrix a1(2, 2), a2(2, 2);
    a1(0, 0) = 0.9; a1(0, 1) = 0.1; a1(1, 0) = 0.4; a1(1, 1) = 0.6;
    a2(0, 0) = 0.2; a2(0, 1) = 0.8; a2(1, 0) = 0.5; a2(1, 1) = 0.5;
    RiskVars rv = risk_head(t, {t.constant(a1), t.constant(a2)}, bm);

    const double s0 = 2.0 * 0.65 - 1.0 * 0.35;
    const double s1 = 2.0 * 0.35 - 1.0 * 0.65;
    CHECK_THAT(rv.per_node.value()(0, 0), Catch::Matchers::WithinAbs(s0, 1e-12));
    CHECK_THAT(rv.per_node.value()(0, 1), Catch::Matchers::WithinAbs(s1, 1e-12));
    const double mean = 0.5 * (s0 + s1);
    auto sq = [](double x) { return x * x; };
    const double pooled =
        0.5 * (sq(std::tanh(3.0 * (s0 - mean) + 0.1)) + sq(std::tanh(3.0 * (s1 - mean) + 0.1)));
    const double expect = 1.0 / (1.0 + std::exp(-(1.5 * pooled - 0.2)));
    CHECK_THAT(rv.estimate.scalar(), Catch::Matchers::WithinAbs(expect, 1e-12));
    CHECK(rv.estimate.scalar() > 0.0);
    CHECK(rv.estimate.scalar() < 1.0);
}

TEST_CASE("risk head validates the head count") {
    ModelState m = pathway_model(2, {1.0, 1.0});
    ad::Tape t;
    ModelVars mv = bind_model(t, m, false);
    BoundModel bm = bound_view(mv, m);
    CHECK_THROWS_AS(risk_head(t, {t.constant(Matrix::full(2, 2, 0.5))}, bm), DimensionMismatch);
}

TEST_CASE("path loss from estimates: analytic optimum and constant model") {
    FactualGraph f = chain_graph({{"A", "B"}, {"B", "C"}, {"D", "B"}}, "A", "C");
    InterventionSet s = build_intervention_set(f);
    CausalPartition p = classify_nodes(s);

    SECTION("perfect separation reaches -1") {
        ad::Tape t;
        std::map<NodeId, ad::Var> est;
        est.emplace("A", t.constant(Matrix::zeros(1, 1)));
        est.emplace("B", t.constant(Matrix::zeros(1, 1)));
        est.emplace("D", t.constant(Matrix::full(1, 1, 1.0)));
        ad::Var l = path_loss_from_estimates(t, t.constant(Matrix::full(1, 1, 1.0)), est, p);
        CHECK_THAT(l.scalar(), Catch::Matchers::WithinAbs(-1.0, 1e-15));
    }
    SECTION("a constant model scores zero") {
        ad::Tape t;
        std::map<NodeId, ad::Var> est;
        for (const char* v : {"A", "B", "D"})
            est.emplace(v, t.constant(Matrix::full(1, 1, 0.37)));
        ad::Var l = path_loss_from_estimates(t, t.constant(Matrix::full(1, 1, 0.37)), est, p);
        CHECK_THAT(l.scalar(), Catch::Matchers::WithinAbs(0.0, 1e-15));
    }
    SECTION("an empty partition side contributes zero") {
        FactualGraph bare = chain_graph({{"A", "B"}, {"B", "C"}}, "A", "C");
        InterventionSet s2 = build_intervention_set(bare);
        CausalPartition p2 = classify_nodes(s2); // Z is empty
        REQUIRE(p2.non_causal.empty());
        ad::Tape t;
        std::map<NodeId, ad::Var> est;
        est.emplace("A", t.constant(Matrix::full(1, 1, 0.2)));
        est.emplace("B", t.constant(Matrix::full(1, 1, 0.4)));
        ad::Var l = path_loss_from_estimates(t, t.constant(Matrix::full(1, 1, 0.9)), est, p2);
        CHECK_THAT(l.scalar(), Catch::Matchers::WithinAbs(-(0.9 - 0.3), 1e-15));
    }
}

TEST_CASE("extract_path returns the unique chain") {
    FactualGraph f = chain_graph({{"A", "B"}, {"B", "C"}}, "A", "C");
    RiskScores r;
    r.per_node = {{"A", 0.1}, {"B", 0.9}, {"C", 0.4}};
    RiskPath p = extract_path(f, r);
    CHECK(p.nodes == std::vector<NodeId>{"A", "B", "C"});
    REQUIRE(p.intensities.size() == 2);
    CHECK(*std::max_element(p.intensities.begin(), p.intensities.end()) == 1.0);
    for (double v : p.intensities) {
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("extract_path picks the higher-scoring diamond branch") {
    FactualGraph f = chain_graph({{"A", "B"}, {"B", "C"}, {"A", "E"}, {"E", "C"}}, "A", "C");
    RiskScores r;
    r.per_node = {{"A", 0.5}, {"B", 0.9}, {"E", 0.2}, {"C", 0.5}};
    CHECK(extract_path(f, r).nodes == std::vector<NodeId>{"A", "B", "C"});
    r.per_node["B"] = 0.1;
    CHECK(extract_path(f, r).nodes == std::vector<NodeId>{"A", "E", "C"});
}

TEST_CASE("extract_path breaks exact ties lexicographically") {
    FactualGraph f = chain_graph({{"A", "B"}, {"B", "C"}, {"A", "E"}, {"E", "C"}}, "A", "C");
    RiskScores r;
    r.per_node = {{"A", 0.5}, {"B", 0.25}, {"E", 0.25}, {"C", 0.5}};
    CHECK(extract_path(f, r).nodes == std::vector<NodeId>{"A", "B", "C"});
}

TEST_CASE("extract_path output stays inside path nodes") {
    FactualGraph f = chain_graph({{"A", "B"}, {"B", "C"}, {"D", "B"}}, "A", "C");
    RiskScores r;
    r.per_node = {{"A", 0.2}, {"B", 0.2}, {"C", 0.2}, {"D", 9.9}}; // juicy but off-path
    RiskPath p = extract_path(f, r);
    for (const NodeId& v : p.nodes) CHECK(f.path_nodes.count(v) == 1);
}

TEST_CASE("iou") {
    RiskPath abc{{"A", "B", "C"}, {1.0, 1.0}};
    CHECK(iou(abc, {"A", "B", "C"}) == 1.0);
    CHECK(iou(abc, {"A", "X", "C"}) == 0.5); // 2 shared over 4 distinct
    CHECK(iou(abc, {"X", "Y"}) == 0.0);
    CHECK_THROWS_AS(iou(RiskPath{}, {"A"}), EmptyPath);
    CHECK_THROWS_AS(iou(abc, {}), EmptyPath);
    // symmetry in the two node sets
    RiskPath axc{{"A", "X", "C"}, {1.0, 1.0}};
    CHECK(iou(abc, {"A", "X", "C"}) == iou(axc, {"A", "B", "C"}));
}

TEST_CASE("eval metrics on tiny fixtures") {
    EvalReport perfect = eval_metrics({{0.9, 1}, {0.2, 0}});
    CHECK(perfect.acc == 1.0);
    REQUIRE(perfect.auc);
    CHECK(*perfect.auc == 1.0);

    EvalReport inverted = eval_metrics({{0.2, 1}, {0.9, 0}});
    CHECK(inverted.acc == 0.0);
    REQUIRE(inverted.auc);
    CHECK(*inverted.auc == 0.0);

    EvalReport single = eval_metrics({{0.9, 1}, {0.8, 1}});
    CHECK_FALSE(single.auc.has_value()); // marked undefined, never 0.5
    CHECK_THROWS_AS(auc_rank({{0.9, 1}, {0.8, 1}}), SingleClass);

    // an oracle scorer fed the labels themselves is perfectly accurate
    EvalReport stub = eval_metrics({{1.0, 1}, {0.0, 0}, {1.0, 1}, {0.0, 0}});
    CHECK(stub.acc == 1.0);
}

TEST_CASE("rank AUC equals the quadratic pairwise oracle") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<double, int>> preds;
        for (int i = 0; i < 20; ++i) {
            double p = rng.uniform();
            if (rng.uniform() < 0.3) p = 0.5; // force ties
            preds.push_back({p, rng.uniform() < 0.5 ? 1 : 0});
        }
        bool has0 = false, has1 = false;
        for (auto& [p, y] : preds) (y ? has1 : has0) = true;
        if (!has0 || !has1) continue;
        CHECK_THAT(auc_rank(preds), Catch::Matchers::WithinAbs(oracles::pairwise_auc(preds), 1e-12));
    }
}

TEST_CASE("confounder injection leaves oracle effects unchanged") {
    DatasetConfig cfg = DatasetConfig::findkg_like(6, 19);
    auto insts = build_dataset(cfg);
    Rng rng(5);
    for (const Instruction& inst : insts) {
        Instruction perturbed = confound_instruction(inst, 3, rng);
        CHECK(perturbed.set.factual.graph.node_count() ==
              inst.set.factual.graph.node_count() + 3);
        CHECK(confounder_effects_unchanged(inst, perturbed));
        CHECK(perturbed.label == inst.label);
        // confounders carry no incoming edges
        for (const Edge& e : perturbed.set.factual.graph.edges())
            CHECK(e.dst.rfind("zconf_", 0) != 0);
    }
    SECTION("n_add = 0 is the identity") {
        Instruction same = confound_instruction(insts[0], 0, rng);
        CHECK(same.set.factual.graph == insts[0].set.factual.graph);
    }
}

TEST_CASE("dropping every causal node flips the oracle label to zero") {
    FactualGraph f = chain_graph({{"A", "B"}, {"B", "C"}, {"D", "B"}}, "A", "C");
    InterventionSet s = build_intervention_set(f);
    CausalPartition p = classify_nodes(s);
    std::set<NodeId> drop = p.causal;
    drop.erase(f.source); // the subset test never removes terminals
    KnowledgeGraph pruned = detail::drop_nodes(f.graph, drop);
    CHECK(contagion_probability(pruned, f.source, f.target).value == 0.0);
}
