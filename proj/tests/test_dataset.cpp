#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <sstream>

#include "contagion/dataset.hpp"
#include "contagion/tokenizer.hpp"

using namespace contagion;

namespace {

InterventionSet table1_set() {
    KnowledgeGraph::Builder b;
    b.add_node("A", "A", "company").add_node("B", "B", "company");
    b.add_node("C", "C", "company").add_node("D", "D", "company");
    b.add_edge("A", "B", "supplies").add_edge("B", "C", "supplies").add_edge("D", "B", "supplies");
    return build_intervention_set(dfs_extract(std::move(b).build(), "A", "C", 6, 1));
}

FactualGraph chain3(const std::string& la, const std::string& lb, const std::string& lc) {
    KnowledgeGraph::Builder b;
    b.add_node("a", la, "supplier").add_node("b", lb, "manufacturer").add_node("c", lc, "retailer");
    b.add_edge("a", "b", "supplies").add_edge("b", "c", "supplies");
    return dfs_extract(std::move(b).build(), "a", "c", 6, 1);
}

} // namespace

TEST_CASE("profile defaults match the published composition") {
    DatasetConfig f = DatasetConfig::findkg_like(1000, 1);
    CHECK(f.factual_fraction == 0.15);
    CHECK(f.entity_type_count == 15);
    CHECK(f.relation_type_count == 15);
    REQUIRE(f.topics.size() == 5);
    CHECK(f.topics[0].name == "Stock");
    CHECK(f.topics[0].fraction == 0.35);

    DatasetConfig s = DatasetConfig::supplychain_like(100, 1);
    CHECK(s.factual_fraction == 0.17);
    CHECK(s.entity_type_count == 10);
    CHECK(s.relation_type_count == 40);
    REQUIRE(s.topics.size() == 4);
}

TEST_CASE("config validation") {
    DatasetConfig c = DatasetConfig::findkg_like(10, 1);
    SECTION("graph size minimum") {
        c.graph_min_nodes = 2;
        CHECK_THROWS_AS(c.validate(), InfeasibleConfig);
    }
    SECTION("topic fractions must sum to one") {
        c.topics[0].fraction += 0.05;
        CHECK_THROWS_AS(c.validate(), InfeasibleConfig);
    }
    SECTION("factual fraction domain") {
        c.factual_fraction = 0.0;
        CHECK_THROWS_AS(c.validate(), InfeasibleConfig);
    }
}

TEST_CASE("synthetic KG covers all entity types and is seed-deterministic") {
    DatasetConfig cfg = DatasetConfig::findkg_like(40, 7);
    KnowledgeGraph kg = generate_synthetic_kg(cfg);
    std::set<std::string> types;
    for (const auto& [id, info] : kg.nodes()) types.insert(info.entity_type);
    CHECK(types.size() == 15);

    std::ostringstream a, b;
    save_graph_jsonl(kg, a);
    save_graph_jsonl(generate_synthetic_kg(cfg), b);
    CHECK(a.str() == b.str());
}

TEST_CASE("a one-instruction config plants exactly one minimal chain") {
    DatasetConfig cfg = DatasetConfig::findkg_like(1, 3);
    cfg.graph_min_nodes = 3;
    cfg.graph_max_nodes = 3;
    World w = generate_world(cfg);
    REQUIRE(w.plan.size() == 1);
    CHECK(w.plan[0].chain.size() == 3);
    FactualGraph f = dfs_extract(w.kg, w.plan[0].source, w.plan[0].target, 3, 1);
    CHECK(f.path_nodes == std::set<NodeId>(w.plan[0].chain.begin(), w.plan[0].chain.end()));
}

TEST_CASE("render_query names every entity and aligns spans exactly") {
    FactualGraph f = chain3("Lumen Supply 1", "Noble Works 2", "Tidal Retail 3");
    auto [query, alignment] = render_query(f, "Manufacturing", 5);
    CHECK(query.find("Lumen Supply 1") != std::string::npos);
    CHECK(query.find("Noble Works 2") != std::string::npos);
    CHECK(query.find("Tidal Retail 3") != std::string::npos);
    CHECK(alignment.size() == 3); // each entity surfaces exactly once

    const std::vector<std::string> tokens = tokenize(query);
    for (const AlignEntry& a : alignment) {
        const std::string label = f.graph.node_info(a.node).label;
        CHECK(detokenize(tokens, static_cast<std::size_t>(a.begin),
                         static_cast<std::size_t>(a.end)) == label);
    }
}

TEST_CASE("render_query rejects duplicate labels and unknown topics") {
    CHECK_THROWS_AS(render_query(chain3("Same Name 1", "Same Name 1", "Other Name 2"),
                                 "Retail", 1),
                    DuplicateLabel);
    CHECK_THROWS_AS(render_query(chain3("A A 1", "B B 2", "C C 3"), "Cryptocurrency", 1),
                    TemplateMissing);
}

TEST_CASE("render_query alignment slices equal labels on random chains") {
    Rng rng(21);
    const std::vector<std::string> topics{"Stock", "Bond", "Money", "Real estate", "Commodity"};
    for (int trial = 0; trial < 20; ++trial) {
        DatasetConfig cfg = DatasetConfig::findkg_like(1, 100 + static_cast<std::uint64_t>(trial));
        World w = generate_world(cfg);
        FactualGraph f = dfs_extract(w.kg, w.plan[0].source, w.plan[0].target,
                                     cfg.graph_max_nodes, 1);
        auto [query, alignment] = render_query(f, rng.pick(topics), rng.next());
        const auto tokens = tokenize(query);
        CHECK(alignment.size() == f.graph.node_count());
        for (const AlignEntry& a : alignment)
            CHECK(detokenize(tokens, static_cast<std::size_t>(a.begin),
                             static_cast<std::size_t>(a.end)) == f.graph.node_info(a.node).label);
    }
}

TEST_CASE("render_explanation follows the step-by-step format") {
    InterventionSet s = table1_set();
    CausalPartition p = classify_nodes(s);
    const std::string e = render_explanation(p, s);
    CHECK(e.find("(1) P(contagion | do(A=1)) - P(contagion | do(A=0)) > 0") != std::string::npos);
    CHECK(e.find("(2) P(contagion | do(B=1)) - P(contagion | do(B=0)) > 0") != std::string::npos);
    CHECK(e.find("(3) P(contagion | do(D=1)) - P(contagion | do(D=0)) = 0") != std::string::npos);
    CHECK(e.find("(final) The causal chain of risk propagation is A -> B -> C.") !=
          std::string::npos);
}

TEST_CASE("render_explanation with empty Z has only positive comparisons") {
    KnowledgeGraph::Builder b;
    b.add_node("a", "A", "x").add_node("b", "B", "x").add_node("c", "C", "x");
    b.add_edge("a", "b", "r").add_edge("b", "c", "r");
    InterventionSet s = build_intervention_set(dfs_extract(std::move(b).build(), "a", "c", 6, 1));
    const std::string e = render_explanation(classify_nodes(s), s);
    CHECK(e.find("= 0") == std::string::npos);
    CHECK(e.find("> 0") != std::string::npos);
}

TEST_CASE("render_explanation on a diamond lists only causal nodes in the chain") {
    KnowledgeGraph::Builder b;
    b.add_node("a", "A", "x").add_node("b", "B", "x").add_node("e", "E", "x").add_node("c", "C", "x");
    b.add_edge("a", "b", "r").add_edge("b", "c", "r").add_edge("a", "e", "r").add_edge("e", "c", "r");
    InterventionSet s = build_intervention_set(dfs_extract(std::move(b).build(), "a", "c", 6, 1));
    const std::string e = render_explanation(classify_nodes(s), s);
    CHECK(e.find("The causal chain of risk propagation is A -> C.") != std::string::npos);
}

TEST_CASE("build_dataset composition targets") {
    SECTION("findkg_like at n = 1000") {
        auto insts = build_dataset(DatasetConfig::findkg_like(1000, 42));
        REQUIRE(insts.size() == 1000);
        int factual = 0;
        std::map<std::string, int> topic_counts;
        for (const Instruction& inst : insts) {
            factual += inst.group == Group::factual;
            ++topic_counts[inst.topic];
        }
        CHECK(factual == 150);
        CHECK(topic_counts["Stock"] == 350);
        CHECK(topic_counts["Bond"] == 250);
        CHECK(topic_counts["Money"] == 200);
        CHECK(topic_counts["Real estate"] == 100);
        CHECK(topic_counts["Commodity"] == 100);
    }
    SECTION("supplychain_like at n = 100") {
        auto insts = build_dataset(DatasetConfig::supplychain_like(100, 42));
        int factual = 0;
        for (const Instruction& inst : insts) factual += inst.group == Group::factual;
        CHECK(factual == 17);
    }
    SECTION("n = 1 with factual_fraction 1.0") {
        DatasetConfig cfg = DatasetConfig::findkg_like(1, 1);
        cfg.factual_fraction = 1.0;
        auto insts = build_dataset(cfg);
        REQUIRE(insts.size() == 1);
        CHECK(insts[0].group == Group::factual);
    }
}

TEST_CASE("instruction labels match the reachability oracle and spans are sound") {
    auto insts = build_dataset(DatasetConfig::findkg_like(60, 9));
    for (const Instruction& inst : insts) {
        const KnowledgeGraph& g = inst.referenced_graph();
        CHECK(inst.label ==
              contagion_probability(g, inst.set.factual.source, inst.set.factual.target).value);
        if (inst.group == Group::factual) CHECK(inst.label == 1.0);
        const auto tokens = tokenize(inst.query);
        for (const AlignEntry& a : inst.alignment)
            CHECK(detokenize(tokens, static_cast<std::size_t>(a.begin),
                             static_cast<std::size_t>(a.end)) ==
                  inst.set.factual.graph.node_info(a.node).label);
    }
}

TEST_CASE("dataset JSONL bytes are identical across reruns and round-trip") {
    DatasetConfig cfg = DatasetConfig::supplychain_like(25, 77);
    const std::string a = dataset_to_jsonl(build_dataset(cfg));
    const std::string b = dataset_to_jsonl(build_dataset(cfg));
    CHECK(a == b);

    std::istringstream in(a);
    auto restored = dataset_from_jsonl(in);
    CHECK(dataset_to_jsonl(restored) == a);
}

TEST_CASE("dataset config JSON is strict about unknown keys") {
    ordered_json j = dataset_config_to_json(DatasetConfig::findkg_like(10, 1));
    CHECK(dataset_config_from_json(j).n_instructions == 10);
    j["typo_key"] = 1;
    CHECK_THROWS_AS(dataset_config_from_json(j), ConfigError);
}

TEST_CASE("vocabulary is first-seen deterministic with reserved ids") {
    auto insts = build_dataset(DatasetConfig::findkg_like(5, 3));
    Vocab v = build_vocab(insts);
    CHECK(v.token(Vocab::kUnkId) == "<unk>");
    CHECK(v.token(Vocab::kSepId) == "<sep>");
    CHECK(v.encode("no_such_token_anywhere") == Vocab::kUnkId);
    Vocab w = build_vocab(insts);
    CHECK(v.tokens() == w.tokens());
}
