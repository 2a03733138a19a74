#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "contagion/errors.hpp"
#include "contagion/graph.hpp"
#include "contagion/graph_io.hpp"
#include "contagion/intervention.hpp"
#include "contagion/rng.hpp"
#include "contagion/tokenizer.hpp"

namespace contagion {

enum class Profile { findkg_like, supplychain_like, custom };
enum class Group { factual, intervention };

inline std::string to_string(Profile p) {
    switch (p) {
        case Profile::findkg_like: return "findkg_like";
        case Profile::supplychain_like: return "supplychain_like";
        case Profile::custom: return "custom";
    }
    return "custom";
}

inline Profile profile_from_string(const std::string& s) {
    if (s == "findkg_like") return Profile::findkg_like;
    if (s == "supplychain_like") return Profile::supplychain_like;
    if (s == "custom") return Profile::custom;
    throw ConfigError("unknown profile '" + s + "'");
}

inline std::string to_string(Group g) {
    return g == Group::factual ? "factual" : "intervention";
}

inline Group group_from_string(const std::string& s) {
    if (s == "factual") return Group::factual;
    if (s == "intervention") return Group::intervention;
    throw ConfigError("unknown group '" + s + "'");
}

struct TopicShare {
    std::string name;
    double fraction = 0.0;
};

/// Recipe for one synthetic instruction dataset. The two named profiles
/// reproduce the published composition of the FinDKG- and SupplyChain-style
/// corpora (topic mix, factual/intervention split, type counts).
struct DatasetConfig {
    Profile profile = Profile::findkg_like;
    int n_instructions = 100;
    double factual_fraction = 0.15;
    std::vector<TopicShare> topics;
    int entity_type_count = 15;
    int relation_type_count = 15;
    int graph_min_nodes = 3; // planted chain length, in nodes
    int graph_max_nodes = 5;
    std::uint64_t seed = 0;

    static DatasetConfig findkg_like(int n, std::uint64_t seed) {
        DatasetConfig c;
        c.profile = Profile::findkg_like;
        c.n_instructions = n;
        c.factual_fraction = 0.15;
        c.topics = {{"Stock", 0.35}, {"Bond", 0.25}, {"Money", 0.20},
                    {"Real estate", 0.10}, {"Commodity", 0.10}};
        c.entity_type_count = 15;
        c.relation_type_count = 15;
        c.seed = seed;
        return c;
    }

    static DatasetConfig supplychain_like(int n, std::uint64_t seed) {
        DatasetConfig c;
        c.profile = Profile::supplychain_like;
        c.n_instructions = n;
        c.factual_fraction = 0.17;
        c.topics = {{"Raw materials", 0.20}, {"Manufacturing", 0.30},
                    {"Wholesale", 0.20}, {"Retail", 0.30}};
        c.entity_type_count = 10;
        c.relation_type_count = 40;
        c.seed = seed;
        return c;
    }

    void validate() const {
        if (n_instructions < 1) throw InfeasibleConfig("n_instructions must be positive");
        if (!(factual_fraction > 0.0 && factual_fraction <= 1.0))
            throw InfeasibleConfig("factual_fraction must lie in (0, 1]");
        if (topics.empty()) throw InfeasibleConfig("no topics configured");
        double sum = 0.0;
        for (const TopicShare& t : topics) {
            if (t.fraction < 0.0) throw InfeasibleConfig("negative topic fraction");
            sum += t.fraction;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw InfeasibleConfig("topic fractions sum to " + std::to_string(sum));
        if (entity_type_count < 1 || relation_type_count < 1)
            throw InfeasibleConfig("type counts must be positive");
        if (graph_min_nodes < 3)
            throw InfeasibleConfig("graph_size_range minimum must be at least 3");
        if (graph_max_nodes < graph_min_nodes)
            throw InfeasibleConfig("graph_size_range is empty");
    }
};

namespace forge {

inline const std::vector<std::string>& label_stems() {
    static const std::vector<std::string> v{
        "Auric",  "Borealis", "Cinder",   "Dunmore", "Ember",    "Fathom",
        "Gilded", "Harborn",  "Ivory",    "Juniper", "Keystone", "Lumen",
        "Meridian", "Noble",  "Onyx",     "Pinnacle", "Quartz",  "Ridgeline",
        "Sterling", "Tidal",  "Umber",    "Vertex",  "Willow",   "Zenith"};
    return v;
}

struct EntityTypePool {
    std::vector<std::string> types;
    std::vector<std::string> nouns; // single-token label noun per type
};

inline EntityTypePool entity_types_for(Profile profile, int count) {
    static const std::vector<std::pair<std::string, std::string>> findkg{
        {"bank", "Bank"},        {"fund", "Fund"},         {"insurer", "Insurer"},
        {"broker", "Broker"},    {"exchange", "Exchange"}, {"issuer", "Issuer"},
        {"regulator", "Board"},  {"custodian", "Custodian"}, {"dealer", "Dealer"},
        {"trust", "Trust"},      {"reit", "Properties"},   {"miner", "Mining"},
        {"refiner", "Refinery"}, {"utility", "Utilities"}, {"sovereign", "Treasury"}};
    static const std::vector<std::pair<std::string, std::string>> supply{
        {"supplier", "Supply"},      {"manufacturer", "Works"}, {"distributor", "Distribution"},
        {"wholesaler", "Wholesale"}, {"retailer", "Retail"},    {"logistics", "Logistics"},
        {"warehouse", "Storage"},    {"port", "Port"},          {"carrier", "Freight"},
        {"customs", "Customs"}};
    EntityTypePool pool;
    const auto* base = profile == Profile::supplychain_like ? &supply : &findkg;
    for (int i = 0; i < count; ++i) {
        if (i < static_cast<int>(base->size())) {
            pool.types.push_back((*base)[static_cast<std::size_t>(i)].first);
            pool.nouns.push_back((*base)[static_cast<std::size_t>(i)].second);
        } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "entity_type_%02d", i);
            pool.types.push_back(buf);
            pool.nouns.push_back("Entity");
        }
    }
    return pool;
}

inline std::vector<std::string> relation_types_for(Profile profile, int count) {
    static const std::vector<std::string> findkg{
        "lends_to",    "owns_stake_in", "supplies",    "insures",      "clears_for",
        "rates",       "regulates",     "settles_with", "invests_in",  "underwrites",
        "guarantees",  "borrows_from",  "hedges_with", "brokers_for",  "custodies"};
    static const std::vector<std::string> supply{
        "ships_to",        "sources_from",   "assembles_for",  "packages_for",
        "stores_for",      "transports_for", "distributes_to", "retails_for",
        "licenses_to",     "subcontracts_to", "leases_to",     "inspects_for",
        "certifies",       "brokers_for",    "consolidates_for", "forwards_to",
        "warehouses_for",  "fulfills_for",   "restocks",       "supplies_parts_to",
        "supplies_raw_to", "maintains_for",  "services",       "repairs_for",
        "insures_cargo_of", "finances",      "factors_receivables_of", "audits",
        "clears_customs_for", "labels_for",  "tests_for",      "recycles_for",
        "charters_for",    "escorts",        "bundles_for",    "stages_for",
        "palletizes_for",  "tags_for",       "scans_for",      "routes_for"};
    const auto* base = profile == Profile::supplychain_like ? &supply : &findkg;
    std::vector<std::string> out;
    for (int i = 0; i < count; ++i) {
        if (i < static_cast<int>(base->size())) {
            out.push_back((*base)[static_cast<std::size_t>(i)]);
        } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "relation_%02d", i);
            out.push_back(buf);
        }
    }
    return out;
}

struct TopicTemplate {
    std::string domain;
    std::string incident; // what happened at the source
    std::string symptom;  // what the target showed
};

inline const std::map<std::string, TopicTemplate>& topic_templates() {
    static const std::map<std::string, TopicTemplate> t{
        {"Stock", {"stock market", "disclosed a severe trading loss",
                   "faced a sharp sell-off"}},
        {"Bond", {"bond market", "missed a scheduled coupon payment",
                  "saw its credit spreads widen sharply"}},
        {"Money", {"money market", "suffered an acute funding squeeze",
                   "failed to roll its short term debt"}},
        {"Real estate", {"real estate market", "wrote down a major property portfolio",
                         "halted investor redemptions"}},
        {"Commodity", {"commodity market", "defaulted on a physical delivery",
                       "could not settle its forward contracts"}},
        {"Raw materials", {"raw materials segment", "lost access to its primary ore supply",
                           "ran out of input inventory"}},
        {"Manufacturing", {"manufacturing segment", "halted its main production line",
                           "missed its delivery schedule"}},
        {"Wholesale", {"wholesale segment", "cancelled its standing purchase orders",
                       "reported empty distribution centers"}},
        {"Retail", {"retail segment", "closed its flagship outlets",
                    "was unable to serve customers"}}};
    return t;
}

inline std::string pad_int(std::int64_t v, int width) {
    std::ostringstream ss;
    ss.width(width);
    ss.fill('0');
    ss << v;
    return ss.str();
}

} // namespace forge

/// One exact token-span <-> node correspondence inside the query.
struct AlignEntry {
    int begin = 0; // token index, inclusive
    int end = 0;   // token index, exclusive
    NodeId node;

    friend bool operator==(const AlignEntry&, const AlignEntry&) = default;
};

/// A rendered causal instruction: the query/explanation text pair, the
/// grounding intervention set, and the exact alignment map.
struct Instruction {
    std::string id;
    std::string query;
    std::string explanation;
    Group group = Group::factual;
    std::string topic;
    double label = 1.0;
    std::vector<AlignEntry> alignment;
    InterventionSet set;
    NodeId referenced; // intervened node the label refers to; empty = factual

    const KnowledgeGraph& referenced_graph() const {
        if (referenced.empty()) return set.factual.graph;
        return find_intervention(set, referenced).graph;
    }

    /// Training token stream: query tokens, <sep>, explanation tokens.
    /// Query token indices are unchanged, so alignment spans stay valid.
    std::vector<int> token_ids(const Vocab& vocab) const {
        std::vector<int> ids;
        for (const std::string& tok : tokenize(query)) ids.push_back(vocab.encode(tok));
        ids.push_back(Vocab::kSepId);
        for (const std::string& tok : tokenize(explanation)) ids.push_back(vocab.encode(tok));
        return ids;
    }
};

// --- rendering ---------------------------------------------------------------

/// Fills the topic template: one sentence naming the source incident, one
/// listing the remaining entities, one naming the target symptom, one
/// asking for the pathway. Each entity label appears exactly once; the
/// returned alignment records every occurrence found in the token stream.
inline std::pair<std::string, std::vector<AlignEntry>> render_query(const FactualGraph& f,
                                                                    const std::string& topic,
                                                                    std::uint64_t seed) {
    const auto& templates = forge::topic_templates();
    auto tpl_it = templates.find(topic);
    if (tpl_it == templates.end()) throw TemplateMissing("no query template for topic '" + topic + "'");
    const forge::TopicTemplate& tpl = tpl_it->second;

    std::map<std::string, NodeId> label_to_node;
    for (const auto& [id, info] : f.graph.nodes()) {
        if (!label_to_node.emplace(info.label, id).second)
            throw DuplicateLabel("label '" + info.label + "' used by two nodes");
    }

    static const std::vector<std::pair<std::string, std::string>> month_pairs{
        {"Jan", "May"}, {"Feb", "Jun"}, {"Mar", "Jul"}, {"Apr", "Aug"}};
    const auto& months = month_pairs[static_cast<std::size_t>(splitmix64(seed) % month_pairs.size())];

    const std::string src_label = f.graph.node_info(f.source).label;
    const std::string tgt_label = f.graph.node_info(f.target).label;
    std::vector<std::string> others;
    for (const auto& [id, info] : f.graph.nodes())
        if (id != f.source && id != f.target) others.push_back(info.label);

    std::string text = "In the " + tpl.domain + ", " + src_label + " " + tpl.incident + " in " +
                       months.first + " 2023.";
    if (!others.empty()) {
        text += " Its direct counterparties include ";
        for (std::size_t i = 0; i < others.size(); ++i) {
            if (i > 0) text += (i + 1 == others.size()) ? " and " : ", ";
            text += others[i];
        }
        text += ".";
    }
    text += " By " + months.second + " 2023, " + tgt_label + " " + tpl.symptom + ".";
    text += " Please infer the risk contagion pathways from the initial incident to the impaired counterparty.";

    // Scan for every occurrence of every label as a whole-token subsequence.
    const std::vector<std::string> tokens = tokenize(text);
    std::vector<AlignEntry> alignment;
    for (const auto& [label, node] : label_to_node) {
        const std::vector<std::string> want = tokenize(label);
        if (want.empty()) throw DuplicateLabel("node '" + node + "' has an empty label");
        bool found = false;
        for (std::size_t i = 0; i + want.size() <= tokens.size(); ++i) {
            if (std::equal(want.begin(), want.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
                alignment.push_back({static_cast<int>(i), static_cast<int>(i + want.size()), node});
                found = true;
            }
        }
        if (!found)
            throw InconsistentInputs("label '" + label + "' did not surface in the query");
    }
    std::sort(alignment.begin(), alignment.end(), [](const AlignEntry& a, const AlignEntry& b) {
        return std::tie(a.begin, a.end, a.node) < std::tie(b.begin, b.end, b.node);
    });
    return {text, alignment};
}

/// Chain-of-thought explanation: one delta-comparison line per intervened
/// node in deterministic order, a conclusion line naming the causal chain,
/// and a one-sentence narrative.
inline std::string render_explanation(const CausalPartition& p, const InterventionSet& s) {
    const std::string src = s.factual.graph.node_info(s.factual.source).label;
    const std::string tgt = s.factual.graph.node_info(s.factual.target).label;
    std::string out = "Let me perform formal causal reasoning step by step:";
    int i = 0;
    for (const InterventionEntry& e : s.interventions) {
        const std::string nu = s.factual.graph.node_info(e.node).label;
        const double delta = p.effects.at(e.node);
        out += " (" + std::to_string(++i) + ") P(contagion | do(" + nu +
               "=1)) - P(contagion | do(" + nu + "=0)) " + (delta > 0.0 ? "> 0," : "= 0,");
    }
    out += " (final) The causal chain of risk propagation is ";
    const std::vector<NodeId> chain = causal_chain(p, s.factual);
    for (std::size_t k = 0; k < chain.size(); ++k) {
        if (k > 0) out += " -> ";
        out += s.factual.graph.node_info(chain[k]).label;
    }
    out += ". The initial shock at " + src +
           " propagated along this chain and ultimately impaired " + tgt + ".";
    return out;
}

// --- synthetic world ---------------------------------------------------------

struct PlantedInstruction {
    std::string topic;
    Group group = Group::factual;
    NodeId source;
    NodeId target;
    std::vector<NodeId> chain;
};

struct World {
    KnowledgeGraph kg;
    std::vector<PlantedInstruction> plan;
};

namespace forge {

/// Largest-remainder apportionment of n over the given fractions.
inline std::vector<int> apportion(int n, const std::vector<double>& fractions) {
    std::vector<int> counts(fractions.size());
    std::vector<std::pair<double, std::size_t>> rema;
    int assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double exact = fractions[i] * n;
        counts[i] = static_cast<int>(std::floor(exact));
        assigned += counts[i];
        rema.push_back({exact - std::floor(exact), i});
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int k = 0; k < n - assigned; ++k) ++counts[rema[static_cast<std::size_t>(k)].second];
    return counts;
}

} // namespace forge

/// Builds the synthetic knowledge graph and the per-instruction plan it
/// encodes. Every planned instruction owns one cluster: a directed chain
/// of graph_size_range nodes with one or two attached sink nodes hanging
/// off it, so the chain is the unique source->target path.
inline World generate_world(const DatasetConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int n = cfg.n_instructions;

    std::vector<double> fracs;
    for (const TopicShare& t : cfg.topics) fracs.push_back(t.fraction);
    const std::vector<int> topic_counts = forge::apportion(n, fracs);
    std::vector<std::string> topic_of;
    for (std::size_t ti = 0; ti < cfg.topics.size(); ++ti)
        topic_of.insert(topic_of.end(), static_cast<std::size_t>(topic_counts[ti]),
                        cfg.topics[ti].name);
    rng.shuffle(topic_of);

    int n_factual = static_cast<int>(std::llround(cfg.factual_fraction * n));
    n_factual = std::clamp(n_factual, 0, n);
    std::vector<Group> group_of(static_cast<std::size_t>(n), Group::intervention);
    std::fill(group_of.begin(), group_of.begin() + n_factual, Group::factual);
    rng.shuffle(group_of);

    const forge::EntityTypePool pool = forge::entity_types_for(cfg.profile, cfg.entity_type_count);
    const std::vector<std::string> relations =
        forge::relation_types_for(cfg.profile, cfg.relation_type_count);
    const std::vector<std::string>& stems = forge::label_stems();

    World world;
    KnowledgeGraph::Builder b;
    int type_cursor = 0; // round-robin head guarantees full type coverage
    for (int i = 0; i < n; ++i) {
        const int chain_len = static_cast<int>(rng.range(cfg.graph_min_nodes, cfg.graph_max_nodes));
        const int sink_count = static_cast<int>(rng.range(1, 2));
        const std::string prefix = "g" + forge::pad_int(i, 6) + "_n";
        PlantedInstruction planted;
        planted.topic = topic_of[static_cast<std::size_t>(i)];
        planted.group = group_of[static_cast<std::size_t>(i)];

        const int total = chain_len + sink_count;
        std::vector<NodeId> ids;
        for (int q = 0; q < total; ++q) {
            const NodeId id = prefix + forge::pad_int(q, 2);
            const int type_idx = type_cursor < cfg.entity_type_count
                                     ? type_cursor
                                     : static_cast<int>(rng.range(0, cfg.entity_type_count - 1));
            ++type_cursor;
            const std::string label = rng.pick(stems) + " " +
                                      pool.nouns[static_cast<std::size_t>(type_idx)] + " " +
                                      std::to_string(q + 1);
            b.add_node(id, label, pool.types[static_cast<std::size_t>(type_idx)]);
            ids.push_back(id);
        }
        for (int q = 0; q + 1 < chain_len; ++q)
            b.add_edge(ids[static_cast<std::size_t>(q)], ids[static_cast<std::size_t>(q + 1)],
                       rng.pick(relations));
        for (int sLocal = 0; sLocal < sink_count; ++sLocal) {
            const int host = static_cast<int>(rng.range(0, chain_len - 1));
            b.add_edge(ids[static_cast<std::size_t>(host)],
                       ids[static_cast<std::size_t>(chain_len + sLocal)], rng.pick(relations));
        }
        planted.source = ids.front();
        planted.target = ids[static_cast<std::size_t>(chain_len - 1)];
        planted.chain.assign(ids.begin(), ids.begin() + chain_len);
        world.plan.push_back(std::move(planted));
    }
    world.kg = std::move(b).build();
    return world;
}

/// Public generator entry point: just the graph, fully determined by the seed.
inline KnowledgeGraph generate_synthetic_kg(const DatasetConfig& cfg) {
    return generate_world(cfg).kg;
}

/// Renders the full instruction sequence for a config. Group and topic
/// proportions land within one instruction of the configured fractions;
/// reruns with the same config are byte-identical.
inline std::vector<Instruction> build_dataset(const DatasetConfig& cfg) {
    World world = generate_world(cfg);
    Rng rng(splitmix64(cfg.seed ^ 0x5eed5eed5eedULL));
    std::vector<Instruction> out;
    out.reserve(world.plan.size());
    for (std::size_t i = 0; i < world.plan.size(); ++i) {
        const PlantedInstruction& planted = world.plan[i];
        Instruction inst;
        inst.id = "inst_" + forge::pad_int(static_cast<std::int64_t>(i), 6);
        inst.topic = planted.topic;
        inst.group = planted.group;

        FactualGraph f = dfs_extract(world.kg, planted.source, planted.target,
                                     /*max_depth=*/cfg.graph_max_nodes, /*attach_hops=*/1);
        inst.set = build_intervention_set(f);
        const CausalPartition part = classify_nodes(inst.set);

        const std::uint64_t query_seed = rng.fork(i);
        auto [query, alignment] = render_query(inst.set.factual, planted.topic, query_seed);
        inst.query = std::move(query);
        inst.alignment = std::move(alignment);
        inst.explanation = render_explanation(part, inst.set);

        if (inst.group == Group::factual) {
            inst.referenced.clear();
            inst.label = inst.set.factual_label.value;
        } else {
            const auto pick = rng.range(0, static_cast<std::int64_t>(inst.set.interventions.size()) - 1);
            const InterventionEntry& e = inst.set.interventions[static_cast<std::size_t>(pick)];
            inst.referenced = e.node;
            inst.label = e.label.value;
        }
        out.push_back(std::move(inst));
    }
    return out;
}

// --- dataset serialization ---------------------------------------------------

inline ordered_json instruction_to_json(const Instruction& inst) {
    ordered_json j;
    j["id"] = inst.id;
    j["query"] = inst.query;
    j["explanation"] = inst.explanation;
    j["group"] = to_string(inst.group);
    j["topic"] = inst.topic;
    j["label"] = inst.label;
    ordered_json align = ordered_json::array();
    for (const AlignEntry& a : inst.alignment)
        align.push_back({{"span", {a.begin, a.end}}, {"node", a.node}});
    j["alignment"] = std::move(align);
    ordered_json set = ordered_json::array();
    for (ordered_json& rec : intervention_set_records(inst.set)) set.push_back(std::move(rec));
    j["graph_set"] = std::move(set);
    j["referenced"] = inst.referenced.empty() ? ordered_json(nullptr) : ordered_json(inst.referenced);
    return j;
}

inline Instruction instruction_from_json(const ordered_json& j) {
    Instruction inst;
    inst.id = j.at("id").get<std::string>();
    inst.query = j.at("query").get<std::string>();
    inst.explanation = j.at("explanation").get<std::string>();
    inst.group = group_from_string(j.at("group").get<std::string>());
    inst.topic = j.at("topic").get<std::string>();
    inst.label = j.at("label").get<double>();
    for (const auto& a : j.at("alignment")) {
        AlignEntry e;
        e.begin = a.at("span").at(0).get<int>();
        e.end = a.at("span").at(1).get<int>();
        e.node = a.at("node").get<std::string>();
        inst.alignment.push_back(std::move(e));
    }
    std::vector<ordered_json> records;
    for (const auto& rec : j.at("graph_set")) records.push_back(rec);
    inst.set = intervention_set_from_records(records);
    if (!j.at("referenced").is_null()) inst.referenced = j.at("referenced").get<std::string>();
    return inst;
}

inline std::string dataset_to_jsonl(const std::vector<Instruction>& insts) {
    std::string out;
    for (const Instruction& inst : insts) {
        out += instruction_to_json(inst).dump();
        out += '\n';
    }
    return out;
}

inline std::vector<Instruction> dataset_from_jsonl(std::istream& in) {
    std::vector<Instruction> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(instruction_from_json(ordered_json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw MalformedRecord(std::string("bad instruction line: ") + e.what());
        }
    }
    return out;
}

inline ordered_json dataset_config_to_json(const DatasetConfig& cfg) {
    ordered_json topics = ordered_json::object();
    for (const TopicShare& t : cfg.topics) topics[t.name] = t.fraction;
    ordered_json j;
    j["version"] = 1;
    j["profile"] = to_string(cfg.profile);
    j["n_instructions"] = cfg.n_instructions;
    j["factual_fraction"] = cfg.factual_fraction;
    j["topics"] = std::move(topics);
    j["entity_type_count"] = cfg.entity_type_count;
    j["relation_type_count"] = cfg.relation_type_count;
    j["graph_size_range"] = {cfg.graph_min_nodes, cfg.graph_max_nodes};
    j["seed"] = cfg.seed;
    return j;
}

/// Strict parse: unknown keys are rejected so config typos fail loudly.
inline DatasetConfig dataset_config_from_json(const ordered_json& j) {
    static const std::vector<std::string> known{
        "version", "profile", "n_instructions", "factual_fraction", "topics",
        "entity_type_count", "relation_type_count", "graph_size_range", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("unknown dataset config key '" + it.key() + "'");
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw ConfigError("dataset config requires \"version\": 1");

    const Profile profile =
        j.contains("profile") ? profile_from_string(j["profile"].get<std::string>())
                              : Profile::custom;
    DatasetConfig cfg = profile == Profile::supplychain_like
                            ? DatasetConfig::supplychain_like(100, 0)
                            : DatasetConfig::findkg_like(100, 0);
    cfg.profile = profile;
    if (j.contains("n_instructions")) cfg.n_instructions = j["n_instructions"].get<int>();
    if (j.contains("factual_fraction")) cfg.factual_fraction = j["factual_fraction"].get<double>();
    if (j.contains("topics")) {
        cfg.topics.clear();
        for (auto it = j["topics"].begin(); it != j["topics"].end(); ++it)
            cfg.topics.push_back({it.key(), it.value().get<double>()});
    }
    if (j.contains("entity_type_count")) cfg.entity_type_count = j["entity_type_count"].get<int>();
    if (j.contains("relation_type_count"))
        cfg.relation_type_count = j["relation_type_count"].get<int>();
    if (j.contains("graph_size_range")) {
        cfg.graph_min_nodes = j["graph_size_range"].at(0).get<int>();
        cfg.graph_max_nodes = j["graph_size_range"].at(1).get<int>();
    }
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

inline ordered_json dataset_manifest(const DatasetConfig& cfg) {
    ordered_json j;
    j["version"] = 1;
    j["config"] = dataset_config_to_json(cfg);
    j["seed"] = cfg.seed;
    return j;
}

/// Vocabulary over the whole dataset, in first-seen order.
inline Vocab build_vocab(const std::vector<Instruction>& insts) {
    Vocab v;
    for (const Instruction& inst : insts) {
        for (const std::string& tok : tokenize(inst.query)) v.add(tok);
        for (const std::string& tok : tokenize(inst.explanation)) v.add(tok);
    }
    return v;
}

} // namespace contagion
