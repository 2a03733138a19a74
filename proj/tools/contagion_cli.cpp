// Command-line surface of the contagion engine: dataset construction,
// intervention analysis, training, evaluation, pathway inference and
// Sankey export. Every subcommand is deterministic given its inputs and
// --seed, and writes byte-identical artifacts on reruns.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "contagion/contagion.hpp"

namespace fs = std::filesystem;
using namespace contagion;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CommonOpts {
    std::uint64_t seed = 42;
    std::string config_path;
    std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--seed", opts.seed, "Deterministic seed");
    cmd->add_option("--config", opts.config_path, "JSON config file");
    cmd->add_option("--out", opts.out_dir, "Output directory");
}

ordered_json load_json_file(const std::string& path) {
    try {
        return ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("cannot parse '" + path + "': " + e.what());
    }
}

DatasetConfig resolve_dataset_config(const CommonOpts& opts, const std::string& profile, int n,
                                     bool seed_given) {
    DatasetConfig cfg;
    if (!opts.config_path.empty()) {
        cfg = dataset_config_from_json(load_json_file(opts.config_path));
        if (!profile.empty() && profile != to_string(cfg.profile))
            throw ConfigError("--profile conflicts with the config file");
        if (n > 0) cfg.n_instructions = n;
        if (seed_given) cfg.seed = opts.seed;
    } else {
        const std::string prof = profile.empty() ? "findkg_like" : profile;
        if (prof == "supplychain_like")
            cfg = DatasetConfig::supplychain_like(n > 0 ? n : 100, opts.seed);
        else if (prof == "findkg_like")
            cfg = DatasetConfig::findkg_like(n > 0 ? n : 100, opts.seed);
        else
            throw ConfigError("profile '" + prof + "' needs a --config file");
    }
    cfg.validate();
    return cfg;
}

KnowledgeGraph load_graph_sources(const std::string& graph_path, const std::string& nodes_path,
                                  const std::string& edges_path) {
    if (!graph_path.empty()) {
        std::ifstream in(graph_path);
        if (!in) throw DataError("cannot open '" + graph_path + "'");
        return load_graph_jsonl(in);
    }
    if (nodes_path.empty() || edges_path.empty())
        throw ConfigError("either --graph or both --nodes and --edges are required");
    std::ifstream nodes(nodes_path), edges(edges_path);
    if (!nodes) throw DataError("cannot open '" + nodes_path + "'");
    if (!edges) throw DataError("cannot open '" + edges_path + "'");
    return load_graph(nodes, edges);
}

std::vector<Instruction> load_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::vector<Instruction> insts = dataset_from_jsonl(in);
    if (insts.empty()) throw EmptyDataset("'" + path + "' holds no instructions");
    return insts;
}

ModelState load_checkpoint_file(const std::string& path) {
    return checkpoint_from_json(load_json_file(path));
}

const Instruction& pick_instruction(const std::vector<Instruction>& insts, const std::string& id) {
    if (id.empty()) return insts.front();
    for (const Instruction& inst : insts)
        if (inst.id == id) return inst;
    throw DataError("no instruction with id '" + id + "'");
}

struct HyperOverrides {
    Hyper parse(const ordered_json& j) const {
        static const std::vector<std::string> known{"d", "heads", "split_layer", "upper_layers",
                                                    "gnn_rounds", "ffn_mult", "k_hops",
                                                    "context_span", "tau"};
        for (auto it = j.begin(); it != j.end(); ++it)
            if (std::find(known.begin(), known.end(), it.key()) == known.end())
                throw ConfigError("unknown hyper key '" + it.key() + "'");
        Hyper h;
        if (j.contains("d")) h.d = j["d"].get<int>();
        if (j.contains("heads")) h.heads = j["heads"].get<int>();
        if (j.contains("split_layer")) h.split_layer = j["split_layer"].get<int>();
        if (j.contains("upper_layers")) h.upper_layers = j["upper_layers"].get<int>();
        if (j.contains("gnn_rounds")) h.gnn_rounds = j["gnn_rounds"].get<int>();
        if (j.contains("ffn_mult")) h.ffn_mult = j["ffn_mult"].get<int>();
        if (j.contains("k_hops")) h.k_hops = j["k_hops"].get<int>();
        if (j.contains("context_span")) h.context_span = j["context_span"].get<int>();
        if (j.contains("tau")) h.tau = j["tau"].get<double>();
        return h;
    }
};

std::pair<TrainConfig, Hyper> resolve_train_config(const CommonOpts& opts, bool seed_given) {
    TrainConfig tc;
    Hyper hyper;
    if (!opts.config_path.empty()) {
        const ordered_json j = load_json_file(opts.config_path);
        static const std::vector<std::string> known{"version", "epochs", "learning_rate",
                                                    "batch_size", "seed", "loss_weights",
                                                    "eval_every", "hyper"};
        for (auto it = j.begin(); it != j.end(); ++it)
            if (std::find(known.begin(), known.end(), it.key()) == known.end())
                throw ConfigError("unknown train config key '" + it.key() + "'");
        if (!j.contains("version") || j["version"].get<int>() != 1)
            throw ConfigError("train config requires \"version\": 1");
        if (j.contains("epochs")) tc.epochs = j["epochs"].get<int>();
        if (j.contains("learning_rate")) tc.learning_rate = j["learning_rate"].get<double>();
        if (j.contains("batch_size")) tc.batch_size = j["batch_size"].get<int>();
        if (j.contains("seed")) tc.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("loss_weights")) {
            const auto& w = j["loss_weights"];
            if (!w.is_array() || w.size() != 3)
                throw ConfigError("loss_weights must hold three values");
            for (int i = 0; i < 3; ++i)
                tc.loss_weights[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)].get<double>();
        }
        if (j.contains("eval_every")) tc.eval_every = j["eval_every"].get<int>();
        if (j.contains("hyper")) hyper = HyperOverrides{}.parse(j["hyper"]);
    }
    if (seed_given) tc.seed = opts.seed;
    tc.validate();
    return {tc, hyper};
}

void write_out(const CommonOpts& opts, const std::string& name, const std::string& content) {
    fs::create_directories(opts.out_dir);
    write_file((fs::path(opts.out_dir) / name).string(), content);
}

std::string report_csv(const EvalReport& rep) {
    std::ostringstream out;
    out.precision(17);
    out << "id,p_hat,label,iou\n";
    for (const InstanceRecord& r : rep.per_instance) {
        out << r.id << ',' << r.p_hat << ',' << r.label << ',';
        if (r.iou) out << *r.iou;
        out << '\n';
    }
    return out.str();
}

std::string partition_summary(const CausalPartition& p) {
    auto join = [](const std::set<NodeId>& s) {
        std::string out;
        for (const NodeId& v : s) {
            if (!out.empty()) out += ",";
            out += v;
        }
        return out;
    };
    return "X={" + join(p.causal) + "}, Z={" + join(p.non_causal) + "}";
}

// --- subcommand bodies -------------------------------------------------------

int run_gen_kg(const CommonOpts& opts, const std::string& profile, int n, bool seed_given) {
    const DatasetConfig cfg = resolve_dataset_config(opts, profile, n, seed_given);
    const KnowledgeGraph kg = generate_synthetic_kg(cfg);
    std::ostringstream nodes, edges;
    save_nodes_csv(kg, nodes);
    save_edges_csv(kg, edges);
    write_out(opts, "kg_nodes.csv", nodes.str());
    write_out(opts, "kg_edges.csv", edges.str());
    std::cout << "generated " << kg.node_count() << " nodes, " << kg.edge_count() << " edges\n";
    return kExitOk;
}

int run_gen_dataset(const CommonOpts& opts, const std::string& profile, int n, bool seed_given) {
    const DatasetConfig cfg = resolve_dataset_config(opts, profile, n, seed_given);
    const std::vector<Instruction> insts = build_dataset(cfg);
    write_out(opts, "dataset.jsonl", dataset_to_jsonl(insts));
    write_out(opts, "manifest.json", dataset_manifest(cfg).dump(2) + "\n");
    int factual = 0;
    for (const Instruction& inst : insts) factual += inst.group == Group::factual;
    std::cout << "wrote " << insts.size() << " instructions (" << factual << " factual, "
              << insts.size() - static_cast<std::size_t>(factual) << " intervention)\n";
    return kExitOk;
}

int run_intervene(const CommonOpts& opts, const KnowledgeGraph& kg, const std::string& source,
                  const std::string& target, int max_depth, int attach_hops) {
    const FactualGraph f = dfs_extract(kg, source, target, max_depth, attach_hops);
    const InterventionSet set = build_intervention_set(f);
    std::string out;
    for (const ordered_json& rec : intervention_set_records(set)) out += rec.dump() + "\n";
    write_out(opts, "interventions.jsonl", out);
    std::cout << "factual graph: " << f.graph.node_count() << " nodes; "
              << set.interventions.size() << " interventions\n";
    return kExitOk;
}

int run_classify(const CommonOpts& opts, const KnowledgeGraph& kg, const std::string& source,
                 const std::string& target, int max_depth, int attach_hops,
                 const std::string& format) {
    const FactualGraph f = dfs_extract(kg, source, target, max_depth, attach_hops);
    const InterventionSet set = build_intervention_set(f);
    const CausalPartition p = classify_nodes(set);
    std::cout << partition_summary(p) << "\n";
    if (format == "csv") {
        std::ostringstream out;
        out << "node,delta,side\n";
        for (const auto& [node, delta] : p.effects)
            out << node << ',' << delta << ',' << (p.causal.count(node) ? "X" : "Z") << '\n';
        write_out(opts, "partition.csv", out.str());
    } else {
        ordered_json j;
        j["schema_version"] = 1;
        j["source"] = f.source;
        j["target"] = f.target;
        j["causal"] = p.causal;
        j["non_causal"] = p.non_causal;
        j["effects"] = p.effects;
        write_out(opts, "partition.json", j.dump(2) + "\n");
    }
    return kExitOk;
}

int run_train(const CommonOpts& opts, const std::string& dataset_path, bool seed_given) {
    const std::vector<Instruction> insts = load_dataset_file(dataset_path);
    auto [tc, hyper] = resolve_train_config(opts, seed_given);
    const Vocab vocab = build_vocab(insts);
    ModelState init = init_model(hyper, vocab.tokens(), tc.seed);
    auto [model, history] = train(insts, tc, std::move(init));
    write_out(opts, "checkpoint.json", checkpoint_to_json(model).dump() + "\n");
    write_out(opts, "history.csv", history_to_csv(history));
    write_out(opts, "train_report.json", eval_report_to_json(history.final_metrics).dump(2) + "\n");
    std::cout << "trained " << history.steps.size() << " steps; final L_joint "
              << history.steps.back().l_joint << "\n";
    return kExitOk;
}

int run_eval(const CommonOpts& opts, const std::string& dataset_path,
             const std::string& checkpoint_path, const std::string& format) {
    const std::vector<Instruction> insts = load_dataset_file(dataset_path);
    ModelState model = load_checkpoint_file(checkpoint_path);
    const EvalReport rep = evaluate(model, insts);
    if (format == "csv")
        write_out(opts, "report.csv", report_csv(rep));
    else
        write_out(opts, "report.json", eval_report_to_json(rep).dump(2) + "\n");
    std::cout << "acc=" << rep.acc << " auc=";
    if (rep.auc)
        std::cout << *rep.auc;
    else
        std::cout << "undefined";
    std::cout << " iou_mean=" << rep.iou_mean << "\n";
    return kExitOk;
}

struct PathResult {
    RiskPath path;
    RiskScores scores;
};

PathResult infer_path_for(ModelState& model, const Instruction& inst) {
    const Vocab vocab = Vocab::from_tokens(model.vocab);
    ad::Tape t;
    ModelVars mv = bind_model(t, model, /*needs_grad=*/false);
    BoundModel bm = bound_view(mv, model);
    ad::Var h_token = encode_tokens(t, inst.token_ids(vocab), bm);
    AttentionStack stack =
        cross_attention_on(t, h_token, encode_nodes(t, inst.set.factual.graph, bm), bm);
    PathResult res;
    res.scores = node_risk_scores(t, stack, inst.set.factual.graph.node_ids(), bm);
    res.path = extract_path(inst.set.factual, res.scores);
    return res;
}

int run_infer_path(const CommonOpts& opts, const std::string& dataset_path,
                   const std::string& checkpoint_path, const std::string& id) {
    const std::vector<Instruction> insts = load_dataset_file(dataset_path);
    const Instruction& inst = pick_instruction(insts, id);
    ModelState model = load_checkpoint_file(checkpoint_path);
    const PathResult res = infer_path_for(model, inst);
    ordered_json j;
    j["schema_version"] = 1;
    j["id"] = inst.id;
    j["nodes"] = res.path.nodes;
    j["intensities"] = res.path.intensities;
    j["estimate"] = res.scores.estimate;
    write_out(opts, "path_" + inst.id + ".json", j.dump(2) + "\n");
    std::cout << inst.id << ": ";
    for (std::size_t i = 0; i < res.path.nodes.size(); ++i) {
        if (i) std::cout << " -> ";
        std::cout << res.path.nodes[i];
    }
    std::cout << "\n";
    return kExitOk;
}

int run_export_sankey(const CommonOpts& opts, const std::string& dataset_path,
                      const std::string& checkpoint_path, const std::string& id) {
    const std::vector<Instruction> insts = load_dataset_file(dataset_path);
    const Instruction& inst = pick_instruction(insts, id);
    ModelState model = load_checkpoint_file(checkpoint_path);
    const PathResult res = infer_path_for(model, inst);
    SankeyDoc::Meta meta;
    meta.query_id = inst.id;
    meta.seed = opts.seed;
    char hash[32];
    std::snprintf(hash, sizeof hash, "fnv1a:%016llx",
                  static_cast<unsigned long long>(fnv1a(read_file(checkpoint_path))));
    meta.checkpoint_hash = hash;
    const SankeyDoc doc = export_sankey(res.path, inst.set.factual, res.scores,
                                        inst.explanation, meta);
    write_out(opts, "sankey_" + inst.id + ".json", sankey_to_json(doc).dump(2) + "\n");
    std::cout << "exported sankey for " << inst.id << " (" << doc.nodes.size() << " nodes, "
              << doc.links.size() << " links)\n";
    return kExitOk;
}

int run_robustness(const CommonOpts& opts, const std::string& dataset_path,
                   const std::string& checkpoint_path, const std::string& mode, int n_add,
                   double drop_fraction) {
    const std::vector<Instruction> insts = load_dataset_file(dataset_path);
    ModelState model = load_checkpoint_file(checkpoint_path);
    RobustnessReport rep;
    if (mode == "confounder")
        rep = random_confounder_test(model, insts, n_add, opts.seed);
    else if (mode == "subset")
        rep = subset_of_data_test(model, insts, drop_fraction, opts.seed);
    else
        throw ConfigError("mode must be 'confounder' or 'subset'");
    write_out(opts, "robustness_" + mode + ".json", robustness_report_to_json(rep).dump(2) + "\n");
    std::cout << "mode=" << mode << " d_acc=" << rep.d_acc << " d_auc=";
    if (rep.d_auc)
        std::cout << *rep.d_auc;
    else
        std::cout << "undefined";
    std::cout << " d_iou=" << rep.d_iou << "\n";
    return kExitOk;
}

int run_gradcheck(const CommonOpts& opts, double eps, int coords) {
    const AuditResult r = run_gradient_audit(eps, coords, opts.seed);
    std::cout << "L_cl   max rel err = " << r.err_cl << "\n";
    std::cout << "L_en   max rel err = " << r.err_en << "\n";
    std::cout << "L_path max rel err = " << r.err_path << "\n";
    if (r.worst() > 1e-4) {
        std::cerr << "gradient audit failed: " << r.worst() << " > 1e-4\n";
        return kExitNumeric;
    }
    std::cout << "gradient audit passed (worst " << r.worst() << " <= 1e-4)\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"contagion: causal reasoning engine for financial risk contagion"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string profile, dataset_path, checkpoint_path, graph_path, nodes_path, edges_path;
    std::string source, target, id, format = "json", mode = "confounder";
    int n = 0, max_depth = 6, attach_hops = 1, n_add = 3, coords = 200;
    double drop_fraction = 0.2, eps = 1e-5;

    auto* gen_kg = app.add_subcommand("gen-kg", "Generate a synthetic knowledge graph");
    add_common(gen_kg, opts);
    gen_kg->add_option("--profile", profile, "findkg_like | supplychain_like");
    gen_kg->add_option("-n,--n-instructions", n, "Planned instruction count");

    auto* gen_dataset = app.add_subcommand("gen-dataset", "Generate a causal instruction dataset");
    add_common(gen_dataset, opts);
    gen_dataset->add_option("--profile", profile, "findkg_like | supplychain_like");
    gen_dataset->add_option("-n,--n-instructions", n, "Instruction count");

    auto add_graph_inputs = [&](CLI::App* cmd) {
        cmd->add_option("--graph", graph_path, "Graph JSONL file");
        cmd->add_option("--nodes", nodes_path, "Nodes CSV file");
        cmd->add_option("--edges", edges_path, "Edges CSV file");
        cmd->add_option("-s,--source", source, "Risk source node id")->required();
        cmd->add_option("-t,--target", target, "Risk target node id")->required();
        cmd->add_option("--max-depth", max_depth, "Path depth bound");
        cmd->add_option("--attach-hops", attach_hops, "Context attachment radius");
    };

    auto* intervene = app.add_subcommand("intervene", "Build the intervention set for a query");
    add_common(intervene, opts);
    add_graph_inputs(intervene);

    auto* classify = app.add_subcommand("classify", "Partition nodes into causal X and non-causal Z");
    add_common(classify, opts);
    add_graph_inputs(classify);
    classify->add_option("--format", format, "json | csv");

    auto* train_cmd = app.add_subcommand("train", "Train the fusion model on a dataset");
    add_common(train_cmd, opts);
    train_cmd->add_option("--dataset", dataset_path, "Dataset JSONL")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    add_common(eval_cmd, opts);
    eval_cmd->add_option("--dataset", dataset_path, "Dataset JSONL")->required();
    eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint JSON")->required();
    eval_cmd->add_option("--format", format, "json | csv");

    auto* infer = app.add_subcommand("infer-path", "Extract the highest-risk contagion pathway");
    add_common(infer, opts);
    infer->add_option("--dataset", dataset_path, "Dataset JSONL")->required();
    infer->add_option("--checkpoint", checkpoint_path, "Checkpoint JSON")->required();
    infer->add_option("--id", id, "Instruction id (default: first)");

    auto* sankey = app.add_subcommand("export-sankey", "Export Sankey data for one query");
    add_common(sankey, opts);
    sankey->add_option("--dataset", dataset_path, "Dataset JSONL")->required();
    sankey->add_option("--checkpoint", checkpoint_path, "Checkpoint JSON")->required();
    sankey->add_option("--id", id, "Instruction id (default: first)");

    auto* robust = app.add_subcommand("robustness", "Run confounder / subset robustness tests");
    add_common(robust, opts);
    robust->add_option("--dataset", dataset_path, "Dataset JSONL")->required();
    robust->add_option("--checkpoint", checkpoint_path, "Checkpoint JSON")->required();
    robust->add_option("--mode", mode, "confounder | subset");
    robust->add_option("--n-add", n_add, "Confounder nodes per graph");
    robust->add_option("--drop-fraction", drop_fraction, "Fraction of non-terminal nodes to drop");

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference audit of all loss gradients");
    add_common(gradcheck, opts);
    gradcheck->add_option("--eps", eps, "Central difference step");
    gradcheck->add_option("--coords", coords, "Sampled coordinates per loss");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen_kg->parsed())
            return run_gen_kg(opts, profile, n, gen_kg->count("--seed") > 0);
        if (gen_dataset->parsed())
            return run_gen_dataset(opts, profile, n, gen_dataset->count("--seed") > 0);
        if (intervene->parsed())
            return run_intervene(opts, load_graph_sources(graph_path, nodes_path, edges_path),
                                 source, target, max_depth, attach_hops);
        if (classify->parsed())
            return run_classify(opts, load_graph_sources(graph_path, nodes_path, edges_path),
                                source, target, max_depth, attach_hops, format);
        if (train_cmd->parsed())
            return run_train(opts, dataset_path, train_cmd->count("--seed") > 0);
        if (eval_cmd->parsed()) return run_eval(opts, dataset_path, checkpoint_path, format);
        if (infer->parsed()) return run_infer_path(opts, dataset_path, checkpoint_path, id);
        if (sankey->parsed()) return run_export_sankey(opts, dataset_path, checkpoint_path, id);
        if (robust->parsed())
            return run_robustness(opts, dataset_path, checkpoint_path, mode, n_add, drop_fraction);
        if (gradcheck->parsed()) return run_gradcheck(opts, eps, coords);
        std::cerr << "no subcommand selected\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
