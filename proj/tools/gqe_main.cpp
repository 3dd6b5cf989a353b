#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "gqe/checkpoint.hpp"
#include "gqe/config.hpp"
#include "gqe/graph.hpp"
#include "gqe/io.hpp"
#include "gqe/metrics.hpp"
#include "gqe/model.hpp"
#include "gqe/rng.hpp"
#include "gqe/sampler.hpp"
#include "gqe/synthetic.hpp"
#include "gqe/train.hpp"
#include "gqe/verify.hpp"

namespace fs = std::filesystem;
using namespace gqe;

namespace {

// ---------------------------------------------------------------------------
// graph directory artifacts
//
// ingest normalizes any input into graph_dir/{nodes.tsv, edges.tsv,
// features.tsv?, graph.json}; later commands reload from there and refuse to
// run if the files no longer hash to the recorded fingerprint.

std::string fingerprint_hex(const TypedGraph& g) {
    std::ostringstream out;
    out << std::hex << Rng::fnv1a(serialize_canonical(g));
    return out.str();
}

bool write_graph_dir(const std::string& dir, const TypedGraph& g, int min_relation_edges) {
    fs::create_directories(dir);
    std::ostringstream nodes, edges;
    for (int v = 0; v < g.node_count(); ++v)
        nodes << g.node_name(v) << '\t' << g.type(g.node_type(v)).name << '\n';
    for (const Edge& e : g.edges(false))
        edges << g.node_name(e.src) << '\t' << g.relation(e.rel).name << '\t' << g.node_name(e.dst)
              << '\n';
    bool changed = atomic_write_file(dir + "/nodes.tsv", nodes.str());
    changed |= atomic_write_file(dir + "/edges.tsv", edges.str());
    if (!g.one_hot_features()) {
        std::ostringstream feats;
        for (int v = 0; v < g.node_count(); ++v) {
            feats << g.node_name(v) << '\t';
            const std::vector<int>& f = g.node_features(v);
            for (std::size_t i = 0; i < f.size(); ++i) feats << (i ? " " : "") << f[i];
            feats << '\n';
        }
        changed |= atomic_write_file(dir + "/features.tsv", feats.str());
    }
    nlohmann::ordered_json manifest;
    manifest["nodes"] = g.node_count();
    manifest["types"] = g.type_count();
    manifest["relations"] = g.base_relation_count();
    manifest["edges"] = g.edge_count(false);
    manifest["min_relation_edges"] = min_relation_edges;
    manifest["fingerprint"] = fingerprint_hex(g);
    changed |= atomic_write_file(dir + "/graph.json", manifest.dump(2) + "\n");
    return changed;
}

TypedGraph load_graph_dir(const std::string& dir) {
    const std::string manifest_path = dir + "/graph.json";
    if (!fs::exists(manifest_path))
        throw ArgumentError("no graph at " + dir + " (run ingest first)");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(manifest_path + ": " + e.what());
    }
    const std::string feats = dir + "/features.tsv";
    TypedGraph g = TypedGraph::ingest(dir + "/edges.tsv", dir + "/nodes.tsv",
                                      fs::exists(feats) ? feats : "");
    if (fingerprint_hex(g) != manifest.value("fingerprint", ""))
        throw DataError(dir + ": fingerprint mismatch; graph files were edited after ingest");
    return g;
}

// The held-out edge list rides alongside the dataset so train can rebuild the
// training graph. Only base rows are stored; loading restores both directions.
bool write_deleted(const std::string& path, const TypedGraph& g, const std::vector<Edge>& deleted) {
    std::ostringstream out;
    for (const Edge& e : deleted) {
        if (g.relation(e.rel).is_inverse) continue;
        out << g.node_name(e.src) << '\t' << g.relation(e.rel).name << '\t' << g.node_name(e.dst)
            << '\n';
    }
    return atomic_write_file(path, out.str());
}

std::vector<Edge> read_deleted(const std::string& path, const TypedGraph& g) {
    if (!fs::exists(path))
        throw ArgumentError("no held-out edge list at " + path + " (run sample first)");
    std::istringstream in(read_text_file(path));
    std::vector<Edge> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string ctx = path + ":" + std::to_string(lineno);
        const auto cols = detail::split_tabs(line);
        if (cols.size() != 3) throw ParseError(ctx + ": expected head<TAB>relation<TAB>tail");
        const int s = g.find_node(cols[0]);
        const int r = g.find_relation(cols[1]);
        const int d = g.find_node(cols[2]);
        if (s < 0 || r < 0 || d < 0) throw DataError(ctx + ": unknown node or relation");
        out.push_back({s, r, d});
        out.push_back({d, g.relation(r).inverse_of, s});
    }
    return out;
}

// Exclusive-create lock so two runs cannot write one checkpoint directory at
// the same time. Held for the life of the command, removed on destruction.
class DirLock {
  public:
    explicit DirLock(const std::string& dir) : path_(dir + "/.lock") {
        fs::create_directories(dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0)
            throw DataError("another run holds " + path_ +
                            " (remove the file if that run is dead)");
        const std::string pid = std::to_string(::getpid()) + "\n";
        (void)!::write(fd_, pid.data(), pid.size());
    }
    ~DirLock() {
        if (fd_ >= 0) ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

  private:
    std::string path_;
    int fd_ = -1;
};

ModelParams load_model(const RunConfig& cfg, const TypedGraph& g, const std::string& override_path) {
    if (cfg.mode == "exact") return exact_parameters(g);
    const std::string path =
        override_path.empty() ? cfg.checkpoint_dir + "/model.ckpt" : override_path;
    if (!fs::exists(path)) throw ArgumentError("no checkpoint at " + path + " (run train first)");
    ModelParams p = load_checkpoint(path).params;
    p.check_compatible(g);
    return p;
}

// ---------------------------------------------------------------------------
// commands

int cmd_ingest(const RunConfig& cfg) {
    TypedGraph g = [&] {
        if (!cfg.synthetic.empty()) return synthetic_graph(cfg.synthetic, cfg.seed);
        if (cfg.edges.empty() || cfg.nodes.empty())
            throw ArgumentError("ingest needs --edges and --nodes, or --synthetic");
        return TypedGraph::ingest(cfg.edges, cfg.nodes, cfg.features, cfg.min_relation_edges);
    }();
    const bool changed = write_graph_dir(cfg.graph_dir, g, cfg.min_relation_edges);
    std::cout << "graph: " << g.node_count() << " nodes, " << g.type_count() << " types, "
              << g.base_relation_count() << " relations, " << g.edge_count(false) << " edges\n"
              << cfg.graph_dir << ": " << (changed ? "written" : "unchanged") << "\n";
    return 0;
}

int cmd_sample(const RunConfig& cfg) {
    const TypedGraph full = load_graph_dir(cfg.graph_dir);
    const GraphSplit split = split_edges(full, cfg.split_fraction, cfg.seed);
    const DatasetSpec spec = cfg.dataset_spec();
    const Dataset ds = build_dataset(split, full, spec);
    fs::create_directories(cfg.dataset_dir);
    bool changed = write_dataset(cfg.dataset_dir, ds, full, spec);
    changed |= write_deleted(cfg.dataset_dir + "/deleted.tsv", full, split.deleted_edges);
    for (const std::string& w : ds.warnings) std::cout << "warning: " << w << "\n";
    for (const auto& [name, examples] : ds.splits)
        std::cout << name << ": " << examples.size() << " examples\n";
    std::cout << "held out: " << split.deleted_edges.size() / 2 << " edge pairs\n"
              << cfg.dataset_dir << ": " << (changed ? "written" : "unchanged") << "\n";
    return 0;
}

void report_stage(const std::string& label, const TrainResult& r) {
    std::cout << label << ": " << r.batches << " batches";
    if (!r.val_history.empty()) std::cout << ", best val auc " << r.best_val;
    if (r.clipped > 0) std::cout << ", " << r.clipped << " clipped";
    if (r.degenerate > 0) std::cout << ", " << r.degenerate << " degenerate";
    std::cout << "\n";
    for (const std::string& e : r.events) std::cout << label << ": " << e << "\n";
}

int cmd_train(const RunConfig& cfg) {
    if (cfg.mode == "exact")
        throw ArgumentError("train: exact mode has no trainable parameters (use oracle-check)");
    const TypedGraph full = load_graph_dir(cfg.graph_dir);
    const Dataset ds = read_dataset(cfg.dataset_dir, full);
    const std::vector<Edge> deleted = read_deleted(cfg.dataset_dir + "/deleted.tsv", full);
    const TypedGraph train_graph = full.without_edges(deleted);

    const DirLock lock(cfg.checkpoint_dir);
    const ModelParams init = init_params(train_graph, variant_from(cfg.variant),
                                         psi_from(cfg.psi), cfg.train.d, cfg.seed);

    nlohmann::ordered_json extra;
    extra["optimizer"] = OptimizerState{}.constants();
    extra["seed"] = cfg.seed;

    const TrainResult s1 = train_stage1_edges(init, train_graph, ds, cfg.train);
    report_stage("stage 1", s1);
    nlohmann::ordered_json extra1 = extra;
    extra1["stage"] = "stage1";
    save_checkpoint(s1.params, cfg.checkpoint_dir + "/stage1.ckpt", extra1);
    atomic_write_file(cfg.checkpoint_dir + "/stage1_log.ndjson", train_log_ndjson(s1.log));

    ModelParams final_params = s1.params;
    std::string stage = "stage1";
    if (!cfg.edge_only && !s1.diverged) {
        const TrainResult s2 = train_stage2_full(s1.params, train_graph, ds, cfg.train);
        report_stage("stage 2", s2);
        atomic_write_file(cfg.checkpoint_dir + "/stage2_log.ndjson", train_log_ndjson(s2.log));
        final_params = s2.params;
        stage = "stage2";
    }
    nlohmann::ordered_json extraf = extra;
    extraf["stage"] = stage;
    const bool changed = save_checkpoint(final_params, cfg.checkpoint_dir + "/model.ckpt", extraf);
    std::cout << cfg.checkpoint_dir << "/model.ckpt: " << (changed ? "written" : "unchanged")
              << "\n";
    return 0;
}

// Per-structure soft-AND comparison cells for the report; only structures
// without bound variables qualify, scored against standard pools.
nlohmann::ordered_json baseline_section(const ModelParams& params, const TypedGraph& g,
                                        const Dataset& ds,
                                        const std::vector<QueryExample>& test) {
    const auto valid_it = ds.splits.find("valid");
    if (valid_it == ds.splits.end() || valid_it->second.empty())
        throw ArgumentError("eval: the baseline needs a valid split to fit its scale");
    const double scale = fit_baseline_scale(params, g, valid_it->second);

    nlohmann::ordered_json section;
    section["scale"] = scale;
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const std::string& s : {"chain1", "inter2", "inter3"}) {
        std::vector<double> pos, neg;
        double apr_sum = 0.0;
        int examples = 0, skipped = 0;
        for (const QueryExample& ex : test) {
            if (ex.query.structure != s || ex.standard_negatives.empty()) continue;
            try {
                const double p = enumeration_baseline(params, g, ex.query, ex.positive, scale);
                std::vector<double> pool;
                pool.reserve(ex.standard_negatives.size());
                for (int v : ex.standard_negatives)
                    pool.push_back(enumeration_baseline(params, g, ex.query, v, scale));
                pos.push_back(p);
                neg.insert(neg.end(), pool.begin(), pool.end());
                apr_sum += apr_from_scores(p, pool);
                ++examples;
            } catch (const NumericError&) {
                ++skipped;
            }
        }
        if (examples == 0) continue;
        nlohmann::ordered_json cell;
        cell["structure"] = s;
        cell["auc"] = auc(pos, neg);
        cell["apr"] = apr_sum / examples;
        cell["examples"] = examples;
        if (skipped > 0) cell["skipped"] = skipped;
        cells.push_back(std::move(cell));
    }
    section["cells"] = std::move(cells);
    return section;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_override) {
    const TypedGraph full = load_graph_dir(cfg.graph_dir);
    const Dataset ds = read_dataset(cfg.dataset_dir, full);
    const auto test_it = ds.splits.find("test");
    if (test_it == ds.splits.end() || test_it->second.empty())
        throw ArgumentError("eval: dataset has no test split");

    const DirLock lock(cfg.checkpoint_dir);
    const ModelParams params = load_model(cfg, full, checkpoint_override);

    std::vector<RankRecord> ranks;
    const MetricReport report =
        evaluate(params, full, test_it->second, NegKind::Both, cfg.include_chain1, &ranks);
    nlohmann::ordered_json j = report.to_json();
    if (cfg.eval_baseline) j["baseline"] = baseline_section(params, full, ds, test_it->second);

    bool changed = atomic_write_file(cfg.checkpoint_dir + "/report.json", j.dump(2) + "\n");
    changed |= atomic_write_file(cfg.checkpoint_dir + "/report.txt", report.to_table());
    changed |= atomic_write_file(cfg.checkpoint_dir + "/ranks.csv", ranks_csv(ranks));

    std::cout << report.to_table();
    if (cfg.eval_baseline) {
        const auto& b = j["baseline"];
        std::cout << "baseline scale " << b["scale"].get<double>() << "\n";
        for (const auto& cell : b["cells"])
            std::cout << "baseline " << cell["structure"].get<std::string>() << ": auc "
                      << cell["auc"].get<double>() << ", apr " << cell["apr"].get<double>()
                      << "\n";
    }
    std::cout << cfg.checkpoint_dir << " reports: " << (changed ? "written" : "unchanged") << "\n";
    return 0;
}

int cmd_answer(const RunConfig& cfg, const std::string& query_path,
               const std::string& checkpoint_override, int top_k) {
    const TypedGraph full = load_graph_dir(cfg.graph_dir);
    const ModelParams params = load_model(cfg, full, checkpoint_override);

    std::string text;
    if (query_path == "-") {
        std::ostringstream buf;
        buf << std::cin.rdbuf();
        text = buf.str();
    } else {
        text = read_text_file(query_path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("query JSON: " + std::string(e.what()));
    }
    const QueryDag q = query_from_json(j, full);

    const std::vector<Ranked> top = answer(params, full, q, top_k);
    std::cout << "rank\tnode\tscore\n" << std::setprecision(17);
    for (std::size_t i = 0; i < top.size(); ++i)
        std::cout << i + 1 << '\t' << full.node_name(top[i].node) << '\t' << top[i].value << '\n';
    return 0;
}

int cmd_oracle_check(const RunConfig& cfg) {
    const TypedGraph full = load_graph_dir(cfg.graph_dir);
    const ExactnessReport report = check_exactness(full, cfg.oracle_queries, cfg.seed);
    std::cout << to_string(report);
    return report.ok() ? 0 : 3;
}

// ---------------------------------------------------------------------------
// flag plumbing: every override funnels through the config-key parser so
// flags and file keys share one grammar and one set of error messages.

struct Overrides {
    std::vector<std::pair<std::string, std::string>> kv;  // (key, value) in parse order
};

void key_flag(CLI::App* cmd, Overrides& ov, const std::string& flag, const std::string& key,
              const std::string& help) {
    cmd->add_option_function<std::string>(
           flag, [&ov, key](const std::string& v) { ov.kv.emplace_back(key, v); }, help)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

void bool_flag(CLI::App* cmd, Overrides& ov, const std::string& flag, const std::string& key,
               const std::string& help) {
    cmd->add_flag_function(
        flag, [&ov, key](std::int64_t) { ov.kv.emplace_back(key, "true"); }, help);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"geometric embeddings for conjunctive queries on typed graphs"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "key=value run configuration file");
    Overrides ov;
    key_flag(&app, ov, "--seed", "seed", "root random seed (all stages derive from it)");
    key_flag(&app, ov, "--threads", "threads", "worker thread cap");

    CLI::App* ingest = app.add_subcommand("ingest", "normalize a graph into its artifact directory");
    key_flag(ingest, ov, "--edges", "edges", "TSV edge list: head<TAB>relation<TAB>tail");
    key_flag(ingest, ov, "--nodes", "nodes", "TSV node typing: node<TAB>type");
    key_flag(ingest, ov, "--features", "features", "optional TSV sparse node features");
    key_flag(ingest, ov, "--synthetic", "synthetic", "generator spec, e.g. blocks:4,12,0.5,2,3");
    key_flag(ingest, ov, "--min-relation-edges", "min_relation_edges",
             "drop relations with fewer base edges");
    key_flag(ingest, ov, "--graph-dir", "graph_dir", "output directory");

    CLI::App* sample = app.add_subcommand("sample", "hold out edges and sample query datasets");
    key_flag(sample, ov, "--graph-dir", "graph_dir", "ingested graph directory");
    key_flag(sample, ov, "--dataset-dir", "dataset_dir", "output directory");
    key_flag(sample, ov, "--split-fraction", "split_fraction", "fraction of edge pairs to hold out");
    key_flag(sample, ov, "--train-per-structure", "train_per_structure", "train examples per shape");
    key_flag(sample, ov, "--valid-per-structure", "valid_per_structure", "valid examples per shape");
    key_flag(sample, ov, "--test-per-structure", "test_per_structure", "test examples per shape");
    key_flag(sample, ov, "--negative-pool", "negative_pool", "negatives per valid/test example");
    key_flag(sample, ov, "--train-negative-pool", "train_negative_pool",
             "negatives per train example");

    CLI::App* train = app.add_subcommand("train", "run the two-stage schedule");
    key_flag(train, ov, "--graph-dir", "graph_dir", "ingested graph directory");
    key_flag(train, ov, "--dataset-dir", "dataset_dir", "sampled dataset directory");
    key_flag(train, ov, "--checkpoint-dir", "checkpoint_dir", "output directory");
    key_flag(train, ov, "--variant", "variant", "projection form: bilinear, distmult or transe");
    key_flag(train, ov, "--psi", "psi", "intersection reducer: min or mean");
    key_flag(train, ov, "--dim", "dim", "embedding dimension");
    key_flag(train, ov, "--lr", "lr", "learning rate");
    key_flag(train, ov, "--batch-size", "batch_size", "examples per batch");
    key_flag(train, ov, "--margin", "margin", "hinge margin");
    key_flag(train, ov, "--path-weight", "path_weight", "loss weight for chain2/chain3");
    key_flag(train, ov, "--intersection-weight", "intersection_weight",
             "loss weight for intersection shapes");
    key_flag(train, ov, "--val-interval", "val_interval", "batches between validations");
    key_flag(train, ov, "--patience", "patience", "validations without improvement before stopping");
    key_flag(train, ov, "--clip-norm", "clip_norm", "global gradient norm cap (0 disables)");
    key_flag(train, ov, "--max-batches", "max_batches", "hard per-stage batch cap");
    bool_flag(train, ov, "--mirror-hard-batches", "mirror_hard_batches",
              "reuse each standard batch's examples for its hard twin");
    bool_flag(train, ov, "--edge-only", "edge_only", "stop after the edge-prediction stage");

    CLI::App* eval = app.add_subcommand("eval", "score the test split and write reports");
    std::string eval_ckpt;
    eval->add_option("--checkpoint", eval_ckpt,
                     "checkpoint file (default <checkpoint_dir>/model.ckpt)");
    key_flag(eval, ov, "--graph-dir", "graph_dir", "ingested graph directory");
    key_flag(eval, ov, "--dataset-dir", "dataset_dir", "sampled dataset directory");
    key_flag(eval, ov, "--checkpoint-dir", "checkpoint_dir", "checkpoint and report directory");
    key_flag(eval, ov, "--mode", "mode", "learned (read a checkpoint) or exact (analytic)");
    key_flag(eval, ov, "--include-chain1", "include_chain1", "count chain1 cells in the macro");
    bool_flag(eval, ov, "--baseline", "eval_baseline", "add the soft-AND enumeration comparison");

    CLI::App* ans = app.add_subcommand("answer", "rank candidate nodes for one query");
    std::string query_path, ans_ckpt;
    int top_k = 10;
    ans->add_option("--query", query_path, "query JSON file, or - for stdin")->required();
    ans->add_option("--top-k", top_k, "rows to print");
    ans->add_option("--checkpoint", ans_ckpt,
                    "checkpoint file (default <checkpoint_dir>/model.ckpt)");
    key_flag(ans, ov, "--graph-dir", "graph_dir", "ingested graph directory");
    key_flag(ans, ov, "--checkpoint-dir", "checkpoint_dir", "checkpoint directory");
    key_flag(ans, ov, "--mode", "mode", "learned (read a checkpoint) or exact (analytic)");

    CLI::App* oracle = app.add_subcommand("oracle-check",
                                          "verify the analytic construction against set semantics");
    key_flag(oracle, ov, "--graph-dir", "graph_dir", "ingested graph directory");
    key_flag(oracle, ov, "--queries", "oracle_queries", "sampled queries per shape");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // help and version exit clean, the rest is usage
    }

    RunConfig cfg;
    try {
        if (!config_path.empty())
            cfg = parse_run_config(read_text_file(config_path), config_path);
        for (const auto& [key, value] : ov.kv) apply_config_key(cfg, key, value, "flag " + key);
        cfg.train.seed = cfg.seed;  // flags may have moved the root seed
        cfg.validate();
    } catch (const Error& e) {
        std::cerr << "gqe: " << e.what() << "\n";
        return 1;
    }

    try {
        if (app.got_subcommand(ingest)) return cmd_ingest(cfg);
        if (app.got_subcommand(sample)) return cmd_sample(cfg);
        if (app.got_subcommand(train)) return cmd_train(cfg);
        if (app.got_subcommand(eval)) return cmd_eval(cfg, eval_ckpt);
        if (app.got_subcommand(ans)) return cmd_answer(cfg, query_path, ans_ckpt, top_k);
        if (app.got_subcommand(oracle)) return cmd_oracle_check(cfg);
    } catch (const ArgumentError& e) {
        std::cerr << "gqe: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "gqe: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
