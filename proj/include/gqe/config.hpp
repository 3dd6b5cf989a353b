#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gqe/errors.hpp"
#include "gqe/train.hpp"

namespace gqe {

// One experiment record: artifact locations, model shape, sampling sizes and
// the training schedule. Parsed from a flat key=value file so runs diff
// cleanly; command-line flags override individual keys.
struct RunConfig {
    // artifact locations
    std::string edges, nodes, features;  // ingest inputs
    std::string synthetic;               // alternative: built-in generator spec
    std::string graph_dir = "graph";
    std::string dataset_dir = "dataset";
    std::string checkpoint_dir = "checkpoint";

    // model shape
    std::string variant = "bilinear";  // bilinear | distmult | transe
    std::string psi = "min";           // min | mean
    std::string mode = "learned";      // learned | exact

    // ingest & sampling
    int min_relation_edges = 0;
    double split_fraction = 0.1;
    int train_per_structure = 10000;
    int valid_per_structure = 500;
    int test_per_structure = 1000;
    int negative_pool = 1000;
    int train_negative_pool = 64;
    bool test_negatives_from_full = true;

    // training (seed is fanned out from the single top-level key)
    TrainConfig train;
    bool edge_only = false;  // stop after stage 1

    // evaluation
    bool include_chain1 = true;
    bool eval_baseline = false;

    // oracle check
    int oracle_queries = 100;

    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        if (variant != "bilinear" && variant != "distmult" && variant != "transe")
            throw ArgumentError("config: variant must be bilinear, distmult or transe");
        if (psi != "min" && psi != "mean")
            throw ArgumentError("config: psi must be min or mean");
        if (mode != "learned" && mode != "exact")
            throw ArgumentError("config: mode must be learned or exact");
        if (mode == "exact" && (variant != "bilinear" || psi != "min"))
            throw ArgumentError(
                "config: exact mode requires variant=bilinear and psi=min (the analytic "
                "construction has no other form)");
        if (split_fraction <= 0.0 || split_fraction >= 1.0)
            throw ArgumentError("config: split_fraction must be inside (0, 1)");
        if (train_per_structure < 0 || valid_per_structure < 0 || test_per_structure < 0)
            throw ArgumentError("config: per-structure counts must be >= 0");
        if (negative_pool < 1 || train_negative_pool < 1)
            throw ArgumentError("config: negative pools must be >= 1");
        if (min_relation_edges < 0)
            throw ArgumentError("config: min_relation_edges must be >= 0");
        if (oracle_queries < 1) throw ArgumentError("config: oracle_queries must be >= 1");
        if (threads < 1) throw ArgumentError("config: threads must be >= 1");
        train.check();
    }

    DatasetSpec dataset_spec() const {
        DatasetSpec spec;
        spec.train_per_structure = train_per_structure;
        spec.valid_per_structure = valid_per_structure;
        spec.test_per_structure = test_per_structure;
        spec.negative_pool = negative_pool;
        spec.train_negative_pool = train_negative_pool;
        spec.test_negatives_from_full = test_negatives_from_full;
        spec.seed = seed;
        return spec;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& ctx) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError(ctx + ": expected a boolean, got '" + v + "'");
}

inline long long parse_int(const std::string& v, const std::string& ctx) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ParseError(ctx + ": expected an integer, got '" + v + "'");
    }
}

inline double parse_double(const std::string& v, const std::string& ctx) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ParseError(ctx + ": expected a number, got '" + v + "'");
    }
}

}  // namespace detail

// Applies one key=value pair; shared by the file parser and flag overrides.
inline void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value,
                             const std::string& ctx) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;
    if (key == "edges") cfg.edges = value;
    else if (key == "nodes") cfg.nodes = value;
    else if (key == "features") cfg.features = value;
    else if (key == "synthetic") cfg.synthetic = value;
    else if (key == "graph_dir") cfg.graph_dir = value;
    else if (key == "dataset_dir") cfg.dataset_dir = value;
    else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
    else if (key == "variant") cfg.variant = value;
    else if (key == "psi") cfg.psi = value;
    else if (key == "mode") cfg.mode = value;
    else if (key == "min_relation_edges") cfg.min_relation_edges = static_cast<int>(parse_int(value, ctx));
    else if (key == "split_fraction") cfg.split_fraction = parse_double(value, ctx);
    else if (key == "train_per_structure") cfg.train_per_structure = static_cast<int>(parse_int(value, ctx));
    else if (key == "valid_per_structure") cfg.valid_per_structure = static_cast<int>(parse_int(value, ctx));
    else if (key == "test_per_structure") cfg.test_per_structure = static_cast<int>(parse_int(value, ctx));
    else if (key == "negative_pool") cfg.negative_pool = static_cast<int>(parse_int(value, ctx));
    else if (key == "train_negative_pool") cfg.train_negative_pool = static_cast<int>(parse_int(value, ctx));
    else if (key == "test_negatives_from_full") cfg.test_negatives_from_full = parse_bool(value, ctx);
    else if (key == "lr") cfg.train.lr = parse_double(value, ctx);
    else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(parse_int(value, ctx));
    else if (key == "dim") cfg.train.d = static_cast<int>(parse_int(value, ctx));
    else if (key == "margin") cfg.train.margin = parse_double(value, ctx);
    else if (key == "path_weight") cfg.train.path_weight = parse_double(value, ctx);
    else if (key == "intersection_weight") cfg.train.intersection_weight = parse_double(value, ctx);
    else if (key == "val_interval") cfg.train.val_interval = static_cast<int>(parse_int(value, ctx));
    else if (key == "patience") cfg.train.patience = static_cast<int>(parse_int(value, ctx));
    else if (key == "clip_norm") cfg.train.clip_norm = parse_double(value, ctx);
    else if (key == "max_batches") cfg.train.max_batches = parse_int(value, ctx);
    else if (key == "mirror_hard_batches") cfg.train.mirror_hard_batches = parse_bool(value, ctx);
    else if (key == "edge_only") cfg.edge_only = parse_bool(value, ctx);
    else if (key == "include_chain1") cfg.include_chain1 = parse_bool(value, ctx);
    else if (key == "eval_baseline") cfg.eval_baseline = parse_bool(value, ctx);
    else if (key == "oracle_queries") cfg.oracle_queries = static_cast<int>(parse_int(value, ctx));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, ctx));
    else if (key == "threads") cfg.threads = static_cast<int>(parse_int(value, ctx));
    else throw ParseError(ctx + ": unknown config key '" + key + "'");
}

// key=value lines, # comments, blank lines allowed.
inline RunConfig parse_run_config(const std::string& text, const std::string& source = "config") {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string ctx = source + ":" + std::to_string(lineno);
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(ctx + ": expected key=value, got '" + line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError(ctx + ": empty key");
        apply_config_key(cfg, key, value, ctx);
    }
    // training consumes the same top-level seed as sampling and splitting
    cfg.train.seed = cfg.seed;
    return cfg;
}

}  // namespace gqe
