#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gqe/errors.hpp"
#include "gqe/graph.hpp"
#include "gqe/io.hpp"
#include "gqe/query.hpp"
#include "gqe/rng.hpp"

namespace gqe {

// Attempts per requested example before sampling gives up with an error.
inline constexpr int kSampleRetryCap = 1000;

struct QueryExample {
    QueryDag query;
    int positive = -1;
    std::vector<int> standard_negatives;
    std::vector<int> hard_negatives;  // populated only for intersection shapes
};

struct DatasetSpec {
    int train_per_structure = 10000;
    int valid_per_structure = 500;
    int test_per_structure = 1000;
    std::uint64_t seed = 0;
    int negative_pool = 1000;      // valid/test pools (evaluation cap)
    int train_negative_pool = 64;  // smaller: training draws one negative at a time
    // Membership test for test/valid standard negatives: full graph (treat
    // the unobserved denotation as truth) or train graph only.
    bool test_negatives_from_full = true;
    std::vector<std::string> structures;  // empty = whole catalog
};

struct Dataset {
    std::map<std::string, std::vector<QueryExample>> splits;  // train/valid/test
    std::vector<std::string> warnings;
};

// Rejection sampling, target first: pick a root uniformly, then walk outward.
// Popping a node with degree d draws d distinct incoming edge atoms from the
// graph; nodes popped after the degree vector is exhausted become anchors.
// Base and inverse relations participate symmetrically. The root is a member
// of the query's denotation by construction and is returned as the positive.
inline std::pair<QueryDag, int> sample_query(const TypedGraph& g, const StructureId& s, Rng& rng) {
    if (g.node_count() == 0) throw ArgumentError("sample_query: empty graph");

    struct Slot {
        QueryNode node;
        int assigned = -1;                          // concrete graph node
        std::vector<std::pair<int, int>> in_edges;  // (parent creation idx, rel)
    };

    for (int attempt = 0; attempt < kSampleRetryCap; ++attempt) {
        std::vector<Slot> created;
        const int root = static_cast<int>(rng.uniform_int(g.node_count()));
        created.push_back({{NodeKind::Target, -1, g.node_type(root)}, root, {}});

        bool dead_end = false;
        for (std::size_t k = 0; k < s.degree_vector.size() && !dead_end; ++k) {
            const int child = static_cast<int>(k);  // pop in creation order
            const int u = created[static_cast<std::size_t>(child)].assigned;
            const int want = s.degree_vector[k];

            // Every edge atom (w, rel, u) incident into u, across all
            // relations whose range matches u's type.
            std::vector<std::pair<int, int>> atoms;  // (rel, parent node w)
            for (int rel = 0; rel < g.relation_count(); ++rel) {
                if (g.relation(rel).range_type != g.node_type(u)) continue;
                for (int w : g.neighbors(u, g.relation(rel).inverse_of)) atoms.emplace_back(rel, w);
            }
            if (static_cast<int>(atoms.size()) < want) {
                dead_end = true;
                break;
            }
            // Draw `want` distinct atoms uniformly (partial Fisher-Yates).
            for (int i = 0; i < want; ++i) {
                const std::size_t j = static_cast<std::size_t>(i) +
                    static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(atoms.size() - static_cast<std::size_t>(i))));
                std::swap(atoms[static_cast<std::size_t>(i)], atoms[j]);
            }
            for (int i = 0; i < want; ++i) {
                const auto [rel, w] = atoms[static_cast<std::size_t>(i)];
                Slot parent;
                parent.node = {NodeKind::Variable, -1, g.relation(rel).domain_type};
                parent.assigned = w;
                created.push_back(std::move(parent));
                created[static_cast<std::size_t>(child)].in_edges.emplace_back(
                    static_cast<int>(created.size()) - 1, rel);
            }
        }
        if (dead_end) continue;

        // Unpopped slots are the anchors.
        for (std::size_t i = s.degree_vector.size(); i < created.size(); ++i) {
            created[i].node.kind = NodeKind::Anchor;
            created[i].node.node = created[i].assigned;
        }

        // Reverse creation order: target last, edges run src < dst.
        QueryDag q;
        const int n = static_cast<int>(created.size());
        for (int i = n - 1; i >= 0; --i) q.nodes.push_back(created[static_cast<std::size_t>(i)].node);
        auto flip = [n](int idx) { return n - 1 - idx; };
        for (int i = 0; i < n; ++i)
            for (const auto& [parent, rel] : created[static_cast<std::size_t>(i)].in_edges)
                q.edges.push_back({flip(parent), rel, flip(i)});
        std::sort(q.edges.begin(), q.edges.end(),
                  [](const QueryEdge& a, const QueryEdge& b) { return a.src < b.src; });
        q.structure = s.name;

        const auto violations = validate(q, g);
        if (!violations.empty())
            throw Error("sample_query produced an invalid query: " + violations.front());
        return {std::move(q), root};
    }
    throw SamplingError("sample_query: retry cap (" + std::to_string(kSampleRetryCap) +
                        ") exhausted for structure " + s.name);
}

// Up to k distinct nodes of the target's type that are not members of the
// query's denotation on `membership_graph`. Returns the whole non-member pool
// when it is smaller than k; empty pool means the query is degenerate for
// negative sampling.
inline std::vector<int> standard_negatives(const QueryDag& q, const TypedGraph& membership_graph,
                                           int k, Rng& rng) {
    if (k < 1) throw ArgumentError("standard_negatives: pool size must be >= 1");
    const Denotation members = denotation(q, membership_graph);
    const int target_type = q.nodes[static_cast<std::size_t>(q.target_index())].type;
    std::vector<int> pool;
    for (int v : membership_graph.nodes_of_type(target_type))
        if (!members.contains(v)) pool.push_back(v);
    if (static_cast<int>(pool.size()) > k) {
        for (int i = 0; i < k; ++i) {
            const std::size_t j = static_cast<std::size_t>(i) +
                static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(pool.size() - static_cast<std::size_t>(i))));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        pool.resize(static_cast<std::size_t>(k));
    }
    std::sort(pool.begin(), pool.end());
    return pool;
}

// Nodes satisfying the query under disjunctive relaxation but not the
// conjunctive query, capped by uniform subsampling. nullopt when the shape
// has no intersection (hard negatives are undefined there); an empty pool
// means the branches coincide (degenerate for hard-negative training).
inline std::optional<std::vector<int>> hard_negatives(const QueryDag& q, const TypedGraph& g,
                                                      int cap, Rng& rng) {
    if (cap < 1) throw ArgumentError("hard_negatives: cap must be >= 1");
    if (!structure_of(q).has_intersection()) return std::nullopt;
    const Denotation conj = denotation(q, g);
    const Denotation disj = denotation_disjunctive(q, g);
    std::vector<int> pool;
    std::set_difference(disj.members.begin(), disj.members.end(), conj.members.begin(),
                        conj.members.end(), std::back_inserter(pool));
    if (static_cast<int>(pool.size()) > cap) {
        for (int i = 0; i < cap; ++i) {
            const std::size_t j = static_cast<std::size_t>(i) +
                static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(pool.size() - static_cast<std::size_t>(i))));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        pool.resize(static_cast<std::size_t>(cap));
        std::sort(pool.begin(), pool.end());
    }
    return pool;
}

namespace detail {

inline QueryDag chain1_query(const TypedGraph& g, const Edge& e) {
    QueryDag q;
    q.nodes = {{NodeKind::Anchor, e.src, g.node_type(e.src)},
               {NodeKind::Target, -1, g.node_type(e.dst)}};
    q.edges = {{0, e.rel, 1}};
    q.structure = "chain1";
    return q;
}

}  // namespace detail

// Assembles train/valid/test query collections per the dataset spec.
//   - train examples are sampled on (and verified against) the train graph;
//   - chain1 is special-cased: train = every train-graph edge in both
//     directions, and the deleted edges form the test/valid pools (90/10);
//   - other test/valid examples are sampled on the full graph and accepted
//     only when the positive is absent from the train-graph denotation.
// Structures that cannot be sampled produce a warning record, never silence.
inline Dataset build_dataset(const GraphSplit& split, const TypedGraph& full,
                             const DatasetSpec& spec) {
    if (spec.negative_pool < 1 || spec.train_negative_pool < 1)
        throw ArgumentError("build_dataset: negative pool sizes must be >= 1");
    if (spec.train_per_structure < 0 || spec.valid_per_structure < 0 || spec.test_per_structure < 0)
        throw ArgumentError("build_dataset: per-structure counts must be >= 0");

    const TypedGraph& train_g = split.train_graph;
    Dataset out;
    out.splits["train"];
    out.splits["valid"];
    out.splits["test"];

    std::vector<const StructureId*> wanted;
    if (spec.structures.empty()) {
        for (const StructureId& s : structure_catalog()) wanted.push_back(&s);
    } else {
        for (const std::string& name : spec.structures) wanted.push_back(&find_structure(name));
    }

    std::map<std::string, int> degenerate;  // split/structure -> empty-pool count
    auto note_degenerate = [&degenerate](const std::string& split_name, const std::string& s) {
        ++degenerate[split_name + "/" + s];
    };

    auto attach_pools = [&](QueryExample& ex, const TypedGraph& sample_g,
                            const TypedGraph& membership_g, int pool, const std::string& split_name,
                            Rng& rng) {
        ex.standard_negatives = standard_negatives(ex.query, membership_g, pool, rng);
        if (ex.standard_negatives.empty()) note_degenerate(split_name, ex.query.structure);
        auto hard = hard_negatives(ex.query, sample_g, pool, rng);
        if (hard) ex.hard_negatives = std::move(*hard);
    };

    for (const StructureId* s : wanted) {
        if (s->name == "chain1") {
            // Train: every edge of the train graph, both directions.
            Rng rng = Rng::stream(spec.seed, "sample:train:chain1", 0);
            for (const Edge& e : train_g.edges(true)) {
                QueryExample ex;
                ex.query = detail::chain1_query(train_g, e);
                ex.positive = e.dst;
                attach_pools(ex, train_g, train_g, spec.train_negative_pool, "train", rng);
                out.splits["train"].push_back(std::move(ex));
            }
            // Deleted edges split 90/10 into test/valid.
            std::vector<Edge> deleted = split.deleted_edges;
            Rng drng = Rng::stream(spec.seed, "sample:heldout:chain1", 0);
            drng.shuffle(deleted);
            const std::size_t n_test =
                (deleted.size() * 9 + 9) / 10;  // ceil: tiny sets stay test-heavy
            for (std::size_t i = 0; i < deleted.size(); ++i) {
                const std::string split_name = i < n_test ? "test" : "valid";
                QueryExample ex;
                ex.query = detail::chain1_query(full, deleted[i]);
                ex.positive = deleted[i].dst;
                const TypedGraph& membership = spec.test_negatives_from_full ? full : train_g;
                attach_pools(ex, full, membership, spec.negative_pool, split_name, drng);
                out.splits[split_name].push_back(std::move(ex));
            }
            continue;
        }

        struct Plan {
            const char* split_name;
            int count;
            bool heldout;
        };
        const Plan plans[] = {{"train", spec.train_per_structure, false},
                              {"valid", spec.valid_per_structure, true},
                              {"test", spec.test_per_structure, true}};
        for (const Plan& plan : plans) {
            if (plan.count == 0) continue;
            Rng rng = Rng::stream(spec.seed, std::string("sample:") + plan.split_name + ":" + s->name, 0);
            const TypedGraph& sample_g = plan.heldout ? full : train_g;
            int made = 0;
            bool infeasible = false;
            for (int i = 0; i < plan.count && !infeasible; ++i) {
                // Held-out rejection loop: positive must be new relative to
                // the train graph. Shares the per-example retry budget.
                int attempts = 0;
                while (true) {
                    if (++attempts > kSampleRetryCap) {
                        infeasible = true;
                        break;
                    }
                    std::pair<QueryDag, int> qp;
                    try {
                        qp = sample_query(sample_g, *s, rng);
                    } catch (const SamplingError&) {
                        infeasible = true;
                        break;
                    }
                    if (plan.heldout && denotation(qp.first, train_g).contains(qp.second)) continue;
                    QueryExample ex;
                    ex.query = std::move(qp.first);
                    ex.positive = qp.second;
                    const TypedGraph& membership =
                        plan.heldout && spec.test_negatives_from_full ? full : train_g;
                    const int pool = plan.heldout ? spec.negative_pool : spec.train_negative_pool;
                    attach_pools(ex, sample_g, membership, pool, plan.split_name, rng);
                    out.splits[plan.split_name].push_back(std::move(ex));
                    ++made;
                    break;
                }
            }
            if (made < plan.count)
                out.warnings.push_back(std::string(plan.split_name) + "/" + s->name + ": requested " +
                                       std::to_string(plan.count) + " examples, sampled " +
                                       std::to_string(made) + " before hitting the retry cap");
        }
    }

    for (const auto& [key, count] : degenerate)
        out.warnings.push_back(key + ": " + std::to_string(count) +
                               " examples have an empty standard-negative pool");
    return out;
}

// ---- NDJSON + manifest persistence ------------------------------------------

inline nlohmann::ordered_json example_to_json(const QueryExample& ex, const TypedGraph& g) {
    nlohmann::ordered_json j;
    j["query"] = query_to_json(ex.query, g);
    j["positive"] = g.node_name(ex.positive);
    nlohmann::ordered_json neg = nlohmann::ordered_json::array();
    for (int v : ex.standard_negatives) neg.push_back(g.node_name(v));
    j["neg"] = std::move(neg);
    nlohmann::ordered_json hard = nlohmann::ordered_json::array();
    for (int v : ex.hard_negatives) hard.push_back(g.node_name(v));
    j["hard_neg"] = std::move(hard);
    return j;
}

inline QueryExample example_from_json(const nlohmann::json& j, const TypedGraph& g,
                                      const std::string& context) {
    if (!j.is_object() || !j.contains("query") || !j.contains("positive"))
        throw ParseError(context + ": expected {query, positive, neg, hard_neg}");
    QueryExample ex;
    ex.query = query_from_json(j["query"], g);
    ex.positive = g.find_node(j["positive"].get<std::string>());
    if (ex.positive < 0)
        throw ParseError(context + ": unknown positive node '" + j["positive"].get<std::string>() + "'");
    auto read_pool = [&](const char* key, std::vector<int>& into) {
        if (!j.contains(key)) return;
        for (const auto& name : j[key]) {
            const int v = g.find_node(name.get<std::string>());
            if (v < 0) throw ParseError(context + ": unknown node '" + name.get<std::string>() +
                                        "' in " + key);
            into.push_back(v);
        }
    };
    read_pool("neg", ex.standard_negatives);
    read_pool("hard_neg", ex.hard_negatives);
    return ex;
}

// Writes train/valid/test NDJSON plus manifest.json; returns true if any file
// changed (false = byte-identical rerun).
inline bool write_dataset(const std::string& dir, const Dataset& ds, const TypedGraph& g,
                          const DatasetSpec& spec) {
    bool changed = false;
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    for (const auto& [split_name, examples] : ds.splits) {
        std::ostringstream body;
        nlohmann::ordered_json per_structure = nlohmann::ordered_json::object();
        for (const QueryExample& ex : examples) {
            body << example_to_json(ex, g).dump() << '\n';
            const std::string& tag = ex.query.structure;
            per_structure[tag] = (per_structure.contains(tag) ? per_structure[tag].get<int>() : 0) + 1;
        }
        counts[split_name] = std::move(per_structure);
        changed |= atomic_write_file(dir + "/" + split_name + ".ndjson", body.str());
    }
    nlohmann::ordered_json manifest;
    manifest["spec"] = {{"train_per_structure", spec.train_per_structure},
                        {"valid_per_structure", spec.valid_per_structure},
                        {"test_per_structure", spec.test_per_structure},
                        {"seed", spec.seed},
                        {"negative_pool", spec.negative_pool},
                        {"train_negative_pool", spec.train_negative_pool},
                        {"test_negatives_from_full", spec.test_negatives_from_full}};
    manifest["graph_fingerprint"] = Rng::fnv1a(serialize_canonical(g));
    manifest["counts"] = std::move(counts);
    manifest["warnings"] = ds.warnings;
    changed |= atomic_write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
    return changed;
}

inline Dataset read_dataset(const std::string& dir, const TypedGraph& g) {
    Dataset ds;
    const std::string manifest_text = read_text_file(dir + "/manifest.json");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(dir + "/manifest.json: " + e.what());
    }
    if (manifest.contains("graph_fingerprint") &&
        manifest["graph_fingerprint"].get<std::uint64_t>() != Rng::fnv1a(serialize_canonical(g)))
        throw DataError(dir + ": dataset was built against a different graph (fingerprint mismatch)");
    if (manifest.contains("warnings"))
        for (const auto& w : manifest["warnings"]) ds.warnings.push_back(w.get<std::string>());

    for (const char* split_name : {"train", "valid", "test"}) {
        const std::string path = dir + "/" + std::string(split_name) + ".ndjson";
        std::istringstream in(read_text_file(path));
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const std::string context = path + ":" + std::to_string(lineno);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(context + ": " + e.what());
            }
            ds.splits[split_name].push_back(example_from_json(j, g, context));
        }
    }
    return ds;
}

}  // namespace gqe
