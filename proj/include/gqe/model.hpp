#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gqe/autodiff.hpp"
#include "gqe/errors.hpp"
#include "gqe/graph.hpp"
#include "gqe/params.hpp"
#include "gqe/query.hpp"
#include "gqe/rng.hpp"
#include "gqe/tensor.hpp"

namespace gqe {

enum class Variant { Bilinear, DistMult, TransE };
enum class Psi { Min, Mean };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Bilinear: return "bilinear";
        case Variant::DistMult: return "distmult";
        case Variant::TransE: return "transe";
    }
    return "?";
}
inline Variant variant_from(const std::string& s) {
    if (s == "bilinear") return Variant::Bilinear;
    if (s == "distmult") return Variant::DistMult;
    if (s == "transe") return Variant::TransE;
    throw ArgumentError("unknown projection variant '" + s + "'");
}
inline const char* psi_name(Psi p) { return p == Psi::Min ? "min" : "mean"; }
inline Psi psi_from(const std::string& s) {
    if (s == "min") return Psi::Min;
    if (s == "mean") return Psi::Mean;
    throw ArgumentError("unknown aggregator '" + s + "' (expected min or mean)");
}

// All trainable tensors plus the fixed model shape. Tensor names:
//   Z[type]   d x m_type   node feature embeddings
//   R[rel]    d x d        bilinear projection
//   diag[rel] d x 1        distmult projection
//   r[rel]    d x 1        transe translation
//   B[type]   d x d        intersection layer weight
//   b[type]   d x 1        intersection layer bias
//   W[type]   d x d        intersection post matrix
// `exact` marks the analytic construction, which changes the scoring rule for
// zero embeddings (empty denotations are representable there).
struct ModelParams {
    Variant variant = Variant::Bilinear;
    Psi psi = Psi::Min;
    int d = 0;
    bool exact = false;
    std::vector<std::string> type_names;
    std::vector<std::string> relation_names;
    ParamStore store;

    std::string proj_tensor(int rel) const {
        const std::string& n = relation_names[static_cast<std::size_t>(rel)];
        switch (variant) {
            case Variant::Bilinear: return "R[" + n + "]";
            case Variant::DistMult: return "diag[" + n + "]";
            case Variant::TransE: return "r[" + n + "]";
        }
        return {};
    }
    std::string z_tensor(int type) const { return "Z[" + type_names[static_cast<std::size_t>(type)] + "]"; }
    std::string b_weight(int type) const { return "B[" + type_names[static_cast<std::size_t>(type)] + "]"; }
    std::string b_bias(int type) const { return "b[" + type_names[static_cast<std::size_t>(type)] + "]"; }
    std::string w_tensor(int type) const { return "W[" + type_names[static_cast<std::size_t>(type)] + "]"; }

    // Shape compatibility with a graph (same type/relation tables).
    void check_compatible(const TypedGraph& g) const {
        if (static_cast<int>(type_names.size()) != g.type_count() ||
            static_cast<int>(relation_names.size()) != g.relation_count())
            throw DataError("model and graph disagree on type/relation tables");
        for (int t = 0; t < g.type_count(); ++t)
            if (type_names[static_cast<std::size_t>(t)] != g.type(t).name)
                throw DataError("model type table mismatch at id " + std::to_string(t));
        for (int r = 0; r < g.relation_count(); ++r)
            if (relation_names[static_cast<std::size_t>(r)] != g.relation(r).name)
                throw DataError("model relation table mismatch at id " + std::to_string(r));
    }
};

// Random initialization: near-identity operators so early scores carry signal.
inline ModelParams init_params(const TypedGraph& g, Variant variant, Psi psi, int d,
                               std::uint64_t seed) {
    if (d < 1) throw ArgumentError("init_params: dimension must be >= 1");
    ModelParams p;
    p.variant = variant;
    p.psi = psi;
    p.d = d;
    for (int t = 0; t < g.type_count(); ++t) p.type_names.push_back(g.type(t).name);
    for (int r = 0; r < g.relation_count(); ++r) p.relation_names.push_back(g.relation(r).name);

    Rng rng = Rng::stream(seed, "init", 0);
    const double zr = 1.0 / std::sqrt(static_cast<double>(d));
    auto noise = [&rng](Mat& m, double eps) {
        for (double& v : m.a) v += rng.uniform_range(-eps, eps);
    };

    for (int t = 0; t < g.type_count(); ++t) {
        Mat& z = p.store.add(p.z_tensor(t), d, g.type(t).feature_dim);
        for (double& v : z.a) v = rng.uniform_range(-zr, zr);
    }
    for (int r = 0; r < g.relation_count(); ++r) {
        switch (variant) {
            case Variant::Bilinear: {
                Mat& m = p.store.add(p.proj_tensor(r), d, d);
                m = Mat::identity(d);
                noise(m, 0.1);
                break;
            }
            case Variant::DistMult: {
                Mat& m = p.store.add(p.proj_tensor(r), d, 1);
                for (double& v : m.a) v = 1.0;
                noise(m, 0.1);
                break;
            }
            case Variant::TransE: {
                Mat& m = p.store.add(p.proj_tensor(r), d, 1);
                noise(m, 0.1);
                break;
            }
        }
    }
    for (int t = 0; t < g.type_count(); ++t) {
        Mat& bw = p.store.add(p.b_weight(t), d, d);
        bw = Mat::identity(d);
        noise(bw, 0.1);
        p.store.add(p.b_bias(t), d, 1);  // zero: exact mode stays representable
        Mat& w = p.store.add(p.w_tensor(t), d, d);
        w = Mat::identity(d);
        noise(w, 0.1);
    }
    return p;
}

// Analytic construction that decides observed-denotation membership exactly:
// d = |V|, one-hot node embeddings, projections = binary adjacency, identity
// intersection network with elementwise min.
inline ModelParams exact_parameters(const TypedGraph& g,
                                    std::size_t memory_budget_bytes = std::size_t{1} << 30) {
    if (!g.one_hot_features())
        throw SchemaError("exact parameters require the default one-hot node features");
    const int d = g.node_count();
    if (d < 1) throw ArgumentError("exact_parameters: empty graph");

    std::size_t doubles = 0;
    doubles += static_cast<std::size_t>(g.relation_count()) * static_cast<std::size_t>(d) * d;
    for (int t = 0; t < g.type_count(); ++t)
        doubles += static_cast<std::size_t>(d) * static_cast<std::size_t>(g.type(t).feature_dim) +
                   2 * static_cast<std::size_t>(d) * d + static_cast<std::size_t>(d);
    if (doubles * sizeof(double) > memory_budget_bytes)
        throw CapacityError("exact parameters need " + std::to_string(doubles * sizeof(double)) +
                            " bytes of dense tensors, over the budget of " +
                            std::to_string(memory_budget_bytes));

    ModelParams p;
    p.variant = Variant::Bilinear;
    p.psi = Psi::Min;
    p.d = d;
    p.exact = true;
    for (int t = 0; t < g.type_count(); ++t) p.type_names.push_back(g.type(t).name);
    for (int r = 0; r < g.relation_count(); ++r) p.relation_names.push_back(g.relation(r).name);

    // Z[type] column j = indicator of the j-th node of that type.
    for (int t = 0; t < g.type_count(); ++t) {
        Mat& z = p.store.add(p.z_tensor(t), d, g.type(t).feature_dim);
        const std::vector<int>& members = g.nodes_of_type(t);
        for (std::size_t j = 0; j < members.size(); ++j)
            z.at(members[j], static_cast<int>(j)) = 1.0;
    }
    // Projection by adjacency, oriented so that (R q)[dst] sums over sources.
    for (int rel = 0; rel < g.relation_count(); ++rel) {
        Mat& m = p.store.add(p.proj_tensor(rel), d, d);
        const Relation& r = g.relation(rel);
        for (int src : g.nodes_of_type(r.domain_type))
            for (int dst : g.neighbors(src, rel)) m.at(dst, src) = 1.0;
    }
    for (int t = 0; t < g.type_count(); ++t) {
        p.store.add(p.b_weight(t), d, d) = Mat::identity(d);
        p.store.add(p.b_bias(t), d, 1);
        p.store.add(p.w_tensor(t), d, d) = Mat::identity(d);
    }
    return p;
}

// ---- forward operators (tape-recorded, shared by inference and training) ----

// z_u = Z_type x_u / |x_u|: mean of the active feature columns.
inline int embed_node_on_tape(Tape& t, const ModelParams& p, const TypedGraph& g, int v) {
    const std::vector<int>& feats = g.node_features(v);
    if (feats.empty()) throw DataError("node " + g.node_name(v) + " has no features to embed");
    return t.embed_cols(p.z_tensor(g.node_type(v)), feats);
}

inline int project_on_tape(Tape& t, const ModelParams& p, int rel, int x) {
    if (rel < 0 || rel >= static_cast<int>(p.relation_names.size()))
        throw ArgumentError("project: unknown relation id " + std::to_string(rel));
    switch (p.variant) {
        case Variant::Bilinear: return t.matvec(p.proj_tensor(rel), x);
        case Variant::DistMult: return t.mul_param(p.proj_tensor(rel), x);
        case Variant::TransE: return t.add_param(p.proj_tensor(rel), x);
    }
    throw ArgumentError("project: bad variant");
}

// W_type Psi(ReLU(B_type q_i + bias) for each input).
inline int intersect_on_tape(Tape& t, const ModelParams& p, const std::vector<int>& inputs,
                             int type) {
    if (inputs.empty()) throw ArgumentError("intersect: empty input list");
    std::vector<int> hidden;
    hidden.reserve(inputs.size());
    for (int x : inputs)
        hidden.push_back(t.relu(t.add_param(p.b_bias(type), t.matvec(p.b_weight(type), x))));
    const int reduced = p.psi == Psi::Min ? t.reduce_min(hidden) : t.reduce_mean(hidden);
    return t.matvec(p.w_tensor(type), reduced);
}

struct OpCounts {
    int projections = 0;
    int intersections = 0;
};

// Kahn's algorithm over the query DAG: pop ready nodes (anchors embed, joint
// nodes intersect their collected inputs, single inputs pass through), and
// project along every edge as it is removed. Exactly E projections; one
// intersection per node popped with >= 2 inputs.
inline int encode_query_on_tape(Tape& t, const ModelParams& p, const TypedGraph& g,
                                const QueryDag& q, OpCounts* counts = nullptr) {
    const auto violations = validate(q, g);
    if (!violations.empty())
        throw ArgumentError("encode_query: invalid query: " + violations.front());

    const int n = static_cast<int>(q.nodes.size());
    std::vector<int> indeg(static_cast<std::size_t>(n), 0);
    for (const QueryEdge& e : q.edges) ++indeg[static_cast<std::size_t>(e.dst)];
    std::vector<std::vector<int>> collected(static_cast<std::size_t>(n));
    std::vector<char> done(static_cast<std::size_t>(n), 0);
    OpCounts oc;
    int target_handle = -1;

    for (int popped = 0; popped < n; ++popped) {
        int u = -1;
        for (int i = 0; i < n; ++i)
            if (!done[static_cast<std::size_t>(i)] && indeg[static_cast<std::size_t>(i)] == 0) {
                u = i;
                break;
            }
        if (u < 0) throw ArgumentError("encode_query: query graph is not a DAG");
        done[static_cast<std::size_t>(u)] = 1;

        const QueryNode& qn = q.nodes[static_cast<std::size_t>(u)];
        int h;
        if (qn.kind == NodeKind::Anchor) {
            h = embed_node_on_tape(t, p, g, qn.node);
        } else {
            const std::vector<int>& in = collected[static_cast<std::size_t>(u)];
            if (in.size() == 1) {
                h = in[0];  // pass-through keeps chains pure operator composition
            } else {
                h = intersect_on_tape(t, p, in, qn.type);
                ++oc.intersections;
            }
        }
        if (qn.kind == NodeKind::Target) target_handle = h;

        for (const QueryEdge& e : q.edges) {
            if (e.src != u) continue;
            collected[static_cast<std::size_t>(e.dst)].push_back(project_on_tape(t, p, e.rel, h));
            ++oc.projections;
            --indeg[static_cast<std::size_t>(e.dst)];
        }
    }
    if (counts) *counts = oc;
    return target_handle;
}

// ---- plain-vector convenience wrappers --------------------------------------

inline Vec embed_node(const ModelParams& p, const TypedGraph& g, int v) {
    Tape t(p.store);
    return t.value(embed_node_on_tape(t, p, g, v));
}

struct QueryEmbedding {
    Vec vector;
    OpCounts ops;
};

inline QueryEmbedding encode_query(const ModelParams& p, const TypedGraph& g, const QueryDag& q) {
    Tape t(p.store);
    OpCounts oc;
    const int h = encode_query_on_tape(t, p, g, q, &oc);
    return {t.value(h), oc};
}

// Cosine score. In exact mode a zero query embedding means an empty observed
// denotation and scores 0 against everything; in learned mode a zero norm is
// a hard error.
inline double score(const ModelParams& p, const Vec& query, const Vec& node) {
    if (p.exact && norm(query) == 0.0) return 0.0;
    return cosine(query, node);
}

// Node embeddings for one graph, computed once and reused across queries.
class NodeEmbeddingCache {
public:
    NodeEmbeddingCache(const ModelParams& p, const TypedGraph& g) {
        vecs_.reserve(static_cast<std::size_t>(g.node_count()));
        for (int v = 0; v < g.node_count(); ++v) vecs_.push_back(embed_node(p, g, v));
    }
    const Vec& of(int v) const { return vecs_[static_cast<std::size_t>(v)]; }

private:
    std::vector<Vec> vecs_;
};

struct Ranked {
    int node = -1;
    double value = 0.0;
};

// Exhaustive scan over nodes of the target's type, descending score, ties
// broken by node id.
inline std::vector<Ranked> answer(const ModelParams& p, const TypedGraph& g, const QueryDag& q,
                                  int top_k, const NodeEmbeddingCache* cache = nullptr) {
    if (top_k < 0) throw ArgumentError("answer: top_k must be >= 0");
    const QueryEmbedding qe = encode_query(p, g, q);
    const int target_type = q.nodes[static_cast<std::size_t>(q.target_index())].type;
    std::vector<Ranked> out;
    for (int v : g.nodes_of_type(target_type)) {
        const Vec& z = cache ? cache->of(v) : embed_node(p, g, v);
        out.push_back({v, score(p, qe.vector, z)});
    }
    std::stable_sort(out.begin(), out.end(), [](const Ranked& a, const Ranked& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.node < b.node;
    });
    if (static_cast<int>(out.size()) > top_k) out.resize(static_cast<std::size_t>(top_k));
    return out;
}

}  // namespace gqe
