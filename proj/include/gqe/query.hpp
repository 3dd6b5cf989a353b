#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gqe/errors.hpp"
#include "gqe/graph.hpp"

namespace gqe {

enum class NodeKind { Anchor, Variable, Target };

struct QueryNode {
    NodeKind kind = NodeKind::Variable;
    int node = -1;  // concrete graph node, anchors only
    int type = -1;  // NodeType id
};

struct QueryEdge {
    int src = -1;  // index into QueryDag::nodes
    int rel = -1;  // Relation id
    int dst = -1;  // index into QueryDag::nodes
};

// A conjunctive query as a DAG: anchors are the sources, the target is the
// unique sink, edges are relation atoms. Nodes are kept in topological order
// (target last) by every producer in this codebase, but consumers only rely
// on what validate() checks.
struct QueryDag {
    std::vector<QueryNode> nodes;
    std::vector<QueryEdge> edges;
    std::string structure;  // catalog tag, e.g. "chain2"

    int target_index() const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].kind == NodeKind::Target) return static_cast<int>(i);
        throw ArgumentError("query has no target node");
    }
};

// Query shapes are identified by the in-degree of each non-anchor node listed
// target first (equivalently: out-degrees of the reversed DAG in the order the
// sampler pops nodes). The sum equals the edge count.
struct StructureId {
    std::string name;
    std::vector<int> degree_vector;

    int edge_count() const {
        int e = 0;
        for (int d : degree_vector) e += d;
        return e;
    }
    bool has_intersection() const {
        return std::any_of(degree_vector.begin(), degree_vector.end(), [](int d) { return d > 1; });
    }
};

// The seven DAG shapes with 1-3 edges, a single sink and anchor sources
// (unique up to isomorphism).
inline const std::vector<StructureId>& structure_catalog() {
    static const std::vector<StructureId> catalog = {
        {"chain1", {1}},       // t(a, T)
        {"chain2", {1, 1}},    // t1(a, V1), t2(V1, T)
        {"chain3", {1, 1, 1}}, // t1(a, V1), t2(V1, V2), t3(V2, T)
        {"inter2", {2}},       // t1(a1, T) AND t2(a2, T)
        {"inter3", {3}},       // t1(a1, T) AND t2(a2, T) AND t3(a3, T)
        {"chain_inter", {2, 1}},  // t1(a1, V1), t2(V1, T) AND t3(a2, T): meet at target
        {"inter_chain", {1, 2}},  // t1(a1, V1) AND t2(a2, V1), t3(V1, T): meet at V1
    };
    return catalog;
}

inline const StructureId& find_structure(const std::string& name) {
    for (const StructureId& s : structure_catalog())
        if (s.name == name) return s;
    throw ArgumentError("unknown query structure '" + name + "'");
}

// Indices of q.nodes in topological order (sources first). Throws on cycles;
// validate() reports them gracefully instead.
inline std::vector<int> topological_order(const QueryDag& q) {
    const int n = static_cast<int>(q.nodes.size());
    std::vector<int> indeg(static_cast<std::size_t>(n), 0);
    for (const QueryEdge& e : q.edges) ++indeg[static_cast<std::size_t>(e.dst)];
    std::vector<int> queue;
    for (int i = 0; i < n; ++i)
        if (indeg[static_cast<std::size_t>(i)] == 0) queue.push_back(i);
    std::vector<int> order;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const int u = queue[head];
        order.push_back(u);
        for (const QueryEdge& e : q.edges)
            if (e.src == u && --indeg[static_cast<std::size_t>(e.dst)] == 0) queue.push_back(e.dst);
    }
    if (static_cast<int>(order.size()) != n) throw ArgumentError("query DAG contains a cycle");
    return order;
}

// Checks every structural invariant and returns the list of violations
// (empty = valid). Needs the graph for type and relation signatures.
inline std::vector<std::string> validate(const QueryDag& q, const TypedGraph& g) {
    std::vector<std::string> bad;
    const int n = static_cast<int>(q.nodes.size());
    if (n == 0) return {"query has no nodes"};

    for (const QueryEdge& e : q.edges)
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n || e.rel < 0 ||
            e.rel >= g.relation_count()) {
            bad.push_back("edge references an out-of-range node or relation index");
            return bad;  // later checks would read out of bounds
        }

    int targets = 0;
    for (const QueryNode& qn : q.nodes) targets += qn.kind == NodeKind::Target ? 1 : 0;
    if (targets != 1) bad.push_back("expected exactly one target node, found " + std::to_string(targets));

    std::vector<int> indeg(static_cast<std::size_t>(n), 0), outdeg(static_cast<std::size_t>(n), 0);
    for (const QueryEdge& e : q.edges) {
        ++outdeg[static_cast<std::size_t>(e.src)];
        ++indeg[static_cast<std::size_t>(e.dst)];
        if (e.src == e.dst) bad.push_back("self-loop edge in query DAG");
    }

    for (int i = 0; i < n; ++i) {
        const QueryNode& qn = q.nodes[static_cast<std::size_t>(i)];
        if (qn.type < 0 || qn.type >= g.type_count()) {
            bad.push_back("node " + std::to_string(i) + " has an unknown type");
            continue;
        }
        switch (qn.kind) {
            case NodeKind::Anchor:
                if (qn.node < 0 || qn.node >= g.node_count())
                    bad.push_back("anchor " + std::to_string(i) + " names a nonexistent graph node");
                else if (g.node_type(qn.node) != qn.type)
                    bad.push_back("anchor " + std::to_string(i) + " (" + g.node_name(qn.node) +
                                  ") has graph type " + g.type(g.node_type(qn.node)).name +
                                  " but declares " + g.type(qn.type).name);
                if (indeg[static_cast<std::size_t>(i)] != 0)
                    bad.push_back("anchor " + std::to_string(i) + " has incoming edges");
                if (outdeg[static_cast<std::size_t>(i)] == 0)
                    bad.push_back("anchor " + std::to_string(i) + " is disconnected");
                break;
            case NodeKind::Variable:
                if (indeg[static_cast<std::size_t>(i)] == 0)
                    bad.push_back("variable " + std::to_string(i) + " is a source (must be anchor)");
                if (outdeg[static_cast<std::size_t>(i)] == 0)
                    bad.push_back("variable " + std::to_string(i) + " is a sink (target must be unique sink)");
                break;
            case NodeKind::Target:
                if (indeg[static_cast<std::size_t>(i)] == 0)
                    bad.push_back("target has no incoming edges");
                if (outdeg[static_cast<std::size_t>(i)] != 0)
                    bad.push_back("target has outgoing edges (must be the sink)");
                break;
        }
    }

    for (std::size_t k = 0; k < q.edges.size(); ++k) {
        const QueryEdge& e = q.edges[k];
        const Relation& r = g.relation(e.rel);
        if (q.nodes[static_cast<std::size_t>(e.src)].type != r.domain_type ||
            q.nodes[static_cast<std::size_t>(e.dst)].type != r.range_type)
            bad.push_back("edge " + std::to_string(k) + " (" + r.name + ") violates its relation signature");
    }

    try {
        topological_order(q);
    } catch (const ArgumentError&) {
        bad.push_back("query graph is not a DAG");
    }
    return bad;
}

struct Denotation {
    std::vector<int> members;  // sorted node ids

    bool contains(int v) const {
        return std::binary_search(members.begin(), members.end(), v);
    }
};

namespace detail {

// Shared traversal for both semantics. Per node, each incoming edge
// contributes the union of projected predecessor sets; `conjunctive` chooses
// whether those per-edge sets are intersected or unioned.
inline Denotation denote(const QueryDag& q, const TypedGraph& g, bool conjunctive) {
    std::vector<std::vector<int>> sets(q.nodes.size());
    for (int idx : topological_order(q)) {
        const QueryNode& qn = q.nodes[static_cast<std::size_t>(idx)];
        if (qn.kind == NodeKind::Anchor) {
            sets[static_cast<std::size_t>(idx)] = {qn.node};
            continue;
        }
        std::vector<int> acc;
        bool first = true;
        for (const QueryEdge& e : q.edges) {
            if (e.dst != idx) continue;
            std::set<int> projected;
            for (int v : sets[static_cast<std::size_t>(e.src)]) {
                const auto ns = g.neighbors(v, e.rel);
                projected.insert(ns.begin(), ns.end());
            }
            std::vector<int> edge_set(projected.begin(), projected.end());
            if (first) {
                acc = std::move(edge_set);
                first = false;
            } else if (conjunctive) {
                std::vector<int> tmp;
                std::set_intersection(acc.begin(), acc.end(), edge_set.begin(), edge_set.end(),
                                      std::back_inserter(tmp));
                acc = std::move(tmp);
            } else {
                std::vector<int> tmp;
                std::set_union(acc.begin(), acc.end(), edge_set.begin(), edge_set.end(),
                               std::back_inserter(tmp));
                acc = std::move(tmp);
            }
        }
        sets[static_cast<std::size_t>(idx)] = std::move(acc);
    }
    return {std::move(sets[static_cast<std::size_t>(q.target_index())])};
}

}  // namespace detail

// Exact observed denotation by set semantics: anchors start as singletons,
// each variable takes the intersection over its incoming edges of the union
// of its predecessors' neighborhoods.
inline Denotation denotation(const QueryDag& q, const TypedGraph& g) {
    return detail::denote(q, g, true);
}

// Same traversal with every intersection relaxed to a union; always a
// superset of denotation().
inline Denotation denotation_disjunctive(const QueryDag& q, const TypedGraph& g) {
    return detail::denote(q, g, false);
}

// Recovers the catalog tag from a query's shape: in-degrees of non-anchor
// nodes, target first along the reversed topological order.
inline std::vector<int> degree_vector_of(const QueryDag& q) {
    std::vector<int> indeg(q.nodes.size(), 0);
    for (const QueryEdge& e : q.edges) ++indeg[static_cast<std::size_t>(e.dst)];
    std::vector<int> order = topological_order(q);
    std::vector<int> out;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if (q.nodes[static_cast<std::size_t>(*it)].kind != NodeKind::Anchor)
            out.push_back(indeg[static_cast<std::size_t>(*it)]);
    return out;
}

inline const StructureId& structure_of(const QueryDag& q) {
    const std::vector<int> d = degree_vector_of(q);
    for (const StructureId& s : structure_catalog())
        if (s.degree_vector == d) return s;
    throw ArgumentError("query shape is not in the structure catalog");
}

// ---- JSON serialization ----------------------------------------------------
// {"structure": "...", "target_type": "...",
//  "nodes": [{"kind":"anchor","node":"id","type":"..."}, ...],
//  "edges": [[src_idx, "relation", dst_idx], ...]}

inline nlohmann::json query_to_json(const QueryDag& q, const TypedGraph& g) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const QueryNode& qn : q.nodes) {
        nlohmann::json n;
        switch (qn.kind) {
            case NodeKind::Anchor:
                n["kind"] = "anchor";
                n["node"] = g.node_name(qn.node);
                break;
            case NodeKind::Variable: n["kind"] = "variable"; break;
            case NodeKind::Target: n["kind"] = "target"; break;
        }
        n["type"] = g.type(qn.type).name;
        nodes.push_back(std::move(n));
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const QueryEdge& e : q.edges)
        edges.push_back({e.src, g.relation(e.rel).name, e.dst});
    return {{"structure", q.structure},
            {"target_type", g.type(q.nodes[static_cast<std::size_t>(q.target_index())].type).name},
            {"nodes", std::move(nodes)},
            {"edges", std::move(edges)}};
}

inline QueryDag query_from_json(const nlohmann::json& j, const TypedGraph& g) {
    if (!j.is_object() || !j.contains("nodes") || !j.contains("edges"))
        throw ParseError("query JSON must be an object with 'nodes' and 'edges'");
    QueryDag q;
    q.structure = j.value("structure", "");
    if (!j["nodes"].is_array() || j["nodes"].empty())
        throw ParseError("query JSON: 'nodes' must be a nonempty array");
    for (std::size_t i = 0; i < j["nodes"].size(); ++i) {
        const nlohmann::json& n = j["nodes"][i];
        const std::string at = "query JSON nodes[" + std::to_string(i) + "]";
        if (!n.is_object() || !n.contains("kind") || !n.contains("type"))
            throw ParseError(at + ": expected object with 'kind' and 'type'");
        QueryNode qn;
        const std::string kind = n["kind"].get<std::string>();
        if (kind == "anchor") {
            qn.kind = NodeKind::Anchor;
            if (!n.contains("node")) throw ParseError(at + ": anchor needs a 'node'");
            qn.node = g.find_node(n["node"].get<std::string>());
            if (qn.node < 0)
                throw ParseError(at + ": unknown graph node '" + n["node"].get<std::string>() + "'");
        } else if (kind == "variable") {
            qn.kind = NodeKind::Variable;
        } else if (kind == "target") {
            qn.kind = NodeKind::Target;
        } else {
            throw ParseError(at + ": unknown kind '" + kind + "'");
        }
        qn.type = g.find_type(n["type"].get<std::string>());
        if (qn.type < 0) throw ParseError(at + ": unknown type '" + n["type"].get<std::string>() + "'");
        q.nodes.push_back(qn);
    }
    for (std::size_t i = 0; i < j["edges"].size(); ++i) {
        const nlohmann::json& e = j["edges"][i];
        const std::string at = "query JSON edges[" + std::to_string(i) + "]";
        if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() || !e[1].is_string() ||
            !e[2].is_number_integer())
            throw ParseError(at + ": expected [src_index, \"relation\", dst_index]");
        QueryEdge qe;
        qe.src = e[0].get<int>();
        qe.dst = e[2].get<int>();
        qe.rel = g.find_relation(e[1].get<std::string>());
        if (qe.rel < 0) throw ParseError(at + ": unknown relation '" + e[1].get<std::string>() + "'");
        q.edges.push_back(qe);
    }
    if (q.structure.empty()) q.structure = structure_of(q).name;
    return q;
}

}  // namespace gqe
