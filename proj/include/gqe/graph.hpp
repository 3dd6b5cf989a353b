#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gqe/errors.hpp"
#include "gqe/rng.hpp"

namespace gqe {

// Inverse relations are materialized under this suffix; it is reserved and
// rejected in input relation names so serialization round-trips.
inline constexpr const char* kInverseSuffix = "^-1";

struct NodeType {
    int id = -1;
    std::string name;
    int feature_dim = 1;
};

struct Relation {
    int id = -1;
    std::string name;
    int domain_type = -1;
    int range_type = -1;
    int inverse_of = -1;
    bool is_inverse = false;
};

struct Edge {
    int src = -1;
    int rel = -1;
    int dst = -1;
    auto operator<=>(const Edge&) const = default;
};

class GraphBuilder;

// Immutable multi-relational graph. Node ids are dense integers in insertion
// order; original string ids are kept as a sidecar. Every base relation has a
// materialized inverse (id = base_relation_count() + base id) and adjacency
// stores both directions, sorted and duplicate-free.
class TypedGraph {
public:
    int node_count() const { return static_cast<int>(node_type_.size()); }
    int type_count() const { return static_cast<int>(types_.size()); }
    int relation_count() const { return static_cast<int>(relations_.size()); }
    int base_relation_count() const { return relation_count() / 2; }

    const NodeType& type(int id) const {
        if (id < 0 || id >= type_count()) throw ArgumentError("unknown node type id");
        return types_[static_cast<std::size_t>(id)];
    }
    const Relation& relation(int id) const {
        if (id < 0 || id >= relation_count()) throw ArgumentError("unknown relation id");
        return relations_[static_cast<std::size_t>(id)];
    }

    int node_type(int v) const {
        check_node(v);
        return node_type_[static_cast<std::size_t>(v)];
    }
    const std::string& node_name(int v) const {
        check_node(v);
        return node_names_[static_cast<std::size_t>(v)];
    }
    const std::vector<int>& node_features(int v) const {
        check_node(v);
        return node_feats_[static_cast<std::size_t>(v)];
    }

    // Lookups by name; -1 when absent (callers decide whether that is fatal).
    int find_node(const std::string& name) const {
        auto it = node_index_.find(name);
        return it == node_index_.end() ? -1 : it->second;
    }
    int find_type(const std::string& name) const {
        for (const NodeType& t : types_)
            if (t.name == name) return t.id;
        return -1;
    }
    int find_relation(const std::string& name) const {
        auto it = relation_index_.find(name);
        return it == relation_index_.end() ? -1 : it->second;
    }

    // Sorted list of v's neighbors through relation rel.
    std::span<const int> neighbors(int v, int rel) const {
        check_node(v);
        const Relation& r = relation(rel);
        if (node_type(v) != r.domain_type)
            throw SchemaError("neighbors: node " + node_name(v) + " has type " +
                              type(node_type(v)).name + " but relation " + r.name +
                              " expects " + type(r.domain_type).name);
        const Csr& c = csr_[static_cast<std::size_t>(rel)];
        const std::size_t lo = c.offsets[static_cast<std::size_t>(v)];
        const std::size_t hi = c.offsets[static_cast<std::size_t>(v) + 1];
        return {c.targets.data() + lo, hi - lo};
    }

    bool has_edge(int u, int rel, int v) const {
        const auto ns = neighbors(u, rel);
        return std::binary_search(ns.begin(), ns.end(), v);
    }

    const std::vector<int>& nodes_of_type(int t) const {
        if (t < 0 || t >= type_count()) throw ArgumentError("unknown node type id");
        return nodes_by_type_[static_cast<std::size_t>(t)];
    }

    // All edges in canonical (rel, src, dst) order.
    std::vector<Edge> edges(bool include_inverse = false) const {
        std::vector<Edge> out;
        const int limit = include_inverse ? relation_count() : base_relation_count();
        for (int rel = 0; rel < limit; ++rel) {
            const Csr& c = csr_[static_cast<std::size_t>(rel)];
            for (int v = 0; v < node_count(); ++v)
                for (std::size_t i = c.offsets[static_cast<std::size_t>(v)];
                     i < c.offsets[static_cast<std::size_t>(v) + 1]; ++i)
                    out.push_back({v, rel, c.targets[i]});
        }
        return out;
    }

    std::size_t edge_count(bool include_inverse = false) const {
        std::size_t n = 0;
        const int limit = include_inverse ? relation_count() : base_relation_count();
        for (int rel = 0; rel < limit; ++rel) n += csr_[static_cast<std::size_t>(rel)].targets.size();
        return n;
    }

    // True when every node's feature vector is the canonical one-hot (its rank
    // among same-type nodes); required by the exact parameter construction.
    bool one_hot_features() const { return one_hot_; }

    // Copy of this graph with the given edges removed. The caller supplies
    // both directions of each pair; node/type/relation tables are unchanged.
    TypedGraph without_edges(const std::vector<Edge>& deleted) const;

    static TypedGraph ingest(const std::string& edge_file, const std::string& node_type_file,
                             const std::string& feature_file = "", int min_relation_edges = 0);

private:
    friend class GraphBuilder;

    struct Csr {
        std::vector<std::size_t> offsets;
        std::vector<int> targets;
    };

    void check_node(int v) const {
        if (v < 0 || v >= node_count()) throw ArgumentError("unknown node id");
    }

    std::vector<NodeType> types_;
    std::vector<Relation> relations_;
    std::vector<int> node_type_;
    std::vector<std::string> node_names_;
    std::vector<std::vector<int>> node_feats_;
    std::map<std::string, int> node_index_;
    std::map<std::string, int> relation_index_;
    std::vector<std::vector<int>> nodes_by_type_;
    std::vector<Csr> csr_;
    bool one_hot_ = true;
};

// Assembles a TypedGraph: register types and nodes, add edges by name, then
// finish(). Relation domain/range are inferred from the first edge using the
// relation and enforced on the rest.
class GraphBuilder {
public:
    int add_type(const std::string& name) {
        for (const NodeType& t : g_.types_)
            if (t.name == name) return t.id;
        const int id = static_cast<int>(g_.types_.size());
        g_.types_.push_back({id, name, 1});
        return id;
    }

    int add_node(const std::string& name, int type_id, const std::string& context = "") {
        if (type_id < 0 || type_id >= static_cast<int>(g_.types_.size()))
            throw ArgumentError("add_node: unknown type id");
        if (g_.node_index_.count(name))
            throw SchemaError(where(context) + "duplicate node id '" + name + "'");
        const int id = static_cast<int>(g_.node_type_.size());
        g_.node_type_.push_back(type_id);
        g_.node_names_.push_back(name);
        g_.node_index_[name] = id;
        return id;
    }

    void add_edge(const std::string& head, const std::string& rel_name, const std::string& tail,
                  const std::string& context = "") {
        if (rel_name.size() >= 3 && rel_name.ends_with(kInverseSuffix))
            throw ParseError(where(context) + "relation name '" + rel_name +
                             "' uses the reserved inverse suffix " + kInverseSuffix);
        const int u = g_.find_node(head);
        const int v = g_.find_node(tail);
        if (u < 0) throw SchemaError(where(context) + "edge endpoint '" + head + "' was never declared");
        if (v < 0) throw SchemaError(where(context) + "edge endpoint '" + tail + "' was never declared");

        auto it = rel_ids_.find(rel_name);
        int rel;
        if (it == rel_ids_.end()) {
            rel = static_cast<int>(rels_.size());
            rel_ids_[rel_name] = rel;
            rels_.push_back({rel, rel_name, g_.node_type_[static_cast<std::size_t>(u)],
                             g_.node_type_[static_cast<std::size_t>(v)], -1, false});
        } else {
            rel = it->second;
            const Relation& r = rels_[static_cast<std::size_t>(rel)];
            if (r.domain_type != g_.node_type_[static_cast<std::size_t>(u)] ||
                r.range_type != g_.node_type_[static_cast<std::size_t>(v)])
                throw SchemaError(where(context) + "edge (" + head + ", " + rel_name + ", " + tail +
                                  ") conflicts with relation signature " +
                                  g_.types_[static_cast<std::size_t>(r.domain_type)].name + " -> " +
                                  g_.types_[static_cast<std::size_t>(r.range_type)].name);
        }
        edges_.push_back({u, rel, v});
    }

    void set_features(const std::string& node, std::vector<int> idx, const std::string& context = "") {
        const int v = g_.find_node(node);
        if (v < 0) throw SchemaError(where(context) + "feature line for undeclared node '" + node + "'");
        if (idx.empty()) throw ParseError(where(context) + "empty feature set for node '" + node + "'");
        for (int i : idx)
            if (i < 0) throw ParseError(where(context) + "negative feature index for node '" + node + "'");
        std::sort(idx.begin(), idx.end());
        idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        if (!features_.emplace(v, std::move(idx)).second)
            throw ParseError(where(context) + "duplicate feature line for node '" + node + "'");
    }

    TypedGraph finish(int min_relation_edges = 0);

private:
    static std::string where(const std::string& context) {
        return context.empty() ? "" : context + ": ";
    }

    TypedGraph g_;
    std::map<std::string, int> rel_ids_;
    std::vector<Relation> rels_;
    std::vector<Edge> edges_;
    std::map<int, std::vector<int>> features_;
};

inline TypedGraph GraphBuilder::finish(int min_relation_edges) {
    // Optionally drop thin relations, then renumber the survivors.
    if (min_relation_edges > 0) {
        std::vector<std::size_t> count(rels_.size(), 0);
        for (const Edge& e : edges_) ++count[static_cast<std::size_t>(e.rel)];
        std::vector<int> remap(rels_.size(), -1);
        std::vector<Relation> kept;
        for (std::size_t i = 0; i < rels_.size(); ++i) {
            if (count[i] >= static_cast<std::size_t>(min_relation_edges)) {
                remap[i] = static_cast<int>(kept.size());
                Relation r = rels_[i];
                r.id = remap[i];
                kept.push_back(r);
            }
        }
        std::vector<Edge> survivors;
        for (const Edge& e : edges_)
            if (remap[static_cast<std::size_t>(e.rel)] >= 0)
                survivors.push_back({e.src, remap[static_cast<std::size_t>(e.rel)], e.dst});
        rels_ = std::move(kept);
        edges_ = std::move(survivors);
    }

    // Materialize inverses: base relations keep their ids, inverse of base k
    // gets id R + k with swapped signature.
    const int base_count = static_cast<int>(rels_.size());
    g_.relations_ = rels_;
    for (int k = 0; k < base_count; ++k) {
        Relation inv;
        inv.id = base_count + k;
        inv.name = rels_[static_cast<std::size_t>(k)].name + kInverseSuffix;
        inv.domain_type = rels_[static_cast<std::size_t>(k)].range_type;
        inv.range_type = rels_[static_cast<std::size_t>(k)].domain_type;
        inv.inverse_of = k;
        inv.is_inverse = true;
        g_.relations_[static_cast<std::size_t>(k)].inverse_of = inv.id;
        g_.relations_.push_back(inv);
    }
    for (const Relation& r : g_.relations_) g_.relation_index_[r.name] = r.id;

    // Adjacency with both directions, deduplicated.
    std::vector<Edge> all;
    all.reserve(edges_.size() * 2);
    for (const Edge& e : edges_) {
        all.push_back(e);
        all.push_back({e.dst, base_count + e.rel, e.src});
    }
    std::sort(all.begin(), all.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.rel, a.src, a.dst) < std::tie(b.rel, b.src, b.dst);
    });
    all.erase(std::unique(all.begin(), all.end()), all.end());

    const int n = g_.node_count();
    g_.csr_.assign(g_.relations_.size(), {});
    std::size_t pos = 0;
    for (std::size_t rel = 0; rel < g_.relations_.size(); ++rel) {
        TypedGraph::Csr& c = g_.csr_[rel];
        c.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
        const std::size_t begin = pos;
        while (pos < all.size() && all[pos].rel == static_cast<int>(rel)) ++pos;
        c.targets.reserve(pos - begin);
        std::size_t i = begin;
        for (int v = 0; v < n; ++v) {
            c.offsets[static_cast<std::size_t>(v)] = c.targets.size();
            while (i < pos && all[i].src == v) c.targets.push_back(all[i++].dst);
        }
        c.offsets[static_cast<std::size_t>(n)] = c.targets.size();
    }

    // Node partition by type.
    g_.nodes_by_type_.assign(g_.types_.size(), {});
    for (int v = 0; v < n; ++v)
        g_.nodes_by_type_[static_cast<std::size_t>(g_.node_type_[static_cast<std::size_t>(v)])].push_back(v);

    // Features: a type either has explicit features for all of its nodes or
    // for none (one-hot default). Mixing the two would make feature_dim
    // ambiguous.
    g_.node_feats_.assign(static_cast<std::size_t>(n), {});
    g_.one_hot_ = true;
    for (std::size_t t = 0; t < g_.types_.size(); ++t) {
        const std::vector<int>& members = g_.nodes_by_type_[t];
        int covered = 0;
        for (int v : members) covered += features_.count(v) ? 1 : 0;
        if (covered == 0) {
            for (std::size_t rank = 0; rank < members.size(); ++rank)
                g_.node_feats_[static_cast<std::size_t>(members[rank])] = {static_cast<int>(rank)};
            g_.types_[t].feature_dim = std::max<int>(1, static_cast<int>(members.size()));
        } else if (covered == static_cast<int>(members.size())) {
            int dim = 0;
            for (int v : members) {
                g_.node_feats_[static_cast<std::size_t>(v)] = features_.at(v);
                dim = std::max(dim, features_.at(v).back() + 1);
            }
            g_.types_[t].feature_dim = dim;
            g_.one_hot_ = false;
        } else {
            throw SchemaError("type '" + g_.types_[t].name + "' has explicit features for " +
                              std::to_string(covered) + " of " + std::to_string(members.size()) +
                              " nodes; feature coverage must be all-or-none per type");
        }
    }

    return std::move(g_);
}

inline TypedGraph TypedGraph::without_edges(const std::vector<Edge>& deleted) const {
    const std::set<Edge> gone(deleted.begin(), deleted.end());
    TypedGraph g = *this;
    for (int rel = 0; rel < relation_count(); ++rel) {
        const Csr& src = csr_[static_cast<std::size_t>(rel)];
        Csr out;
        out.offsets.assign(static_cast<std::size_t>(node_count()) + 1, 0);
        for (int v = 0; v < node_count(); ++v) {
            out.offsets[static_cast<std::size_t>(v)] = out.targets.size();
            for (std::size_t i = src.offsets[static_cast<std::size_t>(v)];
                 i < src.offsets[static_cast<std::size_t>(v) + 1]; ++i)
                if (!gone.count({v, rel, src.targets[i]})) out.targets.push_back(src.targets[i]);
        }
        out.offsets[static_cast<std::size_t>(node_count())] = out.targets.size();
        g.csr_[static_cast<std::size_t>(rel)] = std::move(out);
    }
    return g;
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

inline bool skippable(const std::string& line) {
    return line.empty() || line[0] == '#';
}

// Strips a trailing '\r' so CRLF files parse.
inline std::string chomp(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace detail

inline TypedGraph TypedGraph::ingest(const std::string& edge_file, const std::string& node_type_file,
                                     const std::string& feature_file, int min_relation_edges) {
    GraphBuilder b;

    std::ifstream types(node_type_file);
    if (!types) throw DataError("cannot open node-type file " + node_type_file);
    std::string line;
    for (int lineno = 1; std::getline(types, line); ++lineno) {
        line = detail::chomp(std::move(line));
        if (detail::skippable(line)) continue;
        const std::string context = node_type_file + ":" + std::to_string(lineno);
        const auto cols = detail::split_tabs(line);
        if (cols.size() != 2 || cols[0].empty() || cols[1].empty())
            throw ParseError(context + ": expected node_id<TAB>type_name");
        b.add_node(cols[0], b.add_type(cols[1]), context);
    }

    std::ifstream edges(edge_file);
    if (!edges) throw DataError("cannot open edge file " + edge_file);
    for (int lineno = 1; std::getline(edges, line); ++lineno) {
        line = detail::chomp(std::move(line));
        if (detail::skippable(line)) continue;
        const std::string context = edge_file + ":" + std::to_string(lineno);
        const auto cols = detail::split_tabs(line);
        if (cols.size() != 3 || cols[0].empty() || cols[1].empty() || cols[2].empty())
            throw ParseError(context + ": expected head<TAB>relation<TAB>tail");
        b.add_edge(cols[0], cols[1], cols[2], context);
    }

    if (!feature_file.empty()) {
        std::ifstream feats(feature_file);
        if (!feats) throw DataError("cannot open feature file " + feature_file);
        for (int lineno = 1; std::getline(feats, line); ++lineno) {
            line = detail::chomp(std::move(line));
            if (detail::skippable(line)) continue;
            const std::string context = feature_file + ":" + std::to_string(lineno);
            const auto cols = detail::split_tabs(line);
            if (cols.size() != 2)
                throw ParseError(context + ": expected node_id<TAB>space-separated indices");
            std::vector<int> idx;
            std::istringstream iss(cols[1]);
            std::string tok;
            while (iss >> tok) {
                try {
                    std::size_t used = 0;
                    const int v = std::stoi(tok, &used);
                    if (used != tok.size()) throw std::invalid_argument(tok);
                    idx.push_back(v);
                } catch (const std::exception&) {
                    throw ParseError(context + ": bad feature index '" + tok + "'");
                }
            }
            b.set_features(cols[0], std::move(idx), context);
        }
    }

    return b.finish(min_relation_edges);
}

struct GraphSplit {
    TypedGraph train_graph;
    std::vector<Edge> deleted_edges;  // both directions of every removed pair
};

// Removes `fraction` of the non-inverse edges uniformly at random (inverse
// partners removed together). Deterministic in (graph, seed).
inline GraphSplit split_edges(const TypedGraph& g, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ArgumentError("split_edges: fraction must lie in (0,1)");
    std::vector<Edge> base = g.edges(false);
    const auto target = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(base.size())));
    if (target < 1)
        throw ArgumentError("split_edges: fraction removes no edges (graph too small)");

    Rng rng = Rng::stream(seed, "split", 0);
    rng.shuffle(base);
    base.resize(target);

    std::vector<Edge> deleted;
    deleted.reserve(target * 2);
    const int base_count = g.base_relation_count();
    for (const Edge& e : base) {
        deleted.push_back(e);
        deleted.push_back({e.dst, e.rel + base_count, e.src});
    }
    std::sort(deleted.begin(), deleted.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.rel, a.src, a.dst) < std::tie(b.rel, b.src, b.dst);
    });
    deleted.erase(std::unique(deleted.begin(), deleted.end()), deleted.end());

    return {g.without_edges(deleted), std::move(deleted)};
}

// Canonical text form (types, nodes, edges, features), used for byte-identical
// artifact writes and determinism tests.
inline std::string serialize_canonical(const TypedGraph& g) {
    std::ostringstream out;
    out << "# types\n";
    for (int t = 0; t < g.type_count(); ++t)
        out << g.type(t).name << '\t' << g.type(t).feature_dim << '\n';
    out << "# nodes\n";
    for (int v = 0; v < g.node_count(); ++v)
        out << g.node_name(v) << '\t' << g.type(g.node_type(v)).name << '\n';
    out << "# edges\n";
    for (const Edge& e : g.edges(false))
        out << g.node_name(e.src) << '\t' << g.relation(e.rel).name << '\t' << g.node_name(e.dst)
            << '\n';
    if (!g.one_hot_features()) {
        out << "# features\n";
        for (int v = 0; v < g.node_count(); ++v) {
            out << g.node_name(v) << '\t';
            const std::vector<int>& f = g.node_features(v);
            for (std::size_t i = 0; i < f.size(); ++i) out << (i ? " " : "") << f[i];
            out << '\n';
        }
    }
    return out.str();
}

}  // namespace gqe
