#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gqe/errors.hpp"
#include "gqe/graph.hpp"
#include "gqe/rng.hpp"

namespace gqe {

// Built-in fixture generator. Spec string: blocks:K,N,p[,T[,R]]
//   K blocks of N nodes each; block b gets node type b mod T; R base relations
//   where relation r has domain = range = type r mod T; within every block
//   whose type matches a relation, each ordered non-self pair becomes an edge
//   with probability p.
// Defaults: T = min(3, K), R = T + 1. Blocks act as planted communities: the
// same-type nodes of other blocks are never connected, which gives held-out
// edge prediction a high but imperfect separability ceiling.
struct BlockSpec {
    int blocks = 0;
    int block_size = 0;
    double density = 0.0;
    int types = 0;
    int relations = 0;
};

inline BlockSpec parse_block_spec(const std::string& spec) {
    const std::string prefix = "blocks:";
    if (spec.rfind(prefix, 0) != 0)
        throw ParseError("synthetic spec must look like blocks:K,N,p[,T[,R]], got '" + spec + "'");
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : spec.substr(prefix.size())) {
        if (ch == ',') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    parts.push_back(cur);
    if (parts.size() < 3 || parts.size() > 5)
        throw ParseError("synthetic spec needs 3 to 5 comma-separated values, got '" + spec + "'");

    auto as_int = [&](const std::string& s, const char* what) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(s, &used);
            if (used != s.size() || v <= 0) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ParseError(std::string("synthetic spec: bad ") + what + " '" + s + "'");
        }
    };

    BlockSpec out;
    out.blocks = as_int(parts[0], "block count");
    out.block_size = as_int(parts[1], "block size");
    try {
        std::size_t used = 0;
        out.density = std::stod(parts[2], &used);
        if (used != parts[2].size()) throw std::invalid_argument(parts[2]);
    } catch (const std::exception&) {
        throw ParseError("synthetic spec: bad density '" + parts[2] + "'");
    }
    if (!(out.density > 0.0 && out.density <= 1.0))
        throw ParseError("synthetic spec: density must lie in (0,1]");
    out.types = parts.size() >= 4 ? as_int(parts[3], "type count") : std::min(3, out.blocks);
    out.relations = parts.size() >= 5 ? as_int(parts[4], "relation count") : out.types + 1;
    if (out.types > out.blocks)
        throw ParseError("synthetic spec: more types than blocks leaves empty types");
    if (out.relations < out.types)
        throw ParseError("synthetic spec: need at least one relation per type");
    return out;
}

inline TypedGraph synthetic_graph(const BlockSpec& s, std::uint64_t seed) {
    GraphBuilder b;
    std::vector<int> type_ids;
    for (int t = 0; t < s.types; ++t) type_ids.push_back(b.add_type("t" + std::to_string(t)));

    std::vector<std::vector<std::string>> block_nodes(static_cast<std::size_t>(s.blocks));
    for (int blk = 0; blk < s.blocks; ++blk) {
        for (int i = 0; i < s.block_size; ++i) {
            std::string name = "b" + std::to_string(blk) + "_n" + std::to_string(i);
            b.add_node(name, type_ids[static_cast<std::size_t>(blk % s.types)]);
            block_nodes[static_cast<std::size_t>(blk)].push_back(std::move(name));
        }
    }

    Rng rng = Rng::stream(seed, "synthetic", 0);
    for (int blk = 0; blk < s.blocks; ++blk) {
        const int type = blk % s.types;
        for (int rel = 0; rel < s.relations; ++rel) {
            if (rel % s.types != type) continue;
            const std::string rel_name = "r" + std::to_string(rel);
            const auto& names = block_nodes[static_cast<std::size_t>(blk)];
            for (int i = 0; i < s.block_size; ++i)
                for (int j = 0; j < s.block_size; ++j) {
                    if (i == j) continue;
                    if (rng.bernoulli(s.density))
                        b.add_edge(names[static_cast<std::size_t>(i)], rel_name,
                                   names[static_cast<std::size_t>(j)]);
                }
        }
    }
    return b.finish();
}

inline TypedGraph synthetic_graph(const std::string& spec, std::uint64_t seed) {
    return synthetic_graph(parse_block_spec(spec), seed);
}

}  // namespace gqe
