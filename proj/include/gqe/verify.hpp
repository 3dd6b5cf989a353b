#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "gqe/model.hpp"
#include "gqe/query.hpp"
#include "gqe/rng.hpp"
#include "gqe/sampler.hpp"

namespace gqe {

struct ExactnessMismatch {
    std::string structure;
    std::string node;
    double score = 0.0;
    bool expected_member = false;
};

struct ExactnessReport {
    int queries = 0;
    long long decisions = 0;  // (query, candidate) membership checks
    long long mismatch_count = 0;
    std::vector<ExactnessMismatch> mismatches;  // first kMaxListed only
    std::vector<std::string> warnings;

    static constexpr int kMaxListed = 50;
    bool ok() const { return mismatch_count == 0; }
};

// Samples queries per catalog structure and asserts the membership
// equivalence: score(encode(q), z_v) > 0 exactly when the set-semantics
// denotation contains v. Takes the parameters explicitly so tests can feed a
// corrupted model as a negative control.
inline ExactnessReport check_exactness(const ModelParams& params, const TypedGraph& g,
                                       int per_structure, std::uint64_t seed) {
    if (per_structure < 1) throw ArgumentError("check_exactness: per_structure must be >= 1");
    ExactnessReport rep;
    if (g.edge_count(true) == 0) {
        rep.warnings.push_back("graph has no edges; nothing to verify");
        return rep;
    }
    const NodeEmbeddingCache cache(params, g);
    for (const StructureId& s : structure_catalog()) {
        Rng rng = Rng::stream(seed, "verify:" + s.name, 0);
        for (int i = 0; i < per_structure; ++i) {
            QueryDag q;
            try {
                q = sample_query(g, s, rng).first;
            } catch (const SamplingError&) {
                rep.warnings.push_back(s.name + ": sampling infeasible after " +
                                       std::to_string(i) + " queries");
                break;
            }
            const Denotation truth = denotation(q, g);
            const QueryEmbedding qe = encode_query(params, g, q);
            const int t = q.nodes[static_cast<std::size_t>(q.target_index())].type;
            ++rep.queries;
            for (int v : g.nodes_of_type(t)) {
                const double sc = score(params, qe.vector, cache.of(v));
                const bool member = truth.contains(v);
                ++rep.decisions;
                if ((sc > 0.0) != member) {
                    ++rep.mismatch_count;
                    if (static_cast<int>(rep.mismatches.size()) < ExactnessReport::kMaxListed)
                        rep.mismatches.push_back({s.name, g.node_name(v), sc, member});
                }
            }
        }
    }
    return rep;
}

inline ExactnessReport check_exactness(const TypedGraph& g, int per_structure,
                                       std::uint64_t seed) {
    if (g.node_count() == 0 || g.edge_count(true) == 0) {
        ExactnessReport rep;
        rep.warnings.push_back("graph has no edges; nothing to verify");
        return rep;
    }
    return check_exactness(exact_parameters(g), g, per_structure, seed);
}

inline std::string to_string(const ExactnessReport& rep) {
    std::ostringstream out;
    out << "checked " << rep.queries << " queries (" << rep.decisions
        << " membership decisions): " << rep.mismatch_count << " mismatches\n";
    for (const ExactnessMismatch& m : rep.mismatches)
        out << "  " << m.structure << ": node " << m.node << " scored " << m.score
            << " but " << (m.expected_member ? "is" : "is not") << " a member\n";
    if (rep.mismatch_count > static_cast<long long>(rep.mismatches.size()))
        out << "  ... " << (rep.mismatch_count - static_cast<long long>(rep.mismatches.size()))
            << " more\n";
    for (const std::string& w : rep.warnings) out << "  warning: " << w << "\n";
    return out.str();
}

}  // namespace gqe
