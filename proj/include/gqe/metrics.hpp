#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gqe/errors.hpp"
#include "gqe/model.hpp"
#include "gqe/query.hpp"
#include "gqe/sampler.hpp"

#include "json.hpp"

namespace gqe {

// Mann-Whitney statistic: P(pos > neg) + 1/2 P(pos = neg), computed by
// binary-searching each positive against the sorted negatives.
inline double auc(std::vector<double> pos, std::vector<double> neg) {
    if (pos.empty() || neg.empty()) throw ArgumentError("auc: needs scores on both sides");
    std::sort(neg.begin(), neg.end());
    double wins = 0.0;
    for (double p : pos) {
        const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
        const auto hi = std::upper_bound(neg.begin(), neg.end(), p);
        wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// Percentile rank of the positive within {positive} + pool, half credit for
// ties: (strictly below + ties/2) / pool size.
inline double apr_from_scores(double positive, const std::vector<double>& pool) {
    if (pool.empty()) throw ArgumentError("apr: empty negative pool");
    double below = 0.0, ties = 0.0;
    for (double n : pool) {
        if (n < positive) below += 1.0;
        if (n == positive) ties += 1.0;
    }
    return (below + 0.5 * ties) / static_cast<double>(pool.size());
}

enum class NegKind { Standard, Hard, Both };

inline const char* neg_kind_name(NegKind k) {
    switch (k) {
        case NegKind::Standard: return "standard";
        case NegKind::Hard: return "hard";
        case NegKind::Both: return "both";
    }
    return "?";
}

struct MetricCell {
    std::string structure;
    std::string kind;  // "standard" or "hard"
    double auc = 0.0;
    double apr = 0.0;
    int examples = 0;
    int skipped = 0;  // degenerate pools for this kind
};

struct RankRecord {
    std::string structure;
    std::string kind;
    int example = 0;  // index within the evaluated split
    double apr = 0.0;
};

struct MetricReport {
    std::vector<MetricCell> cells;
    double macro_auc = 0.0;
    double macro_apr = 0.0;
    int examples = 0;
    int skipped = 0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["macro_auc"] = macro_auc;
        j["macro_apr"] = macro_apr;
        j["examples"] = examples;
        j["skipped"] = skipped;
        j["cells"] = nlohmann::ordered_json::array();
        for (const MetricCell& c : cells)
            j["cells"].push_back({{"structure", c.structure},
                                  {"kind", c.kind},
                                  {"auc", c.auc},
                                  {"apr", c.apr},
                                  {"examples", c.examples},
                                  {"skipped", c.skipped}});
        return j;
    }

    std::string to_table() const {
        std::ostringstream out;
        out << std::left << std::setw(12) << "structure" << std::setw(10) << "negatives"
            << std::right << std::setw(8) << "auc" << std::setw(8) << "apr" << std::setw(7)
            << "n" << std::setw(9) << "skipped" << "\n";
        out << std::fixed << std::setprecision(3);
        for (const MetricCell& c : cells)
            out << std::left << std::setw(12) << c.structure << std::setw(10) << c.kind
                << std::right << std::setw(8) << c.auc << std::setw(8) << c.apr << std::setw(7)
                << c.examples << std::setw(9) << c.skipped << "\n";
        out << std::left << std::setw(12) << "macro" << std::setw(10) << "" << std::right
            << std::setw(8) << macro_auc << std::setw(8) << macro_apr << std::setw(7) << examples
            << std::setw(9) << skipped << "\n";
        return out.str();
    }
};

inline std::string ranks_csv(const std::vector<RankRecord>& records) {
    std::ostringstream out;
    out << "structure,kind,example,apr\n";
    out << std::setprecision(17);
    for (const RankRecord& r : records)
        out << r.structure << "," << r.kind << "," << r.example << "," << r.apr << "\n";
    return out.str();
}

// Scores one split and aggregates per (structure, negative kind) cell. Cell
// AUC pools every negative in the cell against the positives; cell APR is the
// per-example mean. Macro values weight all cells equally; chain1 cells can
// be excluded from the macro via the flag.
inline MetricReport evaluate(const ModelParams& params, const TypedGraph& g,
                             const std::vector<QueryExample>& split, NegKind kind,
                             bool include_chain1 = true,
                             std::vector<RankRecord>* ranks = nullptr) {
    if (split.empty()) throw ArgumentError("evaluate: empty dataset split");
    params.check_compatible(g);
    const NodeEmbeddingCache cache(params, g);

    struct Bucket {
        std::vector<double> pos;
        std::vector<double> neg;
        double apr_sum = 0.0;
        int examples = 0;
        int skipped = 0;
    };
    std::map<std::string, Bucket> std_cells, hard_cells;

    for (std::size_t i = 0; i < split.size(); ++i) {
        const QueryExample& ex = split[i];
        const bool want_std = kind != NegKind::Hard;
        // hard cells exist only where the conjunctive/disjunctive gap is defined
        const bool want_hard = kind != NegKind::Standard &&
                               find_structure(ex.query.structure).has_intersection();
        if (!want_std && !want_hard) continue;

        QueryEmbedding qe;
        double pos = 0.0;
        bool scored = true;
        try {
            qe = encode_query(params, g, ex.query);
            pos = score(params, qe.vector, cache.of(ex.positive));
        } catch (const NumericError&) {
            scored = false;  // zero-norm embedding: count the example as skipped
        }
        auto run = [&](std::map<std::string, Bucket>& cells, const std::vector<int>& pool,
                       const char* kind_name) {
            Bucket& b = cells[ex.query.structure];
            if (!scored || pool.empty()) {
                ++b.skipped;
                return;
            }
            std::vector<double> neg;
            neg.reserve(pool.size());
            try {
                for (int v : pool) neg.push_back(score(params, qe.vector, cache.of(v)));
            } catch (const NumericError&) {
                ++b.skipped;
                return;
            }
            const double pr = apr_from_scores(pos, neg);
            b.pos.push_back(pos);
            b.neg.insert(b.neg.end(), neg.begin(), neg.end());
            b.apr_sum += pr;
            ++b.examples;
            if (ranks)
                ranks->push_back({ex.query.structure, kind_name, static_cast<int>(i), pr});
        };
        if (want_std) run(std_cells, ex.standard_negatives, "standard");
        if (want_hard) run(hard_cells, ex.hard_negatives, "hard");
    }

    MetricReport rep;
    double auc_sum = 0.0, apr_sum = 0.0;
    int macro_cells = 0;
    auto emit = [&](const std::map<std::string, Bucket>& cells, const char* kind_name) {
        // catalog order, not map order, so reports line up run to run
        for (const StructureId& s : structure_catalog()) {
            const auto it = cells.find(s.name);
            if (it == cells.end()) continue;
            const Bucket& b = it->second;
            rep.examples += b.examples;
            rep.skipped += b.skipped;
            if (b.examples == 0) continue;
            MetricCell c;
            c.structure = s.name;
            c.kind = kind_name;
            c.auc = auc(b.pos, b.neg);
            c.apr = b.apr_sum / b.examples;
            c.examples = b.examples;
            c.skipped = b.skipped;
            rep.cells.push_back(c);
            if (include_chain1 || s.name != "chain1") {
                auc_sum += c.auc;
                apr_sum += c.apr;
                ++macro_cells;
            }
        }
    };
    emit(std_cells, "standard");
    emit(hard_cells, "hard");
    if (macro_cells > 0) {
        rep.macro_auc = auc_sum / macro_cells;
        rep.macro_apr = apr_sum / macro_cells;
    }
    return rep;
}

inline double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Soft-AND of per-edge likelihoods for queries whose every edge runs directly
// from an anchor to the target (no bound variables): the product over edges of
// sigmoid(scale * score(project(z_anchor, rel), z_candidate)).
inline double enumeration_baseline(const ModelParams& params, const TypedGraph& g,
                                   const QueryDag& q, int candidate, double scale) {
    const auto violations = validate(q, g);
    if (!violations.empty())
        throw ArgumentError("enumeration_baseline: invalid query: " + violations.front());
    const int target = q.target_index();
    for (std::size_t i = 0; i < q.nodes.size(); ++i)
        if (q.nodes[i].kind == NodeKind::Variable)
            throw ArgumentError(
                "enumeration_baseline: query has bound variables; per-edge enumeration does not "
                "apply");
    const int target_type = q.nodes[static_cast<std::size_t>(target)].type;
    if (g.node_type(candidate) != target_type)
        throw ArgumentError("enumeration_baseline: candidate type does not match the target");

    const Vec zc = embed_node(params, g, candidate);
    double product = 1.0;
    for (const QueryEdge& e : q.edges) {
        Tape t(params.store);
        const int h = project_on_tape(
            t, params, e.rel,
            embed_node_on_tape(t, params, g, q.nodes[static_cast<std::size_t>(e.src)].node));
        product *= sigmoid(scale * score(params, t.value(h), zc));
    }
    return product;
}

inline const std::vector<double>& baseline_scale_grid() {
    static const std::vector<double> grid{0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
    return grid;
}

// Picks the sigmoid scale maximizing edge-classification log likelihood on
// chain1 validation examples (positives labeled 1, pool negatives 0).
inline double fit_baseline_scale(const ModelParams& params, const TypedGraph& g,
                                 const std::vector<QueryExample>& valid_chain1) {
    params.check_compatible(g);
    const NodeEmbeddingCache cache(params, g);
    std::vector<double> pos_scores, neg_scores;
    for (const QueryExample& ex : valid_chain1) {
        if (ex.query.structure != "chain1") continue;
        const QueryEmbedding qe = encode_query(params, g, ex.query);
        pos_scores.push_back(score(params, qe.vector, cache.of(ex.positive)));
        for (int v : ex.standard_negatives)
            neg_scores.push_back(score(params, qe.vector, cache.of(v)));
    }
    if (pos_scores.empty() || neg_scores.empty())
        throw ArgumentError("fit_baseline_scale: no chain1 validation edges to fit on");

    double best_scale = baseline_scale_grid().front();
    double best_ll = -std::numeric_limits<double>::infinity();
    for (double scale : baseline_scale_grid()) {
        double ll = 0.0;
        // stable log sigmoid: log s(x) = -log1p(e^-x), log(1-s(x)) = -x - log1p(e^-x)
        for (double s : pos_scores) {
            const double x = scale * s;
            ll += x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
        }
        for (double s : neg_scores) {
            const double x = scale * s;
            ll += x >= 0.0 ? -x - std::log1p(std::exp(-x)) : -std::log1p(std::exp(x));
        }
        if (ll > best_ll) {
            best_ll = ll;
            best_scale = scale;
        }
    }
    return best_scale;
}

}  // namespace gqe
