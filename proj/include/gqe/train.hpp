#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gqe/errors.hpp"
#include "gqe/metrics.hpp"
#include "gqe/model.hpp"
#include "gqe/params.hpp"
#include "gqe/rng.hpp"
#include "gqe/sampler.hpp"

#include "json.hpp"

namespace gqe {

struct TrainConfig {
    double lr = 0.01;
    int batch_size = 256;
    int d = 128;
    double margin = 1.0;
    double path_weight = 0.01;          // chain2/chain3 loss scaling
    double intersection_weight = 0.005; // any structure with a joint node
    int val_interval = 5000;            // batches between validations
    int patience = 5;                   // non-improving validations before stop
    double clip_norm = 10.0;            // stage-2 gradient guard rail
    std::uint64_t seed = 0;
    bool mirror_hard_batches = false;   // reuse the standard batch's queries
    long long max_batches = 100000;     // per-stage safety valve

    void check() const {
        if (lr <= 0.0 || margin <= 0.0 || path_weight <= 0.0 || intersection_weight <= 0.0 ||
            clip_norm <= 0.0)
            throw ArgumentError("train config: rates, margin, weights and clip must be positive");
        if (batch_size < 1 || d < 1 || val_interval < 1 || max_batches < 1)
            throw ArgumentError("train config: sizes and intervals must be positive");
        if (patience < 1) throw ArgumentError("train config: patience must be >= 1");
    }
};

inline double structure_weight(const TrainConfig& cfg, const StructureId& s) {
    if (s.has_intersection()) return cfg.intersection_weight;
    return s.edge_count() == 1 ? 1.0 : cfg.path_weight;
}

// Adaptive-moment optimizer with bias correction. Moments cover every tensor;
// tensors absent from a step's gradients decay as if their gradient were zero.
struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long step = 0;

    std::map<std::string, Mat> m, v;

    nlohmann::ordered_json constants() const {
        return {{"optimizer", "adam"}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}};
    }
};

inline void optimizer_step(OptimizerState& st, ModelParams& params, const Gradients& grads,
                           double lr) {
    for (const auto& [name, g] : grads.slots())
        if (!all_finite(g.a)) throw NumericError("optimizer_step: non-finite gradient for " + name);

    ++st.step;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (const std::string& name : params.store.names()) {
        Mat& p = params.store.get(name);
        auto mit = st.m.find(name);
        if (mit == st.m.end()) {
            mit = st.m.emplace(name, Mat(p.rows, p.cols)).first;
            st.v.emplace(name, Mat(p.rows, p.cols));
        }
        Mat& m = mit->second;
        Mat& v = st.v.at(name);
        if (m.rows != p.rows || m.cols != p.cols)
            throw ShapeError("optimizer_step: moment shape drifted for " + name);

        const Mat* g = nullptr;
        if (grads.touched(name)) g = &grads.slots().at(name);
        for (std::size_t i = 0; i < p.a.size(); ++i) {
            const double gi = g ? g->a[i] : 0.0;
            m.a[i] = st.beta1 * m.a[i] + (1.0 - st.beta1) * gi;
            v.a[i] = st.beta2 * v.a[i] + (1.0 - st.beta2) * gi * gi;
            p.a[i] -= lr * (m.a[i] / c1) / (std::sqrt(v.a[i] / c2) + st.eps);
        }
    }
}

// Hinge on the score gap: max(0, margin - score(q, positive) + score(q, negative)).
// Gradients flow only when the margin is violated; `grad_seed` lets a batch
// accumulate its mean (and any loss weight) in one backward pass.
inline double margin_loss(const ModelParams& p, const TypedGraph& g, const QueryExample& ex,
                          int negative, double margin, Gradients* gs, double grad_seed = 1.0) {
    try {
        Tape t(p.store);
        const int q = encode_query_on_tape(t, p, g, ex.query);
        const int s_pos = t.cosine(q, embed_node_on_tape(t, p, g, ex.positive));
        const int s_neg = t.cosine(q, embed_node_on_tape(t, p, g, negative));
        // check the scores, not the hinge: max(0, x) hides a NaN score
        if (!std::isfinite(t.scalar(s_pos)) || !std::isfinite(t.scalar(s_neg)))
            throw NumericError("non-finite score");
        const int hinge = t.relu(t.add_const(t.add(t.scale(s_pos, -1.0), s_neg), margin));
        const double loss = t.scalar(hinge);
        if (gs && loss > 0.0) t.backward(hinge, *gs, grad_seed);
        return loss;
    } catch (const NumericError& e) {
        throw NumericError("margin_loss on " + ex.query.structure + " (positive " +
                           g.node_name(ex.positive) + "): " + e.what());
    }
}

struct TrainLogEntry {
    long long batch = 0;
    std::string structure;
    std::string negatives;  // "standard" or "hard"
    double raw_loss = 0.0;
    double weighted_loss = 0.0;
    double grad_norm = 0.0;
    std::optional<double> val_macro_auc;
};

inline std::string train_log_ndjson(const std::vector<TrainLogEntry>& log) {
    std::string out;
    for (const TrainLogEntry& e : log) {
        nlohmann::ordered_json j;
        j["batch"] = e.batch;
        j["structure"] = e.structure;
        j["negatives"] = e.negatives;
        j["raw_loss"] = e.raw_loss;
        j["weighted_loss"] = e.weighted_loss;
        j["grad_norm"] = e.grad_norm;
        if (e.val_macro_auc) j["val_macro_auc"] = *e.val_macro_auc;
        out += j.dump();
        out += '\n';
    }
    return out;
}

struct TrainResult {
    ModelParams params;  // best-validation snapshot (input params if never validated)
    std::vector<TrainLogEntry> log;
    std::vector<double> val_history;
    double best_val = -std::numeric_limits<double>::infinity();
    long long batches = 0;
    int clipped = 0;
    int degenerate = 0;  // examples skipped for undefined (zero-norm) scores
    bool diverged = false;
    std::vector<std::string> events;
};

namespace detail {

// Shared stage driver: feeds pre-drawn (example, negative) batches through the
// loss, steps the optimizer, validates on a schedule, and keeps the best
// snapshot with patience-based stopping.
class StageRunner {
public:
    StageRunner(ModelParams& params, const TypedGraph& g, const TrainConfig& cfg,
                const std::vector<QueryExample>& valid_split, NegKind valid_kind)
        : params_(params), g_(g), cfg_(cfg), valid_(valid_split), valid_kind_(valid_kind) {
        result_.params = params;  // last-good fallback before any validation
    }

    bool step_batch(const std::vector<std::pair<const QueryExample*, int>>& batch,
                    const StructureId& s, const char* neg_kind, double weight, bool clip) {
        if (batch.empty()) return true;
        Gradients grads(params_.store);
        double raw = 0.0;
        const double seed = weight / static_cast<double>(batch.size());
        try {
            for (const auto& [ex, neg] : batch) {
                try {
                    raw += margin_loss(params_, g_, *ex, neg, cfg_.margin, &grads, seed);
                } catch (const NumericError&) {
                    // undefined score on finite parameters: drop the example
                    // (zero loss, zero gradient); non-finite state is fatal
                    if (!params_finite()) throw;
                    ++result_.degenerate;
                }
            }
            raw /= static_cast<double>(batch.size());
            if (!std::isfinite(raw)) throw NumericError("non-finite batch loss");
            double norm = grads.global_norm();
            if (clip) {
                grads.clip(cfg_.clip_norm);
                if (norm > cfg_.clip_norm) ++result_.clipped;
            }
            optimizer_step(opt_, params_, grads, cfg_.lr);
            ++result_.batches;
            result_.log.push_back({result_.batches, s.name, neg_kind, raw, weight * raw, norm,
                                   std::nullopt});
        } catch (const NumericError& e) {
            result_.diverged = true;
            result_.events.push_back(std::string("diverged: ") + e.what());
            return false;
        }
        if (result_.batches % cfg_.val_interval == 0) return validate();
        return result_.batches < cfg_.max_batches;
    }

    bool validate() {
        double val;
        try {
            val = evaluate(params_, g_, valid_, valid_kind_).macro_auc;
        } catch (const NumericError& e) {
            result_.diverged = true;
            result_.events.push_back(std::string("validation failed: ") + e.what());
            return false;
        }
        result_.val_history.push_back(val);
        if (!result_.log.empty()) result_.log.back().val_macro_auc = val;
        if (val > result_.best_val) {
            result_.best_val = val;
            result_.params = params_;
            bad_ = 0;
        } else if (++bad_ >= cfg_.patience) {
            result_.events.push_back("stopped: no improvement over " +
                                     std::to_string(cfg_.patience) + " validations");
            return false;
        }
        return result_.batches < cfg_.max_batches;
    }

    TrainResult finish() {
        if (result_.batches >= cfg_.max_batches)
            result_.events.push_back("stopped: reached max_batches");
        return std::move(result_);
    }

private:
    bool params_finite() const {
        for (const std::string& name : params_.store.names())
            if (!all_finite(params_.store.get(name).a)) return false;
        return true;
    }

    ModelParams& params_;
    const TypedGraph& g_;
    const TrainConfig& cfg_;
    const std::vector<QueryExample>& valid_;
    NegKind valid_kind_;
    OptimizerState opt_;
    TrainResult result_;
    int bad_ = 0;
};

inline std::vector<QueryExample> filter_structure(const std::vector<QueryExample>& split,
                                                  const std::string& name) {
    std::vector<QueryExample> out;
    for (const QueryExample& ex : split)
        if (ex.query.structure == name) out.push_back(ex);
    return out;
}

}  // namespace detail

// Stage 1: edge prediction only. Epochs over the shuffled chain1 training
// examples, one uniformly drawn pool negative per example per epoch.
inline TrainResult train_stage1_edges(const ModelParams& start, const TypedGraph& g,
                                      const Dataset& ds, const TrainConfig& cfg) {
    cfg.check();
    start.check_compatible(g);
    const auto train_it = ds.splits.find("train");
    const auto valid_it = ds.splits.find("valid");
    if (train_it == ds.splits.end() || valid_it == ds.splits.end())
        throw ArgumentError("train_stage1_edges: dataset needs train and valid splits");

    std::vector<const QueryExample*> pool;
    for (const QueryExample& ex : train_it->second)
        if (ex.query.structure == "chain1" && !ex.standard_negatives.empty())
            pool.push_back(&ex);
    if (pool.empty()) throw ArgumentError("train_stage1_edges: no usable chain1 train examples");
    const std::vector<QueryExample> valid = detail::filter_structure(valid_it->second, "chain1");
    if (valid.empty()) throw ArgumentError("train_stage1_edges: no chain1 validation examples");

    ModelParams params = start;
    detail::StageRunner run(params, g, cfg, valid, NegKind::Standard);
    const StructureId& chain1 = find_structure("chain1");
    Rng neg_rng = Rng::stream(cfg.seed, "train1:neg", 0);

    bool more = true;
    for (std::uint64_t epoch = 0; more; ++epoch) {
        std::vector<const QueryExample*> order = pool;
        Rng::stream(cfg.seed, "train1:order", epoch).shuffle(order);
        for (std::size_t at = 0; at < order.size() && more; at += cfg.batch_size) {
            std::vector<std::pair<const QueryExample*, int>> batch;
            for (std::size_t i = at; i < order.size() && i < at + cfg.batch_size; ++i)
                batch.push_back({order[i], neg_rng.pick(order[i]->standard_negatives)});
            more = run.step_batch(batch, chain1, "standard", 1.0, false);
        }
    }
    return run.finish();
}

// Stage 2: per-structure batches over the full catalog with loss weights, a
// hard-negative companion batch for intersection structures, and gradient
// clipping. Validation uses standard and hard cells together.
inline TrainResult train_stage2_full(const ModelParams& start, const TypedGraph& g,
                                     const Dataset& ds, const TrainConfig& cfg) {
    cfg.check();
    start.check_compatible(g);
    const auto train_it = ds.splits.find("train");
    const auto valid_it = ds.splits.find("valid");
    if (train_it == ds.splits.end() || valid_it == ds.splits.end())
        throw ArgumentError("train_stage2_full: dataset needs train and valid splits");
    if (valid_it->second.empty())
        throw ArgumentError("train_stage2_full: empty validation split");

    struct Group {
        const StructureId* s = nullptr;
        std::vector<const QueryExample*> std_pool;
        std::vector<const QueryExample*> hard_pool;
    };
    std::vector<Group> groups;
    for (const StructureId& s : structure_catalog()) {
        Group grp;
        grp.s = &s;
        for (const QueryExample& ex : train_it->second) {
            if (ex.query.structure != s.name) continue;
            if (!ex.standard_negatives.empty()) grp.std_pool.push_back(&ex);
            if (s.has_intersection() && !ex.hard_negatives.empty()) grp.hard_pool.push_back(&ex);
        }
        if (!grp.std_pool.empty()) groups.push_back(std::move(grp));
    }
    if (groups.empty()) throw ArgumentError("train_stage2_full: no usable train examples");

    ModelParams params = start;
    detail::StageRunner run(params, g, cfg, valid_it->second, NegKind::Both);
    Rng draw_rng = Rng::stream(cfg.seed, "train2:draw", 0);
    Rng neg_rng = Rng::stream(cfg.seed, "train2:neg", 0);

    bool more = true;
    while (more) {
        for (const Group& grp : groups) {
            if (!more) break;
            const double weight = structure_weight(cfg, *grp.s);

            std::vector<std::pair<const QueryExample*, int>> batch;
            for (int i = 0; i < cfg.batch_size; ++i) {
                const QueryExample* ex = draw_rng.pick(grp.std_pool);
                batch.push_back({ex, neg_rng.pick(ex->standard_negatives)});
            }
            more = run.step_batch(batch, *grp.s, "standard", weight, true);
            if (!more || grp.hard_pool.empty()) continue;

            std::vector<std::pair<const QueryExample*, int>> hard;
            if (cfg.mirror_hard_batches) {
                for (const auto& [ex, _] : batch)
                    if (!ex->hard_negatives.empty())
                        hard.push_back({ex, neg_rng.pick(ex->hard_negatives)});
            } else {
                for (int i = 0; i < cfg.batch_size; ++i) {
                    const QueryExample* ex = draw_rng.pick(grp.hard_pool);
                    hard.push_back({ex, neg_rng.pick(ex->hard_negatives)});
                }
            }
            more = run.step_batch(hard, *grp.s, "hard", weight, true);
        }
    }
    return run.finish();
}

}  // namespace gqe
