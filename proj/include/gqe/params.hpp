#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gqe/errors.hpp"
#include "gqe/tensor.hpp"

namespace gqe {

// Named collection of dense tensors. Iteration order is insertion order so
// checkpoints and gradient reductions are reproducible run to run.
class ParamStore {
public:
    Mat& add(const std::string& name, int rows, int cols) {
        if (index_.count(name)) throw ArgumentError("ParamStore: duplicate tensor " + name);
        index_[name] = order_.size();
        order_.push_back(name);
        tensors_.emplace_back(rows, cols);
        return tensors_.back();
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Mat& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ArgumentError("ParamStore: unknown tensor " + name);
        return tensors_[it->second];
    }
    const Mat& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ArgumentError("ParamStore: unknown tensor " + name);
        return tensors_[it->second];
    }

    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }

    std::size_t total_elems() const {
        std::size_t n = 0;
        for (const Mat& t : tensors_) n += t.a.size();
        return n;
    }

private:
    std::map<std::string, std::size_t> index_;
    std::vector<std::string> order_;
    std::vector<Mat> tensors_;
};

// Gradient accumulator shaped like a ParamStore. Tensors are materialized on
// first touch so sparse updates (only the embeddings a batch used) stay cheap.
class Gradients {
public:
    explicit Gradients(const ParamStore& params) : params_(&params) {}

    Mat& get(const std::string& name) {
        auto it = slots_.find(name);
        if (it == slots_.end()) {
            const Mat& p = params_->get(name);
            it = slots_.emplace(name, Mat(p.rows, p.cols)).first;
        }
        return it->second;
    }

    bool touched(const std::string& name) const { return slots_.count(name) != 0; }

    void zero() { slots_.clear(); }

    double global_norm() const {
        double sq = 0.0;
        for (const auto& [name, g] : slots_)
            for (double v : g.a) sq += v * v;
        return std::sqrt(sq);
    }

    // Returns the pre-clip norm; scales every gradient when it exceeds max_norm.
    double clip(double max_norm) {
        const double n = global_norm();
        if (n > max_norm && n > 0.0) {
            const double s = max_norm / n;
            for (auto& [name, g] : slots_)
                for (double& v : g.a) v *= s;
        }
        return n;
    }

    const std::map<std::string, Mat>& slots() const { return slots_; }

private:
    const ParamStore* params_;
    std::map<std::string, Mat> slots_;
};

}  // namespace gqe
