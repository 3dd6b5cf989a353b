#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gqe/errors.hpp"
#include "gqe/params.hpp"
#include "gqe/rng.hpp"
#include "gqe/tensor.hpp"

namespace gqe {

// Reverse-mode tape over whole vectors. One tape per training example; the
// backward pass walks nodes in exact reverse recording order and accumulates
// parameter gradients into a shared Gradients store.
class Tape {
public:
    explicit Tape(const ParamStore& params) : params_(&params) {}

    // Constant leaf; no gradient flows into it.
    int leaf(Vec v) {
        Node n;
        n.op = Op::Leaf;
        n.value = std::move(v);
        return push(std::move(n));
    }

    // Mean of the selected columns of a parameter matrix (node embedding from
    // a bag of feature indices).
    int embed_cols(const std::string& name, std::vector<int> cols) {
        if (cols.empty()) throw ArgumentError("embed_cols: empty column set");
        const Mat& z = params_->get(name);
        Node n;
        n.op = Op::EmbedCols;
        n.param = name;
        n.cols = std::move(cols);
        n.value.assign(static_cast<std::size_t>(z.rows), 0.0);
        for (int c : n.cols) {
            if (c < 0 || c >= z.cols) throw ArgumentError("embed_cols: column out of range");
            for (int r = 0; r < z.rows; ++r) n.value[static_cast<std::size_t>(r)] += z.at(r, c);
        }
        const double inv = 1.0 / static_cast<double>(n.cols.size());
        for (double& v : n.value) v *= inv;
        return push(std::move(n));
    }

    // y = M x with a parameter matrix.
    int matvec(const std::string& name, int x) {
        Node n;
        n.op = Op::Matvec;
        n.param = name;
        n.inputs = {x};
        n.value = gqe::matvec(params_->get(name), value(x));
        return push(std::move(n));
    }

    // y_i = p_i * x_i with a parameter vector (diagonal projection).
    int mul_param(const std::string& name, int x) {
        const Mat& p = params_->get(name);
        const Vec& xv = value(x);
        if (p.cols != 1 || static_cast<std::size_t>(p.rows) != xv.size())
            throw ShapeError("mul_param: parameter must be a column vector matching input dim");
        Node n;
        n.op = Op::MulParam;
        n.param = name;
        n.inputs = {x};
        n.value = xv;
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= p.a[i];
        return push(std::move(n));
    }

    // y = x + p with a parameter vector (translation, bias).
    int add_param(const std::string& name, int x) {
        const Mat& p = params_->get(name);
        const Vec& xv = value(x);
        if (p.cols != 1 || static_cast<std::size_t>(p.rows) != xv.size())
            throw ShapeError("add_param: parameter must be a column vector matching input dim");
        Node n;
        n.op = Op::AddParam;
        n.param = name;
        n.inputs = {x};
        n.value = xv;
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += p.a[i];
        return push(std::move(n));
    }

    int add(int a, int b) {
        Node n;
        n.op = Op::Add;
        n.inputs = {a, b};
        n.value = gqe::add(value(a), value(b));
        return push(std::move(n));
    }

    int scale(int a, double c) {
        Node n;
        n.op = Op::Scale;
        n.inputs = {a};
        n.c = c;
        n.value = gqe::scale(value(a), c);
        return push(std::move(n));
    }

    int add_const(int a, double c) {
        Node n;
        n.op = Op::AddConst;
        n.inputs = {a};
        n.c = c;
        n.value = value(a);
        for (double& v : n.value) v += c;
        return push(std::move(n));
    }

    int relu(int a) {
        Node n;
        n.op = Op::Relu;
        n.inputs = {a};
        n.value = gqe::relu(value(a));
        return push(std::move(n));
    }

    // Elementwise min across inputs. Ties route the gradient to the first
    // argmin in input order (deterministic subgradient).
    int reduce_min(const std::vector<int>& xs) {
        if (xs.empty()) throw ArgumentError("reduce_min: empty input set");
        Node n;
        n.op = Op::ReduceMin;
        n.inputs = xs;
        n.value = value(xs[0]);
        n.argsel.assign(n.value.size(), 0);
        for (std::size_t k = 1; k < xs.size(); ++k) {
            const Vec& v = value(xs[k]);
            check_same_dim(n.value, v, "reduce_min");
            for (std::size_t i = 0; i < n.value.size(); ++i) {
                if (v[i] < n.value[i]) {
                    n.value[i] = v[i];
                    n.argsel[i] = static_cast<int>(k);
                }
            }
        }
        return push(std::move(n));
    }

    int reduce_mean(const std::vector<int>& xs) {
        if (xs.empty()) throw ArgumentError("reduce_mean: empty input set");
        Node n;
        n.op = Op::ReduceMean;
        n.inputs = xs;
        std::vector<Vec> vals;
        vals.reserve(xs.size());
        for (int x : xs) vals.push_back(value(x));
        n.value = mean_across(vals);
        return push(std::move(n));
    }

    // Scalar nodes are 1-dim vectors.
    int cosine(int a, int b) {
        Node n;
        n.op = Op::Cosine;
        n.inputs = {a, b};
        n.value = {gqe::cosine(value(a), value(b))};
        return push(std::move(n));
    }

    int dot(int a, int b) {
        Node n;
        n.op = Op::Dot;
        n.inputs = {a, b};
        n.value = {gqe::dot(value(a), value(b))};
        return push(std::move(n));
    }

    int sum(int a) {
        Node n;
        n.op = Op::Sum;
        n.inputs = {a};
        double s = 0.0;
        for (double v : value(a)) s += v;
        n.value = {s};
        return push(std::move(n));
    }

    const Vec& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    double scalar(int id) const {
        const Vec& v = value(id);
        if (v.size() != 1) throw ShapeError("scalar: node is not 1-dimensional");
        return v[0];
    }

    // Seed the (scalar) output with `seed` and accumulate parameter gradients.
    void backward(int out, Gradients& grads, double seed = 1.0) {
        if (value(out).size() != 1) throw ShapeError("backward: output must be scalar");
        std::vector<Vec> g(nodes_.size());
        g[static_cast<std::size_t>(out)] = {seed};
        for (int id = out; id >= 0; --id) {
            const Node& n = nodes_[static_cast<std::size_t>(id)];
            Vec& gy = g[static_cast<std::size_t>(id)];
            if (gy.empty()) continue;  // node did not reach the output
            switch (n.op) {
                case Op::Leaf:
                    break;
                case Op::EmbedCols: {
                    Mat& gz = grads.get(n.param);
                    const double inv = 1.0 / static_cast<double>(n.cols.size());
                    for (int c : n.cols)
                        for (int r = 0; r < gz.rows; ++r)
                            gz.at(r, c) += inv * gy[static_cast<std::size_t>(r)];
                    break;
                }
                case Op::Matvec: {
                    const Mat& m = params_->get(n.param);
                    const Vec& x = value(n.inputs[0]);
                    Mat& gm = grads.get(n.param);
                    for (int r = 0; r < m.rows; ++r) {
                        const double gr = gy[static_cast<std::size_t>(r)];
                        if (gr == 0.0) continue;
                        for (int c = 0; c < m.cols; ++c)
                            gm.at(r, c) += gr * x[static_cast<std::size_t>(c)];
                    }
                    accum(g, n.inputs[0], matvec_transposed(m, gy));
                    break;
                }
                case Op::MulParam: {
                    const Mat& p = params_->get(n.param);
                    const Vec& x = value(n.inputs[0]);
                    Mat& gp = grads.get(n.param);
                    Vec gx(x.size());
                    for (std::size_t i = 0; i < x.size(); ++i) {
                        gp.a[i] += gy[i] * x[i];
                        gx[i] = gy[i] * p.a[i];
                    }
                    accum(g, n.inputs[0], gx);
                    break;
                }
                case Op::AddParam: {
                    Mat& gp = grads.get(n.param);
                    for (std::size_t i = 0; i < gy.size(); ++i) gp.a[i] += gy[i];
                    accum(g, n.inputs[0], gy);
                    break;
                }
                case Op::Add:
                    accum(g, n.inputs[0], gy);
                    accum(g, n.inputs[1], gy);
                    break;
                case Op::Scale:
                    accum(g, n.inputs[0], gqe::scale(gy, n.c));
                    break;
                case Op::AddConst:
                    accum(g, n.inputs[0], gy);
                    break;
                case Op::Relu: {
                    const Vec& x = value(n.inputs[0]);
                    Vec gx(gy);
                    for (std::size_t i = 0; i < gx.size(); ++i)
                        if (x[i] <= 0.0) gx[i] = 0.0;  // subgradient 0 at the kink
                    accum(g, n.inputs[0], gx);
                    break;
                }
                case Op::ReduceMin: {
                    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                        Vec gx(gy.size(), 0.0);
                        bool any = false;
                        for (std::size_t i = 0; i < gy.size(); ++i) {
                            if (n.argsel[i] == static_cast<int>(k) && gy[i] != 0.0) {
                                gx[i] = gy[i];
                                any = true;
                            }
                        }
                        if (any) accum(g, n.inputs[k], gx);
                    }
                    break;
                }
                case Op::ReduceMean: {
                    const Vec gx = gqe::scale(gy, 1.0 / static_cast<double>(n.inputs.size()));
                    for (int x : n.inputs) accum(g, x, gx);
                    break;
                }
                case Op::Cosine: {
                    const Vec& a = value(n.inputs[0]);
                    const Vec& b = value(n.inputs[1]);
                    const double na = gqe::norm(a), nb = gqe::norm(b);
                    const double y = n.value[0], gs = gy[0];
                    Vec ga(a.size()), gb(b.size());
                    for (std::size_t i = 0; i < a.size(); ++i) {
                        ga[i] = gs * (b[i] / (na * nb) - y * a[i] / (na * na));
                        gb[i] = gs * (a[i] / (na * nb) - y * b[i] / (nb * nb));
                    }
                    accum(g, n.inputs[0], ga);
                    accum(g, n.inputs[1], gb);
                    break;
                }
                case Op::Dot: {
                    const double gs = gy[0];
                    accum(g, n.inputs[0], gqe::scale(value(n.inputs[1]), gs));
                    accum(g, n.inputs[1], gqe::scale(value(n.inputs[0]), gs));
                    break;
                }
                case Op::Sum: {
                    accum(g, n.inputs[0], Vec(value(n.inputs[0]).size(), gy[0]));
                    break;
                }
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf, EmbedCols, Matvec, MulParam, AddParam, Add, Scale, AddConst,
        Relu, ReduceMin, ReduceMean, Cosine, Dot, Sum
    };

    struct Node {
        Op op = Op::Leaf;
        Vec value;
        std::vector<int> inputs;
        std::string param;
        std::vector<int> cols;    // EmbedCols
        std::vector<int> argsel;  // ReduceMin winner per element
        double c = 0.0;           // Scale / AddConst
    };

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    static void accum(std::vector<Vec>& g, int id, const Vec& dv) {
        Vec& slot = g[static_cast<std::size_t>(id)];
        if (slot.empty()) {
            slot = dv;
        } else {
            for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += dv[i];
        }
    }

    const ParamStore* params_;
    std::vector<Node> nodes_;
};

// Scalar objective: evaluates the loss at the current parameters and, when a
// Gradients store is supplied, also accumulates its analytic gradient.
using LossFn = std::function<double(const ParamStore&, Gradients*)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    int probes = 0;
    bool ok = true;
};

// Central finite differences against the tape gradient. Probes `max_probes`
// randomly chosen parameter entries (0 = every entry). The error denominator
// is max(1, |analytic|, |numeric|), i.e. absolute error for small gradients
// and relative error for large ones.
inline GradCheckReport grad_check(const LossFn& f, ParamStore& params, double eps, double tol,
                                  Rng& rng, int max_probes = 0) {
    Gradients analytic(params);
    const double f0 = f(params, &analytic);
    if (!std::isfinite(f0)) throw NumericError("grad_check: non-finite loss at probe point");

    // Flat list of (tensor, element) coordinates to probe.
    std::vector<std::pair<std::string, std::size_t>> coords;
    for (const std::string& name : params.names()) {
        const Mat& t = params.get(name);
        for (std::size_t i = 0; i < t.a.size(); ++i) coords.emplace_back(name, i);
    }
    if (max_probes > 0 && static_cast<std::size_t>(max_probes) < coords.size()) {
        rng.shuffle(coords);
        coords.resize(static_cast<std::size_t>(max_probes));
    }

    GradCheckReport rep;
    for (const auto& [name, i] : coords) {
        double& slot = params.get(name).a[i];
        const double keep = slot;
        slot = keep + eps;
        const double fp = f(params, nullptr);
        slot = keep - eps;
        const double fm = f(params, nullptr);
        slot = keep;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("grad_check: non-finite loss while probing " + name);
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic.touched(name) ? analytic.get(name).a[i] : 0.0;
        const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
        const double rel = std::fabs(a - numeric) / denom;
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        ++rep.probes;
    }
    rep.ok = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace gqe
