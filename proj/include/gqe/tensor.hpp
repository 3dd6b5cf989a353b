#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gqe/errors.hpp"

namespace gqe {

// All arithmetic is double precision; gradient-check tolerances depend on it.
using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline Vec matvec(const Mat& m, const Vec& x) {
    if (static_cast<std::size_t>(m.cols) != x.size()) {
        throw ShapeError("matvec: " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                         " times vector of dim " + std::to_string(x.size()));
    }
    Vec y(static_cast<std::size_t>(m.rows), 0.0);
    const double* row = m.a.data();
    for (int r = 0; r < m.rows; ++r, row += m.cols) {
        double acc = 0.0;
        for (int c = 0; c < m.cols; ++c) acc += row[c] * x[static_cast<std::size_t>(c)];
        y[static_cast<std::size_t>(r)] = acc;
    }
    return y;
}

// y = M^T x, used by backward passes.
inline Vec matvec_transposed(const Mat& m, const Vec& x) {
    if (static_cast<std::size_t>(m.rows) != x.size()) {
        throw ShapeError("matvec_transposed: dimension mismatch");
    }
    Vec y(static_cast<std::size_t>(m.cols), 0.0);
    const double* row = m.a.data();
    for (int r = 0; r < m.rows; ++r, row += m.cols) {
        const double xr = x[static_cast<std::size_t>(r)];
        for (int c = 0; c < m.cols; ++c) y[static_cast<std::size_t>(c)] += row[c] * xr;
    }
    return y;
}

inline void check_same_dim(const Vec& a, const Vec& b, const char* who) {
    if (a.size() != b.size()) throw ShapeError(std::string(who) + ": dimension mismatch");
}

inline Vec add(const Vec& a, const Vec& b) {
    check_same_dim(a, b, "add");
    Vec y(a);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
    return y;
}

inline Vec scale(const Vec& a, double c) {
    Vec y(a);
    for (double& v : y) v *= c;
    return y;
}

inline Vec relu(const Vec& a) {
    Vec y(a);
    for (double& v : y) v = v > 0.0 ? v : 0.0;
    return y;
}

inline Vec min_across(std::span<const Vec> xs) {
    if (xs.empty()) throw ArgumentError("min_across: empty input set");
    Vec y(xs[0]);
    for (std::size_t k = 1; k < xs.size(); ++k) {
        check_same_dim(y, xs[k], "min_across");
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(y[i], xs[k][i]);
    }
    return y;
}

// Summation happens per element in sorted value order so the result is
// bit-for-bit invariant under permutation of the inputs.
inline Vec mean_across(std::span<const Vec> xs) {
    if (xs.empty()) throw ArgumentError("mean_across: empty input set");
    for (std::size_t k = 1; k < xs.size(); ++k) check_same_dim(xs[0], xs[k], "mean_across");
    Vec y(xs[0].size(), 0.0);
    std::vector<double> buf(xs.size());
    const double inv = 1.0 / static_cast<double>(xs.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t k = 0; k < xs.size(); ++k) buf[k] = xs[k][i];
        std::sort(buf.begin(), buf.end());
        double acc = 0.0;
        for (double v : buf) acc += v;
        y[i] = acc * inv;
    }
    return y;
}

inline double dot(const Vec& a, const Vec& b) {
    check_same_dim(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double cosine(const Vec& a, const Vec& b) {
    check_same_dim(a, b, "cosine");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero-norm input");
    return dot(a, b) / (na * nb);
}

}  // namespace gqe
